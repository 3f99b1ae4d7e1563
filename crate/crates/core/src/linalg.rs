//! Thin wrappers over `nalgebra` decompositions used by the estimator.

use nalgebra::{Schur, SymmetricEigen};
use num_complex::Complex64;

use crate::tensor::{ComplexMatrix, ComplexVector};

/// Relative eigenvalue threshold below which a Gram direction is treated as null.
pub const PINV_RELATIVE_THRESHOLD: f64 = 1e-12;

/// Eigen-decomposition of a Hermitian matrix, eigenvalues in descending order.
///
/// Each eigenvector is rotated so its largest-magnitude entry is real positive,
/// which makes the output deterministic for a given input.
pub fn hermitian_eigen(h: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let eig = SymmetricEigen::new(h.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = ComplexMatrix::zeros(h.nrows(), order.len());
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        fix_phase(&mut col);
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

/// Rotates `v` so that its largest-magnitude entry is real and positive.
pub fn fix_phase(v: &mut ComplexVector) {
    let Some(pivot) = largest_entry(v.iter()) else {
        return;
    };
    if pivot.norm() == 0.0 {
        return;
    }
    let rot = pivot.conj() / pivot.norm();
    v.iter_mut().for_each(|z| *z *= rot);
}

/// First entry of maximal modulus (ties resolved toward the lower index).
pub fn largest_entry<'a>(it: impl Iterator<Item = &'a Complex64>) -> Option<Complex64> {
    it.fold(None, |best: Option<Complex64>, z| match best {
        Some(b) if b.norm() >= z.norm() => Some(b),
        _ => Some(*z),
    })
}

/// Solves `X·G = R` for `X` with `G` Hermitian PSD via its eigen pseudo-inverse.
///
/// Returns the solution and whether any direction fell below the threshold.
pub fn solve_hermitian_right(r: &ComplexMatrix, g: &ComplexMatrix) -> (ComplexMatrix, bool) {
    let eig = SymmetricEigen::new(g.clone());
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let cut = PINV_RELATIVE_THRESHOLD * lmax;
    let mut deficient = lmax <= 0.0;
    let u = &eig.eigenvectors;
    let mut inv_diag = ComplexVector::zeros(g.nrows());
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > cut && lam > 0.0 {
            inv_diag[i] = Complex64::new(1.0 / lam, 0.0);
        } else {
            deficient = true;
        }
    }
    let ginv = u * ComplexMatrix::from_diagonal(&inv_diag) * u.adjoint();
    (r * ginv, deficient)
}

/// Roots of `Σ_i coeffs[i]·z^i` (ascending powers) via companion-matrix eigenvalues.
///
/// The caller is responsible for trimming zero leading/trailing coefficients.
pub fn companion_roots(coeffs: &[Complex64]) -> Option<Vec<Complex64>> {
    let degree = coeffs.len().checked_sub(1)?;
    if degree == 0 {
        return Some(Vec::new());
    }
    let lead = coeffs[degree];
    if lead.norm() == 0.0 {
        return None;
    }
    let mut comp = ComplexMatrix::zeros(degree, degree);
    for i in 1..degree {
        comp[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    for i in 0..degree {
        comp[(i, degree - 1)] = -coeffs[i] / lead;
    }
    let schur = Schur::new(comp);
    schur.eigenvalues().map(|ev| ev.iter().copied().collect())
}

/// Eigenvalues and unit-norm eigenvectors of a general complex square matrix.
///
/// Vectors come from back substitution on the Schur triangle; `None` when the
/// iteration fails or an eigenvector cannot be formed.
pub fn general_eigen(a: &ComplexMatrix) -> Option<(Vec<Complex64>, ComplexMatrix)> {
    let n = a.nrows();
    let (q, t) = Schur::try_new(a.clone(), f64::EPSILON, 0)?.unpack();
    let scale = t.iter().map(|z| z.norm()).fold(f64::MIN_POSITIVE, f64::max);
    let mut vecs = ComplexMatrix::zeros(n, n);
    let mut vals = Vec::with_capacity(n);
    for i in 0..n {
        let lam = t[(i, i)];
        vals.push(lam);
        let mut v = ComplexVector::zeros(n);
        v[i] = Complex64::new(1.0, 0.0);
        for j in (0..i).rev() {
            let s: Complex64 = (j + 1..=i).map(|k| t[(j, k)] * v[k]).sum();
            let mut d = t[(j, j)] - lam;
            if d.norm() < f64::EPSILON * scale {
                d = Complex64::new(f64::EPSILON * scale, 0.0);
            }
            v[j] = -s / d;
        }
        let x = &q * v;
        let nrm = x.norm();
        if !(nrm.is_finite() && nrm > 0.0) {
            return None;
        }
        vecs.set_column(i, &x.unscale(nrm));
    }
    Some((vals, vecs))
}

/// Leading `count` left singular vectors of `m`.
pub fn leading_left_singular_vectors(m: &ComplexMatrix, count: usize) -> ComplexMatrix {
    // Eigenvectors of m·m^H are the left singular vectors, already sorted descending.
    let gram = m * m.adjoint();
    let (_, vecs) = hermitian_eigen(&gram);
    vecs.columns(0, count.min(vecs.ncols())).into_owned()
}
