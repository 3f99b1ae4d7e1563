//! Dense complex matrix and 3-order tensor algebra.
//!
//! Matrices are `nalgebra` column-major [`ComplexMatrix`] values, so `vec(A)`
//! is simply the storage order of `A`. Tensors are stored with the first index
//! fastest: entry `(k, n, q)` of a `K×N×Q` tensor lives at `k + K·(n + N·q)`.
//!
//! Unfolding conventions (all indices zero-based):
//!
//! | mode | shape     | column of entry `(k, n, q)` |
//! |------|-----------|-----------------------------|
//! | 1    | K × (N·Q) | `q·N + n`                   |
//! | 2    | N × (K·Q) | `q·K + k`                   |
//! | 3    | Q × (K·N) | `k·N + n`                   |
//!
//! With these, a CP tensor `[[X, B, C]]` satisfies `unfold₁ = X·(C⊙B)ᵀ`,
//! `unfold₂ = B·(C⊙X)ᵀ` and `unfold₃ = C·(X⊙B)ᵀ`, and the stacked pulse
//! matrix `[y₁ … y_Q]` of the signal model is `unfold₃ᵀ`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

/// Column-wise Kronecker product. Row `a·N + b` of column `l` is `A[a,l]·B[b,l]`.
pub fn khatri_rao(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.ncols() != b.ncols() {
        return Err(Error::Tensor(format!(
            "khatri-rao column mismatch: {} vs {}",
            a.ncols(),
            b.ncols()
        )));
    }
    let (m, n) = (a.nrows(), b.nrows());
    Ok(ComplexMatrix::from_fn(m * n, a.ncols(), |row, l| {
        a[(row / n, l)] * b[(row % n, l)]
    }))
}

/// Elementwise (Hadamard) product.
pub fn hadamard(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.shape() != b.shape() {
        return Err(Error::Tensor(format!(
            "hadamard shape mismatch: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(a.component_mul(b))
}

/// `vec(A·diag(b)·C)`, computed directly from the triple product.
pub fn vec_of_sandwich(
    a: &ComplexMatrix,
    b: &ComplexVector,
    c: &ComplexMatrix,
) -> Result<ComplexVector> {
    if a.ncols() != b.len() || c.nrows() != b.len() {
        return Err(Error::Tensor(format!(
            "sandwich dimensions do not conform: A {:?}, b {}, C {:?}",
            a.shape(),
            b.len(),
            c.shape()
        )));
    }
    let prod = a * ComplexMatrix::from_diagonal(b) * c;
    Ok(ComplexVector::from_column_slice(prod.as_slice()))
}

/// Dense `K×N×Q` complex tensor, first index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: (usize, usize, usize),
    data: Vec<Complex64>,
}

impl Tensor3 {
    pub fn zeros(k: usize, n: usize, q: usize) -> Self {
        Self {
            dims: (k, n, q),
            data: vec![Complex64::new(0.0, 0.0); k * n * q],
        }
    }

    /// Wraps a first-index-fastest buffer.
    pub fn from_vec(dims: (usize, usize, usize), data: Vec<Complex64>) -> Result<Self> {
        let expected = dims.0 * dims.1 * dims.2;
        if data.len() != expected {
            return Err(Error::Tensor(format!(
                "tensor {:?} needs {} entries, got {}",
                dims,
                expected,
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Tensor("tensor entries must be finite".into()));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(
        dims: (usize, usize, usize),
        mut f: impl FnMut(usize, usize, usize) -> Complex64,
    ) -> Self {
        let (kd, nd, qd) = dims;
        let mut data = Vec::with_capacity(kd * nd * qd);
        for q in 0..qd {
            for n in 0..nd {
                for k in 0..kd {
                    data.push(f(k, n, q));
                }
            }
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn get(&self, k: usize, n: usize, q: usize) -> Complex64 {
        self.data[self.offset(k, n, q)]
    }

    pub fn set(&mut self, k: usize, n: usize, q: usize, value: Complex64) {
        let i = self.offset(k, n, q);
        self.data[i] = value;
    }

    fn offset(&self, k: usize, n: usize, q: usize) -> usize {
        let (kd, nd, qd) = self.dims;
        assert!(k < kd && n < nd && q < qd, "tensor index out of bounds");
        k + kd * (n + nd * q)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Entrywise difference `self − other`.
    pub fn sub(&self, other: &Tensor3) -> Result<Tensor3> {
        if self.dims != other.dims {
            return Err(Error::Tensor(format!(
                "tensor shape mismatch: {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Tensor3 {
            dims: self.dims,
            data,
        })
    }

    pub fn unfold(&self, mode: usize) -> Result<ComplexMatrix> {
        let (kd, nd, qd) = self.dims;
        let m = match mode {
            1 => ComplexMatrix::from_fn(kd, nd * qd, |k, col| self.get(k, col % nd, col / nd)),
            2 => ComplexMatrix::from_fn(nd, kd * qd, |n, col| self.get(col % kd, n, col / kd)),
            3 => ComplexMatrix::from_fn(qd, kd * nd, |q, col| self.get(col / nd, col % nd, q)),
            _ => return Err(Error::Tensor(format!("invalid unfolding mode {mode}"))),
        };
        Ok(m)
    }

    /// Inverse of [`Tensor3::unfold`] for the given target dimensions.
    pub fn fold(m: &ComplexMatrix, mode: usize, dims: (usize, usize, usize)) -> Result<Tensor3> {
        let (kd, nd, qd) = dims;
        let shape = match mode {
            1 => (kd, nd * qd),
            2 => (nd, kd * qd),
            3 => (qd, kd * nd),
            _ => return Err(Error::Tensor(format!("invalid unfolding mode {mode}"))),
        };
        if m.shape() != shape {
            return Err(Error::Tensor(format!(
                "mode-{mode} matrix {:?} does not fold into {:?}",
                m.shape(),
                dims
            )));
        }
        Ok(match mode {
            1 => Tensor3::from_fn(dims, |k, n, q| m[(k, q * nd + n)]),
            2 => Tensor3::from_fn(dims, |k, n, q| m[(n, q * kd + k)]),
            _ => Tensor3::from_fn(dims, |k, n, q| m[(q, k * nd + n)]),
        })
    }
}

/// CP factor matrices `(X, B, C)` sharing a common column count `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorTriple {
    pub x: ComplexMatrix,
    pub b: ComplexMatrix,
    pub c: ComplexMatrix,
}

impl FactorTriple {
    pub fn new(x: ComplexMatrix, b: ComplexMatrix, c: ComplexMatrix) -> Result<Self> {
        let l = x.ncols();
        if l == 0 || b.ncols() != l || c.ncols() != l {
            return Err(Error::Tensor(format!(
                "factor column counts must agree and be positive: {}, {}, {}",
                x.ncols(),
                b.ncols(),
                c.ncols()
            )));
        }
        Ok(Self { x, b, c })
    }

    pub fn rank(&self) -> usize {
        self.x.ncols()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.x.nrows(), self.b.nrows(), self.c.nrows())
    }
}

/// `Σ_l x_l ∘ β_l ∘ η_l`.
pub fn cp_reconstruct(f: &FactorTriple) -> Tensor3 {
    let dims = f.dims();
    let l = f.rank();
    Tensor3::from_fn(dims, |k, n, q| {
        (0..l)
            .map(|r| f.x[(k, r)] * f.b[(n, r)] * f.c[(q, r)])
            .sum()
    })
}

/// `1 − ‖T − [[X,B,C]]‖_F / ‖T‖_F`.
pub fn cp_fit(t: &Tensor3, f: &FactorTriple) -> Result<f64> {
    if t.dims() != f.dims() {
        return Err(Error::Tensor(format!(
            "factor dims {:?} do not match tensor {:?}",
            f.dims(),
            t.dims()
        )));
    }
    let norm = t.frobenius_norm();
    if norm == 0.0 {
        return Err(Error::Tensor("fit undefined for a zero tensor".into()));
    }
    let resid = t.sub(&cp_reconstruct(f))?.frobenius_norm();
    Ok(1.0 - resid / norm)
}
