//! CP (PARAFAC) decomposition of a 3-order tensor by alternating least squares.
//!
//! Each half-step solves an exact linear least-squares problem through the
//! normal equations, with the Khatri-Rao Gram matrix formed by the Hadamard
//! identity `(C⊙B)ᴴ(C⊙B) = (CᴴC)∘(BᴴB)`. Gram matrices that are numerically
//! singular are inverted by eigen pseudo-inverse.

use itertools::Itertools;
use log::debug;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::array::complex_gaussian;
use crate::error::{Error, Result};
use crate::linalg::{
    general_eigen, largest_entry, leading_left_singular_vectors, solve_hermitian_right,
};
use crate::tensor::{cp_fit, khatri_rao, ComplexMatrix, FactorTriple, Tensor3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    /// i.i.d. standard complex Gaussian factors.
    Random,
    /// Leading left singular vectors of each unfolding.
    DataDriven,
    /// Direct trilinear decomposition: the core of a rank-(L, L, 2) Tucker
    /// compression is split by a generalized eigenproblem. Exact on
    /// noiseless data; falls back to `Random` when `L > min(K, N)` or `Q < 2`.
    Dtld,
}

impl std::str::FromStr for InitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "data-driven" => Ok(Self::DataDriven),
            "dtld" => Ok(Self::Dtld),
            other => Err(Error::Cp(format!("unknown init strategy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpConfig {
    pub rank: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub init: InitStrategy,
    pub seed: u64,
}

impl CpConfig {
    pub fn new(rank: usize) -> Self {
        Self {
            rank,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::Cp("rank must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Cp(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::Cp("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for CpConfig {
    fn default() -> Self {
        Self {
            rank: 1,
            max_iter: 500,
            tol: 1e-8,
            init: InitStrategy::Dtld,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpResult {
    pub factors: FactorTriple,
    pub fit: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Fit after every full sweep.
    pub fit_history: Vec<f64>,
    /// Number of half-steps that fell back to the pseudo-inverse.
    pub pinv_fallbacks: usize,
}

/// Alternating least-squares state: the tensor's three unfoldings, computed once.
pub(crate) struct Unfoldings {
    pub(crate) y1: ComplexMatrix,
    pub(crate) y2: ComplexMatrix,
    pub(crate) y3: ComplexMatrix,
}

impl Unfoldings {
    pub(crate) fn new(t: &Tensor3) -> Self {
        Self {
            y1: t.unfold(1).expect("mode 1"),
            y2: t.unfold(2).expect("mode 2"),
            y3: t.unfold(3).expect("mode 3"),
        }
    }
}

/// Least-squares update `argmin_F ‖Y − F·(P⊙Q)ᵀ‖` for one factor.
fn ls_update(y: &ComplexMatrix, p: &ComplexMatrix, q: &ComplexMatrix) -> (ComplexMatrix, bool) {
    let kr = khatri_rao(p, q).expect("factor ranks agree");
    let gram = (p.adjoint() * p).component_mul(&(q.adjoint() * q));
    // F·(krᵀ·conj(kr)) = Y·conj(kr), and krᵀ·conj(kr) = conj(gram).
    let rhs = y * kr.map(|z| z.conj());
    solve_hermitian_right(&rhs, &gram.map(|z| z.conj()))
}

/// Runs one half-step for `mode` (1 = X, 2 = B, 3 = C) in place.
pub(crate) fn update_mode(y: &Unfoldings, f: &mut FactorTriple, mode: usize) -> bool {
    let (next, deficient) = match mode {
        1 => ls_update(&y.y1, &f.c, &f.b),
        2 => ls_update(&y.y2, &f.c, &f.x),
        _ => ls_update(&y.y3, &f.x, &f.b),
    };
    match mode {
        1 => f.x = next,
        2 => f.b = next,
        _ => f.c = next,
    }
    deficient
}

fn random_factor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ComplexMatrix {
    // Column-major fill so the draw order is fixed.
    let data: Vec<Complex64> = (0..rows * cols)
        .map(|_| complex_gaussian(rng, 1.0))
        .collect();
    ComplexMatrix::from_column_slice(rows, cols, &data)
}

/// DTLD starting point, `None` when the shape does not allow it or the
/// compressed slices are singular.
fn dtld_factors(t: &Tensor3, y: &Unfoldings, l: usize) -> Option<FactorTriple> {
    let (kd, nd, qd) = t.dims();
    if l > kd || l > nd || qd < 2 {
        return None;
    }
    let ux = leading_left_singular_vectors(&y.y1, l);
    let ub = leading_left_singular_vectors(&y.y2, l);
    let uc = leading_left_singular_vectors(&y.y3, 2);
    // Core slices G_s = Uxᴴ (Σ_q conj(Uc[q,s]) T[:,:,q]) conj(Ub), each Xc·diag(c_s)·Bcᵀ.
    let slice = |s: usize| {
        let mut acc = ComplexMatrix::zeros(kd, nd);
        for q in 0..qd {
            let w = uc[(q, s)].conj();
            for n in 0..nd {
                for k in 0..kd {
                    acc[(k, n)] += w * t.get(k, n, q);
                }
            }
        }
        ux.adjoint() * acc * ub.map(|z| z.conj())
    };
    let (g1, g2) = (slice(0), slice(1));
    let g2_inv = g2.clone().try_inverse()?;
    let (_, xc) = general_eigen(&(&g1 * g2_inv))?;
    let xc_inv = xc.clone().try_inverse()?;
    let x = &ux * &xc;
    let b = &ub * (xc_inv * &g2).transpose();
    let (c, _) = ls_update(&y.y3, &x, &b);
    let f = FactorTriple { x, b, c };
    let finite = [&f.x, &f.b, &f.c]
        .iter()
        .all(|m| m.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
    finite.then_some(f)
}

fn initial_factors(t: &Tensor3, y: &Unfoldings, cfg: &CpConfig) -> FactorTriple {
    let (kd, nd, qd) = t.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let l = cfg.rank;
    match cfg.init {
        InitStrategy::Dtld => dtld_factors(t, y, l).unwrap_or_else(|| {
            debug!("als: DTLD initialization unavailable, using random factors");
            FactorTriple {
                x: random_factor(&mut rng, kd, l),
                b: random_factor(&mut rng, nd, l),
                c: random_factor(&mut rng, qd, l),
            }
        }),
        InitStrategy::Random => FactorTriple {
            x: random_factor(&mut rng, kd, l),
            b: random_factor(&mut rng, nd, l),
            c: random_factor(&mut rng, qd, l),
        },
        InitStrategy::DataDriven => {
            let mut pick = |m: &ComplexMatrix, rows: usize| {
                let lead = leading_left_singular_vectors(m, l);
                let mut out = random_factor(&mut rng, rows, l);
                for j in 0..lead.ncols() {
                    out.set_column(j, &lead.column(j));
                }
                out
            };
            FactorTriple {
                x: pick(&y.y1, kd),
                b: pick(&y.y2, nd),
                c: pick(&y.y3, qd),
            }
        }
    }
}

/// Decomposes `t` into `cfg.rank` rank-one terms.
pub fn als_decompose(t: &Tensor3, cfg: &CpConfig) -> Result<CpResult> {
    cfg.validate()?;
    let (kd, nd, qd) = t.dims();
    let limit = (kd * nd).min(nd * qd).min(kd * qd);
    if cfg.rank > limit {
        return Err(Error::Cp(format!(
            "rank {} exceeds the identifiable limit {limit} for a {kd}×{nd}×{qd} tensor",
            cfg.rank
        )));
    }
    if t.frobenius_norm() == 0.0 {
        return Err(Error::Cp("cannot decompose an all-zero tensor".into()));
    }

    let y = Unfoldings::new(t);
    let mut f = initial_factors(t, &y, cfg);
    let mut history = Vec::new();
    let mut fallbacks = 0;
    let mut converged = false;
    let mut fit = f64::NEG_INFINITY;

    for iter in 0..cfg.max_iter {
        for mode in 1..=3 {
            if update_mode(&y, &mut f, mode) {
                fallbacks += 1;
            }
        }
        let new_fit = cp_fit(t, &f)?;
        history.push(new_fit);
        let delta = (new_fit - fit).abs();
        fit = new_fit;
        if iter > 0 && delta < cfg.tol {
            converged = true;
            break;
        }
    }
    if fallbacks > 0 {
        debug!("als: {fallbacks} rank-deficient Gram solves used the pseudo-inverse");
    }
    Ok(CpResult {
        factors: f,
        fit,
        iterations: history.len(),
        converged,
        fit_history: history,
        pinv_fallbacks: fallbacks,
    })
}

/// Scales every factor column to unit norm and extracts the amplitudes.
///
/// The largest-magnitude entry of each `X` column is made real positive; the
/// removed phase is pushed into the matching `C` column.
pub fn normalize_factors(f: &FactorTriple) -> Result<(FactorTriple, Vec<f64>)> {
    let mut out = f.clone();
    let mut amps = vec![1.0; f.rank()];
    for (l, amp) in amps.iter_mut().enumerate() {
        for m in [&mut out.x, &mut out.b, &mut out.c] {
            let norm = m.column(l).norm();
            if norm == 0.0 {
                return Err(Error::Cp(format!("factor column {l} is zero")));
            }
            *amp *= norm;
            m.column_mut(l).unscale_mut(norm);
        }
        let pivot = largest_entry(out.x.column(l).iter()).expect("non-empty column");
        let rot = pivot.conj() / pivot.norm();
        out.x.column_mut(l).iter_mut().for_each(|z| *z *= rot);
        out.c.column_mut(l).iter_mut().for_each(|z| *z /= rot);
    }
    Ok((out, amps))
}

/// Multiplies column `l` of `X` by `amplitudes[l]`.
pub fn apply_amplitudes(f: &FactorTriple, amplitudes: &[f64]) -> FactorTriple {
    let mut out = f.clone();
    for (l, &a) in amplitudes.iter().enumerate() {
        out.x.column_mut(l).scale_mut(a);
    }
    out
}

/// Best column assignment between two CP solutions.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMatch {
    /// `permutation[l]` is the estimated column matched to true column `l`.
    pub permutation: Vec<usize>,
    /// Per true column: congruence of the matched `X`, `B`, `C` columns.
    pub scores: Vec<[f64; 3]>,
}

fn congruence(a: &ComplexMatrix, i: usize, b: &ComplexMatrix, j: usize) -> f64 {
    let (u, v) = (a.column(i), b.column(j));
    let denom = u.norm() * v.norm();
    if denom == 0.0 {
        return 0.0;
    }
    u.dotc(&v).norm() / denom
}

/// Exhaustive search (L ≤ 5) for the permutation maximizing total triple congruence.
pub fn match_columns(est: &FactorTriple, truth: &FactorTriple) -> Result<ColumnMatch> {
    let l = truth.rank();
    if est.rank() != l {
        return Err(Error::Cp(format!("rank mismatch: {} vs {l}", est.rank())));
    }
    if l > 5 {
        return Err(Error::Cp(format!(
            "exhaustive matching refused for L={l} > 5"
        )));
    }
    let score = |e: usize, t: usize| -> [f64; 3] {
        [
            congruence(&est.x, e, &truth.x, t),
            congruence(&est.b, e, &truth.b, t),
            congruence(&est.c, e, &truth.c, t),
        ]
    };
    let mut best: Option<(f64, Vec<usize>)> = None;
    for perm in (0..l).permutations(l) {
        let total: f64 = perm
            .iter()
            .enumerate()
            .map(|(t, &e)| score(e, t).iter().product::<f64>())
            .sum();
        if best.as_ref().is_none_or(|(b, _)| total > *b) {
            best = Some((total, perm));
        }
    }
    let (_, permutation) = best.expect("at least one permutation");
    let scores = permutation
        .iter()
        .enumerate()
        .map(|(t, &e)| score(e, t))
        .collect();
    Ok(ColumnMatch {
        permutation,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::cp_reconstruct;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_triple(seed: u64, dims: (usize, usize, usize), l: usize) -> FactorTriple {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FactorTriple::new(
            random_factor(&mut rng, dims.0, l),
            random_factor(&mut rng, dims.1, l),
            random_factor(&mut rng, dims.2, l),
        )
        .unwrap()
    }

    fn tensor_diff(a: &Tensor3, b: &Tensor3) -> f64 {
        a.sub(b)
            .unwrap()
            .as_slice()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn rank_one_closed_form_recovered() {
        let x = ComplexMatrix::from_column_slice(2, 1, &[c(1.0, 0.5), c(-0.5, 1.0)]);
        let b = ComplexMatrix::from_column_slice(2, 1, &[c(1.0, 0.0), c(0.0, 2.0)]);
        let e = ComplexMatrix::from_column_slice(2, 1, &[c(0.3, -0.2), c(1.0, 1.0)]);
        let truth = FactorTriple::new(x, b, e).unwrap();
        let t = cp_reconstruct(&truth);
        let res = als_decompose(&t, &CpConfig::new(1)).unwrap();
        assert!(tensor_diff(&cp_reconstruct(&res.factors), &t) < 1e-8);
        assert!(res.converged);
    }

    #[test]
    fn zero_tensor_rejected() {
        let err = als_decompose(&Tensor3::zeros(2, 2, 2), &CpConfig::new(1)).unwrap_err();
        assert_eq!(err.module(), "cp-als");
    }

    #[test]
    fn config_validation() {
        let t = cp_reconstruct(&random_triple(1, (2, 2, 2), 1));
        for cfg in [
            CpConfig::new(0),
            CpConfig {
                tol: 0.0,
                ..CpConfig::new(1)
            },
            CpConfig {
                max_iter: 0,
                ..CpConfig::new(1)
            },
            CpConfig::new(5),
        ] {
            assert!(als_decompose(&t, &cfg).is_err());
        }
        assert_eq!(
            "data-driven".parse::<InitStrategy>().unwrap(),
            InitStrategy::DataDriven
        );
        assert!("svd".parse::<InitStrategy>().is_err());
    }

    #[test]
    fn half_steps_never_increase_objective() {
        let truth = random_triple(2, (4, 5, 6), 3);
        let mut t = cp_reconstruct(&truth);
        // perturb so the fit is not trivially exact
        let noise = cp_reconstruct(&random_triple(3, (4, 5, 6), 4));
        t = Tensor3::from_fn(t.dims(), |k, n, q| {
            t.get(k, n, q) + 0.1 * noise.get(k, n, q)
        });
        let y = Unfoldings::new(&t);
        let mut f = random_triple(4, (4, 5, 6), 3);
        let mut prev = f64::INFINITY;
        for _ in 0..30 {
            for mode in 1..=3 {
                update_mode(&y, &mut f, mode);
                let obj = t.sub(&cp_reconstruct(&f)).unwrap().frobenius_norm();
                assert!(obj <= prev * (1.0 + 1e-12) + 1e-12, "{obj} > {prev}");
                prev = obj;
            }
        }
    }

    #[test]
    fn data_driven_init_runs() {
        let truth = random_triple(5, (4, 6, 8), 2);
        let t = cp_reconstruct(&truth);
        let cfg = CpConfig {
            init: InitStrategy::DataDriven,
            ..CpConfig::new(2)
        };
        let res = als_decompose(&t, &cfg).unwrap();
        assert!(res.fit > 1.0 - 1e-6, "fit {}", res.fit);
    }

    #[test]
    fn dtld_is_exact_on_noiseless_data() {
        let truth = random_triple(14, (4, 10, 16), 2);
        let t = cp_reconstruct(&truth);
        let y = Unfoldings::new(&t);
        let f = dtld_factors(&t, &y, 2).unwrap();
        assert!(cp_fit(&t, &f).unwrap() > 1.0 - 1e-9);
        let m = match_columns(&f, &truth).unwrap();
        assert!(m.scores.iter().flatten().all(|&s| s > 1.0 - 1e-9));
        // rank above K: falls back to random
        assert!(dtld_factors(&t, &y, 5).is_none());
    }

    #[test]
    fn deterministic() {
        let t = cp_reconstruct(&random_triple(6, (3, 4, 5), 2));
        let cfg = CpConfig {
            seed: 11,
            ..CpConfig::new(2)
        };
        assert_eq!(
            als_decompose(&t, &cfg).unwrap(),
            als_decompose(&t, &cfg).unwrap()
        );
    }

    #[test]
    fn normalize_is_idempotent() {
        let f = random_triple(7, (3, 4, 5), 2);
        let (n1, _) = normalize_factors(&f).unwrap();
        let (n2, amps) = normalize_factors(&n1).unwrap();
        assert!(amps.iter().all(|a| (a - 1.0).abs() < 1e-12));
        assert!((n1.x.clone() - n2.x).norm() < 1e-12);
        assert!((n1.b.clone() - n2.b).norm() < 1e-12);
        assert!((n1.c.clone() - n2.c).norm() < 1e-12);
    }

    #[test]
    fn normalize_scale_invariance() {
        let f = random_triple(8, (3, 4, 5), 2);
        let mut g = f.clone();
        g.x.column_mut(1).scale_mut(5.0);
        let (nf, af) = normalize_factors(&f).unwrap();
        let (ng, ag) = normalize_factors(&g).unwrap();
        assert!((nf.x - ng.x).norm() < 1e-12);
        assert!((nf.c - ng.c).norm() < 1e-12);
        assert!((ag[1] - 5.0 * af[1]).abs() < 1e-12);
        assert!((ag[0] - af[0]).abs() < 1e-12);
    }

    #[test]
    fn normalize_preserves_reconstruction() {
        for seed in 0..5 {
            let f = random_triple(20 + seed, (3, 4, 5), 3);
            let (nf, amps) = normalize_factors(&f).unwrap();
            let rebuilt = cp_reconstruct(&apply_amplitudes(&nf, &amps));
            assert!(tensor_diff(&rebuilt, &cp_reconstruct(&f)) < 1e-12);
            for l in 0..3 {
                let p = crate::linalg::largest_entry(nf.x.column(l).iter()).unwrap();
                assert!(p.im.abs() < 1e-14 && p.re > 0.0);
            }
        }
    }

    #[test]
    fn normalize_rejects_zero_column() {
        let mut f = random_triple(9, (3, 4, 5), 2);
        f.b.column_mut(0).fill(c(0.0, 0.0));
        assert!(normalize_factors(&f).is_err());
    }

    #[test]
    fn match_identity_and_swap() {
        let f = random_triple(10, (4, 5, 6), 3);
        let m = match_columns(&f, &f).unwrap();
        assert_eq!(m.permutation, vec![0, 1, 2]);
        assert!(m.scores.iter().flatten().all(|s| (s - 1.0).abs() < 1e-12));

        let mut swapped = f.clone();
        for mat in [&mut swapped.x, &mut swapped.b, &mut swapped.c] {
            mat.swap_columns(0, 2);
        }
        let m = match_columns(&swapped, &f).unwrap();
        assert_eq!(m.permutation, vec![2, 1, 0]);
        assert!(m.scores.iter().flatten().all(|s| (s - 1.0).abs() < 1e-12));
    }

    #[test]
    fn match_errors() {
        let a = random_triple(11, (4, 5, 6), 2);
        let b = random_triple(12, (4, 5, 6), 3);
        assert!(match_columns(&a, &b).is_err());
        let big = random_triple(13, (8, 8, 8), 6);
        assert!(match_columns(&big, &big).is_err());
    }
}
