//! Search-free DOA recovery from the transmit factor matrix.
//!
//! For a target signature `x = Wᴴα(θ)` the transmit steering vector is a
//! Vandermonde vector `p(z) = [1, z, …, z^(M−1)]ᵀ` with `z = exp(−j2π·d_t·sin θ)`.
//! Any Hermitian PSD `G` whose null space contains `α(θ)` turns the target
//! into a zero of the Laurent polynomial `F(z) = p(z)ᴴ·G·p(z)` on the unit
//! circle. Two such matrices are built here:
//!
//! * the blocking matrix `V = W − e₁xᴴ` with `G = VVᴴ`, which needs the
//!   signature at its true scale (`Vᴴα(θ) = Wᴴα(θ) − x = 0`);
//! * the projection `G = W(I − x̂x̂ᴴ/‖x̂‖²)Wᴴ`, invariant to the unknown complex
//!   scale that CP leaves on `x̂`. This is the one used for estimation.
//!
//! `F` is rooted through the companion matrix, the root nearest the unit
//! circle (refined by a beam correlation score) is kept, and its phase is
//! mapped back to an angle.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::{transmit_steering, ArrayGeometry, BeamspaceMatrix};
use crate::error::{Error, Result};
use crate::linalg::companion_roots;
use crate::tensor::{ComplexMatrix, ComplexVector};

/// Relative magnitude under which end coefficients are trimmed before rooting.
pub const TRIM_RELATIVE: f64 = 1e-12;
/// Roots closer than `2·PAIR_TOL` form one cluster; clusters with mean
/// `|z| ≤ 1 + PAIR_TOL` are root candidates.
pub const PAIR_TOL: f64 = 1e-6;
const HERMITIAN_TOL: f64 = 1e-10;
/// Floor applied to normalized powers before taking dB.
pub const PATTERN_FLOOR: f64 = 1e-30;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// `V = W − e₁·xᴴ`: only the first row of `W` changes.
pub fn build_blocking_matrix(w: &ComplexMatrix, x: &ComplexVector) -> Result<ComplexMatrix> {
    if x.len() != w.ncols() {
        return Err(Error::Doa(format!(
            "signature length {} does not match K = {}",
            x.len(),
            w.ncols()
        )));
    }
    let mut v = w.clone();
    for k in 0..w.ncols() {
        v[(0, k)] -= x[k].conj();
    }
    Ok(v)
}

/// `G = W(I − x̂x̂ᴴ/‖x̂‖²)Wᴴ`.
pub fn build_projection_matrix(w: &ComplexMatrix, x_hat: &ComplexVector) -> Result<ComplexMatrix> {
    if x_hat.len() != w.ncols() {
        return Err(Error::Doa(format!(
            "signature length {} does not match K = {}",
            x_hat.len(),
            w.ncols()
        )));
    }
    let nrm = x_hat.norm();
    if nrm == 0.0 {
        return Err(Error::Doa("zero target signature".into()));
    }
    let u = x_hat.unscale(nrm);
    let k = w.ncols();
    let proj = ComplexMatrix::identity(k, k) - &u * u.adjoint();
    let g = w * proj * w.adjoint();
    // Remove round-off asymmetry.
    Ok((&g + g.adjoint()).map(|z| z * 0.5))
}

/// Laurent polynomial `Σ_{k=−d}^{d} c_k z^k` with Hermitian-symmetric coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct LaurentPoly {
    /// `coeffs[i]` multiplies `z^(i − half_degree)`.
    coeffs: Vec<Complex64>,
}

impl LaurentPoly {
    pub fn from_coeffs(coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() % 2 == 0 {
            return Err(Error::Doa("Laurent coefficient count must be odd".into()));
        }
        Ok(Self { coeffs })
    }

    pub fn half_degree(&self) -> usize {
        self.coeffs.len() / 2
    }

    /// Coefficient of `z^k`.
    pub fn coeff(&self, k: isize) -> Complex64 {
        let d = self.half_degree() as isize;
        if k.abs() > d {
            return c(0.0);
        }
        self.coeffs[(k + d) as usize]
    }

    /// Coefficients from `z^−d` up to `z^d`.
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        let d = self.half_degree() as i32;
        // Horner on z^d·F(z), then divide back.
        let shifted = self
            .coeffs
            .iter()
            .rev()
            .fold(c(0.0), |acc, &ck| acc * z + ck);
        shifted / z.powi(d)
    }
}

/// `c_k = Σ_m G[m, m+k]`, so that `F(z) = p(z)ᴴ G p(z)` on the unit circle.
pub fn laurent_from_hermitian(g: &ComplexMatrix) -> Result<LaurentPoly> {
    let m = g.nrows();
    if g.ncols() != m || m == 0 {
        return Err(Error::Doa(format!(
            "expected a square matrix, got {:?}",
            g.shape()
        )));
    }
    let scale = g.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let asym = (g - g.adjoint())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if asym > HERMITIAN_TOL * scale {
        return Err(Error::Doa(format!(
            "matrix is not Hermitian (deviation {asym:e})"
        )));
    }
    let d = m - 1;
    let mut coeffs = vec![c(0.0); 2 * d + 1];
    for k in 0..=d {
        let upper: Complex64 = (0..m - k).map(|i| g[(i, i + k)]).sum();
        let lower: Complex64 = (0..m - k).map(|i| g[(i + k, i)]).sum();
        let ck = (upper + lower.conj()) * 0.5;
        coeffs[d + k] = ck;
        coeffs[d - k] = ck.conj();
    }
    coeffs[d].im = 0.0;
    LaurentPoly::from_coeffs(coeffs)
}

/// All roots of `z^d·F(z)` (`2d` of them before trimming).
pub fn find_roots(poly: &LaurentPoly) -> Result<Vec<Complex64>> {
    let coeffs = poly.coeffs();
    let peak = coeffs.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(Error::Doa("cannot root the zero polynomial".into()));
    }
    let thr = TRIM_RELATIVE * peak;
    let lo = coeffs
        .iter()
        .position(|z| z.norm() >= thr)
        .expect("peak exists");
    let hi = coeffs
        .iter()
        .rposition(|z| z.norm() >= thr)
        .expect("peak exists");
    companion_roots(&coeffs[lo..=hi])
        .ok_or_else(|| Error::Doa("companion eigenvalue iteration did not converge".into()))
}

/// The chosen root and how it was ranked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootChoice {
    pub z: Complex64,
    /// Position in the input root list of the cluster member nearest the circle.
    pub index: usize,
    pub circle_distance: f64,
    pub correlation: f64,
}

/// `ρ(z) = |x̂ᴴWᴴp(z)| / (‖x̂‖·‖Wᴴp(z)‖)`.
pub fn beam_correlation(z: Complex64, x_hat: &ComplexVector, w: &ComplexMatrix) -> f64 {
    let mut pz = ComplexVector::zeros(w.nrows());
    let mut acc = c(1.0);
    for m in 0..w.nrows() {
        pz[m] = acc;
        acc *= z;
    }
    let beam = w.adjoint() * pz;
    let denom = x_hat.norm() * beam.norm();
    if denom == 0.0 || !denom.is_finite() {
        return 0.0;
    }
    x_hat.dotc(&beam).norm() / denom
}

/// A root cluster standing for one conjugate-reciprocal pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    /// Cluster mean. A double root on the unit circle comes back from the
    /// eigensolver split by about `sqrt(eps)`; the mean of the split pair is
    /// accurate to working precision.
    pub z: Complex64,
    /// Member of the cluster nearest the unit circle, as an index into the root list.
    pub index: usize,
}

/// One candidate per conjugate-reciprocal pair, ordered by distance to the unit circle.
///
/// Roots closer than `2·PAIR_TOL` are merged; clusters whose mean lies outside
/// `|z| ≤ 1 + PAIR_TOL` are dropped, leaving the member inside the circle.
pub fn canonical_candidates(roots: &[Complex64]) -> Vec<Candidate> {
    let circle = |z: Complex64| (1.0 - z.norm()).abs();
    let mut idx: Vec<usize> = (0..roots.len()).filter(|&i| roots[i].is_finite()).collect();
    idx.sort_by(|&a, &b| {
        circle(roots[a])
            .total_cmp(&circle(roots[b]))
            .then(a.cmp(&b))
    });
    let mut clusters: Vec<(usize, Complex64, usize)> = Vec::new();
    for i in idx {
        match clusters
            .iter_mut()
            .find(|(head, _, _)| (roots[i] - roots[*head]).norm() <= 2.0 * PAIR_TOL)
        {
            Some((_, sum, count)) => {
                *sum += roots[i];
                *count += 1;
            }
            None => clusters.push((i, roots[i], 1)),
        }
    }
    let mut out: Vec<Candidate> = clusters
        .into_iter()
        .map(|(head, sum, count)| Candidate {
            z: sum / count as f64,
            index: head,
        })
        .filter(|c| c.z.norm() <= 1.0 + PAIR_TOL)
        .collect();
    out.sort_by(|a, b| {
        circle(a.z)
            .total_cmp(&circle(b.z))
            .then(a.index.cmp(&b.index))
    });
    out
}

/// Among the `max_candidates` roots nearest the unit circle, picks the one
/// whose beam response correlates best with `x̂`.
pub fn select_root(
    roots: &[Complex64],
    x_hat: &ComplexVector,
    w: &ComplexMatrix,
    max_candidates: usize,
) -> Result<RootChoice> {
    let cands = canonical_candidates(roots);
    if cands.is_empty() || max_candidates == 0 {
        return Err(Error::Doa("no root inside or on the unit circle".into()));
    }
    let mut best: Option<RootChoice> = None;
    for cand in cands.iter().take(max_candidates) {
        let choice = RootChoice {
            z: cand.z,
            index: cand.index,
            circle_distance: (1.0 - cand.z.norm()).abs(),
            correlation: beam_correlation(cand.z, x_hat, w),
        };
        if best.is_none_or(|b| choice.correlation > b.correlation) {
            best = Some(choice);
        }
    }
    Ok(best.expect("non-empty candidate list"))
}

/// `θ = arcsin(−arg(z)/(2π·d_t))` in degrees; `|z|` is ignored.
pub fn root_to_angle(z: Complex64, tx_spacing: f64) -> Result<f64> {
    let phase = z.arg();
    let s = -phase / (2.0 * PI * tx_spacing);
    if !(s.abs() <= 1.0) {
        return Err(Error::Doa(format!(
            "root phase {phase} maps outside the visible region (sin θ = {s})"
        )));
    }
    Ok(s.asin().to_degrees())
}

/// Forward map `θ ↦ exp(−j2π·d_t·sin θ)`.
pub fn angle_to_root(theta_deg: f64, tx_spacing: f64) -> Complex64 {
    Complex64::from_polar(1.0, -2.0 * PI * tx_spacing * theta_deg.to_radians().sin())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoaConfig {
    /// Transmit element spacing in wavelengths.
    pub tx_spacing: f64,
    /// How many near-circle roots the correlation score chooses among.
    pub max_candidates: usize,
}

impl Default for DoaConfig {
    fn default() -> Self {
        Self {
            tx_spacing: 0.5,
            max_candidates: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoaEstimate {
    pub z_hat: Complex64,
    pub theta_deg: f64,
    pub circle_distance: f64,
    pub correlation: f64,
    pub all_roots: Vec<Complex64>,
    pub selected_index: usize,
}

/// Runs the rooting pipeline on one target signature.
pub fn estimate_single(
    x_hat: &ComplexVector,
    w: &ComplexMatrix,
    cfg: &DoaConfig,
) -> Result<DoaEstimate> {
    let g = build_projection_matrix(w, x_hat)?;
    let poly = laurent_from_hermitian(&g)?;
    let roots = find_roots(&poly)?;
    let choice = select_root(&roots, x_hat, w, cfg.max_candidates)?;
    let theta = root_to_angle(choice.z, cfg.tx_spacing)?;
    Ok(DoaEstimate {
        z_hat: choice.z,
        theta_deg: theta,
        circle_distance: choice.circle_distance,
        correlation: choice.correlation,
        all_roots: roots,
        selected_index: choice.index,
    })
}

/// One estimate per column of `X̂`, each column handled independently.
pub fn estimate_doas(
    x_hat: &ComplexMatrix,
    w: &BeamspaceMatrix,
    cfg: &DoaConfig,
) -> Result<Vec<DoaEstimate>> {
    if x_hat.nrows() != w.beams() {
        return Err(Error::Doa(format!(
            "factor has {} rows but the beamspace has K = {}",
            x_hat.nrows(),
            w.beams()
        )));
    }
    (0..x_hat.ncols())
        .map(|l| {
            estimate_single(&x_hat.column(l).into_owned(), w.matrix(), cfg).map_err(|e| {
                Error::Target {
                    target: l,
                    source: Box::new(e),
                }
            })
        })
        .collect()
}

/// Rescales `x̂` to best match `Wᴴα(θ)` in least squares, fixing the CP scale
/// so a literal blocking matrix can be drawn for an estimated angle.
pub fn align_signature(
    x_hat: &ComplexVector,
    w: &BeamspaceMatrix,
    g: &ArrayGeometry,
    theta_deg: f64,
) -> Result<ComplexVector> {
    let nrm2 = x_hat.norm_squared();
    if nrm2 == 0.0 {
        return Err(Error::Doa("zero target signature".into()));
    }
    let beam = w.matrix().adjoint() * transmit_steering(g, theta_deg)?;
    let s = x_hat.dotc(&beam) / nrm2;
    Ok(x_hat * s)
}

/// Matrix a beampattern is drawn from.
#[derive(Debug, Clone, Copy)]
pub enum PatternSource<'a> {
    /// `M×K` matrix `V`, pattern `‖Vᴴα(θ)‖²`.
    Beams(&'a ComplexMatrix),
    /// `M×M` Hermitian `G`, pattern `α(θ)ᴴGα(θ)`.
    Hermitian(&'a ComplexMatrix),
}

/// Transmit power over an angle grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamPattern {
    pub theta_deg: Vec<f64>,
    /// Linear power.
    pub power: Vec<f64>,
}

impl BeamPattern {
    /// `10·log₁₀(P/P_max)`, floored at `PATTERN_FLOOR`.
    pub fn db_normalized(&self) -> Vec<f64> {
        let peak = self.power.iter().cloned().fold(0.0, f64::max);
        self.power
            .iter()
            .map(|&p| {
                let r = if peak > 0.0 { p / peak } else { 0.0 };
                10.0 * r.max(PATTERN_FLOOR).log10()
            })
            .collect()
    }

    /// Grid angle of the first global minimum.
    pub fn argmin(&self) -> f64 {
        let mut best = 0;
        for (i, &p) in self.power.iter().enumerate() {
            if p < self.power[best] {
                best = i;
            }
        }
        self.theta_deg[best]
    }

    pub fn mean(&self) -> f64 {
        self.power.iter().sum::<f64>() / self.power.len() as f64
    }
}

/// Evaluates the transmit beampattern of `source` at each grid angle.
pub fn transmit_beampattern(
    source: PatternSource<'_>,
    g: &ArrayGeometry,
    grid_deg: &[f64],
) -> Result<BeamPattern> {
    if grid_deg.is_empty() {
        return Err(Error::Doa("empty angle grid".into()));
    }
    let m = g.tx_elements();
    let rows = match source {
        PatternSource::Beams(v) | PatternSource::Hermitian(v) => v.nrows(),
    };
    if rows != m {
        return Err(Error::Doa(format!(
            "pattern source has {rows} rows, array has M = {m}"
        )));
    }
    let power = grid_deg
        .iter()
        .map(|&theta| {
            let a = transmit_steering(g, theta)?;
            Ok(match source {
                PatternSource::Beams(v) => (v.adjoint() * &a).norm_squared(),
                PatternSource::Hermitian(h) => a.dotc(&(h * &a)).re,
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(BeamPattern {
        theta_deg: grid_deg.to_vec(),
        power,
    })
}

/// `[−90, 90]` sampled every `step_deg` degrees, endpoints included when they land.
pub fn angle_grid(step_deg: f64) -> Vec<f64> {
    let count = (180.0 / step_deg + 1e-9).floor() as usize;
    (0..=count).map(|i| -90.0 + i as f64 * step_deg).collect()
}

/// Exhaustive minimization of `α(θ)ᴴGα(θ)` over `[−90°, 90°]`.
pub fn grid_oracle(g_mat: &ComplexMatrix, geom: &ArrayGeometry, step_deg: f64) -> Result<f64> {
    if !(step_deg > 0.0) {
        return Err(Error::Doa(format!(
            "grid step must be positive, got {step_deg}"
        )));
    }
    let pattern =
        transmit_beampattern(PatternSource::Hermitian(g_mat), geom, &angle_grid(step_deg))?;
    Ok(pattern.argmin())
}
