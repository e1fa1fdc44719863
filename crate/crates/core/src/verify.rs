//! Numerical checks of the Schur-variable integrals behind the eigenvalue
//! densities: the rank-one determinant factorisations, the integrals
//!
//! ```text
//! J_{m,p}(z) = ∫ det(I - T T^H)^p dT̃      (truncated)
//! I_{n,p}(z) = ∫ det(I + T T^H)^{-p} dT̃   (spherical)
//! ```
//!
//! over the strictly upper entries of a triangular `T` with diagonal `z`, and
//! the constants produced by reducing them one column at a time.
//!
//! With no integration variables the integral is the integrand itself, so
//! `J_{1,p}(z) = (1-|z|^2)^p` and `I_{1,p}(z) = (1+|z|^2)^{-p}`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{cholesky, determinant, log_det_hpd, singular_values, solve, ComplexMatrix, LinalgError};
use crate::quadrature::{PlanarRule, RADIAL_NODES};
use crate::rng::{complex_normal, uniform_disk, RngState};
use crate::stats::{log_gamma, RunningStats, StatsError};

/// Largest `m` accepted by [`mc_integral_j`].
pub const MAX_DIM_J: usize = 4;
/// Largest `n` accepted by [`mc_integral_i`].
pub const MAX_DIM_I: usize = 3;
/// Monte Carlo loops are split into this many independently seeded shards,
/// merged in order.
pub const MC_SHARDS: usize = 64;
/// Relative tolerance of the factorisation identities.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Target accuracy of the radial quadratures for the constants.
const RADIAL_QUAD_TOL: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("instance lies outside the support: I - T T^H is not positive definite")]
    OutOfSupport,
    #[error("dimension {dim} exceeds the cost guard {max}")]
    CostGuard { dim: usize, max: usize },
    #[error("integral diverges: p = {p} too small for dimension {dim}")]
    Divergent { dim: usize, p: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Upper-triangular `T_m` given by its diagonal and its strictly upper part.
/// The strict part is stored column by column, so the last `m - 1` entries
/// are the final column `u` above the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangularSample {
    diagonal: Vec<Complex64>,
    strict_upper: Vec<Complex64>,
}

impl TriangularSample {
    pub fn new(diagonal: Vec<Complex64>, strict_upper: Vec<Complex64>) -> Result<Self, VerifyError> {
        let m = diagonal.len();
        if m == 0 {
            return Err(VerifyError::InvalidParams("empty diagonal".into()));
        }
        if strict_upper.len() != m * (m - 1) / 2 {
            return Err(VerifyError::InvalidParams(format!(
                "dimension {m} needs {} strictly upper entries, got {}",
                m * (m - 1) / 2,
                strict_upper.len()
            )));
        }
        if diagonal.iter().chain(&strict_upper).any(|z| !z.is_finite()) {
            return Err(VerifyError::InvalidParams("non-finite entry".into()));
        }
        Ok(Self { diagonal, strict_upper })
    }

    /// Diagonal and strict entries i.i.d. standard complex normal.
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<Self, VerifyError> {
        let diagonal = (0..dim).map(|_| complex_normal(rng)).collect();
        let strict = (0..dim * dim.saturating_sub(1) / 2).map(|_| complex_normal(rng)).collect();
        Self::new(diagonal, strict)
    }

    /// A random instance rescaled so that its largest singular value is
    /// uniform on `(0, 0.99)`, hence `I - T T^H` is positive definite.
    pub fn random_in_support<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<Self, VerifyError> {
        let t = Self::random(dim, rng)?;
        let top = singular_values(&t.to_matrix())[0];
        let target = 0.99 * rng.random::<f64>();
        let s = if top > 0.0 { target / top } else { 0.0 };
        Self::new(
            t.diagonal.iter().map(|z| z * s).collect(),
            t.strict_upper.iter().map(|z| z * s).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    pub fn diagonal(&self) -> &[Complex64] {
        &self.diagonal
    }

    pub fn strict_upper(&self) -> &[Complex64] {
        &self.strict_upper
    }

    pub fn to_matrix(&self) -> ComplexMatrix {
        upper_triangular(&self.diagonal, &self.strict_upper)
    }

    /// `(T_{m-1}, u, z_m)`.
    fn split_last(&self) -> (ComplexMatrix, Vec<Complex64>, Complex64) {
        let m = self.dim();
        let inner = (m - 1) * (m - 2) / 2;
        let t = upper_triangular(&self.diagonal[..m - 1], &self.strict_upper[..inner]);
        (t, self.strict_upper[inner..].to_vec(), self.diagonal[m - 1])
    }
}

fn upper_triangular(diagonal: &[Complex64], strict: &[Complex64]) -> ComplexMatrix {
    let m = diagonal.len();
    let mut t = ComplexMatrix::zeros(m, m);
    let mut k = 0;
    for j in 0..m {
        for i in 0..j {
            t[(i, j)] = strict[k];
            k += 1;
        }
        t[(j, j)] = diagonal[j];
    }
    t
}

/// `I + sign T T^H`.
fn shifted_gram(t: &ComplexMatrix, sign: f64) -> ComplexMatrix {
    let g = t * &t.adjoint();
    &ComplexMatrix::identity(t.rows()) + &g.scale(Complex64::new(sign, 0.0))
}

fn det_identity(t: &TriangularSample, sign: f64) -> Result<f64, VerifyError> {
    let m = t.dim();
    if m < 2 {
        return Err(VerifyError::InvalidParams("need m >= 2".into()));
    }
    let full = shifted_gram(&t.to_matrix(), sign);
    if sign < 0.0 && cholesky(&full).is_err() {
        return Err(VerifyError::OutOfSupport);
    }
    let lhs = determinant(&full)?.re;
    let (t_inner, u, z) = t.split_last();
    let inner = shifted_gram(&t_inner, sign);
    let head = 1.0 + sign * z.norm_sqr();
    let u_col = ComplexMatrix::from_row_major(m - 1, 1, u.clone());
    let x = solve(&inner, &u_col)?;
    let quad: f64 = u.iter().zip(x.as_slice()).map(|(ui, xi)| (ui.conj() * xi).re).sum();
    let rhs = head * determinant(&inner)?.re * (1.0 + sign * quad / head);
    Ok((lhs - rhs).abs() / lhs.abs())
}

/// Relative residual of
/// `det(I + T_m T_m^H) = (1+|z_m|^2) det(I + T_{m-1} T_{m-1}^H) (1 + u^H (I + T_{m-1} T_{m-1}^H)^{-1} u / (1+|z_m|^2))`.
pub fn det_identity_spherical(t: &TriangularSample) -> Result<f64, VerifyError> {
    det_identity(t, 1.0)
}

/// The same factorisation with every sign flipped, for `I - T_m T_m^H`
/// positive definite; instances outside that set are rejected.
pub fn det_identity_truncated(t: &TriangularSample) -> Result<f64, VerifyError> {
    det_identity(t, -1.0)
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: u64,
}

impl McEstimate {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            std_error: 0.0,
            samples: 1,
        }
    }

    pub fn from_stats(stats: &RunningStats) -> Self {
        Self {
            value: stats.mean(),
            std_error: stats.std_error(),
            samples: stats.count(),
        }
    }

    /// Number of standard errors between the estimate and `target`.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.value - target).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }

    pub fn relative_error(&self, target: f64) -> f64 {
        (self.value - target).abs() / target.abs()
    }
}

/// Runs `samples` draws of `f` split over [`MC_SHARDS`] shards with their
/// own sub-streams, merging the per-shard statistics in shard order.
fn sharded_mean<F>(samples: usize, state: RngState, f: F) -> Result<McEstimate, VerifyError>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> Result<f64, VerifyError> + Sync,
{
    if samples < 2 {
        return Err(VerifyError::InvalidParams("need at least 2 Monte Carlo samples".into()));
    }
    let shards = MC_SHARDS.min(samples);
    let per = samples / shards;
    let extra = samples % shards;
    let parts: Vec<RunningStats> = (0..shards)
        .into_par_iter()
        .map(|s| {
            let mut rng = state.substream(s as u64).rng();
            let count = per + usize::from(s < extra);
            let mut stats = RunningStats::default();
            for _ in 0..count {
                stats.push(f(&mut rng)?);
            }
            Ok(stats)
        })
        .collect::<Result<_, VerifyError>>()?;
    let merged = parts.iter().fold(RunningStats::default(), |acc, s| acc.merge(s));
    Ok(McEstimate::from_stats(&merged))
}

/// Quadrature value and closed form of a dimensional constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantEstimate {
    pub quadrature: f64,
    pub closed_form: f64,
}

impl ConstantEstimate {
    pub fn relative_error(&self) -> f64 {
        (self.quadrature - self.closed_form).abs() / self.closed_form.abs()
    }
}

fn lgamma(x: f64) -> Result<f64, VerifyError> {
    Ok(log_gamma(x)?)
}

/// `∫_0^1 x^a (1-x)^b dx` for `a >= 0`, `b > -1` by double-exponential
/// quadrature. With `1 - x = y^{1/(b+1)}` the factor `(1-x)^b dx` becomes
/// `dy/(b+1)`, which removes the endpoint singularity.
fn beta_integral(a: f64, b: f64) -> f64 {
    let q = 1.0 / (b + 1.0);
    quadrature::integrate(|y| (1.0 - y.powf(q)).powf(a), 0.0, 1.0, RADIAL_QUAD_TOL).integral * q
}

/// `π^m Γ(p-m) / Γ(p)`.
pub fn constant_c_closed(m: usize, p: f64) -> Result<f64, VerifyError> {
    check_plane_integrable(m, p)?;
    let mf = m as f64;
    Ok((mf * PI.ln() + lgamma(p - mf)? - lgamma(p)?).exp())
}

fn check_plane_integrable(m: usize, p: f64) -> Result<(), VerifyError> {
    if m == 0 {
        return Err(VerifyError::InvalidParams("dimension must be >= 1".into()));
    }
    if !(p > m as f64) {
        return Err(VerifyError::Divergent { dim: m, p });
    }
    Ok(())
}

/// `∫_{C^m} (1 + |v|^2)^{-p} dv`: radial quadrature against the closed form.
/// With `x = t/(1+t)`, `t = |v|^2`, the integral is
/// `π^m/Γ(m) ∫_0^1 x^{m-1} (1-x)^{p-m-1} dx`.
pub fn constant_c(m: usize, p: f64) -> Result<ConstantEstimate, VerifyError> {
    let closed_form = constant_c_closed(m, p)?;
    let mf = m as f64;
    let radial = beta_integral(mf - 1.0, p - mf - 1.0);
    let quad = (mf * PI.ln() - lgamma(mf)?).exp() * radial;
    Ok(ConstantEstimate {
        quadrature: quad,
        closed_form,
    })
}

/// `π^m Γ(p+1) / Γ(p+m+1)`.
pub fn constant_c_ball_closed(m: usize, p: f64) -> Result<f64, VerifyError> {
    check_ball(m, p)?;
    let mf = m as f64;
    Ok((mf * PI.ln() + lgamma(p + 1.0)? - lgamma(p + mf + 1.0)?).exp())
}

fn check_ball(m: usize, p: f64) -> Result<(), VerifyError> {
    if m == 0 {
        return Err(VerifyError::InvalidParams("dimension must be >= 1".into()));
    }
    if !(p >= 0.0 && p.is_finite()) {
        return Err(VerifyError::InvalidParams(format!("need p >= 0, got {p}")));
    }
    Ok(())
}

/// `∫_{|v| < 1, v ∈ C^m} (1 - |v|^2)^p dv = π^m/Γ(m) ∫_0^1 t^{m-1} (1-t)^p dt`.
pub fn constant_c_ball(m: usize, p: f64) -> Result<ConstantEstimate, VerifyError> {
    let closed_form = constant_c_ball_closed(m, p)?;
    let mf = m as f64;
    let radial = beta_integral(mf - 1.0, p);
    let quad = (mf * PI.ln() - lgamma(mf)?).exp() * radial;
    Ok(ConstantEstimate {
        quadrature: quad,
        closed_form,
    })
}

/// Draw from the density `(1/π)(1 + |t|^2)^{-2}` on `C`, returned with the
/// log of that density.
fn draw_cauchy<R: Rng + ?Sized>(rng: &mut R) -> (Complex64, f64) {
    let u: f64 = rng.random();
    let s = u / (1.0 - u);
    let theta = std::f64::consts::TAU * rng.random::<f64>();
    let t = Complex64::from_polar(s.sqrt(), theta);
    (t, -PI.ln() - 2.0 * s.ln_1p())
}

/// Importance-sampled estimate of `∫_{C^m} (1 + |v|^2)^{-p} dv`.
pub fn constant_c_mc(m: usize, p: f64, samples: usize, state: RngState) -> Result<McEstimate, VerifyError> {
    check_plane_integrable(m, p)?;
    sharded_mean(samples, state, |rng| {
        let mut norm = 0.0;
        let mut log_q = 0.0;
        for _ in 0..m {
            let (t, lq) = draw_cauchy(rng);
            norm += t.norm_sqr();
            log_q += lq;
        }
        Ok((-p * norm.ln_1p() - log_q).exp())
    })
}

/// Monte Carlo estimate of `J_{m,p}(z)`: strict entries uniform on the unit
/// polydisk, weighted by its volume, integrand zero where `I - T T^H` is not
/// positive definite.
pub fn mc_integral_j(z: &[Complex64], p: f64, samples: usize, state: RngState) -> Result<McEstimate, VerifyError> {
    let m = z.len();
    if m == 0 {
        return Err(VerifyError::InvalidParams("empty diagonal".into()));
    }
    if m > MAX_DIM_J {
        return Err(VerifyError::CostGuard { dim: m, max: MAX_DIM_J });
    }
    if !(p >= 0.0 && p.is_finite()) {
        return Err(VerifyError::InvalidParams(format!("need p >= 0, got {p}")));
    }
    if let Some(w) = z.iter().find(|w| !(w.norm_sqr() < 1.0)) {
        return Err(VerifyError::InvalidParams(format!("|z| = {} is not inside the unit disk", w.norm())));
    }
    if m == 1 {
        return Ok(McEstimate::exact((1.0 - z[0].norm_sqr()).powf(p)));
    }
    let k = m * (m - 1) / 2;
    let volume = PI.powi(k as i32);
    sharded_mean(samples, state, |rng| {
        let strict: Vec<Complex64> = (0..k).map(|_| uniform_disk(rng)).collect();
        let t = upper_triangular(z, &strict);
        let gap = shifted_gram(&t, -1.0);
        Ok(match log_det_hpd(&gap) {
            Ok(ld) => volume * (p * ld).exp(),
            Err(_) => 0.0,
        })
    })
}

/// Importance-sampled estimate of `I_{n,p}(z)`: each strict entry drawn from
/// `(1/π)(1 + |t|^2)^{-2}`, weights formed in log space.
pub fn mc_integral_i(z: &[Complex64], p: f64, samples: usize, state: RngState) -> Result<McEstimate, VerifyError> {
    let n = z.len();
    if n == 0 {
        return Err(VerifyError::InvalidParams("empty diagonal".into()));
    }
    if n > MAX_DIM_I {
        return Err(VerifyError::CostGuard { dim: n, max: MAX_DIM_I });
    }
    if !(p >= n as f64) {
        return Err(VerifyError::Divergent { dim: n, p });
    }
    if z.iter().any(|w| !w.is_finite()) {
        return Err(VerifyError::InvalidParams("non-finite diagonal entry".into()));
    }
    if n == 1 {
        return Ok(McEstimate::exact((-p * z[0].norm_sqr().ln_1p()).exp()));
    }
    let k = n * (n - 1) / 2;
    sharded_mean(samples, state, |rng| {
        let mut log_q = 0.0;
        let strict: Vec<Complex64> = (0..k)
            .map(|_| {
                let (t, lq) = draw_cauchy(rng);
                log_q += lq;
                t
            })
            .collect();
        let t = upper_triangular(z, &strict);
        let ld = log_det_hpd(&shifted_gram(&t, 1.0))?;
        Ok((-p * ld - log_q).exp())
    })
}

/// One configuration of a recursion check.
#[derive(Debug, Clone, PartialEq)]
pub struct RecursionTrial {
    pub z: Vec<Complex64>,
    pub estimate: McEstimate,
    pub predicted: f64,
    pub z_score: f64,
    pub relative_error: f64,
    pub pass: bool,
}

/// Weighted least-squares slope of `log(estimate)` against a regressor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub std_error: f64,
    pub expected: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecursionReport {
    pub trials: Vec<RecursionTrial>,
    /// Closed-form constant of the reduction.
    pub constant: f64,
    /// Estimate at `z = 0`, where the prediction is the constant itself.
    pub constant_fit: McEstimate,
    pub constant_fit_pass: bool,
    /// Largest relative error over the trials.
    pub worst_relative_error: f64,
    /// Largest z-score over the trials.
    pub worst_z_score: f64,
    /// Deterministic cross-check by planar quadrature, where one is run.
    pub quadrature_residuals: Vec<f64>,
    pub pass: bool,
}

/// Margin in standard errors for Monte Carlo comparisons.
pub const MC_SIGMAS: f64 = 3.0;
/// Relative-error cap for the truncated recursion.
pub const TRUNCATED_RELATIVE_CAP: f64 = 0.02;
/// Largest `|z|` drawn for recursion configurations.
pub const TRIAL_RADIUS: f64 = 0.75;

/// Constant of `J_{m,p}(z) = C ∏(1-|z_k|^2)^{m+p-1}`:
/// `∏_{k=1}^{m-1} C_ball(k, p + m - 1 - k)`.
pub fn truncated_recursion_constant(m: usize, p: f64) -> Result<f64, VerifyError> {
    let mut c = 1.0;
    for k in 1..m {
        c *= constant_c_ball_closed(k, p + (m - 1 - k) as f64)?;
    }
    Ok(c)
}

/// `C ∏(1-|z_k|^2)^{m+p-1}`.
pub fn truncated_prediction(z: &[Complex64], p: f64) -> Result<f64, VerifyError> {
    let m = z.len();
    let e = m as f64 + p - 1.0;
    let c = truncated_recursion_constant(m, p)?;
    Ok(c * z.iter().map(|w| (1.0 - w.norm_sqr()).powf(e)).product::<f64>())
}

fn random_trial_point<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<Complex64> {
    (0..dim).map(|_| uniform_disk(rng) * TRIAL_RADIUS).collect()
}

fn make_trial(z: Vec<Complex64>, estimate: McEstimate, predicted: f64, relative_cap: Option<f64>) -> RecursionTrial {
    let z_score = estimate.z_score(predicted);
    let relative_error = estimate.relative_error(predicted);
    let pass = z_score <= MC_SIGMAS && relative_cap.is_none_or(|cap| relative_error < cap);
    RecursionTrial {
        z,
        estimate,
        predicted,
        z_score,
        relative_error,
        pass,
    }
}

fn finish(
    trials: Vec<RecursionTrial>,
    constant: f64,
    constant_fit: McEstimate,
    constant_fit_pass: bool,
    quadrature_residuals: Vec<f64>,
    quad_pass: bool,
) -> RecursionReport {
    let worst_relative_error = trials.iter().map(|t| t.relative_error).fold(0.0, f64::max);
    let worst_z_score = trials.iter().map(|t| t.z_score).fold(0.0, f64::max);
    let pass = constant_fit_pass && quad_pass && trials.iter().all(|t| t.pass);
    RecursionReport {
        trials,
        constant,
        constant_fit,
        constant_fit_pass,
        worst_relative_error,
        worst_z_score,
        quadrature_residuals,
        pass,
    }
}

/// Compares Monte Carlo `J_{m,p}` at `trials` random configurations with
/// `C ∏(1-|z_k|^2)^{m+p-1}`. Every comparison must sit within 3 standard
/// errors and 2% relative.
pub fn recursion_check_truncated(
    m: usize,
    p: f64,
    trials: usize,
    samples: usize,
    state: RngState,
) -> Result<RecursionReport, VerifyError> {
    if !(2..=3).contains(&m) {
        return Err(VerifyError::InvalidParams(format!("m must be 2 or 3, got {m}")));
    }
    let constant = truncated_recursion_constant(m, p)?;
    let zero = vec![Complex64::new(0.0, 0.0); m];
    let fit = mc_integral_j(&zero, p, samples, state.substream(0))?;
    let fit_trial = make_trial(zero, fit, constant, Some(TRUNCATED_RELATIVE_CAP));
    let mut draw = state.substream(1).rng();
    let mut out = Vec::with_capacity(trials);
    for i in 0..trials {
        let z = random_trial_point(m, &mut draw);
        let est = mc_integral_j(&z, p, samples, state.substream(2 + i as u64))?;
        let predicted = truncated_prediction(&z, p)?;
        out.push(make_trial(z, est, predicted, Some(TRUNCATED_RELATIVE_CAP)));
    }
    Ok(finish(out, constant, fit, fit_trial.pass, Vec::new(), true))
}

/// `C_{2,p} (1+|z_1|^2)^{-(p-1)} (1+|z_2|^2)^{-(p-1)}` with `C_{2,p} = π/(p-1)`.
pub fn spherical_prediction(z: &[Complex64; 2], p: f64) -> Result<f64, VerifyError> {
    let c = constant_c_closed(1, p)?;
    Ok(c * z.iter().map(|w| (-(p - 1.0) * w.norm_sqr().ln_1p()).exp()).product::<f64>())
}

/// `I_{2,p}(z)` by planar quadrature over the single strict entry, with the
/// determinant evaluated directly.
pub fn quadrature_integral_i2(z: &[Complex64; 2], p: f64) -> Result<f64, VerifyError> {
    if !(p > 1.0) {
        return Err(VerifyError::Divergent { dim: 2, p });
    }
    // Integrand decays like |t|^{-2p}; the plane rule is exact for p integer.
    let rule = PlanarRule::plane(RADIAL_NODES, 4);
    let mut err = None;
    let value = rule.integrate(|t| {
        let m = upper_triangular(z, &[t]);
        match log_det_hpd(&shifted_gram(&m, 1.0)) {
            Ok(ld) => (-p * ld).exp(),
            Err(e) => {
                err = Some(e);
                0.0
            }
        }
    });
    match err {
        Some(e) => Err(e.into()),
        None => Ok(value),
    }
}

/// Relative tolerance of the quadrature cross-check.
pub const QUADRATURE_TOL: f64 = 1e-4;

/// One reduction step for the spherical integral at `n = 2`:
/// `I_{2,p}(z_1, z_2) = C_{2,p} (1+|z_2|^2)^{-(p-1)} I_{1,p-1}(z_1)`.
/// Checked at `z = 0` and at each random configuration both by planar
/// quadrature and by importance-sampled Monte Carlo.
pub fn recursion_check_spherical(
    n: usize,
    p: f64,
    trials: usize,
    samples: usize,
    state: RngState,
) -> Result<RecursionReport, VerifyError> {
    if n != 2 {
        return Err(VerifyError::InvalidParams(format!("only the n = 2 reduction is checked, got n = {n}")));
    }
    if !(p >= 3.0) {
        return Err(VerifyError::InvalidParams(format!("need p >= n + 1 = 3, got {p}")));
    }
    let constant = constant_c_closed(1, p)?;
    let zero = [Complex64::new(0.0, 0.0); 2];
    let mut residuals = vec![(quadrature_integral_i2(&zero, p)? - constant).abs() / constant];
    let fit = mc_integral_i(&zero, p, samples, state.substream(0))?;
    let fit_pass = make_trial(zero.to_vec(), fit, constant, None).pass;
    let mut draw = state.substream(1).rng();
    let mut out = Vec::with_capacity(trials);
    for i in 0..trials {
        let zv = random_trial_point(2, &mut draw);
        let z = [zv[0], zv[1]];
        let predicted = spherical_prediction(&z, p)?;
        residuals.push((quadrature_integral_i2(&z, p)? - predicted).abs() / predicted);
        let est = mc_integral_i(&z, p, samples, state.substream(2 + i as u64))?;
        out.push(make_trial(zv, est, predicted, None));
    }
    let quad_pass = residuals.iter().all(|&r| r < QUADRATURE_TOL);
    Ok(finish(out, constant, fit, fit_pass, residuals, quad_pass))
}

/// Weighted least squares of `log(estimate)` on `x`, weights from the
/// delta-method standard error `σ/value`.
pub fn fit_log_slope(x: &[f64], estimates: &[McEstimate], expected: f64) -> Result<SlopeFit, VerifyError> {
    if x.len() != estimates.len() || x.len() < 3 {
        return Err(VerifyError::InvalidParams("need at least 3 matched points".into()));
    }
    let mut sw = 0.0;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&xi, e) in x.iter().zip(estimates) {
        if !(e.value > 0.0 && e.std_error > 0.0) {
            return Err(VerifyError::InvalidParams("estimates must be positive with positive error".into()));
        }
        let sigma = e.std_error / e.value;
        let w = 1.0 / (sigma * sigma);
        let y = e.value.ln();
        sw += w;
        sx += w * xi;
        sy += w * y;
        sxx += w * xi * xi;
        sxy += w * xi * y;
    }
    let det = sw * sxx - sx * sx;
    let slope = (sw * sxy - sx * sy) / det;
    let std_error = (sw / det).sqrt();
    Ok(SlopeFit {
        slope,
        std_error,
        expected,
        pass: (slope - expected).abs() <= 2.0 * std_error,
    })
}

/// Slope of `log J_{m,p}` against `log(1-|z_m|^2)` with the other
/// coordinates held at `fixed`; expected `m + p - 1`.
pub fn exponent_regression_truncated(
    fixed: &[Complex64],
    p: f64,
    radii: &[f64],
    samples: usize,
    state: RngState,
) -> Result<SlopeFit, VerifyError> {
    let m = fixed.len() + 1;
    let mut xs = Vec::with_capacity(radii.len());
    let mut ests = Vec::with_capacity(radii.len());
    for (i, &r) in radii.iter().enumerate() {
        let mut z = fixed.to_vec();
        z.push(Complex64::new(r, 0.0));
        ests.push(mc_integral_j(&z, p, samples, state.substream(i as u64))?);
        xs.push((-(r * r)).ln_1p());
    }
    fit_log_slope(&xs, &ests, m as f64 + p - 1.0)
}

/// Slope of `log I_{2,p}` against `log(1+|z_2|^2)` at fixed `z_1`; expected
/// `-(p-1)`.
pub fn exponent_regression_spherical(
    z1: Complex64,
    p: f64,
    radii: &[f64],
    samples: usize,
    state: RngState,
) -> Result<SlopeFit, VerifyError> {
    let mut xs = Vec::with_capacity(radii.len());
    let mut ests = Vec::with_capacity(radii.len());
    for (i, &r) in radii.iter().enumerate() {
        ests.push(mc_integral_i(&[z1, Complex64::new(r, 0.0)], p, samples, state.substream(i as u64))?);
        xs.push((r * r).ln_1p());
    }
    fit_log_slope(&xs, &ests, -(p - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussLegendre;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn triangular_layout() {
        let t = TriangularSample::new(vec![c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)], vec![c(4.0, 0.0), c(5.0, 0.0), c(6.0, 0.0)]).unwrap();
        let m = t.to_matrix();
        assert_eq!(m[(0, 1)], c(4.0, 0.0));
        assert_eq!(m[(0, 2)], c(5.0, 0.0));
        assert_eq!(m[(1, 2)], c(6.0, 0.0));
        assert_eq!(m[(2, 1)], c(0.0, 0.0));
        let (inner, u, z) = t.split_last();
        assert_eq!(inner[(0, 1)], c(4.0, 0.0));
        assert_eq!(u, vec![c(5.0, 0.0), c(6.0, 0.0)]);
        assert_eq!(z, c(3.0, 0.0));
        assert!(TriangularSample::new(vec![c(1.0, 0.0)], vec![c(1.0, 0.0)]).is_err());
        assert!(TriangularSample::new(vec![c(f64::NAN, 0.0), c(0.0, 0.0)], vec![c(1.0, 0.0)]).is_err());
    }

    #[test]
    fn identity_hand_cases() {
        let t = TriangularSample::new(vec![c(0.0, 0.0); 2], vec![c(0.6, 0.3)]).unwrap();
        let full = determinant(&shifted_gram(&t.to_matrix(), 1.0)).unwrap().re;
        assert!((full - 1.45).abs() < 1e-15);
        assert!(det_identity_spherical(&t).unwrap() < 1e-15);
        let full = determinant(&shifted_gram(&t.to_matrix(), -1.0)).unwrap().re;
        assert!((full - 0.55).abs() < 1e-15);
        assert!(det_identity_truncated(&t).unwrap() < 1e-15);

        // u = 0: the rank-one term is absent.
        let t = TriangularSample::new(vec![c(0.2, 0.1), c(-0.3, 0.4), c(0.5, 0.0)], vec![c(0.1, 0.2), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert!(det_identity_spherical(&t).unwrap() < 1e-15);
        assert!(det_identity_truncated(&t).unwrap() < 1e-15);

        let outside = TriangularSample::new(vec![c(0.0, 0.0); 2], vec![c(1.5, 0.0)]).unwrap();
        assert_eq!(det_identity_truncated(&outside), Err(VerifyError::OutOfSupport));
        assert!(det_identity_spherical(&outside).unwrap() < 1e-14);
        let single = TriangularSample::new(vec![c(0.5, 0.0)], vec![]).unwrap();
        assert!(det_identity_spherical(&single).is_err());
    }

    #[test]
    fn identities_on_random_instances() {
        let mut rng = RngState::new(1).rng();
        let mut worst: f64 = 0.0;
        for i in 0..500 {
            let m = 2 + i % 5;
            let t = TriangularSample::random(m, &mut rng).unwrap();
            worst = worst.max(det_identity_spherical(&t).unwrap());
            let t = TriangularSample::random_in_support(m, &mut rng).unwrap();
            worst = worst.max(det_identity_truncated(&t).unwrap());
        }
        assert!(worst < IDENTITY_TOL, "{worst}");
    }

    #[test]
    fn constants() {
        let c12 = constant_c(1, 2.0).unwrap();
        assert!((c12.closed_form - PI).abs() < 1e-14);
        assert!(c12.relative_error() < 1e-10);
        assert!((constant_c(1, 3.0).unwrap().closed_form - PI / 2.0).abs() < 1e-14);
        assert!(matches!(constant_c(2, 2.0), Err(VerifyError::Divergent { .. })));
        assert!(constant_c(2, 1.5).is_err());
        let mut last = f64::INFINITY;
        for k in 0..20 {
            let v = constant_c_closed(3, 3.1 + 0.5 * k as f64).unwrap();
            assert!(v > 0.0 && v < last);
            last = v;
        }
        for m in 1..=3usize {
            for p in [m as f64 + 0.5, m as f64 + 1.0, m as f64 + 2.5, m as f64 + 4.0] {
                let e = constant_c(m, p).unwrap(); assert!(e.relative_error() < 1e-10, "C({m}, {p}): {e:?}");
            }
            for p in [0.0, 0.5, 1.0, 3.7] {
                assert!(constant_c_ball(m, p).unwrap().relative_error() < 1e-10, "ball({m}, {p})");
            }
        }
        assert!((constant_c_ball(1, 0.0).unwrap().closed_form - PI).abs() < 1e-14);
        assert!((constant_c_ball(1, 1.0).unwrap().closed_form - PI / 2.0).abs() < 1e-14);
        assert!(constant_c_ball(1, -1.0).is_err());
    }

    #[test]
    fn ball_constant_by_gauss_legendre() {
        // ∫_0^1 t (1-t) dt = 1/6, so the m = 2, p = 1 ball integral is π^2/6.
        let gl = GaussLegendre::new(8);
        let radial = gl.integrate(0.0, 1.0, |t| t * (1.0 - t));
        let got = constant_c_ball(2, 1.0).unwrap();
        assert!((got.closed_form - PI * PI * radial).abs() < 1e-14);
    }

    #[test]
    fn constant_mc_route() {
        let est = constant_c_mc(2, 4.0, 200_000, RngState::new(3)).unwrap();
        let exact = constant_c_closed(2, 4.0).unwrap();
        assert!(est.z_score(exact) < 3.0, "{est:?} vs {exact}");
    }

    #[test]
    fn j_edge_cases() {
        let s = RngState::new(0);
        assert_eq!(mc_integral_j(&[c(0.0, 0.0)], 2.0, 10, s).unwrap().value, 1.0);
        assert_eq!(mc_integral_j(&[c(0.6, 0.0)], 2.0, 10, s).unwrap().value, 0.64f64.powi(2));
        assert!(matches!(mc_integral_j(&[c(0.0, 0.0); 5], 1.0, 10, s), Err(VerifyError::CostGuard { dim: 5, max: 4 })));
        assert!(mc_integral_j(&[c(1.0, 0.0), c(0.0, 0.0)], 1.0, 10, s).is_err());
        assert!(mc_integral_j(&[c(0.0, 0.0); 2], -1.0, 10, s).is_err());
    }

    #[test]
    fn j_m2_at_origin() {
        let est = mc_integral_j(&[c(0.0, 0.0); 2], 1.0, 200_000, RngState::new(5)).unwrap();
        // ∫_{|t|<1} (1 - |t|^2) dt by radial quadrature.
        let exact = GaussLegendre::new(8).integrate(0.0, 1.0, |r| 2.0 * PI * r * (1.0 - r * r));
        assert!((exact - PI / 2.0).abs() < 1e-14);
        assert!(est.z_score(exact) < 3.0, "{est:?}");
    }

    #[test]
    fn j_deterministic_and_symmetric() {
        let z = [c(0.3, 0.1), c(-0.2, 0.5)];
        let a = mc_integral_j(&z, 2.0, 50_000, RngState::new(9)).unwrap();
        let b = mc_integral_j(&z, 2.0, 50_000, RngState::new(9)).unwrap();
        assert_eq!(a, b);
        let swapped = mc_integral_j(&[z[1], z[0]], 2.0, 50_000, RngState::new(10)).unwrap();
        let sigma = (a.std_error.powi(2) + swapped.std_error.powi(2)).sqrt();
        assert!((a.value - swapped.value).abs() < 3.0 * sigma);
    }

    #[test]
    fn i_edge_cases() {
        let s = RngState::new(0);
        assert_eq!(mc_integral_i(&[c(0.0, 0.0)], 2.0, 10, s).unwrap().value, 1.0);
        assert!((mc_integral_i(&[c(1.0, 0.0)], 2.0, 10, s).unwrap().value - 0.25).abs() < 1e-15);
        assert!(matches!(mc_integral_i(&[c(0.0, 0.0); 2], 1.5, 10, s), Err(VerifyError::Divergent { .. })));
        assert!(matches!(mc_integral_i(&[c(0.0, 0.0); 4], 5.0, 10, s), Err(VerifyError::CostGuard { .. })));
    }

    #[test]
    fn i_n2_at_origin() {
        // At z = 0 the determinant reduces to 1 + |t|^2.
        let exact = GaussLegendre::new(32).integrate(0.0, 1.0, |x| PI * (1.0 - x));
        assert!((exact - PI / 2.0).abs() < 1e-14);
        let quad = quadrature_integral_i2(&[c(0.0, 0.0); 2], 3.0).unwrap();
        assert!((quad - exact).abs() < 1e-12);
        let est = mc_integral_i(&[c(0.0, 0.0); 2], 2.0, 200_000, RngState::new(6)).unwrap();
        assert!(est.z_score(PI) < 3.0, "{est:?}");
    }

    #[test]
    fn i_n3_matches_iterated_reduction() {
        // I_{3,p} = C_{3,p}/(1+|z_3|^2)^{p-2} I_{2,p-1}, with C_{3,p} = C(2, p).
        let z = [c(0.3, 0.2), c(-0.4, 0.1), c(0.2, -0.5)];
        let p = 5.0;
        let c3 = constant_c_closed(2, p).unwrap();
        let predicted = c3 * (1.0 + z[2].norm_sqr()).powf(-(p - 2.0)) * spherical_prediction(&[z[0], z[1]], p - 1.0).unwrap();
        let est = mc_integral_i(&z, p, 400_000, RngState::new(12)).unwrap();
        assert!(est.z_score(predicted) < 3.0, "{est:?} vs {predicted}");
    }

    #[test]
    fn j_m3_matches_product_form() {
        let z = [c(0.2, 0.1), c(-0.3, 0.2), c(0.1, -0.4)];
        let est = mc_integral_j(&z, 1.0, 400_000, RngState::new(13)).unwrap();
        let predicted = truncated_prediction(&z, 1.0).unwrap();
        assert!(est.z_score(predicted) < 3.0, "{est:?} vs {predicted}");
    }

    #[test]
    fn recursion_checks_small() {
        let r = recursion_check_truncated(2, 1.0, 3, 200_000, RngState::new(21)).unwrap();
        assert!(r.pass, "{r:?}");
        assert!((r.constant - PI / 2.0).abs() < 1e-14);
        let r = recursion_check_spherical(2, 3.0, 3, 200_000, RngState::new(22)).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.quadrature_residuals.iter().all(|&x| x < 1e-8));
        let r = recursion_check_truncated(3, 1.0, 2, 2_000_000, RngState::new(23)).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(recursion_check_truncated(4, 1.0, 1, 10, RngState::new(0)).is_err());
        assert!(recursion_check_spherical(2, 2.0, 1, 10, RngState::new(0)).is_err());
    }

    #[test]
    fn slope_regressions() {
        let fit = exponent_regression_truncated(&[c(0.2, 0.1)], 2.0, &[0.0, 0.2, 0.4, 0.55, 0.7], 200_000, RngState::new(30)).unwrap();
        assert!(fit.pass, "{fit:?}");
        let fit = exponent_regression_spherical(c(0.3, 0.0), 3.0, &[0.0, 0.4, 0.8, 1.2, 1.6], 200_000, RngState::new(31)).unwrap();
        assert!(fit.pass, "{fit:?}");
    }

    #[test]
    fn slope_fit_exact_data() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ests: Vec<McEstimate> = xs
            .iter()
            .map(|&x: &f64| McEstimate {
                value: (2.0 - 1.5 * x).exp(),
                std_error: 0.01 * (2.0 - 1.5 * x).exp(),
                samples: 100,
            })
            .collect();
        let fit = fit_log_slope(&xs, &ests, -1.5).unwrap();
        assert!((fit.slope + 1.5).abs() < 1e-12);
        assert!(fit.pass);
    }

    proptest! {
        #[test]
        fn identities_hold(seed in any::<u64>(), m in 2usize..7) {
            let mut rng = RngState::new(seed).rng();
            let t = TriangularSample::random(m, &mut rng).unwrap();
            prop_assert!(det_identity_spherical(&t).unwrap() < IDENTITY_TOL);
            let t = TriangularSample::random_in_support(m, &mut rng).unwrap();
            prop_assert!(det_identity_truncated(&t).unwrap() < IDENTITY_TOL);
        }
    }
}
