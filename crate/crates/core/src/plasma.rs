//! Metropolis–Hastings sampling of the one-component plasma on the
//! pseudosphere, in disk coordinates `|z| < 2a`. The stationary density
//! against `dx dy` is
//!
//! ```text
//! ∏ (1 - |z_l|^2/4a^2)^{(2πηa^2 + 1/2)β - 2} ∏_{j<k} |z_k - z_j|^β
//! ```

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::rng::RngState;
use crate::stats::{integrated_autocorrelation_time, RunningStats};

/// Sweeps between full recomputations of the cached log-weight.
pub const REFRESH_INTERVAL: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlasmaError {
    #[error("invalid plasma parameters: {0}")]
    InvalidParams(String),
    #[error("invalid chain configuration: {0}")]
    InvalidConfig(String),
    #[error("particle {index} at |z| = {modulus} is outside the disk of radius {bound}")]
    OutOfDisk { index: usize, modulus: f64, bound: f64 },
    #[error("particles {0} and {1} coincide")]
    Coincident(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlasmaParams {
    n_particles: usize,
    beta: f64,
    eta: f64,
    a: f64,
}

impl PlasmaParams {
    pub fn new(n_particles: usize, beta: f64, eta: f64, a: f64) -> Result<Self, PlasmaError> {
        if n_particles == 0 {
            return Err(PlasmaError::InvalidParams("need at least one particle".into()));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(PlasmaError::InvalidParams(format!("beta must be positive, got {beta}")));
        }
        if !(a > 0.0 && a.is_finite()) {
            return Err(PlasmaError::InvalidParams(format!("radius must be positive, got {a}")));
        }
        if !eta.is_finite() {
            return Err(PlasmaError::InvalidParams("eta must be finite".into()));
        }
        let p = Self { n_particles, beta, eta, a };
        if !(p.density_exponent() > -1.0) {
            return Err(PlasmaError::InvalidParams(format!(
                "density exponent {} must exceed -1 for integrability at the boundary",
                p.density_exponent()
            )));
        }
        Ok(p)
    }

    /// `β = 2`, `a = 1/2` and `η = n/π`, so the one-body exponent is `n - 1`
    /// as for the truncated ensemble with depth `n`.
    pub fn matched_to_truncated(size: usize, depth: usize) -> Result<Self, PlasmaError> {
        Self::new(size, 2.0, depth as f64 / PI, 0.5)
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn radius(&self) -> f64 {
        self.a
    }

    /// `2πηa^2 + 1/2`.
    pub fn background_strength(&self) -> f64 {
        TAU * self.eta * self.a * self.a + 0.5
    }

    /// `(2πηa^2 + 1/2)β - 2`.
    pub fn density_exponent(&self) -> f64 {
        self.background_strength() * self.beta - 2.0
    }

    /// `log(1 - |z|^2/4a^2)`, `-∞` on or beyond the boundary.
    fn log_gap(&self, z: Complex64) -> f64 {
        let t = 1.0 - z.norm_sqr() / (4.0 * self.a * self.a);
        if t > 0.0 {
            t.ln()
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Log of the stationary density against `dx dy`, unnormalised; `-∞` for
/// coincident points or points on or outside the boundary.
pub fn log_boltzmann(positions: &[Complex64], p: &PlasmaParams) -> f64 {
    let e = p.density_exponent();
    let mut acc = 0.0;
    for &z in positions {
        let g = p.log_gap(z);
        if g == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        acc += e * g;
    }
    for k in 0..positions.len() {
        for j in 0..k {
            let d = (positions[k] - positions[j]).norm();
            if d == 0.0 {
                return f64::NEG_INFINITY;
            }
            acc += p.beta * d.ln();
        }
    }
    acc
}

fn validate_positions(positions: &[Complex64], p: &PlasmaParams) -> Result<(), PlasmaError> {
    let bound = 2.0 * p.a;
    for (i, z) in positions.iter().enumerate() {
        if !(p.log_gap(*z) > f64::NEG_INFINITY) {
            return Err(PlasmaError::OutOfDisk {
                index: i,
                modulus: z.norm(),
                bound,
            });
        }
    }
    for k in 0..positions.len() {
        for j in 0..k {
            if positions[k] == positions[j] {
                return Err(PlasmaError::Coincident(j, k));
            }
        }
    }
    Ok(())
}

/// `U = -Σ_{j<k} log(|z_k - z_j|/2a) - (2πηa^2 + 1/2) Σ log(1 - |z_j|^2/4a^2)`.
pub fn total_energy(positions: &[Complex64], p: &PlasmaParams) -> Result<f64, PlasmaError> {
    validate_positions(positions, p)?;
    let mut u = 0.0;
    for k in 0..positions.len() {
        for j in 0..k {
            u -= ((positions[k] - positions[j]).norm() / (2.0 * p.a)).ln();
        }
    }
    let s = p.background_strength();
    for &z in positions {
        u -= s * p.log_gap(z);
    }
    Ok(u)
}

/// Particle positions with their cached log-weight.
#[derive(Debug, Clone, PartialEq)]
pub struct PlasmaState {
    positions: Vec<Complex64>,
    log_weight: f64,
}

impl PlasmaState {
    pub fn new(positions: Vec<Complex64>, p: &PlasmaParams) -> Result<Self, PlasmaError> {
        if positions.len() != p.n_particles {
            return Err(PlasmaError::InvalidParams(format!(
                "expected {} particles, got {}",
                p.n_particles,
                positions.len()
            )));
        }
        validate_positions(&positions, p)?;
        let log_weight = log_boltzmann(&positions, p);
        Ok(Self { positions, log_weight })
    }

    /// Independent uniform points in the disk of radius `a` (half the
    /// model disk).
    pub fn random<R: Rng + ?Sized>(p: &PlasmaParams, rng: &mut R) -> Result<Self, PlasmaError> {
        let positions = (0..p.n_particles)
            .map(|_| p.a * crate::rng::uniform_disk(rng))
            .collect();
        Self::new(positions, p)
    }

    pub fn positions(&self) -> &[Complex64] {
        &self.positions
    }

    pub fn log_weight(&self) -> f64 {
        self.log_weight
    }

    /// Recomputes the cached log-weight from scratch.
    pub fn refresh(&mut self, p: &PlasmaParams) {
        self.log_weight = log_boltzmann(&self.positions, p);
    }

    /// `Σ |z_l|^2`.
    pub fn sum_modulus_sq(&self) -> f64 {
        self.positions.iter().map(|z| z.norm_sqr()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainConfig {
    /// Sweeps; one sweep proposes a move for every particle in turn.
    pub steps: usize,
    pub step_scale: f64,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
}

impl ChainConfig {
    pub fn validate(&self) -> Result<(), PlasmaError> {
        if self.steps <= self.burn_in {
            return Err(PlasmaError::InvalidConfig(format!(
                "steps ({}) must exceed burn-in ({})",
                self.steps, self.burn_in
            )));
        }
        if self.thinning == 0 {
            return Err(PlasmaError::InvalidConfig("thinning must be >= 1".into()));
        }
        if !(self.step_scale > 0.0 && self.step_scale.is_finite()) {
            return Err(PlasmaError::InvalidConfig(format!("step scale must be positive, got {}", self.step_scale)));
        }
        Ok(())
    }

    /// Number of snapshots `run_chain` returns.
    pub fn snapshot_count(&self) -> usize {
        (self.steps - self.burn_in) / self.thinning
    }
}

/// Proposal standard deviation per coordinate at `z`:
/// `step_scale (1 - |z|^2/4a^2)`.
pub fn proposal_scale(z: Complex64, step_scale: f64, a: f64) -> f64 {
    step_scale * (1.0 - z.norm_sqr() / (4.0 * a * a))
}

/// Log density of proposing `to` from `from`.
pub fn proposal_log_density(from: Complex64, to: Complex64, step_scale: f64, a: f64) -> f64 {
    let s = proposal_scale(from, step_scale, a);
    -(TAU * s * s).ln() - (to - from).norm_sqr() / (2.0 * s * s)
}

/// Change in `log_boltzmann` when particle `i` moves to `z_new`.
pub fn delta_log_boltzmann(positions: &[Complex64], i: usize, z_new: Complex64, p: &PlasmaParams) -> f64 {
    let g_new = p.log_gap(z_new);
    if g_new == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let z_old = positions[i];
    let mut delta = p.density_exponent() * (g_new - p.log_gap(z_old));
    for (k, &w) in positions.iter().enumerate() {
        if k == i {
            continue;
        }
        let d_new = (z_new - w).norm();
        if d_new == 0.0 {
            return f64::NEG_INFINITY;
        }
        delta += p.beta * (d_new.ln() - (z_old - w).norm().ln());
    }
    delta
}

/// Metropolis–Hastings acceptance probability for moving particle `i` to
/// `z_new`, including the proposal-density ratio.
pub fn acceptance_probability(positions: &[Complex64], i: usize, z_new: Complex64, p: &PlasmaParams, step_scale: f64) -> f64 {
    let delta = delta_log_boltzmann(positions, i, z_new, p);
    if delta == f64::NEG_INFINITY {
        return 0.0;
    }
    let z_old = positions[i];
    let log_ratio = delta + proposal_log_density(z_new, z_old, step_scale, p.a)
        - proposal_log_density(z_old, z_new, step_scale, p.a);
    log_ratio.min(0.0).exp()
}

/// One proposal for particle `i`. Returns whether it was accepted.
pub fn metropolis_step<R: Rng + ?Sized>(
    state: &mut PlasmaState,
    i: usize,
    p: &PlasmaParams,
    step_scale: f64,
    rng: &mut R,
) -> bool {
    let z_old = state.positions[i];
    let s = proposal_scale(z_old, step_scale, p.a);
    let dx: f64 = rng.sample(StandardNormal);
    let dy: f64 = rng.sample(StandardNormal);
    let z_new = z_old + Complex64::new(dx, dy) * s;
    let u: f64 = rng.random();
    if p.log_gap(z_new) == f64::NEG_INFINITY {
        return false;
    }
    let alpha = acceptance_probability(&state.positions, i, z_new, p, step_scale);
    if u < alpha {
        state.log_weight += delta_log_boltzmann(&state.positions, i, z_new, p);
        state.positions[i] = z_new;
        true
    } else {
        false
    }
}

/// Acceptance rate and mixing of a chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainDiagnostics {
    /// Accepted fraction of proposals after burn-in.
    pub acceptance_rate: f64,
    /// Integrated autocorrelation time of `Σ|z|^2`, in snapshots.
    pub autocorrelation_time: f64,
    /// Mean of `Σ|z|^2` over the snapshots.
    pub sum_modulus_sq_mean: f64,
    /// Its standard error, inflated by the autocorrelation time.
    pub sum_modulus_sq_std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub snapshots: Vec<Vec<Complex64>>,
    pub diagnostics: ChainDiagnostics,
}

/// Runs `cfg.steps` sweeps from a random start drawn from `cfg.seed`,
/// discards the first `burn_in` and keeps every `thinning`-th sweep after.
pub fn run_chain(p: &PlasmaParams, cfg: &ChainConfig) -> Result<ChainOutput, PlasmaError> {
    cfg.validate()?;
    let mut rng = RngState::new(cfg.seed).rng();
    let mut state = PlasmaState::random(p, &mut rng)?;
    let mut snapshots = Vec::with_capacity(cfg.snapshot_count());
    let mut accepted = 0usize;
    let mut proposed = 0usize;
    for sweep in 0..cfg.steps {
        for i in 0..p.n_particles {
            let ok = metropolis_step(&mut state, i, p, cfg.step_scale, &mut rng);
            if sweep >= cfg.burn_in {
                proposed += 1;
                accepted += usize::from(ok);
            }
        }
        if (sweep + 1) % REFRESH_INTERVAL == 0 {
            state.refresh(p);
        }
        if sweep >= cfg.burn_in && (sweep - cfg.burn_in + 1).is_multiple_of(cfg.thinning) {
            snapshots.push(state.positions.clone());
        }
    }
    let series: Vec<f64> = snapshots.iter().map(|s| s.iter().map(|z| z.norm_sqr()).sum()).collect();
    let mut stats = RunningStats::default();
    series.iter().for_each(|&x| stats.push(x));
    let tau = if series.len() >= 2 {
        integrated_autocorrelation_time(&series)
    } else {
        1.0
    };
    let diagnostics = ChainDiagnostics {
        acceptance_rate: accepted as f64 / proposed.max(1) as f64,
        autocorrelation_time: tau,
        sum_modulus_sq_mean: stats.mean(),
        sum_modulus_sq_std_error: stats.std_error() * tau.max(1.0).sqrt(),
    };
    Ok(ChainOutput { snapshots, diagnostics })
}

/// Outcome of the two-state detailed-balance witness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceWitness {
    /// `q(s'|s) α̂(s→s') / (q(s|s') α̂(s'→s))`.
    pub flux_ratio: f64,
    pub std_error: f64,
    /// `exp(log_boltzmann(s') - log_boltzmann(s))`.
    pub expected: f64,
    pub z_score: f64,
    pub pass: bool,
}

/// Two-point toy chain between `s` and `s'`, which differ only in particle
/// `i`. Each of `proposals` steps proposes the other state and accepts with
/// the sampler's own acceptance probability; the empirical acceptance
/// frequencies weighted by the proposal densities must reproduce the
/// Boltzmann ratio.
pub fn detailed_balance_witness(
    s: &PlasmaState,
    s_prime: &PlasmaState,
    i: usize,
    p: &PlasmaParams,
    step_scale: f64,
    proposals: usize,
    state: RngState,
) -> Result<BalanceWitness, PlasmaError> {
    let differing: Vec<usize> = (0..p.n_particles)
        .filter(|&k| s.positions[k] != s_prime.positions[k])
        .collect();
    if differing != [i] {
        return Err(PlasmaError::InvalidParams(format!("states must differ exactly in particle {i}")));
    }
    let (a, b) = (s.positions[i], s_prime.positions[i]);
    let alpha_fwd = acceptance_probability(&s.positions, i, b, p, step_scale);
    let alpha_back = acceptance_probability(&s_prime.positions, i, a, p, step_scale);
    let mut rng = state.rng();
    let mut at_prime = false;
    let (mut tries_fwd, mut acc_fwd, mut tries_back, mut acc_back) = (0u64, 0u64, 0u64, 0u64);
    for _ in 0..proposals {
        let u: f64 = rng.random();
        if at_prime {
            tries_back += 1;
            if u < alpha_back {
                acc_back += 1;
                at_prime = false;
            }
        } else {
            tries_fwd += 1;
            if u < alpha_fwd {
                acc_fwd += 1;
                at_prime = true;
            }
        }
    }
    if acc_fwd == 0 || acc_back == 0 {
        return Err(PlasmaError::InvalidParams("a direction was never accepted; pick closer states".into()));
    }
    let fwd = acc_fwd as f64 / tries_fwd as f64;
    let back = acc_back as f64 / tries_back as f64;
    let log_q_ratio = proposal_log_density(a, b, step_scale, p.a) - proposal_log_density(b, a, step_scale, p.a);
    let flux_ratio = log_q_ratio.exp() * fwd / back;
    // Delta method on the two binomial proportions.
    let rel_var = (1.0 - fwd) / (fwd * tries_fwd as f64) + (1.0 - back) / (back * tries_back as f64);
    let std_error = flux_ratio * rel_var.sqrt();
    let expected = (log_boltzmann(&s_prime.positions, p) - log_boltzmann(&s.positions, p)).exp();
    let diff = (flux_ratio - expected).abs();
    let z_score = if diff == 0.0 { 0.0 } else { diff / std_error };
    Ok(BalanceWitness {
        flux_ratio,
        std_error,
        expected,
        z_score,
        pass: z_score <= 3.0,
    })
}
