//! Truncated-unitary, spherical and Jacobi ensembles.
//!
//! Densities are unnormalised and returned in log space; `f64::NEG_INFINITY`
//! marks points outside the support (or coincident eigenvalues).

use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{
    self, default_schur_iterations, hermitian_eigen, hermitian_function, sample_ginibre, sample_haar_unitary, schur,
    singular_values, sort_lexicographic, ComplexMatrix, LinalgError,
};
use crate::rng::RngState;
use crate::stats::{ks_two_sample, StatsError, TestReport};

/// Retry budget for redrawing a singular `A` in the spherical sampler.
pub const SPHERICAL_MAX_RETRIES: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnsembleError {
    #[error("invalid ensemble parameters: {0}")]
    InvalidParams(String),
    #[error("eigensolver failed on sample {index}: {source}")]
    Eigensolver {
        index: u64,
        #[source]
        source: LinalgError,
    },
    #[error("could not draw an invertible A after {0} attempts")]
    SingularDraws(usize),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Which ensemble a sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnsembleKind {
    TruncatedUnitary,
    Spherical,
}

impl EnsembleKind {
    pub fn name(&self) -> &'static str {
        match self {
            EnsembleKind::TruncatedUnitary => "truncated-unitary",
            EnsembleKind::Spherical => "spherical",
        }
    }
}

impl fmt::Display for EnsembleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EnsembleKind {
    type Err = EnsembleError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "truncated-unitary" | "truncated" => Ok(EnsembleKind::TruncatedUnitary),
            "spherical" => Ok(EnsembleKind::Spherical),
            other => Err(EnsembleError::InvalidParams(format!("unknown ensemble '{other}'"))),
        }
    }
}

/// `N` (matrix size, number of eigenvalues) and `n` (truncation depth): the
/// truncated ensemble is the top `N x N` block of a Haar `U(N + n)` matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnsembleParams {
    size: usize,
    depth: usize,
}

impl EnsembleParams {
    pub fn new(size: usize, depth: usize) -> Result<Self, EnsembleError> {
        if size == 0 || depth == 0 {
            return Err(EnsembleError::InvalidParams(format!(
                "need N >= 1 and n >= 1, got N = {size}, n = {depth}"
            )));
        }
        Ok(Self { size, depth })
    }

    /// `N`.
    pub fn size(&self) -> usize {
        self.size
    }

    /// `n`.
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Whether `n >= N`, the regime in which the eigenvalue law is derived
    /// from the matrix density by integrating out the Schur variables.
    pub fn in_derived_regime(&self) -> bool {
        self.depth >= self.size
    }
}

/// One draw of eigenvalues, sorted lexicographically by `(re, im)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSample {
    pub eigenvalues: Vec<Complex64>,
    pub ensemble: EnsembleKind,
    pub seed: u64,
    pub index: u64,
}

/// Top `N x N` block of a Haar unitary of dimension `N + n`.
pub fn sample_truncated_block<R: Rng + ?Sized>(p: EnsembleParams, rng: &mut R) -> ComplexMatrix {
    let u = sample_haar_unitary(p.size + p.depth, rng);
    u.block(0, 0, p.size, p.size)
}

fn eigen_sample(
    m: &ComplexMatrix,
    ensemble: EnsembleKind,
    seed: u64,
    index: u64,
) -> Result<EigenSample, EnsembleError> {
    let s = schur(m, default_schur_iterations(m.rows())).map_err(|source| EnsembleError::Eigensolver { index, source })?;
    Ok(EigenSample {
        eigenvalues: s.eigenvalues,
        ensemble,
        seed,
        index,
    })
}

/// `count` independent eigenvalue samples. Sample `i` uses the sub-stream
/// `state.substream(i)`, so the output does not depend on thread count.
pub fn eigenvalues_truncated(
    p: EnsembleParams,
    count: usize,
    state: RngState,
) -> Result<Vec<EigenSample>, EnsembleError> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = state.substream(i).rng();
            let q = sample_truncated_block(p, &mut rng);
            eigen_sample(&q, EnsembleKind::TruncatedUnitary, state.seed, i)
        })
        .collect()
}

/// `Y = A^{-1} B` with `A`, `B` independent `N x N` Ginibre matrices.
pub fn sample_spherical<R: Rng + ?Sized>(size: usize, rng: &mut R) -> Result<ComplexMatrix, EnsembleError> {
    if size == 0 {
        return Err(EnsembleError::InvalidParams("N must be >= 1".into()));
    }
    for _ in 0..SPHERICAL_MAX_RETRIES {
        let a = sample_ginibre(size, size, rng);
        let b = sample_ginibre(size, size, rng);
        match linalg::solve(&a, &b) {
            Ok(y) => return Ok(y),
            Err(LinalgError::Singular { .. }) => continue,
            Err(e) => return Err(EnsembleError::Eigensolver { index: 0, source: e }),
        }
    }
    Err(EnsembleError::SingularDraws(SPHERICAL_MAX_RETRIES))
}

/// Spherical-ensemble analogue of [`eigenvalues_truncated`].
pub fn eigenvalues_spherical(size: usize, count: usize, state: RngState) -> Result<Vec<EigenSample>, EnsembleError> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = state.substream(i).rng();
            let y = sample_spherical(size, &mut rng)?;
            eigen_sample(&y, EnsembleKind::Spherical, state.seed, i)
        })
        .collect()
}

fn log_vandermonde_sq(z: &[Complex64]) -> f64 {
    let mut acc = 0.0;
    for k in 0..z.len() {
        for j in 0..k {
            let d = (z[k] - z[j]).norm();
            if d == 0.0 {
                return f64::NEG_INFINITY;
            }
            acc += 2.0 * d.ln();
        }
    }
    acc
}

/// `(n-1) Σ log(1-|z|^2) + 2 Σ_{j<k} log|z_k - z_j|`.
pub fn log_density_truncated(z: &[Complex64], p: EnsembleParams) -> f64 {
    let mut acc = 0.0;
    let exponent = p.depth as f64 - 1.0;
    for w in z {
        let t = 1.0 - w.norm_sqr();
        if !(t > 0.0) {
            return f64::NEG_INFINITY;
        }
        if exponent != 0.0 {
            acc += exponent * t.ln();
        }
    }
    acc + log_vandermonde_sq(z)
}

/// `-(N+1) Σ log(1+|z|^2) + 2 Σ_{j<k} log|z_k - z_j|` with `N = z.len()`.
pub fn log_density_spherical(z: &[Complex64]) -> f64 {
    let n = z.len() as f64;
    let radial: f64 = z.iter().map(|w| -(n + 1.0) * w.norm_sqr().ln_1p()).sum();
    radial + log_vandermonde_sq(z)
}

/// `(n - N) log det(I - q q^H)` on `‖q‖ < 1`.
pub fn log_matrix_density_truncated(q: &ComplexMatrix, p: EnsembleParams) -> Result<f64, EnsembleError> {
    if q.rows() != p.size || q.cols() != p.size {
        return Err(EnsembleError::InvalidParams(format!(
            "expected a {0}x{0} matrix, got {1}x{2}",
            p.size,
            q.rows(),
            q.cols()
        )));
    }
    if singular_values(q).first().is_some_and(|&s| s >= 1.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let exponent = p.depth as f64 - p.size as f64;
    if exponent == 0.0 {
        return Ok(0.0);
    }
    let gap = &ComplexMatrix::identity(p.size) - &(q * &q.adjoint());
    match linalg::log_det_hpd(&gap) {
        Ok(ld) => Ok(exponent * ld),
        Err(_) => Ok(f64::NEG_INFINITY),
    }
}

/// `-2N log det(I + y y^H)`.
pub fn log_matrix_density_spherical(y: &ComplexMatrix) -> Result<f64, EnsembleError> {
    if !y.is_square() {
        return Err(EnsembleError::InvalidParams("spherical density needs a square matrix".into()));
    }
    let n = y.rows();
    let m = &ComplexMatrix::identity(n) + &(y * &y.adjoint());
    let ld = linalg::log_det_hpd(&m).map_err(|source| EnsembleError::Eigensolver { index: 0, source })?;
    Ok(-2.0 * n as f64 * ld)
}

/// A draw of `J = (C+D)^{-1/2} C (C+D)^{-1/2}` with `C = c^H c`, `D = d^H d`.
#[derive(Debug, Clone)]
pub struct JacobiSample {
    pub j: ComplexMatrix,
    /// Row counts of `c` and `d`: `(N, n)`.
    pub dims: (usize, usize),
}

impl JacobiSample {
    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigen(&self.j).0
    }
}

/// `(C + D)^{-1/2}`, clamping round-off-negative eigenvalues.
fn inverse_sqrt_psd(m: &ComplexMatrix) -> ComplexMatrix {
    let trace: f64 = m.diag().iter().map(|z| z.re).sum();
    let floor = 1e-12 * trace.abs();
    hermitian_function(m, |lambda| {
        let l = if lambda < floor { floor.max(f64::MIN_POSITIVE) } else { lambda };
        1.0 / l.sqrt()
    })
}

pub fn sample_jacobi<R: Rng + ?Sized>(p: EnsembleParams, rng: &mut R) -> Result<JacobiSample, EnsembleError> {
    if !p.in_derived_regime() {
        return Err(EnsembleError::InvalidParams(format!(
            "Jacobi construction needs n >= N, got N = {}, n = {}",
            p.size, p.depth
        )));
    }
    let c = sample_ginibre(p.size, p.size, rng);
    let d = sample_ginibre(p.depth, p.size, rng);
    let cc = &c.adjoint() * &c;
    let dd = &d.adjoint() * &d;
    let s = inverse_sqrt_psd(&(&cc + &dd));
    let j = (&(&s * &cc) * &s).hermitian_part();
    Ok(JacobiSample { j, dims: (p.size, p.depth) })
}

/// Result of comparing the top eigenvalue of `Q^H Q` with that of `J`.
#[derive(Debug, Clone)]
pub struct JacobiEquivalenceReport {
    pub test: TestReport,
    /// Base streams of the sub-block arm and the Jacobi arm.
    pub streams: (RngState, RngState),
    /// True when the two arms draw from disjoint streams, so samples are
    /// never paired.
    pub streams_independent: bool,
}

/// Two-sample KS test of `λ_max(Q_N^H Q_N)` against `λ_max(J)`.
pub fn check_subblock_jacobi_equivalence(
    p: EnsembleParams,
    count: usize,
    state: RngState,
) -> Result<JacobiEquivalenceReport, EnsembleError> {
    if !p.in_derived_regime() {
        return Err(EnsembleError::InvalidParams("needs n >= N".into()));
    }
    let block_stream = state.substream(0);
    let jacobi_stream = state.substream(1);
    let mut from_block: Vec<f64> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = block_stream.substream(i).rng();
            let q = sample_truncated_block(p, &mut rng);
            let gram = &q.adjoint() * &q;
            *hermitian_eigen(&gram).0.last().expect("non-empty")
        })
        .collect();
    let mut from_jacobi: Vec<f64> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = jacobi_stream.substream(i).rng();
            sample_jacobi(p, &mut rng).map(|s| *s.eigenvalues().last().expect("non-empty"))
        })
        .collect::<Result<_, _>>()?;
    from_block.sort_by(f64::total_cmp);
    from_jacobi.sort_by(f64::total_cmp);
    let test = ks_two_sample(&from_block, &from_jacobi)?;
    Ok(JacobiEquivalenceReport {
        test,
        streams: (block_stream, jacobi_stream),
        streams_independent: block_stream != jacobi_stream,
    })
}

/// Squared modulus of one eigenvalue per sample, chosen uniformly at random
/// with a stream independent of the sampler. The result is an i.i.d. sample
/// from the one-point (radial mixture) law.
pub fn uniformly_chosen_moduli_sq(samples: &[EigenSample], state: RngState) -> Vec<f64> {
    let mut rng = state.rng();
    samples
        .iter()
        .map(|s| {
            let k = rng.random_range(0..s.eigenvalues.len());
            s.eigenvalues[k].norm_sqr()
        })
        .collect()
}

/// Sorts a copy of `values` lexicographically.
pub fn sorted_eigenvalues(values: &[Complex64]) -> Vec<Complex64> {
    let mut v = values.to_vec();
    sort_lexicographic(&mut v);
    v
}
