//! Goodness-of-fit tests and the special functions behind them.
//!
//! p-values are asymptotic throughout: the Kolmogorov limit law for the KS
//! tests and the chi-square law for Pearson's statistic.

use statrs::function::{beta, gamma};
use thiserror::Error;

/// Default pass threshold on p-values.
pub const DEFAULT_P_THRESHOLD: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("samples must be sorted ascending (violation at index {0})")]
    Unsorted(usize),
    #[error("expected probabilities sum to {0}, not 1")]
    ProbabilitiesDoNotSumToOne(f64),
    #[error("bin {bin} has expected count {expected:.3} < 5; merge bins first")]
    LowExpectedCount { bin: usize, expected: f64 },
    #[error("sample {0} falls outside the bin edges")]
    OutOfRange(f64),
    #[error("invalid bins: {0}")]
    InvalidBins(String),
    #[error("argument out of domain: {0}")]
    Domain(String),
}

/// Outcome of a hypothesis test.
#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub statistic: f64,
    pub p_value: f64,
    pub samples: Vec<usize>,
    pub threshold: f64,
    pub pass: bool,
}

impl TestReport {
    pub fn new(statistic: f64, p_value: f64, samples: Vec<usize>) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        Self {
            statistic,
            p_value,
            samples,
            threshold: DEFAULT_P_THRESHOLD,
            pass: p_value > DEFAULT_P_THRESHOLD,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self.pass = self.p_value > threshold;
        self
    }
}

/// `P(K > λ)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi theta form converges fast for small λ.
        let y = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let mut sum = 0.0;
        for k in 1..=50 {
            let j = (2 * k - 1) as f64;
            let term = (-j * j * y).exp();
            sum += term;
            if term < 1e-18 {
                break;
            }
        }
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * sum
    } else {
        let mut sum = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term < 1e-18 {
                break;
            }
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

fn check_sorted(xs: &[f64]) -> Result<(), StatsError> {
    match xs.windows(2).position(|w| !(w[0] <= w[1])) {
        Some(i) => Err(StatsError::Unsorted(i + 1)),
        None => Ok(()),
    }
}

/// `sup |F_emp - F|` for sorted samples.
pub fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64, StatsError> {
    check_sorted(sorted)?;
    let m = sorted.len() as f64;
    Ok(sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i as f64 + 1.0) / m - f).max(f - i as f64 / m)
        })
        .fold(0.0, f64::max))
}

/// One-sample Kolmogorov–Smirnov test against `cdf`.
pub fn ks_one_sample(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestReport, StatsError> {
    if sorted.len() < 10 {
        return Err(StatsError::TooFewSamples {
            needed: 10,
            got: sorted.len(),
        });
    }
    let d = ks_statistic(sorted, cdf)?;
    let m = sorted.len();
    Ok(TestReport::new(d, kolmogorov_survival((m as f64).sqrt() * d), vec![m]))
}

/// Two-sample Kolmogorov–Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestReport, StatsError> {
    for s in [a, b] {
        if s.len() < 10 {
            return Err(StatsError::TooFewSamples { needed: 10, got: s.len() });
        }
        check_sorted(s)?;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let eff = na * nb / (na + nb);
    Ok(TestReport::new(d, kolmogorov_survival(eff.sqrt() * d), vec![a.len(), b.len()]))
}

/// Pearson chi-square test with `bins - 1` degrees of freedom. Bin `i` is
/// `[edges[i], edges[i+1])`; the last bin also includes its upper edge.
pub fn chi_square_binned(
    samples: &[f64],
    bin_edges: &[f64],
    expected_probs: &[f64],
) -> Result<TestReport, StatsError> {
    let bins = expected_probs.len();
    if bins < 2 || bin_edges.len() != bins + 1 {
        return Err(StatsError::InvalidBins(format!(
            "{} edges for {} probabilities",
            bin_edges.len(),
            bins
        )));
    }
    if bin_edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(StatsError::InvalidBins("edges must increase strictly".into()));
    }
    let total: f64 = expected_probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(StatsError::ProbabilitiesDoNotSumToOne(total));
    }
    let m = samples.len() as f64;
    for (bin, &p) in expected_probs.iter().enumerate() {
        if m * p < 5.0 {
            return Err(StatsError::LowExpectedCount { bin, expected: m * p });
        }
    }
    let mut counts = vec![0usize; bins];
    let last = bin_edges[bins];
    for &x in samples {
        if !(x >= bin_edges[0] && x <= last) {
            return Err(StatsError::OutOfRange(x));
        }
        let k = bin_edges.partition_point(|&e| e <= x).saturating_sub(1).min(bins - 1);
        counts[k] += 1;
    }
    let stat: f64 = counts
        .iter()
        .zip(expected_probs)
        .map(|(&c, &p)| {
            let e = m * p;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let df = (bins - 1) as f64;
    let p = if stat > 0.0 { gamma::gamma_ur(df / 2.0, stat / 2.0) } else { 1.0 };
    Ok(TestReport::new(stat, p, vec![samples.len()]))
}

/// Bin edges on `[lo, hi]` that split the law `cdf` into `bins` equally
/// likely bins. `hi` may be `+inf`.
pub fn equiprobable_edges(cdf: impl Fn(f64) -> f64, bins: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut edges = Vec::with_capacity(bins + 1);
    edges.push(lo);
    for k in 1..bins {
        let target = k as f64 / bins as f64;
        let mut a = lo;
        let mut b = if hi.is_finite() { hi } else { lo.max(0.0) + 1.0 };
        while !hi.is_finite() && cdf(b) < target {
            b = 2.0 * b + 1.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if cdf(mid) < target {
                a = mid;
            } else {
                b = mid;
            }
        }
        edges.push(0.5 * (a + b));
    }
    edges.push(hi);
    edges
}

/// Natural log of the gamma function, `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64, StatsError> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(StatsError::Domain(format!("log_gamma({x})")));
    }
    Ok(gamma::ln_gamma(x))
}

/// Regularised incomplete beta function `I_x(a, b)`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> Result<f64, StatsError> {
    if !(a > 0.0 && b > 0.0) || !(0.0..=1.0).contains(&x) {
        return Err(StatsError::Domain(format!("I({a}, {b}, {x})")));
    }
    beta::checked_beta_reg(a, b, x).map_err(|e| StatsError::Domain(e.to_string()))
}

/// CDF of the Beta(a, b) law; clamps `x` to `[0, 1]`.
pub fn beta_cdf(a: f64, b: f64, x: f64) -> f64 {
    regularized_incomplete_beta(a, b, x.clamp(0.0, 1.0)).expect("positive shape parameters")
}

/// Running mean and variance (Welford), mergeable across shards.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Chan et al. pairwise combination.
    pub fn merge(&self, other: &Self) -> Self {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let n = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / n as f64;
        let m2 = self.m2 + other.m2 + delta * delta * self.count as f64 * other.count as f64 / n as f64;
        Self { count: n, mean, m2 }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// Integrated autocorrelation time `τ = 1 + 2 Σ ρ(t)` with Sokal's
/// self-consistent window `W >= 5 τ(W)`.
pub fn integrated_autocorrelation_time(series: &[f64]) -> f64 {
    let m = series.len();
    if m < 4 {
        return 1.0;
    }
    let mean = series.iter().sum::<f64>() / m as f64;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let c0 = centered.iter().map(|x| x * x).sum::<f64>() / m as f64;
    if c0 == 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for t in 1..m / 2 {
        let ct = centered[..m - t]
            .iter()
            .zip(&centered[t..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / m as f64;
        tau += 2.0 * ct / c0;
        if t as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}
