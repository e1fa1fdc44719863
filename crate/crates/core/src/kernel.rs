//! Lowest-Landau-level wavefunctions and the correlation kernels of the two
//! eigenvalue ensembles, with their k-point functions and radial laws.
//!
//! Kernels live on the unit disk (`2a = 1`) for the truncated ensemble and on
//! the whole plane for the spherical one:
//!
//! ```text
//! K(z, w) = Σ_j c_j ω(z)^{1/2} ω(w)^{1/2} (z w̄)^j
//! ```
//!
//! with `ω(z) = (1-|z|^2)^{n-1}`, `c_j = 1/(π B(j+1, n))` (truncated) or
//! `ω(z) = (1+|z|^2)^{-(N+1)}`, `c_j = 1/(π B(j+1, N-j))` (spherical).

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use thiserror::Error;

use crate::ensembles::EnsembleKind;
use crate::linalg::{determinant, ComplexMatrix};
use crate::quadrature::{GaussLegendre, RADIAL_NODES};
use crate::stats::{log_gamma, regularized_incomplete_beta};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("invalid kernel parameters: {0}")]
    InvalidParams(String),
    #[error("point with |z| = {0} lies outside the support")]
    OutOfSupport(f64),
    #[error("{k}-point correlation requested but only {n} particles")]
    TooManyPoints { k: usize, n: usize },
    #[error("operation not available for the {0} ensemble")]
    Unsupported(EnsembleKind),
}

/// Lowest-Landau-level states on the disk `|z| < 2a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandauLevelSpec {
    flux_exponent: f64,
    a: f64,
}

impl LandauLevelSpec {
    pub fn new(flux_exponent: f64, a: f64) -> Result<Self, KernelError> {
        if !(flux_exponent > 0.0 && flux_exponent.is_finite()) {
            return Err(KernelError::InvalidParams(format!("flux exponent must be positive, got {flux_exponent}")));
        }
        if !(a > 0.0 && a.is_finite()) {
            return Err(KernelError::InvalidParams(format!("radius must be positive, got {a}")));
        }
        Ok(Self { flux_exponent, a })
    }

    /// The states whose squared modulus carries the truncated-ensemble
    /// weight: `a = 1/2`, flux exponent `(n-1)/2`.
    pub fn for_truncated(depth: usize) -> Result<Self, KernelError> {
        Self::new((depth as f64 - 1.0) / 2.0, 0.5)
    }

    pub fn flux_exponent(&self) -> f64 {
        self.flux_exponent
    }

    pub fn radius(&self) -> f64 {
        self.a
    }
}

/// Unnormalised `ψ_j(z) = (1 - |z|^2/4a^2)^{flux} z̄^j`.
pub fn lll_wavefunction(j: u32, z: Complex64, spec: LandauLevelSpec) -> Result<Complex64, KernelError> {
    let t = 1.0 - z.norm_sqr() / (4.0 * spec.a * spec.a);
    if !(t > 0.0) {
        return Err(KernelError::OutOfSupport(z.norm()));
    }
    Ok(z.conj().powu(j) * t.powf(spec.flux_exponent))
}

/// Correlation kernel of an `N`-point ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    ensemble: EnsembleKind,
    size: usize,
    depth: Option<usize>,
    weights: Vec<f64>,
}

impl KernelSpec {
    pub fn truncated(size: usize, depth: usize) -> Result<Self, KernelError> {
        if size == 0 || depth == 0 {
            return Err(KernelError::InvalidParams(format!("need N, n >= 1, got N = {size}, n = {depth}")));
        }
        let n = depth as f64;
        // 1/(π B(j+1, n)) = Γ(j+1+n) / (π Γ(j+1) Γ(n))
        let weights = (0..size)
            .map(|j| mode_weight(j as f64 + 1.0, n))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            ensemble: EnsembleKind::TruncatedUnitary,
            size,
            depth: Some(depth),
            weights,
        })
    }

    pub fn spherical(size: usize) -> Result<Self, KernelError> {
        if size == 0 {
            return Err(KernelError::InvalidParams("need N >= 1".into()));
        }
        let weights = (0..size)
            .map(|j| mode_weight(j as f64 + 1.0, (size - j) as f64))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            ensemble: EnsembleKind::Spherical,
            size,
            depth: None,
            weights,
        })
    }

    pub fn ensemble(&self) -> EnsembleKind {
        self.ensemble
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn depth(&self) -> Option<usize> {
        self.depth
    }

    /// Per-mode normalisations `c_j`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `log ω(z)^{1/2}`, or an error outside the support.
    fn log_half_weight(&self, z: Complex64) -> Result<f64, KernelError> {
        let r2 = z.norm_sqr();
        if !r2.is_finite() {
            return Err(KernelError::OutOfSupport(z.norm()));
        }
        match self.depth {
            Some(depth) => {
                if r2 >= 1.0 {
                    return Err(KernelError::OutOfSupport(z.norm()));
                }
                let e = (depth as f64 - 1.0) / 2.0;
                Ok(if e == 0.0 { 0.0 } else { e * (-r2).ln_1p() })
            }
            None => Ok(-(self.size as f64 + 1.0) / 2.0 * r2.ln_1p()),
        }
    }
}

/// `1/(π B(a, b))`, computed in log space.
fn mode_weight(a: f64, b: f64) -> Result<f64, KernelError> {
    let lg = |x: f64| log_gamma(x).map_err(|e| KernelError::InvalidParams(e.to_string()));
    let log_w = lg(a + b)? - lg(a)? - lg(b)? - PI.ln();
    let w = log_w.exp();
    if !(w.is_finite() && w > 0.0) {
        return Err(KernelError::InvalidParams(format!("mode weight overflowed: log = {log_w}")));
    }
    Ok(w)
}

pub fn kernel_eval(z: Complex64, w: Complex64, spec: &KernelSpec) -> Result<Complex64, KernelError> {
    let scale = (spec.log_half_weight(z)? + spec.log_half_weight(w)?).exp();
    let x = z * w.conj();
    let mut power = Complex64::new(1.0, 0.0);
    let mut acc = Complex64::new(0.0, 0.0);
    for &c in &spec.weights {
        acc += power * c;
        power *= x;
    }
    Ok(acc * scale)
}

/// `ρ₁(z) = K(z, z)`.
pub fn one_point_density(z: Complex64, spec: &KernelSpec) -> Result<f64, KernelError> {
    let log_w = 2.0 * spec.log_half_weight(z)?;
    let r2 = z.norm_sqr();
    let mut power = 1.0;
    let mut acc = 0.0;
    for &c in &spec.weights {
        acc += c * power;
        power *= r2;
    }
    Ok(acc * log_w.exp())
}

/// `det[K(z_i, z_j)]`. May dip below zero by round-off near coincidences.
pub fn k_point_correlation(points: &[Complex64], spec: &KernelSpec) -> Result<f64, KernelError> {
    let k = points.len();
    if k == 0 {
        return Ok(1.0);
    }
    if k > spec.size {
        return Err(KernelError::TooManyPoints { k, n: spec.size });
    }
    if k == 1 {
        return one_point_density(points[0], spec);
    }
    let mut m = ComplexMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            m[(i, j)] = kernel_eval(points[i], points[j], spec)?;
        }
    }
    let d = determinant(&m).map_err(|e| KernelError::InvalidParams(e.to_string()))?;
    Ok(d.re)
}

/// CDF of `|z|^2` for a uniformly chosen eigenvalue of the truncated
/// ensemble: `(1/N) Σ_{k=1..N} I_u(k, n)`.
pub fn radial_mixture_cdf(u: f64, spec: &KernelSpec) -> Result<f64, KernelError> {
    let Some(depth) = spec.depth else {
        return Err(KernelError::Unsupported(spec.ensemble));
    };
    if u.is_nan() {
        return Err(KernelError::InvalidParams("u is NaN".into()));
    }
    let u = u.clamp(0.0, 1.0);
    let n = depth as f64;
    let mut acc = 0.0;
    for k in 1..=spec.size {
        acc += regularized_incomplete_beta(k as f64, n, u).map_err(|e| KernelError::InvalidParams(e.to_string()))?;
    }
    Ok(acc / spec.size as f64)
}

/// CDF of `|z|^2` for a uniformly chosen eigenvalue of the spherical
/// ensemble: `(1/N) Σ_{k=1..N} I_{u/(1+u)}(k, N-k+1)`.
pub fn spherical_radial_cdf(u: f64, size: usize) -> Result<f64, KernelError> {
    if size == 0 {
        return Err(KernelError::InvalidParams("need N >= 1".into()));
    }
    if u.is_nan() {
        return Err(KernelError::InvalidParams("u is NaN".into()));
    }
    if u <= 0.0 {
        return Ok(0.0);
    }
    let x = if u.is_infinite() { 1.0 } else { u / (1.0 + u) };
    let n = size as f64;
    let mut acc = 0.0;
    for k in 1..=size {
        let k = k as f64;
        acc += regularized_incomplete_beta(k, n - k + 1.0, x).map_err(|e| KernelError::InvalidParams(e.to_string()))?;
    }
    Ok(acc / n)
}

/// `∫_{r0 < |z| < r1} ρ₁ dx dy` by Gauss–Legendre in the radius.
pub fn one_point_radial_mass(r0: f64, r1: f64, spec: &KernelSpec) -> Result<f64, KernelError> {
    if !(0.0 <= r0 && r0 <= r1) {
        return Err(KernelError::InvalidParams(format!("bad radial interval [{r0}, {r1}]")));
    }
    let gl = GaussLegendre::new(RADIAL_NODES);
    let mut acc = 0.0;
    for (r, w) in gl.on_interval(r0, r1) {
        acc += w * TAU * r * one_point_density(Complex64::new(r, 0.0), spec)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{PlanarRule, ANGULAR_NODES};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn unit_disk_rule() -> PlanarRule {
        PlanarRule::disk(1.0, RADIAL_NODES, ANGULAR_NODES)
    }

    #[test]
    fn wavefunction_basics() {
        let spec = LandauLevelSpec::new(1.5, 0.5).unwrap();
        assert_eq!(lll_wavefunction(0, c(0.0, 0.0), spec).unwrap(), c(1.0, 0.0));
        assert!(lll_wavefunction(1, c(1.0, 0.0), spec).is_err());
        assert!(LandauLevelSpec::new(0.0, 0.5).is_err());
        assert!(LandauLevelSpec::new(1.0, -0.5).is_err());
        // Depends on z only through z̄^j and |z|.
        let z = c(0.3, 0.4);
        let psi = lll_wavefunction(3, z, spec).unwrap();
        let radial = (1.0 - z.norm_sqr()).powf(1.5);
        assert!((psi - z.conj().powu(3) * radial).norm() < 1e-15);
    }

    #[test]
    fn wavefunctions_orthogonal() {
        let spec = LandauLevelSpec::for_truncated(4).unwrap();
        let rule = unit_disk_rule();
        for j in 0..5u32 {
            for k in 0..5u32 {
                let ip = rule.integrate_complex(|z| {
                    lll_wavefunction(j, z, spec).unwrap() * lll_wavefunction(k, z, spec).unwrap().conj()
                });
                if j != k {
                    assert!(ip.norm() < 1e-8, "<{j},{k}> = {ip}");
                } else {
                    // ∫ |z|^{2j} (1-|z|^2)^{n-1} = π B(j+1, n)
                    let expected = 1.0 / mode_weight(j as f64 + 1.0, 4.0).unwrap();
                    assert!((ip.re - expected).abs() < 1e-12 * expected);
                }
            }
        }
    }

    #[test]
    fn weights() {
        let spec = KernelSpec::truncated(3, 4).unwrap();
        assert!((spec.weights()[0] - 4.0 / PI).abs() < 1e-14);
        // 1/(π B(2, 4)) = 20/π, 1/(π B(3, 4)) = 60/π
        assert!((spec.weights()[1] - 20.0 / PI).abs() < 1e-13);
        assert!((spec.weights()[2] - 60.0 / PI).abs() < 1e-12);
        assert!((kernel_eval(c(0.0, 0.0), c(0.0, 0.0), &spec).unwrap().re - 4.0 / PI).abs() < 1e-14);
        // Spherical: N C(N-1, j) / π.
        let sph = KernelSpec::spherical(4).unwrap();
        for (j, binom) in [1.0, 3.0, 3.0, 1.0].iter().enumerate() {
            assert!((sph.weights()[j] - 4.0 * binom / PI).abs() < 1e-13);
        }
        let big = KernelSpec::truncated(40, 60).unwrap();
        assert!(big.weights().iter().all(|w| w.is_finite() && *w > 0.0));
        assert!(KernelSpec::truncated(0, 3).is_err());
        assert!(KernelSpec::spherical(0).is_err());
    }

    #[test]
    fn spherical_weights_match_quadrature() {
        let rule = PlanarRule::plane(RADIAL_NODES, 8);
        for n in 1..6usize {
            let spec = KernelSpec::spherical(n).unwrap();
            for j in 0..n {
                let moment = rule.integrate(|z| z.norm_sqr().powi(j as i32) * (1.0 + z.norm_sqr()).powi(-(n as i32 + 1)));
                assert!((spec.weights()[j] * moment - 1.0).abs() < 1e-12, "N = {n}, j = {j}");
            }
        }
    }

    #[test]
    fn support_checks() {
        let spec = KernelSpec::truncated(2, 3).unwrap();
        assert!(kernel_eval(c(1.0, 0.0), c(0.0, 0.0), &spec).is_err());
        assert!(one_point_density(c(0.0, 1.2), &spec).is_err());
        assert!(one_point_density(c(f64::NAN, 0.0), &spec).is_err());
        let sph = KernelSpec::spherical(2).unwrap();
        assert!(one_point_density(c(50.0, 0.0), &sph).unwrap() > 0.0);
        assert!(one_point_density(c(f64::INFINITY, 0.0), &sph).is_err());
    }

    #[test]
    fn single_mode_density() {
        let spec = KernelSpec::truncated(1, 2).unwrap();
        for r in [0.0, 0.2, 0.5, 0.9] {
            let got = one_point_density(Complex64::from_polar(r, 1.1), &spec).unwrap();
            assert!((got - 2.0 / PI * (1.0 - r * r)).abs() < 1e-14);
        }
    }

    #[test]
    fn reproducing_property() {
        let spec = KernelSpec::truncated(3, 4).unwrap();
        let rule = unit_disk_rule();
        let (z, w) = (c(0.3, -0.2), c(-0.5, 0.4));
        let got = rule.integrate_complex(|u| kernel_eval(z, u, &spec).unwrap() * kernel_eval(u, w, &spec).unwrap());
        let expected = kernel_eval(z, w, &spec).unwrap();
        assert!((got - expected).norm() < 1e-6, "{got} vs {expected}");
    }

    #[test]
    fn normalisations() {
        let spec = KernelSpec::truncated(3, 4).unwrap();
        let total = unit_disk_rule().integrate(|z| one_point_density(z, &spec).unwrap());
        assert!((total - 3.0).abs() < 1e-6);
        let sph = KernelSpec::spherical(2).unwrap();
        let total = PlanarRule::plane(RADIAL_NODES, ANGULAR_NODES).integrate(|z| one_point_density(z, &sph).unwrap());
        assert!((total - 2.0).abs() < 1e-6);
        assert!((one_point_radial_mass(0.0, 1.0, &spec).unwrap() - 3.0).abs() < 1e-10);
    }

    #[test]
    fn correlation_functions() {
        let spec = KernelSpec::truncated(3, 4).unwrap();
        let z = c(0.2, 0.3);
        assert_eq!(k_point_correlation(&[z], &spec).unwrap(), one_point_density(z, &spec).unwrap());
        assert!(k_point_correlation(&[z, z], &spec).unwrap().abs() < 1e-12);
        let w = c(-0.4, 0.1);
        let r2 = k_point_correlation(&[z, w], &spec).unwrap();
        let direct = one_point_density(z, &spec).unwrap() * one_point_density(w, &spec).unwrap()
            - kernel_eval(z, w, &spec).unwrap().norm_sqr();
        assert!((r2 - direct).abs() < 1e-12);
        assert!(matches!(
            k_point_correlation(&[z, w, c(0.0, 0.0), c(0.1, 0.0)], &spec),
            Err(KernelError::TooManyPoints { k: 4, n: 3 })
        ));
    }

    #[test]
    fn two_point_normalisation() {
        // ρ₂ depends on |z|, |w| and the relative angle only.
        let spec = KernelSpec::truncated(2, 3).unwrap();
        let gl = GaussLegendre::new(32);
        let angles = 64;
        let mut total = 0.0;
        for (r1, w1) in gl.on_interval(0.0, 1.0) {
            for (r2, w2) in gl.on_interval(0.0, 1.0) {
                let mut inner = 0.0;
                for k in 0..angles {
                    let theta = TAU * k as f64 / angles as f64;
                    inner += k_point_correlation(&[c(r1, 0.0), Complex64::from_polar(r2, theta)], &spec).unwrap();
                }
                total += w1 * w2 * r1 * r2 * TAU * inner * TAU / angles as f64;
            }
        }
        assert!((total - 2.0).abs() < 1e-4, "{total}");
    }

    #[test]
    fn radial_cdfs() {
        let spec = KernelSpec::truncated(1, 3).unwrap();
        for u in [0.0, 0.1, 0.5, 0.93, 1.0] {
            assert!((radial_mixture_cdf(u, &spec).unwrap() - (1.0 - (1.0 - u).powi(3))).abs() < 1e-14);
        }
        let spec = KernelSpec::truncated(3, 4).unwrap();
        assert_eq!(radial_mixture_cdf(0.0, &spec).unwrap(), 0.0);
        assert!((radial_mixture_cdf(1.0, &spec).unwrap() - 1.0).abs() < 1e-15);
        for u in [0.05f64, 0.3, 0.6, 0.9] {
            let via_density = one_point_radial_mass(0.0, u.sqrt(), &spec).unwrap() / 3.0;
            assert!((radial_mixture_cdf(u, &spec).unwrap() - via_density).abs() < 1e-8);
        }
        assert_eq!(
            radial_mixture_cdf(0.5, &KernelSpec::spherical(2).unwrap()),
            Err(KernelError::Unsupported(EnsembleKind::Spherical))
        );

        for u in [0.0, 0.4, 3.0, 1e6] {
            assert!((spherical_radial_cdf(u, 1).unwrap() - u / (1.0 + u)).abs() < 1e-14);
        }
        assert_eq!(spherical_radial_cdf(f64::INFINITY, 3).unwrap(), 1.0);
        let sph = KernelSpec::spherical(2).unwrap();
        for u in [0.2f64, 1.0, 5.0] {
            let via_density = one_point_radial_mass(0.0, u.sqrt(), &sph).unwrap() / 2.0;
            assert!((spherical_radial_cdf(u, 2).unwrap() - via_density).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn kernel_hermitian(zr in 0.0..0.99f64, za in 0.0..TAU, wr in 0.0..0.99f64, wa in 0.0..TAU, n in 1usize..6, big_n in 1usize..6) {
            let z = Complex64::from_polar(zr, za);
            let w = Complex64::from_polar(wr, wa);
            for spec in [KernelSpec::truncated(big_n, n).unwrap(), KernelSpec::spherical(big_n).unwrap()] {
                let a = kernel_eval(z, w, &spec).unwrap();
                let b = kernel_eval(w, z, &spec).unwrap().conj();
                prop_assert!((a - b).norm() <= 1e-12 * a.norm().max(1.0));
                prop_assert!(one_point_density(z, &spec).unwrap() >= 0.0);
            }
        }

        #[test]
        fn correlations_symmetric_and_rotation_invariant(
            pts in prop::collection::vec((0.0..0.95f64, 0.0..TAU), 3),
            rot in 0.0..TAU,
        ) {
            let spec = KernelSpec::truncated(4, 5).unwrap();
            let z: Vec<Complex64> = pts.iter().map(|&(r, a)| Complex64::from_polar(r, a)).collect();
            let base = k_point_correlation(&z, &spec).unwrap();
            prop_assert!(base >= -1e-12);
            let perm = [z[2], z[0], z[1]];
            prop_assert!((k_point_correlation(&perm, &spec).unwrap() - base).abs() <= 1e-10 * base.abs().max(1.0));
            let turn = Complex64::from_polar(1.0, rot);
            let rotated: Vec<Complex64> = z.iter().map(|p| p * turn).collect();
            prop_assert!((k_point_correlation(&rotated, &spec).unwrap() - base).abs() <= 1e-10 * base.abs().max(1.0));
        }

        #[test]
        fn mixture_cdf_monotone(u in 0.0..1.0f64, du in 0.0..0.2f64, big_n in 1usize..8, n in 1usize..8) {
            let spec = KernelSpec::truncated(big_n, n).unwrap();
            let a = radial_mixture_cdf(u, &spec).unwrap();
            let b = radial_mixture_cdf((u + du).min(1.0), &spec).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!(b >= a - 1e-15);
        }
    }
}
