//! The pseudosphere of radius `a` (curvature `-1/a^2`), its stereographic
//! image in the disk `|z| < 2a`, and the Coulomb potentials on it.
//!
//! Pair potentials take their argument as `s / (2a)`, so the closed forms in
//! the geodesic distance agree with the disk forms for every radius.

use std::f64::consts::TAU;

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("pseudosphere radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("point with |z| = {modulus} lies outside the disk of radius {bound}")]
    OutOfDisk { modulus: f64, bound: f64 },
    #[error("coincident points: the pair potential is infinite")]
    CoincidentPoints,
    #[error("geodesic distance must be non-negative, got {0}")]
    NegativeDistance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryParams {
    a: f64,
}

impl GeometryParams {
    pub fn new(a: f64) -> Result<Self, GeometryError> {
        if a > 0.0 && a.is_finite() {
            Ok(Self { a })
        } else {
            Err(GeometryError::InvalidRadius(a))
        }
    }

    /// Radius `a = 1/2`, for which the projected disk is the unit disk.
    pub fn unit_disk() -> Self {
        Self { a: 0.5 }
    }

    pub fn radius(&self) -> f64 {
        self.a
    }

    pub fn curvature(&self) -> f64 {
        -1.0 / (self.a * self.a)
    }

    /// Radius of the projected disk, `2a`.
    pub fn disk_radius(&self) -> f64 {
        2.0 * self.a
    }

    fn check_in_disk(&self, z: Complex64) -> Result<(), GeometryError> {
        let modulus = z.norm();
        if modulus < self.disk_radius() {
            Ok(())
        } else {
            Err(GeometryError::OutOfDisk {
                modulus,
                bound: self.disk_radius(),
            })
        }
    }
}

/// Point on the upper branch of `-y0^2 + y1^2 + y2^2 = -a^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinkowskiPoint {
    pub y0: f64,
    pub y1: f64,
    pub y2: f64,
}

impl MinkowskiPoint {
    /// `-y0^2 + y1^2 + y2^2`.
    pub fn minkowski_norm_sqr(&self) -> f64 {
        -self.y0 * self.y0 + self.y1 * self.y1 + self.y2 * self.y2
    }
}

/// Geodesic polar coordinates `(τ, φ)` on the pseudosphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudospherePoint {
    tau: f64,
    phi: f64,
}

impl PseudospherePoint {
    /// `tau` is clamped at zero from below; `phi` is wrapped to `[0, 2π)`.
    pub fn new(tau: f64, phi: f64) -> Self {
        Self {
            tau: tau.max(0.0),
            phi: wrap_angle(phi),
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }
}

fn wrap_angle(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

pub fn embed(p: PseudospherePoint, g: GeometryParams) -> MinkowskiPoint {
    let (s, c) = p.phi.sin_cos();
    let sh = p.tau.sinh();
    MinkowskiPoint {
        y0: g.a * p.tau.cosh(),
        y1: g.a * sh * c,
        y2: g.a * sh * s,
    }
}

/// Stereographic projection `z = 2a tanh(τ/2) e^{iφ}`.
pub fn project_to_disk(p: PseudospherePoint, g: GeometryParams) -> Complex64 {
    Complex64::from_polar(g.disk_radius() * (0.5 * p.tau).tanh(), p.phi)
}

/// Inverse of [`project_to_disk`].
pub fn lift_to_pseudosphere(z: Complex64, g: GeometryParams) -> Result<PseudospherePoint, GeometryError> {
    g.check_in_disk(z)?;
    let tau = 2.0 * (z.norm() / g.disk_radius()).atanh();
    let phi = if z.norm() == 0.0 { 0.0 } else { z.arg() };
    Ok(PseudospherePoint::new(tau, phi))
}

/// Geodesic distance, from
/// `cosh(s/a) = cosh τ cosh τ' - sinh τ sinh τ' cos(φ - φ')`.
pub fn geodesic_distance(p: PseudospherePoint, q: PseudospherePoint, g: GeometryParams) -> f64 {
    // cosh(s/a) - 1 = cosh(τ-τ') - 1 + sinh τ sinh τ' (1 - cos Δφ), which
    // avoids cancellation for nearby points.
    let dtau = p.tau - q.tau;
    let half_dphi = 0.5 * (p.phi - q.phi);
    let x = 2.0 * (0.5 * dtau).sinh().powi(2) + 2.0 * p.tau.sinh() * q.tau.sinh() * half_dphi.sin().powi(2);
    // acosh(1 + x) = 2 asinh(sqrt(x/2))
    g.a * 2.0 * (0.5 * x.max(0.0)).sqrt().asinh()
}

/// Density of the area element relative to `dx dy`: `(1 - |z|^2/4a^2)^{-2}`.
pub fn surface_weight(z: Complex64, g: GeometryParams) -> Result<f64, GeometryError> {
    g.check_in_disk(z)?;
    let t = 1.0 - z.norm_sqr() / (4.0 * g.a * g.a);
    Ok(1.0 / (t * t))
}

fn check_separation(s: f64) -> Result<(), GeometryError> {
    if s < 0.0 || s.is_nan() {
        Err(GeometryError::NegativeDistance(s))
    } else if s == 0.0 {
        Err(GeometryError::CoincidentPoints)
    } else {
        Ok(())
    }
}

/// Potential of a unit charge vanishing at infinity: `Φ(s) = -log tanh(s/2a)`.
pub fn coulomb_potential(s: f64, g: GeometryParams) -> Result<f64, GeometryError> {
    check_separation(s)?;
    Ok(-(s / (2.0 * g.a)).tanh().ln())
}

/// Potential of a unit charge plus its uniform neutralising smear:
/// `Φ̃(s) = -log sinh(s/2a)`.
pub fn background_pair_potential(s: f64, g: GeometryParams) -> Result<f64, GeometryError> {
    check_separation(s)?;
    Ok(-(s / (2.0 * g.a)).sinh().ln())
}

/// Potential of the smeared background on a particle at radius `r`:
/// `V(r) = -(2πηa^2 + N/2) log(1 - r^2/4a^2)`, normalised by `V(0) = 0`.
pub fn disk_background_potential(r: f64, eta: f64, n_particles: usize, g: GeometryParams) -> Result<f64, GeometryError> {
    if r.abs() >= g.disk_radius() {
        return Err(GeometryError::OutOfDisk {
            modulus: r.abs(),
            bound: g.disk_radius(),
        });
    }
    let strength = TAU * eta * g.a * g.a + n_particles as f64 / 2.0;
    Ok(-strength * (-(r * r) / (4.0 * g.a * g.a)).ln_1p())
}

/// `Φ` written in disk coordinates: `-log( |z-w|/2a / |1 - z w̄/4a^2| )`.
pub fn coulomb_potential_disk(z: Complex64, w: Complex64, g: GeometryParams) -> Result<f64, GeometryError> {
    g.check_in_disk(z)?;
    g.check_in_disk(w)?;
    if z == w {
        return Err(GeometryError::CoincidentPoints);
    }
    let four_a2 = 4.0 * g.a * g.a;
    let num = (z - w).norm() / (2.0 * g.a);
    let den = (Complex64::new(1.0, 0.0) - z * w.conj() / four_a2).norm();
    Ok(-(num / den).ln())
}

/// `Φ̃` written in disk coordinates:
/// `-log( |z-w|/2a / sqrt((1 - |z|^2/4a^2)(1 - |w|^2/4a^2)) )`.
pub fn background_pair_potential_disk(z: Complex64, w: Complex64, g: GeometryParams) -> Result<f64, GeometryError> {
    g.check_in_disk(z)?;
    g.check_in_disk(w)?;
    if z == w {
        return Err(GeometryError::CoincidentPoints);
    }
    let four_a2 = 4.0 * g.a * g.a;
    let num = (z - w).norm() / (2.0 * g.a);
    let den = ((1.0 - z.norm_sqr() / four_a2) * (1.0 - w.norm_sqr() / four_a2)).sqrt();
    Ok(-(num / den).ln())
}

/// Laplace–Beltrami operator of the pseudosphere in polar disk coordinates,
/// `(1 - r^2/4a^2)^2 (∂_r^2 + r^{-1} ∂_r + r^{-2} ∂_φ^2)`, by central
/// differences with radial step `h` and arc-length step `h` in the angle.
/// Second-order accurate; needs `h < r`.
pub fn polar_laplacian_fd(f: impl Fn(Complex64) -> f64, r: f64, phi: f64, h: f64, g: GeometryParams) -> f64 {
    let at = |rr: f64, pp: f64| f(Complex64::from_polar(rr, pp));
    let f0 = at(r, phi);
    let fp = at(r + h, phi);
    let fm = at(r - h, phi);
    let dphi = h / r;
    let fa = at(r, phi + dphi);
    let fb = at(r, phi - dphi);
    let d_rr = (fp - 2.0 * f0 + fm) / (h * h);
    let d_r = (fp - fm) / (2.0 * h);
    let d_pp = (fa - 2.0 * f0 + fb) / (dphi * dphi);
    let conformal = 1.0 - r * r / (4.0 * g.a * g.a);
    conformal * conformal * (d_rr + d_r / r + d_pp / (r * r))
}
