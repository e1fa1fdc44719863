//! Gauss–Legendre rules and tensor-product rules on the disk and the plane.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

/// Radial node count used throughout the crate.
pub const RADIAL_NODES: usize = 64;
/// Angular node count used throughout the crate.
pub const ANGULAR_NODES: usize = 128;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on
/// `P_n` from the Chebyshev initial guess.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "need at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn on_interval(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.on_interval(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}

/// Nodes `(z, weight)` of a product rule for `∫ f(z) dx dy`: Gauss–Legendre
/// in the radius times the trapezoid rule in the angle.
#[derive(Debug, Clone)]
pub struct PlanarRule {
    pub points: Vec<(Complex64, f64)>,
}

impl PlanarRule {
    /// Disk `|z| < radius`.
    pub fn disk(radius: f64, radial: usize, angular: usize) -> Self {
        let gl = GaussLegendre::new(radial);
        let mut points = Vec::with_capacity(radial * angular);
        let dtheta = TAU / angular as f64;
        for (r, w) in gl.on_interval(0.0, radius) {
            for k in 0..angular {
                let theta = dtheta * k as f64;
                points.push((Complex64::from_polar(r, theta), w * r * dtheta));
            }
        }
        Self { points }
    }

    /// Whole plane, through `x = |z|^2 / (1 + |z|^2) ∈ [0, 1)`, so that
    /// `dx dy = dθ dx / (2 (1 - x)^2)`.
    pub fn plane(radial: usize, angular: usize) -> Self {
        let gl = GaussLegendre::new(radial);
        let mut points = Vec::with_capacity(radial * angular);
        let dtheta = TAU / angular as f64;
        for (x, w) in gl.on_interval(0.0, 1.0) {
            let r = (x / (1.0 - x)).sqrt();
            let jac = 0.5 / ((1.0 - x) * (1.0 - x));
            for k in 0..angular {
                let theta = dtheta * k as f64;
                points.push((Complex64::from_polar(r, theta), w * jac * dtheta));
            }
        }
        Self { points }
    }

    pub fn integrate(&self, mut f: impl FnMut(Complex64) -> f64) -> f64 {
        self.points.iter().map(|&(z, w)| w * f(z)).sum()
    }

    pub fn integrate_complex(&self, mut f: impl FnMut(Complex64) -> Complex64) -> Complex64 {
        self.points.iter().map(|&(z, w)| f(z) * w).sum()
    }
}
