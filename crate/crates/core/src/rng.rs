//! Seed plumbing.
//!
//! Every sampler in the crate is a pure function of an [`RngState`]. Bulk
//! samplers derive one sub-stream per sample index, so results do not depend
//! on how the work is split across threads.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rand::SeedableRng;

/// A seed plus a stream selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Derives an independent child stream. Distinct `(stream, index)` pairs
    /// map to distinct streams with overwhelming probability.
    pub fn substream(&self, index: u64) -> Self {
        let mixed = splitmix64(splitmix64(self.stream ^ 0xA076_1D64_78BD_642F).wrapping_add(index));
        Self {
            seed: self.seed,
            stream: mixed,
        }
    }

    /// Builds the generator for this state. Two calls return generators that
    /// produce identical sequences.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Standard complex normal: real and imaginary parts independent N(0, 1/2),
/// so that `E|z|^2 = 1`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Uniform point in the open unit disk.
pub fn uniform_disk<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let r = rng.random::<f64>().sqrt();
    let theta = std::f64::consts::TAU * rng.random::<f64>();
    Complex64::from_polar(r, theta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_state_same_sequence() {
        let s = RngState::with_stream(7, 3);
        let a: Vec<u64> = (0..8).map({
            let mut r = s.rng();
            move |_| r.random()
        }).collect();
        let b: Vec<u64> = (0..8).map({
            let mut r = s.rng();
            move |_| r.random()
        }).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn substreams_differ() {
        let s = RngState::new(1);
        let x: u64 = s.substream(0).rng().random();
        let y: u64 = s.substream(1).rng().random();
        let z: u64 = s.substream(0).substream(0).rng().random();
        assert_ne!(x, y);
        assert_ne!(x, z);
        assert_eq!(s.substream(5), s.substream(5));
    }

    #[test]
    fn complex_normal_moments() {
        let mut rng = RngState::new(11).rng();
        let m = 100_000;
        let mut sum = Complex64::new(0.0, 0.0);
        let mut sum_sq = 0.0;
        let mut sum_q = 0.0;
        for _ in 0..m {
            let z = complex_normal(&mut rng);
            sum += z;
            sum_sq += z.norm_sqr();
            sum_q += z.norm_sqr().powi(2);
        }
        let mf = m as f64;
        // Re and Im each have variance 1/2.
        let se_mean = (0.5 / mf).sqrt();
        assert!((sum.re / mf).abs() < 4.0 * se_mean);
        assert!((sum.im / mf).abs() < 4.0 * se_mean);
        // |z|^2 ~ Exp(1): variance 1.
        let mean_sq = sum_sq / mf;
        let var_sq = sum_q / mf - mean_sq * mean_sq;
        assert!((mean_sq - 1.0).abs() < 4.0 * (var_sq / mf).sqrt());
    }
}
