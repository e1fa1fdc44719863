//! Long-run properties of the plasma sampler.

use num_complex::Complex64;
use pseudosphere_rmt::plasma::{detailed_balance_witness, run_chain, ChainConfig, PlasmaParams, PlasmaState};
use pseudosphere_rmt::stats::{beta_cdf, ks_one_sample};
use pseudosphere_rmt::RngState;

#[test]
fn detailed_balance_on_a_frozen_pair() {
    let p = PlasmaParams::new(3, 2.0, 1.5, 0.5).unwrap();
    let s = PlasmaState::new(vec![Complex64::new(0.1, 0.2), Complex64::new(-0.4, 0.1), Complex64::new(0.3, -0.5)], &p).unwrap();
    let s2 = PlasmaState::new(vec![Complex64::new(0.1, 0.2), Complex64::new(-0.4, 0.1), Complex64::new(0.45, -0.6)], &p).unwrap();
    let w = detailed_balance_witness(&s, &s2, 2, &p, 0.3, 1_000_000, RngState::new(8)).unwrap();
    assert!(w.pass, "{w:?}");
    // Reversed roles give the reciprocal ratio.
    let back = detailed_balance_witness(&s2, &s, 2, &p, 0.3, 1_000_000, RngState::new(9)).unwrap();
    assert!(back.pass, "{back:?}");
    assert!((w.expected * back.expected - 1.0).abs() < 1e-12);
    assert!(detailed_balance_witness(&s, &s, 2, &p, 0.3, 10, RngState::new(0)).is_err());
}

#[test]
fn tuned_acceptance_rate_for_ten_particles() {
    // Fixture: N = 10, β = 2, η = 10/π, a = 1/2; step scale 0.3 gives a rate
    // near 0.49.
    let p = PlasmaParams::matched_to_truncated(10, 10).unwrap();
    let cfg = ChainConfig {
        steps: 3_000,
        step_scale: 0.3,
        burn_in: 500,
        thinning: 1,
        seed: 1,
    };
    let out = run_chain(&p, &cfg).unwrap();
    let rate = out.diagnostics.acceptance_rate;
    assert!((0.2..=0.6).contains(&rate), "{rate}");
}

#[test]
fn single_particle_radial_law() {
    let n = 3;
    let p = PlasmaParams::matched_to_truncated(1, n).unwrap();
    let cfg = ChainConfig {
        steps: 20_000 * 25 + 1_000,
        step_scale: 0.5,
        burn_in: 1_000,
        thinning: 25,
        seed: 3,
    };
    let out = run_chain(&p, &cfg).unwrap();
    assert!(out.diagnostics.autocorrelation_time < 2.0, "{:?}", out.diagnostics);
    let mut r2: Vec<f64> = out.snapshots.iter().map(|s| s[0].norm_sqr()).collect();
    r2.sort_by(f64::total_cmp);
    let report = ks_one_sample(&r2, |x| beta_cdf(1.0, n as f64, x)).unwrap();
    assert!(report.pass, "{report:?}");
}

#[test]
fn general_coupling_stays_in_support() {
    let p = PlasmaParams::new(6, 4.0, 0.8, 1.3).unwrap();
    let cfg = ChainConfig {
        steps: 4_000,
        step_scale: 0.5,
        burn_in: 100,
        thinning: 10,
        seed: 12,
    };
    let out = run_chain(&p, &cfg).unwrap();
    for snap in &out.snapshots {
        for (j, z) in snap.iter().enumerate() {
            assert!(z.norm() < 2.6);
            assert!(snap[..j].iter().all(|w| w != z));
        }
    }
}
