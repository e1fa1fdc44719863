//! Subcommand bodies.

use std::io::Write;

use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;

use pseudosphere_rmt::ensembles::{
    check_subblock_jacobi_equivalence, eigenvalues_spherical, eigenvalues_truncated, uniformly_chosen_moduli_sq,
    EigenSample, EnsembleError, EnsembleKind, EnsembleParams,
};
use pseudosphere_rmt::kernel::{
    k_point_correlation, one_point_density, radial_mixture_cdf, spherical_radial_cdf, KernelError, KernelSpec,
};
use pseudosphere_rmt::plasma::{run_chain, ChainConfig, PlasmaError, PlasmaParams};
use pseudosphere_rmt::rng::RngState;
use pseudosphere_rmt::stats::{chi_square_binned, equiprobable_edges, ks_one_sample, StatsError, TestReport};
use pseudosphere_rmt::verify::{
    constant_c, constant_c_ball, det_identity_spherical, det_identity_truncated, recursion_check_spherical,
    recursion_check_truncated, TriangularSample, VerifyError, IDENTITY_TOL,
};

use crate::output::{fmt_f64, parse_grid, sink, write_eigen_rows, write_json, JsonSample, EIGENVALUE_HEADER};
use crate::report::{CheckRecord, Report};
use crate::{CliError, EnsembleArg, Format, KernelArgs, KernelCommand, Outcome, PlasmaArgs, SampleArgs, VerifyCommand};

const OUTSIDE_REGIME: &str = "warning: n < N: density formula outside derived regime";
const RADIAL_BINS: usize = 20;
const CONSTANT_TOL: f64 = 1e-6;

impl From<EnsembleError> for CliError {
    fn from(e: EnsembleError) -> Self {
        match e {
            EnsembleError::InvalidParams(m) => CliError::Config(m),
            EnsembleError::Eigensolver { index, source } => {
                CliError::Numeric(format!("eigensolver failed on sample {index}: {source}"))
            }
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<KernelError> for CliError {
    fn from(e: KernelError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<PlasmaError> for CliError {
    fn from(e: PlasmaError) -> Self {
        match e {
            PlasmaError::InvalidParams(_) | PlasmaError::InvalidConfig(_) => CliError::Config(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::InvalidParams(_) | VerifyError::CostGuard { .. } | VerifyError::Divergent { .. } => {
                CliError::Config(e.to_string())
            }
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

/// Validated ensemble selection shared by `sample`, `verify radial` and
/// `kernel`.
#[derive(Debug, Clone, Copy)]
enum Selection {
    Truncated(EnsembleParams),
    Spherical(usize),
}

impl Selection {
    fn from_args(ensemble: EnsembleArg, size: usize, depth: Option<usize>) -> Result<Self, CliError> {
        match EnsembleKind::from(ensemble) {
            EnsembleKind::TruncatedUnitary => {
                let depth = depth.ok_or_else(|| CliError::Config("truncated-unitary needs -n".into()))?;
                let p = EnsembleParams::new(size, depth)?;
                if !p.in_derived_regime() {
                    eprintln!("{OUTSIDE_REGIME}");
                }
                Ok(Selection::Truncated(p))
            }
            EnsembleKind::Spherical => {
                if depth.is_some() {
                    return Err(CliError::Config("-n does not apply to the spherical ensemble".into()));
                }
                if size == 0 {
                    return Err(CliError::Config("N must be >= 1".into()));
                }
                Ok(Selection::Spherical(size))
            }
        }
    }

    fn draw(self, count: usize, seed: u64) -> Result<Vec<EigenSample>, CliError> {
        Ok(match self {
            Selection::Truncated(p) => eigenvalues_truncated(p, count, RngState::new(seed))?,
            Selection::Spherical(size) => eigenvalues_spherical(size, count, RngState::new(seed))?,
        })
    }

    fn kernel(self) -> Result<KernelSpec, CliError> {
        Ok(match self {
            Selection::Truncated(p) => KernelSpec::truncated(p.size(), p.depth())?,
            Selection::Spherical(size) => KernelSpec::spherical(size)?,
        })
    }

    fn config(self) -> serde_json::Value {
        match self {
            Selection::Truncated(p) => json!({"ensemble": "truncated-unitary", "N": p.size(), "n": p.depth()}),
            Selection::Spherical(size) => json!({"ensemble": "spherical", "N": size}),
        }
    }
}

pub fn sample(args: &SampleArgs) -> Result<Outcome, CliError> {
    let selection = Selection::from_args(args.ensemble, args.size, args.depth)?;
    let samples = selection.draw(args.samples, args.seed)?;
    let mut out = sink(args.output.as_deref())?;
    match args.format {
        Format::Csv => {
            writeln!(out, "{EIGENVALUE_HEADER}")?;
            for s in &samples {
                write_eigen_rows(&mut *out, s.index, &s.eigenvalues)?;
            }
            out.flush()?;
        }
        Format::Json => {
            let rows: Vec<JsonSample> = samples.iter().map(|s| JsonSample::new(s.index, &s.eigenvalues)).collect();
            write_json(&mut *out, &rows)?;
        }
    }
    Ok(Outcome::Success)
}

fn emit(report: Report, target: Option<&std::path::Path>) -> Result<Outcome, CliError> {
    let pass = report.pass;
    let mut out = sink(target)?;
    write_json(&mut *out, &report)?;
    Ok(if pass { Outcome::Success } else { Outcome::ChecksFailed })
}

fn from_test(name: impl Into<String>, t: &TestReport) -> CheckRecord {
    CheckRecord::statistical(name, t.statistic, t.p_value, t.pass)
}

fn chi_square_against(u: &[f64], cdf: impl Fn(f64) -> f64, hi: f64) -> Result<TestReport, CliError> {
    let edges = equiprobable_edges(&cdf, RADIAL_BINS, 0.0, hi);
    let probs: Vec<f64> = edges.windows(2).map(|w| cdf(w[1]) - cdf(w[0])).collect();
    Ok(chi_square_binned(u, &edges, &probs)?)
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn verify_identity(trials: usize, seed: u64) -> Result<Vec<CheckRecord>, CliError> {
    if trials == 0 {
        return Err(CliError::Config("trials must be >= 1".into()));
    }
    let mut rng = RngState::new(seed).rng();
    let mut worst_plus: f64 = 0.0;
    let mut worst_minus: f64 = 0.0;
    for i in 0..trials {
        let m = 2 + i % 5;
        let t = TriangularSample::random(m, &mut rng)?;
        worst_plus = worst_plus.max(det_identity_spherical(&t)?);
        let t = TriangularSample::random_in_support(m, &mut rng)?;
        worst_minus = worst_minus.max(det_identity_truncated(&t)?);
    }
    Ok(vec![
        CheckRecord::residual("det(I + T T^H) factorisation", worst_plus, worst_plus < IDENTITY_TOL),
        CheckRecord::residual("det(I - T T^H) factorisation", worst_minus, worst_minus < IDENTITY_TOL),
    ])
}

fn verify_radial(selection: Selection, samples: usize, seed: u64) -> Result<Vec<CheckRecord>, CliError> {
    if samples < 5 * RADIAL_BINS {
        return Err(CliError::Config(format!(
            "need at least {} samples for {RADIAL_BINS} equiprobable bins",
            5 * RADIAL_BINS
        )));
    }
    let draws = selection.draw(samples, seed)?;
    let u = sorted(uniformly_chosen_moduli_sq(&draws, RngState::with_stream(seed, 1)));
    match selection {
        Selection::Truncated(p) => {
            let spec = selection.kernel()?;
            let cdf = |x: f64| radial_mixture_cdf(x, &spec).unwrap_or(f64::NAN);
            let ks = ks_one_sample(&u, cdf)?;
            let chi = chi_square_against(&u, cdf, 1.0)?;
            let label = if p.size() == 1 { "Beta(1, n)" } else { "radial mixture" };
            Ok(vec![from_test(format!("KS |z|^2 vs {label}"), &ks), from_test("chi-square |z|^2", &chi)])
        }
        Selection::Spherical(size) => {
            let cdf = |x: f64| spherical_radial_cdf(x, size).unwrap_or(f64::NAN);
            let ks = ks_one_sample(&u, cdf)?;
            let chi = chi_square_against(&u, cdf, f64::INFINITY)?;
            Ok(vec![from_test("KS |z|^2 vs spherical radial law", &ks), from_test("chi-square |z|^2", &chi)])
        }
    }
}

fn verify_recursion(
    kind: EnsembleKind,
    m: usize,
    p: f64,
    trials: usize,
    mc_samples: usize,
    seed: u64,
) -> Result<Vec<CheckRecord>, CliError> {
    if mc_samples < 2 {
        return Err(CliError::Config("need at least 2 Monte Carlo samples".into()));
    }
    let state = RngState::new(seed);
    let report = match kind {
        EnsembleKind::TruncatedUnitary => recursion_check_truncated(m, p, trials, mc_samples, state)?,
        EnsembleKind::Spherical => recursion_check_spherical(m, p, trials, mc_samples, state)?,
    };
    let mut checks = vec![CheckRecord {
        name: "z = 0".into(),
        statistic: Some(report.constant_fit.z_score(report.constant)),
        p_value: None,
        residual: Some(report.constant_fit.relative_error(report.constant)),
        pass: report.constant_fit_pass,
    }];
    checks.extend(report.trials.iter().enumerate().map(|(i, t)| CheckRecord {
        name: format!("configuration {i}"),
        statistic: Some(t.z_score),
        p_value: None,
        residual: Some(t.relative_error),
        pass: t.pass,
    }));
    if !report.quadrature_residuals.is_empty() {
        let worst = report.quadrature_residuals.iter().cloned().fold(0.0, f64::max);
        checks.push(CheckRecord::residual(
            "planar quadrature",
            worst,
            worst < pseudosphere_rmt::verify::QUADRATURE_TOL,
        ));
    }
    Ok(checks)
}

fn verify_constants(max_m: usize) -> Result<Vec<CheckRecord>, CliError> {
    if max_m == 0 {
        return Err(CliError::Config("max-m must be >= 1".into()));
    }
    let mut checks = Vec::new();
    for m in 1..=max_m {
        let mf = m as f64;
        let mut worst: f64 = 0.0;
        for k in 1..=8 {
            worst = worst.max(constant_c(m, mf + 0.5 * k as f64)?.relative_error());
        }
        checks.push(CheckRecord::residual(format!("C(m={m}, p)"), worst, worst < CONSTANT_TOL));
        let mut worst: f64 = 0.0;
        for k in 0..=2 * (m + 4) {
            worst = worst.max(constant_c_ball(m, 0.5 * k as f64)?.relative_error());
        }
        checks.push(CheckRecord::residual(format!("C_ball(m={m}, p)"), worst, worst < CONSTANT_TOL));
    }
    Ok(checks)
}

pub fn verify(cmd: &VerifyCommand) -> Result<Outcome, CliError> {
    match cmd {
        VerifyCommand::Identity { trials, seed, target } => {
            let checks = verify_identity(*trials, *seed)?;
            let report = Report::new("verify identity", json!({"trials": trials, "seed": seed}), checks);
            emit(report, target.output.as_deref())
        }
        VerifyCommand::Radial {
            ensemble,
            size,
            depth,
            samples,
            seed,
            target,
        } => {
            let selection = Selection::from_args(*ensemble, *size, *depth)?;
            let checks = verify_radial(selection, *samples, *seed)?;
            let mut config = selection.config();
            config["samples"] = json!(samples);
            config["seed"] = json!(seed);
            emit(Report::new("verify radial", config, checks), target.output.as_deref())
        }
        VerifyCommand::Recursion {
            ensemble,
            m,
            p,
            trials,
            mc_samples,
            seed,
            target,
        } => {
            let kind = EnsembleKind::from(*ensemble);
            let checks = verify_recursion(kind, *m, *p, *trials, *mc_samples, *seed)?;
            let config = json!({
                "ensemble": kind.name(),
                "m": m,
                "p": p,
                "trials": trials,
                "mc_samples": mc_samples,
                "seed": seed,
            });
            emit(Report::new("verify recursion", config, checks), target.output.as_deref())
        }
        VerifyCommand::Jacobi {
            size,
            depth,
            samples,
            seed,
            target,
        } => {
            let p = EnsembleParams::new(*size, *depth)?;
            let r = check_subblock_jacobi_equivalence(p, *samples, RngState::new(*seed))?;
            let checks = vec![
                from_test("two-sample KS on the largest eigenvalue", &r.test),
                CheckRecord {
                    name: "independent streams".into(),
                    statistic: None,
                    p_value: None,
                    residual: None,
                    pass: r.streams_independent,
                },
            ];
            let config = json!({"N": size, "n": depth, "samples": samples, "seed": seed});
            emit(Report::new("verify jacobi", config, checks), target.output.as_deref())
        }
        VerifyCommand::Constants { max_m, target } => {
            let checks = verify_constants(*max_m)?;
            emit(
                Report::new("verify constants", json!({"max_m": max_m}), checks),
                target.output.as_deref(),
            )
        }
    }
}

#[derive(Serialize)]
struct PlasmaDiagnostics {
    acceptance_rate: f64,
    autocorrelation_time: f64,
    sum_modulus_sq_mean: f64,
    sum_modulus_sq_std_error: f64,
    snapshots: usize,
    beta: f64,
    eta: f64,
    a: f64,
    n_particles: usize,
    density_exponent: f64,
}

pub fn plasma(args: &PlasmaArgs) -> Result<Outcome, CliError> {
    if !(args.a > 0.0 && args.a.is_finite()) {
        return Err(CliError::Config(format!("a must be positive, got {}", args.a)));
    }
    // η = n/(4πa²) gives (2πηa² + 1/2)β - 2 = n - 1 at β = 2.
    let eta = args
        .eta
        .unwrap_or_else(|| args.match_n as f64 / (4.0 * std::f64::consts::PI * args.a * args.a));
    let params = PlasmaParams::new(args.size, args.beta, eta, args.a)?;
    let cfg = ChainConfig {
        steps: args.steps,
        step_scale: args.step_scale,
        burn_in: args.burn_in,
        thinning: args.thinning,
        seed: args.seed,
    };
    cfg.validate()?;
    let chain = run_chain(&params, &cfg)?;
    if let Some(k) = chain.snapshots.iter().position(|snap| !snap.iter().all(|z| z.is_finite())) {
        return Err(CliError::Numeric(format!("non-finite position in snapshot {k}")));
    }

    let mut out = sink(args.output.as_deref())?;
    writeln!(out, "{EIGENVALUE_HEADER}")?;
    for (k, snap) in chain.snapshots.iter().enumerate() {
        write_eigen_rows(&mut *out, k as u64, snap)?;
    }
    out.flush()?;

    let d = chain.diagnostics;
    let diag = PlasmaDiagnostics {
        acceptance_rate: d.acceptance_rate,
        autocorrelation_time: d.autocorrelation_time,
        sum_modulus_sq_mean: d.sum_modulus_sq_mean,
        sum_modulus_sq_std_error: d.sum_modulus_sq_std_error,
        snapshots: chain.snapshots.len(),
        beta: params.beta(),
        eta: params.eta(),
        a: params.radius(),
        n_particles: params.n_particles(),
        density_exponent: params.density_exponent(),
    };
    match &args.diagnostics {
        Some(path) => write_json(&mut *sink(Some(path))?, &diag)?,
        None => write_json(&mut std::io::stderr().lock(), &diag)?,
    }
    Ok(Outcome::Success)
}

fn check_grid(grid: &[f64], selection: Selection) -> Result<(), CliError> {
    let bad = grid.iter().find(|&&r| match selection {
        Selection::Truncated(_) => !(0.0..1.0).contains(&r),
        Selection::Spherical(_) => r < 0.0,
    });
    match bad {
        Some(r) => Err(CliError::Config(format!("grid point {r} outside the support"))),
        None => Ok(()),
    }
}

pub fn kernel(cmd: &KernelCommand) -> Result<Outcome, CliError> {
    let (common, rho2) = match cmd {
        KernelCommand::Rho1(c) => (c, None),
        KernelCommand::Rho2 { common, r1, angle } => (common, Some((*r1, *angle))),
    };
    let KernelArgs {
        ensemble,
        size,
        depth,
        grid,
        output,
    } = common;
    let selection = Selection::from_args(*ensemble, *size, *depth)?;
    let spec = selection.kernel()?;
    let grid = parse_grid(grid)?;
    let (header, table) = match rho2 {
        None => {
            check_grid(&grid, selection)?;
            let table = grid
                .iter()
                .map(|&r| Ok(vec![r, one_point_density(Complex64::new(r, 0.0), &spec)?]))
                .collect::<Result<Vec<_>, CliError>>()?;
            ("r,value", table)
        }
        Some((r1, angle)) => {
            let z1 = Complex64::new(r1, 0.0);
            let dir = Complex64::from_polar(1.0, angle);
            let points: Vec<Complex64> = grid.iter().map(|&s| z1 + dir * s).collect();
            let moduli: Vec<f64> = std::iter::once(r1.abs()).chain(points.iter().map(|z| z.norm())).collect();
            check_grid(&moduli, selection)?;
            let table = grid
                .iter()
                .zip(&points)
                .map(|(&s, &z2)| Ok(vec![r1, z2.norm(), s, k_point_correlation(&[z1, z2], &spec)?]))
                .collect::<Result<Vec<_>, CliError>>()?;
            ("r1,r2,sep,value", table)
        }
    };
    if let Some(row) = table.iter().find(|row| !row.iter().all(|v| v.is_finite())) {
        return Err(CliError::Numeric(format!("non-finite value in row {row:?}")));
    }
    let mut out = sink(output.as_deref())?;
    writeln!(out, "{header}")?;
    for row in &table {
        let cells: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(Outcome::Success)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_classes_map_to_exit_codes() {
        let numeric: CliError = EnsembleError::SingularDraws(100).into();
        assert!(matches!(numeric, CliError::Numeric(_)));
        let solver: CliError = EnsembleError::Eigensolver {
            index: 17,
            source: pseudosphere_rmt::linalg::LinalgError::Singular { column: 0, pivot: 0.0 },
        }
        .into();
        assert!(solver.to_string().contains("sample 17"));
        assert_eq!(solver.exit_code(), 3);
        let config: CliError = PlasmaError::InvalidConfig("x".into()).into();
        assert_eq!(config.exit_code(), 2);
        let out_of_disk: CliError = PlasmaError::OutOfDisk { index: 0, modulus: 2.0, bound: 1.0 }.into();
        assert_eq!(out_of_disk.exit_code(), 3);
    }

    #[test]
    fn failed_check_fails_report() {
        let ok = CheckRecord::residual("a", 0.0, true);
        let bad = CheckRecord::residual("b", 1.0, false);
        assert!(Report::new("t", json!({}), vec![ok]).pass);
        assert!(!Report::new("t", json!({}), vec![CheckRecord::residual("a", 0.0, true), bad]).pass);
        assert!(!Report::new("t", json!({}), vec![]).pass);
    }
}
