//! `rmt`: sampling, verification, kernel tables and plasma chains.
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 invalid
//! configuration, 3 numeric failure.

mod commands;
mod output;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use pseudosphere_rmt::ensembles::EnsembleKind;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub(crate) fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

/// What a finished command reports back to `main`.
pub enum Outcome {
    Success,
    ChecksFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EnsembleArg {
    TruncatedUnitary,
    Spherical,
}

impl From<EnsembleArg> for EnsembleKind {
    fn from(e: EnsembleArg) -> Self {
        match e {
            EnsembleArg::TruncatedUnitary => EnsembleKind::TruncatedUnitary,
            EnsembleArg::Spherical => EnsembleKind::Spherical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "rmt", version, about = "Truncated-unitary and spherical ensembles, their kernels and the pseudosphere plasma")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample eigenvalues.
    Sample(SampleArgs),
    /// Run a verification suite and emit a JSON report.
    Verify {
        #[command(subcommand)]
        check: VerifyCommand,
    },
    /// Run a Metropolis chain for the plasma.
    Plasma(PlasmaArgs),
    /// Tabulate correlation functions.
    Kernel {
        #[command(subcommand)]
        table: KernelCommand,
    },
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long, value_enum)]
    pub ensemble: EnsembleArg,
    /// Matrix size.
    #[arg(short = 'N', long = "size")]
    pub size: usize,
    /// Truncation depth (truncated-unitary only).
    #[arg(short = 'n', long = "depth")]
    pub depth: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; standard output when omitted.
    #[arg(short = 'o', long = "output")]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ReportTarget {
    /// Report file; standard output when omitted.
    #[arg(short = 'o', long = "output")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum VerifyCommand {
    /// Rank-one determinant factorisations on random triangular matrices.
    Identity {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        target: ReportTarget,
    },
    /// Squared moduli of sampled eigenvalues against the radial law.
    Radial {
        #[arg(long, value_enum)]
        ensemble: EnsembleArg,
        #[arg(short = 'N', long = "size")]
        size: usize,
        #[arg(short = 'n', long = "depth")]
        depth: Option<usize>,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        target: ReportTarget,
    },
    /// Monte Carlo check of the column-by-column reduction of the Schur
    /// integrals.
    Recursion {
        #[arg(long, value_enum, default_value_t = EnsembleArg::TruncatedUnitary)]
        ensemble: EnsembleArg,
        #[arg(long = "m", default_value_t = 2)]
        m: usize,
        #[arg(long = "p")]
        p: f64,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long = "mc-samples", default_value_t = 1_000_000)]
        mc_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        target: ReportTarget,
    },
    /// Largest eigenvalue of the sub-block Gram matrix against the Jacobi
    /// construction.
    Jacobi {
        #[arg(short = 'N', long = "size")]
        size: usize,
        #[arg(short = 'n', long = "depth")]
        depth: usize,
        #[arg(long, default_value_t = 5000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        target: ReportTarget,
    },
    /// Dimensional constants by radial quadrature against closed forms.
    Constants {
        /// Largest dimension checked.
        #[arg(long = "max-m", default_value_t = 3)]
        max_m: usize,
        #[command(flatten)]
        target: ReportTarget,
    },
}

#[derive(Debug, Args)]
pub struct PlasmaArgs {
    #[arg(long, default_value_t = 2.0)]
    pub beta: f64,
    /// Background density; overrides --match-n.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Choose η so the one-body exponent at β = 2 equals that of the
    /// truncated ensemble with this depth.
    #[arg(long = "match-n", default_value_t = 3)]
    pub match_n: usize,
    #[arg(long, default_value_t = 0.5)]
    pub a: f64,
    #[arg(short = 'N', long = "size", default_value_t = 2)]
    pub size: usize,
    #[arg(long, default_value_t = 20_000)]
    pub steps: usize,
    #[arg(long = "burn-in", default_value_t = 1_000)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 1)]
    pub thinning: usize,
    #[arg(long = "step-scale", default_value_t = 0.5)]
    pub step_scale: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Snapshot CSV; standard output when omitted.
    #[arg(short = 'o', long = "output")]
    pub output: Option<PathBuf>,
    /// Diagnostics JSON; standard error when omitted.
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    #[arg(long, value_enum)]
    pub ensemble: EnsembleArg,
    #[arg(short = 'N', long = "size")]
    pub size: usize,
    #[arg(short = 'n', long = "depth")]
    pub depth: Option<usize>,
    /// `start:stop:count`, endpoints included.
    #[arg(long)]
    pub grid: String,
    #[arg(short = 'o', long = "output")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum KernelCommand {
    /// One-point density along the positive real axis.
    Rho1(KernelArgs),
    /// Two-point function with the first point fixed and the second at the
    /// given separations.
    Rho2 {
        #[command(flatten)]
        common: KernelArgs,
        /// Position of the first point on the real axis.
        #[arg(long, default_value_t = 0.0)]
        r1: f64,
        /// Direction of the separation, in radians.
        #[arg(long, default_value_t = 0.0)]
        angle: f64,
    },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("RMT_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .map_err(|_| CliError::Config(format!("RMT_THREADS must be a positive integer, got '{value}'")))?;
    if threads == 0 {
        return Err(CliError::Config("RMT_THREADS must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn dispatch(cli: Cli) -> Result<Outcome, CliError> {
    configure_threads()?;
    match cli.command {
        Command::Sample(args) => commands::sample(&args),
        Command::Verify { check } => commands::verify(&check),
        Command::Plasma(args) => commands::plasma(&args),
        Command::Kernel { table } => commands::kernel(&table),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::ChecksFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("rmt: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
