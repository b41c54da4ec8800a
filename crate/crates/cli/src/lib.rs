//! Command-line front end: single-point runs, parameter sweeps, figure
//! reproduction, CSV and plot-data emission.
//!
//! Exit codes: 0 success, 1 configuration error (bad flags, bad config
//! file, unusable parameters), 2 numerical failure.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use qlw_core::config::RunConfig;
use qlw_core::report::PipelineOptions;
use qlw_core::QlwError;

pub mod commands;
pub mod csvio;

#[derive(Parser)]
#[command(
    name = "qlw",
    version,
    about = "Quantum-limited laser linewidth: numeric propagation vs closed forms"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Stationary photon-number distribution and its moments.
    Steady(CommonArgs),
    /// Two-time field correlation trace g(t).
    Correlate(CommonArgs),
    /// Emission spectrum (cosine transform of the correlation).
    Spectrum(CommonArgs),
    /// Full linewidth comparison at one operating point.
    Linewidth(CommonArgs),
    /// Linewidth comparison over the configured pump-ratio grid.
    Sweep(CommonArgs),
    /// Three closed-form curves plus decimated numeric points, normalized
    /// by chi*gamma, with a generated gnuplot script (requires n_b = 0).
    Fig1(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Path to a `key = value` config file.
    #[arg(long)]
    config: PathBuf,
    /// Output file; stdout when omitted. `fig1` requires it and writes a
    /// sibling `.gp` gnuplot script next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweep-style commands.
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    /// Run the numeric extractors (default).
    #[arg(long, overrides_with = "no_numeric")]
    with_numeric: bool,
    /// Closed forms only; skip the numeric extractors.
    #[arg(long, overrides_with = "with_numeric")]
    no_numeric: bool,
    /// Validity margin for the operating-regime check (>= 1).
    #[arg(long, default_value_t = 10.0)]
    margin: f64,
}

fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .clamp(1, 8)
}

/// Failures split by exit code.
pub enum CmdError {
    /// Exit code 1: the invocation or config cannot be acted on.
    Config(String),
    /// Exit code 2: the computation itself failed.
    Numeric(String),
}

/// Sort a pipeline error into the exit-code classes: parameter and
/// operating-point problems are configuration errors, everything the
/// solvers report at runtime is a numerical failure.
pub(crate) fn classify(e: QlwError) -> CmdError {
    match e {
        QlwError::NonPositiveRate { .. }
        | QlwError::NegativeThermal(_)
        | QlwError::BelowThreshold(_)
        | QlwError::ThermalNotSupported(_)
        | QlwError::TruncationTooSmall { .. }
        | QlwError::DivergentDistribution { .. }
        | QlwError::ZeroMean => CmdError::Config(e.to_string()),
        QlwError::StiffnessFailure { .. } => {
            CmdError::Numeric(format!("{e}; consider raising n_max or loosening rtol"))
        }
        QlwError::WindowNotReached { .. } => {
            CmdError::Numeric(format!("{e} (or widen the fit window)"))
        }
        other => CmdError::Numeric(other.to_string()),
    }
}

/// Everything a command needs: parsed config, resolved pipeline options,
/// output destination, and the worker budget.
pub(crate) struct Job {
    pub cfg: RunConfig,
    pub opts: PipelineOptions,
    pub out: Option<PathBuf>,
    pub workers: usize,
}

fn make_job(args: CommonArgs) -> Result<Job, CmdError> {
    let cfg = RunConfig::parse_file(&args.config).map_err(|e| CmdError::Config(e.to_string()))?;
    if args.margin < 1.0 {
        return Err(CmdError::Config(format!(
            "--margin must be >= 1, got {}",
            args.margin
        )));
    }
    let mut opts = PipelineOptions::from_config(&cfg);
    opts.margin = args.margin;
    opts.with_numeric = !args.no_numeric;
    Ok(Job {
        cfg,
        opts,
        out: args.out,
        workers: args.workers.max(1),
    })
}

/// Parse arguments, run the selected command, and return the exit code.
pub fn run() -> u8 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.cmd {
        Cmd::Steady(a) => make_job(a).and_then(commands::steady),
        Cmd::Correlate(a) => make_job(a).and_then(commands::correlate),
        Cmd::Spectrum(a) => make_job(a).and_then(commands::spectrum_cmd),
        Cmd::Linewidth(a) => make_job(a).and_then(commands::linewidth),
        Cmd::Sweep(a) => make_job(a).and_then(commands::sweep),
        Cmd::Fig1(a) => make_job(a).and_then(commands::fig1),
    };
    match result {
        Ok(()) => 0,
        Err(CmdError::Config(m)) => {
            eprintln!("error: {m}");
            1
        }
        Err(CmdError::Numeric(m)) => {
            eprintln!("error: {m}");
            2
        }
    }
}
