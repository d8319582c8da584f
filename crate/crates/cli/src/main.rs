//! `hetclutter` — adaptive radar detection in heterogeneous, clutter-dominated
//! environments.
//!
//! Subcommands:
//! - `detect` runs the cyclic-estimation detector on one cell under test,
//!   either simulated from a scenario description or loaded from a dataset
//!   file, and emits the outcome as JSON.
//! - `curves` runs a calibration / detection-probability / false-alarm
//!   sensitivity experiment plan and emits plot-ready JSON and CSV.
//! - `realdata` windows a recorded IQ cube into temporal snapshots and runs
//!   per-range-bin detection with data-driven or synthetic thresholds.
//! - `selftest` runs the built-in invariant checks.
//!
//! Every command is deterministic given its configuration and `--seed`.
//! Output files are written atomically: they are complete or absent, never
//! partial. Exit codes: 0 success, 1 numerical failure, 2 usage or input
//! validation failure.

mod curves;
mod detect;
mod output;
mod presets;
mod realdata;
mod selftest;

use std::path::{Path, PathBuf};

use clap::{ArgAction, Parser, Subcommand};
use hetclutter_core::baselines::CovEstimatorSpec;
use hetclutter_core::detector::CyclicOptions;
use hetclutter_core::mc::ExperimentPlan;
use serde::Deserialize;

/// Environment variable consulted when neither `--threads` nor the config
/// file names a worker count.
pub const THREADS_ENV: &str = "HETCLUTTER_THREADS";

/// Error carrying the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Input, flag, or configuration problem; exits with code 2.
    #[error("{0}")]
    Usage(String),
    /// Computation failed after valid inputs; exits with code 1.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 1,
        }
    }
}

/// Shorthand for a validation failure (exit code 2).
pub fn usage(msg: impl std::fmt::Display) -> CliError {
    CliError::Usage(msg.to_string())
}

/// Shorthand for a numerical failure (exit code 1).
pub fn numerical(msg: impl std::fmt::Display) -> CliError {
    CliError::Numerical(msg.to_string())
}

#[derive(Parser)]
#[command(
    name = "hetclutter",
    version,
    about = "Adaptive radar detection in heterogeneous, clutter-dominated environments",
    propagate_version = true
)]
struct Cli {
    #[command(flatten)]
    globals: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. Each has a config-file key of the same
/// name; a flag given on the command line overrides the config value.
#[derive(clap::Args)]
struct GlobalArgs {
    /// JSON configuration file; command-line flags override its keys
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed for every random draw [default: 0]
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Output file (detect) or directory (curves, realdata)
    /// [default: stdout / current directory]
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Worker threads for trial evaluation; falls back to HETCLUTTER_THREADS,
    /// then to all cores. Results never depend on the thread count.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Target false-alarm probability (realdata default: 0.01; curves:
    /// overrides the plan's value)
    #[arg(long, global = true, value_name = "FLOAT")]
    pfa: Option<f64>,

    /// Trials per detection-probability or sweep point (curves: overrides
    /// the plan's value)
    #[arg(long, global = true, value_name = "N")]
    trials: Option<usize>,

    /// Named experiment preset for `curves` (fig1..fig7)
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,

    /// Cross-check the incremental update path against full refactorization
    /// and report the largest relative deviation of the decision statistic
    #[arg(long, global = true, action = ArgAction::SetTrue)]
    oracle: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the detector on one cell under test and print the outcome as JSON
    Detect(detect::DetectArgs),
    /// Run an experiment plan: threshold calibration, detection-probability
    /// curves, false-alarm sensitivity sweeps, convergence profiling
    Curves(curves::CurvesArgs),
    /// Window a recorded IQ cube and run per-range-bin detection
    Realdata(realdata::RealdataArgs),
    /// Run the built-in invariant checks and report one line per check
    Selftest,
}

/// Keys accepted in a `--config` JSON file. Scalar keys mirror the global
/// flags one-to-one and are overridden by them. `plan` plays the role of the
/// `--plan` file for `curves`; `options` configures the cyclic detector
/// wherever one runs (detect, realdata, selftest, and preset plans);
/// `estimator` swaps the matched-filter competitor set for the single
/// described covariance estimator (detect adds its statistic to the output).
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    preset: Option<String>,
    plan: Option<ExperimentPlan>,
    options: Option<CyclicOptions>,
    estimator: Option<CovEstimatorSpec>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    threads: Option<usize>,
    pfa: Option<f64>,
    trials: Option<usize>,
    oracle: Option<bool>,
}

/// Merged view of the config file and the command-line flags
/// (flags take precedence).
pub struct Ctx {
    config: CliConfig,
    globals: GlobalArgs,
}

impl Ctx {
    pub fn seed(&self) -> u64 {
        self.globals.seed.or(self.config.seed).unwrap_or(0)
    }

    /// Seed only when given explicitly (flag or config).
    pub fn seed_override(&self) -> Option<u64> {
        self.globals.seed.or(self.config.seed)
    }

    /// Validated false-alarm target with the 0.01 default.
    pub fn pfa(&self) -> Result<f64, CliError> {
        let p = self.pfa_override().unwrap_or(1e-2);
        if p > 0.0 && p < 1.0 {
            Ok(p)
        } else {
            Err(usage(format!("--pfa must be in (0, 1), got {p}")))
        }
    }

    pub fn pfa_override(&self) -> Option<f64> {
        self.globals.pfa.or(self.config.pfa)
    }

    pub fn trials_override(&self) -> Option<usize> {
        self.globals.trials.or(self.config.trials)
    }

    pub fn out(&self) -> Option<&Path> {
        self.globals
            .out
            .as_deref()
            .or(self.config.out.as_deref())
    }

    /// Output directory for multi-file commands; defaults to the working
    /// directory.
    pub fn out_dir(&self) -> PathBuf {
        self.out().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn preset(&self) -> Option<&str> {
        self.globals
            .preset
            .as_deref()
            .or(self.config.preset.as_deref())
    }

    pub fn oracle(&self) -> bool {
        self.globals.oracle || self.config.oracle.unwrap_or(false)
    }

    /// Cyclic-detector options; the config file's `options` key or defaults.
    pub fn options(&self) -> CyclicOptions {
        self.config.options.unwrap_or_default()
    }

    pub fn options_override(&self) -> Option<CyclicOptions> {
        self.config.options
    }

    pub fn estimator(&self) -> Option<CovEstimatorSpec> {
        self.config.estimator
    }

    pub fn config_plan(&self) -> Option<&ExperimentPlan> {
        self.config.plan.as_ref()
    }

    /// Resolves the worker-thread count: flag, then config, then the
    /// environment variable. `None` leaves the default pool (all cores).
    fn resolve_threads(&self) -> Result<Option<usize>, CliError> {
        if let Some(n) = self.globals.threads.or(self.config.threads) {
            return Ok(Some(n));
        }
        match std::env::var(THREADS_ENV) {
            Ok(s) => s.trim().parse::<usize>().map(Some).map_err(|_| {
                usage(format!("{THREADS_ENV} must be a positive integer, got {s:?}"))
            }),
            Err(std::env::VarError::NotPresent) => Ok(None),
            Err(e) => Err(usage(format!("{THREADS_ENV}: {e}"))),
        }
    }

    /// Installs the global worker pool when a thread count was requested.
    fn init_threads(&self) -> Result<(), CliError> {
        if let Some(n) = self.resolve_threads()? {
            if n == 0 {
                return Err(usage("thread count must be at least 1"));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| numerical(format!("could not set up the worker pool: {e}")))?;
        }
        Ok(())
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let Cli { globals, command } = cli;
    let config = match &globals.config {
        Some(path) => output::read_json::<CliConfig>(path)?,
        None => CliConfig::default(),
    };
    let ctx = Ctx { config, globals };
    ctx.init_threads()?;
    match command {
        Command::Detect(args) => detect::run(&ctx, &args),
        Command::Curves(args) => curves::run(&ctx, &args),
        Command::Realdata(args) => realdata::run(&ctx, &args),
        Command::Selftest => selftest::run(&ctx),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
