//! `hetclutter detect` — one cell under test, one JSON outcome.

use std::path::PathBuf;

use hetclutter_core::detector;
use hetclutter_core::rng::TrialKey;
use hetclutter_core::sim::{self, ClutterScenario, DataSet};
use serde::Serialize;

use crate::{numerical, output, usage, CliError, Ctx};

/// Stream context for the simulated dataset drawn from `--scenario`.
const CTX_DETECT: u16 = 0xD7;

/// Tolerance for the `--oracle` cross-check between the incremental update
/// path and the full-refactorization path.
const ORACLE_TOL: f64 = 1e-8;

#[derive(clap::Args)]
pub struct DetectArgs {
    /// Scenario JSON describing a synthetic detection problem to simulate
    /// (drawn deterministically from --seed)
    #[arg(long, value_name = "PATH", conflicts_with = "dataset")]
    pub scenario: Option<PathBuf>,

    /// Dataset JSON holding explicit cell-under-test, secondary, and
    /// steering vectors
    #[arg(long, value_name = "PATH")]
    pub dataset: Option<PathBuf>,
}

#[derive(Serialize)]
struct OracleReport {
    /// Relative deviation of the decision statistic between the two paths.
    max_rel_deviation: f64,
    tolerance: f64,
    ok: bool,
}

#[derive(Serialize)]
struct DetectReport<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    scenario: Option<&'a ClutterScenario>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dataset: Option<String>,
    outcome: &'a detector::DetectionOutcome,
    /// Matched-filter statistic of the configured competitor estimator,
    /// present when the config file names one.
    #[serde(skip_serializing_if = "Option::is_none")]
    nmf_statistic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<OracleReport>,
}

pub fn run(ctx: &Ctx, args: &DetectArgs) -> Result<(), CliError> {
    let opts = ctx.options();
    opts.validate().map_err(usage)?;

    let (scenario, seed, dataset_path, ds): (Option<ClutterScenario>, _, _, DataSet) =
        match (&args.scenario, &args.dataset) {
            (Some(path), None) => {
                let sc: ClutterScenario = output::read_json(path)?;
                sc.validate().map_err(usage)?;
                let seed = ctx.seed();
                let ds = sim::gen_dataset(&sc, TrialKey::new(seed, CTX_DETECT, 0))
                    .map_err(numerical)?;
                (Some(sc), Some(seed), None, ds)
            }
            (None, Some(path)) => {
                let ds: DataSet = output::read_json(path)?;
                (None, None, Some(path.display().to_string()), ds)
            }
            (None, None) => return Err(usage("detect needs --scenario or --dataset")),
            (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
        };

    let outcome =
        detector::detect(&ds.z, &ds.secondaries, &ds.v, &opts).map_err(numerical)?;
    if !outcome.log_statistic.is_finite() {
        return Err(numerical(format!(
            "decision statistic is not finite: {}",
            outcome.log_statistic
        )));
    }

    let oracle = if ctx.oracle() {
        let naive_opts = detector::CyclicOptions {
            fast_path: false,
            ..opts
        };
        let fast_opts = detector::CyclicOptions {
            fast_path: true,
            ..opts
        };
        let naive = detector::detect(&ds.z, &ds.secondaries, &ds.v, &naive_opts)
            .map_err(numerical)?;
        let fast = detector::detect(&ds.z, &ds.secondaries, &ds.v, &fast_opts)
            .map_err(numerical)?;
        let denom = naive.log_statistic.abs().max(1.0);
        let dev = (fast.log_statistic - naive.log_statistic).abs() / denom;
        Some(OracleReport {
            max_rel_deviation: dev,
            tolerance: ORACLE_TOL,
            ok: dev <= ORACLE_TOL,
        })
    } else {
        None
    };

    let nmf_statistic = match ctx.estimator() {
        Some(spec) => Some(
            spec.estimate(&ds.secondaries)
                .and_then(|m| hetclutter_core::baselines::nmf_statistic(&ds.z, &ds.v, &m))
                .map_err(numerical)?,
        ),
        None => None,
    };

    let oracle_failed = oracle.as_ref().is_some_and(|o| !o.ok);
    let report = DetectReport {
        scenario: scenario.as_ref(),
        seed,
        dataset: dataset_path,
        outcome: &outcome,
        nmf_statistic,
        oracle,
    };
    let json = output::pretty_json(&report)?;
    match ctx.out() {
        Some(path) => output::atomic_write(path, json.as_bytes())?,
        None => print!("{json}"),
    }

    if oracle_failed {
        return Err(numerical(format!(
            "oracle cross-check failed: the two estimation paths disagree beyond {ORACLE_TOL:e}"
        )));
    }
    Ok(())
}
