//! `hetclutter curves` — run an experiment plan and emit plot-ready files.
//!
//! Outputs, written atomically into the `--out` directory:
//! - `report.json` — the full experiment report (plan echo, thresholds,
//!   every estimated rate with its confidence interval).
//! - `pd_curve.csv` — detection probability per detector and SNR point.
//! - `pfa_sweep.csv` — false-alarm rate per detector and sweep point.
//! - `convergence.csv` — mean relative log-likelihood change per iteration.
//!
//! CSV files are only written when the plan produced the corresponding rows,
//! so every emitted file carries a header and data. The report excludes
//! wall-clock timing so that reruns with the same plan and seed produce
//! byte-identical files; timing goes to stderr.

use std::path::PathBuf;
use std::time::Instant;

use hetclutter_core::mc::{self, DetectorSpec, ExperimentPlan, McError};
use serde::Serialize;

use crate::{numerical, output, presets, usage, CliError, Ctx};

#[derive(clap::Args)]
pub struct CurvesArgs {
    /// Experiment plan JSON; takes precedence over --preset and the config
    /// file's plan
    #[arg(long, value_name = "PATH")]
    pub plan: Option<PathBuf>,
}

#[derive(Serialize)]
struct ConvergenceRow {
    iteration: usize,
    h0: f64,
    h1: f64,
}

fn map_plan_error(e: McError) -> CliError {
    match e {
        McError::Detector(msg) => numerical(msg),
        other => usage(other),
    }
}

/// Resolves the plan source: explicit file, config-file plan, then preset.
fn resolve_plan(ctx: &Ctx, args: &CurvesArgs) -> Result<ExperimentPlan, CliError> {
    if let Some(path) = &args.plan {
        return output::read_json(path);
    }
    if let Some(plan) = ctx.config_plan() {
        return Ok(plan.clone());
    }
    if let Some(name) = ctx.preset() {
        let mut plan = presets::plan(name).ok_or_else(|| {
            usage(format!(
                "unknown preset {name:?}; available: {}",
                presets::NAMES.join(", ")
            ))
        })?;
        // The config file's detector options apply to preset plans (explicit
        // plan files keep the options they state).
        if let Some(opts) = ctx.options_override() {
            for det in &mut plan.detectors {
                if let DetectorSpec::Proposed { options } = det {
                    *options = opts;
                }
            }
        }
        return Ok(plan);
    }
    Err(usage(
        "curves needs --plan PATH, --preset NAME, or a config file with a plan",
    ))
}

pub fn run(ctx: &Ctx, args: &CurvesArgs) -> Result<(), CliError> {
    let mut plan = resolve_plan(ctx, args)?;
    if let Some(seed) = ctx.seed_override() {
        plan.master_seed = seed;
    }
    if let Some(pfa) = ctx.pfa_override() {
        plan.pfa_target = pfa;
    }
    if let Some(trials) = ctx.trials_override() {
        plan.pd_trials = trials;
    }
    plan.validate().map_err(map_plan_error)?;

    let t0 = Instant::now();
    let report = mc::run_plan(&plan).map_err(map_plan_error)?;

    let dir = ctx.out_dir();
    let mut written = vec!["report.json".to_string()];
    output::atomic_write(&dir.join("report.json"), output::pretty_json(&report)?.as_bytes())?;

    let pd = mc::pd_rows(&report);
    if !pd.is_empty() {
        output::write_csv(&dir.join("pd_curve.csv"), &pd)?;
        written.push(format!("pd_curve.csv ({} rows)", pd.len()));
    }
    let pfa = mc::pfa_rows(&report);
    if !pfa.is_empty() {
        output::write_csv(&dir.join("pfa_sweep.csv"), &pfa)?;
        written.push(format!("pfa_sweep.csv ({} rows)", pfa.len()));
    }
    if let Some(profile) = &report.convergence {
        let rows: Vec<ConvergenceRow> = profile
            .mean_rel_delta
            .h0
            .iter()
            .zip(&profile.mean_rel_delta.h1)
            .enumerate()
            .map(|(t, (&h0, &h1))| ConvergenceRow {
                iteration: t + 1,
                h0,
                h1,
            })
            .collect();
        output::write_csv(&dir.join("convergence.csv"), &rows)?;
        written.push(format!("convergence.csv ({} rows)", rows.len()));
    }

    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    eprintln!(
        "wrote {} to {} in {:.1} s",
        written.join(", "),
        dir.display(),
        t0.elapsed().as_secs_f64()
    );

    let failed: Vec<&str> = report
        .detectors
        .iter()
        .filter(|d| d.error.is_some())
        .map(|d| d.label.as_str())
        .collect();
    if !failed.is_empty() {
        return Err(numerical(format!(
            "detector(s) failed: {} (details in report.json)",
            failed.join(", ")
        )));
    }
    Ok(())
}
