//! Monte Carlo experiment engine: threshold calibration at a target false
//! alarm rate, detection-probability curves over an SNR grid, false-alarm
//! sensitivity sweeps over mismatched correlation or texture-shape values,
//! and convergence profiling of the cyclic estimator.
//!
//! Determinism is the load-bearing property here. Every trial draws from its
//! own counter-keyed RNG substream ([`crate::rng::TrialKey`]), so results are
//! bit-identical regardless of thread count or scheduling; results are
//! aggregated in trial-index order. All detectors in a plan are evaluated on
//! the *same* per-trial datasets (common random numbers), which sharpens
//! paired comparisons between detectors.
//!
//! Probabilities are reported with Wilson score intervals (95% unless stated
//! otherwise), which stay inside `[0, 1]` and behave sanely at small counts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, CovEstimatorSpec, CovKind};
use crate::detector::{self, CyclicOptions, PerHypothesis};
use crate::rng::TrialKey;
use crate::sim::{self, ClutterScenario, DataSet, Hypothesis};

/// Two-sided 95% normal quantile used for Wilson intervals.
pub const WILSON_Z_95: f64 = 1.959963984540054;
/// Two-sided 99% normal quantile used for Wilson intervals.
pub const WILSON_Z_99: f64 = 2.5758293035489004;

/// RNG substream context for threshold calibration trials.
pub const CTX_CALIBRATION: u16 = 1;
/// RNG substream context for convergence profiling trials.
pub const CTX_CONVERGENCE: u16 = 2;
/// RNG substream context reserved for holdout revalidation samples.
pub const CTX_HOLDOUT: u16 = 3;
/// RNG substream context of the i-th SNR grid point is `CTX_PD_BASE + i`.
pub const CTX_PD_BASE: u16 = 0x1000;
/// RNG substream context of the i-th sweep value is `CTX_SWEEP_BASE + i`.
pub const CTX_SWEEP_BASE: u16 = 0x2000;

/// Largest per-axis grid length, so the context blocks above cannot collide.
const MAX_GRID_POINTS: usize = 0x0fff;

/// Errors from the Monte Carlo harness.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum McError {
    /// Too few calibration trials for the requested false-alarm rate: the
    /// order-statistic threshold needs `round(ntrials·pfa) ≥ 1` exceedances,
    /// and `ntrials` strictly above that count.
    #[error(
        "insufficient trials for pfa {pfa}: {got} trials give {exceedances} calibration exceedances"
    )]
    InsufficientTrials {
        got: usize,
        pfa: f64,
        exceedances: usize,
    },
    /// The experiment plan fails validation.
    #[error("invalid experiment plan: {0}")]
    InvalidPlan(String),
    /// The single detector under test failed.
    #[error("detector failed: {0}")]
    Detector(String),
}

/// A Bernoulli rate estimate with its Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub successes: u64,
    pub trials: u64,
    /// Point estimate `successes / trials`.
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl RateEstimate {
    /// Builds the estimate with a Wilson interval at normal quantile `z`.
    pub fn from_counts(successes: u64, trials: u64, z: f64) -> Self {
        let rate = if trials == 0 {
            0.0
        } else {
            successes as f64 / trials as f64
        };
        let (ci_low, ci_high) = wilson_interval(successes, trials, z);
        Self {
            successes,
            trials,
            rate,
            ci_low,
            ci_high,
        }
    }
}

/// Wilson score interval for a binomial proportion.
///
/// Always a subset of `[0, 1]` and always contains the point estimate.
/// `trials == 0` yields the vacuous interval `(0, 1)`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // The Wilson interval contains the point estimate by construction;
    // enforce that exactly against square-root rounding at p ∈ {0, 1}.
    ((center - half).max(0.0).min(p), (center + half).min(1.0).max(p))
}

/// A detector participating in an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DetectorSpec {
    /// The cyclic-estimation detector.
    Proposed {
        #[serde(default)]
        options: CyclicOptions,
    },
    /// Normalized matched filter over a covariance estimate.
    Nmf {
        #[serde(default)]
        estimator: CovEstimatorSpec,
    },
}

impl DetectorSpec {
    /// Stable human-readable label used in reports and CSV rows.
    pub fn label(&self) -> String {
        match self {
            DetectorSpec::Proposed { .. } => "proposed".into(),
            DetectorSpec::Nmf { estimator } => {
                let kind = match estimator.kind {
                    CovKind::Scm => "scm",
                    CovKind::Nscm => "nscm",
                    CovKind::Recursive => "recursive",
                    CovKind::PersymmetricRecursive => "persymmetric-recursive",
                };
                format!("nmf-{kind}")
            }
        }
    }

    /// Evaluates this detector's decision statistic on one dataset.
    ///
    /// The scales differ between detectors (log-likelihood-ratio scale for
    /// the proposed detector, `[0, 1]` for the normalized matched filter);
    /// thresholds are always calibrated per detector, so only the ordering
    /// within a detector matters.
    pub fn statistic(&self, ds: &DataSet) -> Result<f64, String> {
        match self {
            DetectorSpec::Proposed { options } => {
                detector::detect(&ds.z, &ds.secondaries, &ds.v, options)
                    .map(|o| o.log_statistic)
                    .map_err(|e| e.to_string())
            }
            DetectorSpec::Nmf { estimator } => estimator
                .estimate(&ds.secondaries)
                .and_then(|m| baselines::nmf_statistic(&ds.z, &ds.v, &m))
                .map_err(|e| e.to_string()),
        }
    }
}

/// Which scenario parameter a false-alarm sensitivity sweep varies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", content = "values", rename_all = "kebab-case")]
pub enum SweepAxis {
    /// Vary the speckle one-lag correlation coefficient.
    Rho(Vec<f64>),
    /// Vary the texture shape parameter.
    Nu(Vec<f64>),
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Rho(_) => "rho",
            SweepAxis::Nu(_) => "nu",
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            SweepAxis::Rho(v) | SweepAxis::Nu(v) => v,
        }
    }

    fn apply(&self, scenario: &ClutterScenario, value: f64) -> ClutterScenario {
        let mut sc = scenario.clone();
        match self {
            SweepAxis::Rho(_) => sc.rho = value,
            SweepAxis::Nu(_) => sc.nu = value,
        }
        sc
    }
}

/// Convergence-profiling request inside a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSpec {
    /// Trials to average over (at least 100).
    pub trials: usize,
    /// Iterations to profile.
    pub max_iters: usize,
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        Self {
            trials: 200,
            max_iters: 20,
        }
    }
}

/// A full experiment: calibration, optional Pd curve, optional Pfa
/// sensitivity sweep, optional convergence profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    /// Nominal scenario. Calibration and sweeps force the disturbance-only
    /// hypothesis; Pd estimation forces the signal-present hypothesis with
    /// the grid SNR.
    pub scenario: ClutterScenario,
    pub detectors: Vec<DetectorSpec>,
    pub pfa_target: f64,
    /// Calibration trials; `null` means `ceil(100 / pfa_target)`.
    pub calib_trials: Option<usize>,
    /// Trials per Pd point and per sweep point.
    pub pd_trials: usize,
    pub snr_grid_db: Vec<f64>,
    pub sweep: Option<SweepAxis>,
    pub convergence: Option<ConvergenceSpec>,
    pub master_seed: u64,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            scenario: ClutterScenario::reference(),
            detectors: Vec::new(),
            pfa_target: 1e-2,
            calib_trials: None,
            pd_trials: 1000,
            snr_grid_db: Vec::new(),
            sweep: None,
            convergence: None,
            master_seed: 0,
        }
    }
}

impl ExperimentPlan {
    /// Calibration trial count after applying the `100 / pfa_target` default.
    pub fn resolved_calib_trials(&self) -> usize {
        self.calib_trials
            .unwrap_or_else(|| (100.0 / self.pfa_target).ceil() as usize)
    }

    /// Checks the plan without running anything.
    pub fn validate(&self) -> Result<(), McError> {
        if !(self.pfa_target > 0.0 && self.pfa_target < 1.0) {
            return Err(McError::InvalidPlan(format!(
                "pfa_target must be in (0, 1), got {}",
                self.pfa_target
            )));
        }
        if self.detectors.is_empty() {
            return Err(McError::InvalidPlan("detector list is empty".into()));
        }
        self.scenario
            .validate()
            .map_err(|e| McError::InvalidPlan(e.to_string()))?;
        let calib = self.resolved_calib_trials();
        for (name, n) in [("calib_trials", calib), ("pd_trials", self.pd_trials)] {
            if n == 0 {
                return Err(McError::InvalidPlan(format!("{name} must be at least 1")));
            }
            if n > u32::MAX as usize {
                return Err(McError::InvalidPlan(format!("{name} too large: {n}")));
            }
        }
        let m = exceedance_count(calib, self.pfa_target);
        if m < 1 || m >= calib {
            return Err(McError::InsufficientTrials {
                got: calib,
                pfa: self.pfa_target,
                exceedances: m,
            });
        }
        if self.snr_grid_db.len() > MAX_GRID_POINTS {
            return Err(McError::InvalidPlan("snr_grid_db too long".into()));
        }
        if !self.snr_grid_db.iter().all(|x| x.is_finite()) {
            return Err(McError::InvalidPlan(
                "snr_grid_db values must be finite".into(),
            ));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values().is_empty() {
                return Err(McError::InvalidPlan("sweep value list is empty".into()));
            }
            if sweep.values().len() > MAX_GRID_POINTS {
                return Err(McError::InvalidPlan("sweep value list too long".into()));
            }
            for &v in sweep.values() {
                self.sweep
                    .as_ref()
                    .unwrap()
                    .apply(&self.scenario, v)
                    .validate()
                    .map_err(|e| {
                        McError::InvalidPlan(format!("sweep value {v} is invalid: {e}"))
                    })?;
            }
        }
        if let Some(c) = &self.convergence {
            if c.trials < 100 {
                return Err(McError::InvalidPlan(format!(
                    "convergence profiling needs at least 100 trials, got {}",
                    c.trials
                )));
            }
            if c.max_iters == 0 {
                return Err(McError::InvalidPlan(
                    "convergence max_iters must be at least 1".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One point of a detection-probability curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdPoint {
    pub snr_db: f64,
    pub pd: RateEstimate,
}

/// One point of a false-alarm sensitivity sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// Swept parameter name (`"rho"` or `"nu"`).
    pub axis: String,
    pub value: f64,
    pub pfa: RateEstimate,
}

/// Mean relative log-likelihood change per iteration, both estimation paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceProfile {
    /// Entry `t` is the average of `|L(t+1) − L(t)| / |L(t)|` over trials
    /// (iterations are 1-based; entry 0 describes the first iteration).
    pub mean_rel_delta: PerHypothesis<Vec<f64>>,
    pub trials: u64,
}

/// Per-detector results inside a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorReport {
    pub label: String,
    pub spec: DetectorSpec,
    /// Calibrated threshold; absent when the detector failed.
    pub threshold: Option<f64>,
    /// First error encountered, if the detector failed; other detectors are
    /// unaffected.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub pd_curve: Vec<PdPoint>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub pfa_sweep: Vec<SweepPoint>,
}

/// Wall-clock metadata, attached by callers after the run so that the
/// report produced by [`run_plan`] itself stays bit-deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingInfo {
    pub wall_seconds: f64,
    pub threads: usize,
}

/// Complete experiment output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    /// Echo of the plan that produced this report.
    pub plan: ExperimentPlan,
    pub detectors: Vec<DetectorReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub convergence: Option<ConvergenceProfile>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
    /// Not populated by [`run_plan`]; callers may stamp it afterwards.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timing: Option<TimingInfo>,
}

/// One row of the flat rate table exported alongside the JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub detector: String,
    pub axis: String,
    pub value: f64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub trials: u64,
}

/// Flattens every Pd point into `(detector, "snr_db", value, …)` rows.
pub fn pd_rows(report: &McReport) -> Vec<RateRow> {
    let mut rows = Vec::new();
    for det in &report.detectors {
        for p in &det.pd_curve {
            rows.push(RateRow {
                detector: det.label.clone(),
                axis: "snr_db".into(),
                value: p.snr_db,
                estimate: p.pd.rate,
                ci_low: p.pd.ci_low,
                ci_high: p.pd.ci_high,
                trials: p.pd.trials,
            });
        }
    }
    rows
}

/// Flattens every sweep point into `(detector, axis, value, …)` rows.
pub fn pfa_rows(report: &McReport) -> Vec<RateRow> {
    let mut rows = Vec::new();
    for det in &report.detectors {
        for p in &det.pfa_sweep {
            rows.push(RateRow {
                detector: det.label.clone(),
                axis: p.axis.clone(),
                value: p.value,
                estimate: p.pfa.rate,
                ci_low: p.pfa.ci_low,
                ci_high: p.pfa.ci_high,
                trials: p.pfa.trials,
            });
        }
    }
    rows
}

/// Number of calibration exceedances implied by the order-statistic rule.
fn exceedance_count(ntrials: usize, pfa: f64) -> usize {
    (ntrials as f64 * pfa).round() as usize
}

/// Order-statistic threshold from a sample of disturbance-only statistics.
///
/// With `m = round(n·pfa)`, the threshold is the `(m+1)`-th largest
/// statistic; the strict decision rule `statistic > threshold` then flags
/// exactly `m` of the calibration statistics (fewer under ties).
pub fn threshold_from_statistics(statistics: &[f64], pfa: f64) -> Result<f64, McError> {
    if !(pfa > 0.0 && pfa < 1.0) {
        return Err(McError::InvalidPlan(format!(
            "pfa must be in (0, 1), got {pfa}"
        )));
    }
    let n = statistics.len();
    let m = exceedance_count(n, pfa);
    if m < 1 || m >= n {
        return Err(McError::InsufficientTrials {
            got: n,
            pfa,
            exceedances: m,
        });
    }
    let mut sorted = statistics.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    Ok(sorted[m])
}

/// Evaluates every detector on the same per-trial datasets.
///
/// Returns one entry per detector: either the full statistic vector in trial
/// order, or the first (lowest trial index) error message. One detector's
/// failure never affects another's statistics.
fn eval_trials(
    scenario: &ClutterScenario,
    detectors: &[DetectorSpec],
    master_seed: u64,
    context: u16,
    ntrials: usize,
) -> Result<Vec<Result<Vec<f64>, String>>, McError> {
    scenario
        .validate()
        .map_err(|e| McError::InvalidPlan(e.to_string()))?;
    if ntrials > u32::MAX as usize {
        return Err(McError::InvalidPlan(format!("too many trials: {ntrials}")));
    }
    let per_trial: Vec<Vec<Result<f64, String>>> = (0..ntrials as u32)
        .into_par_iter()
        .map(|trial| {
            match sim::gen_dataset(scenario, TrialKey::new(master_seed, context, trial)) {
                Ok(ds) => detectors.iter().map(|d| d.statistic(&ds)).collect(),
                Err(e) => {
                    let msg = e.to_string();
                    detectors.iter().map(|_| Err(msg.clone())).collect()
                }
            }
        })
        .collect();
    Ok((0..detectors.len())
        .map(|d| {
            let mut stats = Vec::with_capacity(ntrials);
            for row in &per_trial {
                match &row[d] {
                    Ok(x) => stats.push(*x),
                    Err(e) => return Err(e.clone()),
                }
            }
            Ok(stats)
        })
        .collect())
}

/// Calibrates a detection threshold at the target false-alarm rate from
/// disturbance-only trials of the given scenario.
pub fn calibrate_threshold(
    detector: &DetectorSpec,
    scenario: &ClutterScenario,
    pfa: f64,
    ntrials: usize,
    master_seed: u64,
) -> Result<f64, McError> {
    if !(pfa > 0.0 && pfa < 1.0) {
        return Err(McError::InvalidPlan(format!(
            "pfa must be in (0, 1), got {pfa}"
        )));
    }
    let m = exceedance_count(ntrials, pfa);
    if m < 1 || m >= ntrials {
        return Err(McError::InsufficientTrials {
            got: ntrials,
            pfa,
            exceedances: m,
        });
    }
    let mut sc = scenario.clone();
    sc.hypothesis = Hypothesis::H0;
    let stats = eval_trials(&sc, std::slice::from_ref(detector), master_seed, CTX_CALIBRATION, ntrials)?
        .pop()
        .expect("one detector in, one result out")
        .map_err(McError::Detector)?;
    threshold_from_statistics(&stats, pfa)
}

/// Estimates detection probability at each SNR grid point by counting
/// threshold exceedances on signal-present trials.
pub fn estimate_pd(
    detector: &DetectorSpec,
    threshold: f64,
    scenario: &ClutterScenario,
    snr_grid_db: &[f64],
    ntrials: usize,
    master_seed: u64,
) -> Result<Vec<PdPoint>, McError> {
    if !threshold.is_finite() {
        return Err(McError::InvalidPlan(format!(
            "threshold must be finite, got {threshold}"
        )));
    }
    if snr_grid_db.len() > MAX_GRID_POINTS {
        return Err(McError::InvalidPlan("snr_grid_db too long".into()));
    }
    let mut out = Vec::with_capacity(snr_grid_db.len());
    for (i, &snr_db) in snr_grid_db.iter().enumerate() {
        let mut sc = scenario.clone();
        sc.hypothesis = Hypothesis::H1;
        sc.snr_db = snr_db;
        let context = CTX_PD_BASE + i as u16;
        let stats = eval_trials(&sc, std::slice::from_ref(detector), master_seed, context, ntrials)?
            .pop()
            .expect("one detector in, one result out")
            .map_err(McError::Detector)?;
        let successes = stats.iter().filter(|&&s| s > threshold).count() as u64;
        out.push(PdPoint {
            snr_db,
            pd: RateEstimate::from_counts(successes, ntrials as u64, WILSON_Z_95),
        });
    }
    Ok(out)
}

/// Measures the empirical false-alarm rate of a fixed threshold when one
/// scenario parameter departs from its calibration value.
pub fn pfa_sensitivity(
    detector: &DetectorSpec,
    threshold: f64,
    scenario: &ClutterScenario,
    axis: &SweepAxis,
    ntrials: usize,
    master_seed: u64,
) -> Result<Vec<SweepPoint>, McError> {
    if !threshold.is_finite() {
        return Err(McError::InvalidPlan(format!(
            "threshold must be finite, got {threshold}"
        )));
    }
    if axis.values().len() > MAX_GRID_POINTS {
        return Err(McError::InvalidPlan("sweep value list too long".into()));
    }
    let mut out = Vec::with_capacity(axis.values().len());
    for (i, &value) in axis.values().iter().enumerate() {
        let mut sc = axis.apply(scenario, value);
        sc.hypothesis = Hypothesis::H0;
        let context = CTX_SWEEP_BASE + i as u16;
        let stats = eval_trials(&sc, std::slice::from_ref(detector), master_seed, context, ntrials)?
            .pop()
            .expect("one detector in, one result out")
            .map_err(McError::Detector)?;
        let successes = stats.iter().filter(|&&s| s > threshold).count() as u64;
        out.push(SweepPoint {
            axis: axis.name().into(),
            value,
            pfa: RateEstimate::from_counts(successes, ntrials as u64, WILSON_Z_95),
        });
    }
    Ok(out)
}

/// Profiles how fast the cyclic estimator's log-likelihood settles, on
/// disturbance-only data: the per-iteration average of
/// `|L(t) − L(t−1)| / |L(t−1)|` over trials, for both estimation paths.
pub fn convergence_profile(
    scenario: &ClutterScenario,
    ntrials: usize,
    max_iters: usize,
    master_seed: u64,
) -> Result<ConvergenceProfile, McError> {
    if ntrials < 100 {
        return Err(McError::InvalidPlan(format!(
            "convergence profiling needs at least 100 trials, got {ntrials}"
        )));
    }
    if max_iters == 0 {
        return Err(McError::InvalidPlan(
            "convergence max_iters must be at least 1".into(),
        ));
    }
    let mut sc = scenario.clone();
    sc.hypothesis = Hypothesis::H0;
    sc.validate()
        .map_err(|e| McError::InvalidPlan(e.to_string()))?;
    let opts = CyclicOptions {
        max_iters,
        epsilon: 0.0,
        ..CyclicOptions::default()
    };
    let per_trial: Vec<Result<PerHypothesis<Vec<f64>>, String>> = (0..ntrials as u32)
        .into_par_iter()
        .map(|trial| {
            let ds = sim::gen_dataset(&sc, TrialKey::new(master_seed, CTX_CONVERGENCE, trial))
                .map_err(|e| e.to_string())?;
            let outcome = detector::detect(&ds.z, &ds.secondaries, &ds.v, &opts)
                .map_err(|e| e.to_string())?;
            let rel = |trace: &[f64]| -> Vec<f64> {
                trace
                    .windows(2)
                    .map(|w| (w[1] - w[0]).abs() / w[0].abs().max(f64::MIN_POSITIVE))
                    .collect()
            };
            Ok(PerHypothesis {
                h1: rel(&outcome.estimates.h1.loglik_trace),
                h0: rel(&outcome.estimates.h0.loglik_trace),
            })
        })
        .collect();
    let mut sum = PerHypothesis {
        h1: vec![0.0; max_iters],
        h0: vec![0.0; max_iters],
    };
    for row in per_trial {
        let row = row.map_err(McError::Detector)?;
        if row.h1.len() != max_iters || row.h0.len() != max_iters {
            return Err(McError::Detector(format!(
                "expected {} iterations in trace, got {}/{}",
                max_iters,
                row.h1.len(),
                row.h0.len()
            )));
        }
        for t in 0..max_iters {
            sum.h1[t] += row.h1[t];
            sum.h0[t] += row.h0[t];
        }
    }
    let n = ntrials as f64;
    Ok(ConvergenceProfile {
        mean_rel_delta: PerHypothesis {
            h1: sum.h1.into_iter().map(|x| x / n).collect(),
            h0: sum.h0.into_iter().map(|x| x / n).collect(),
        },
        trials: ntrials as u64,
    })
}

/// Assigns report labels, disambiguating duplicates with `-2`, `-3`, ….
fn unique_labels(detectors: &[DetectorSpec]) -> Vec<String> {
    let mut seen: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    detectors
        .iter()
        .map(|d| {
            let base = d.label();
            let count = seen.entry(base.clone()).or_insert(0);
            *count += 1;
            if *count == 1 {
                base
            } else {
                format!("{base}-{count}")
            }
        })
        .collect()
}

/// Runs a complete experiment plan: shared-sample calibration for every
/// detector, then the Pd curve, the sensitivity sweep, and the convergence
/// profile as requested.
///
/// Deterministic: the same plan always produces the same report, regardless
/// of thread count. A failing detector is reported in place and does not
/// stop the others.
pub fn run_plan(plan: &ExperimentPlan) -> Result<McReport, McError> {
    plan.validate()?;
    let calib_trials = plan.resolved_calib_trials();
    let mut warnings = Vec::new();
    let m = exceedance_count(calib_trials, plan.pfa_target);
    if m < 10 {
        warnings.push(format!(
            "only {m} calibration exceedances (calib_trials × pfa_target < 10); \
             the threshold estimate will be noisy"
        ));
    }

    let labels = unique_labels(&plan.detectors);
    let mut sc0 = plan.scenario.clone();
    sc0.hypothesis = Hypothesis::H0;
    let calib = eval_trials(
        &sc0,
        &plan.detectors,
        plan.master_seed,
        CTX_CALIBRATION,
        calib_trials,
    )?;

    let mut reports: Vec<DetectorReport> = plan
        .detectors
        .iter()
        .zip(labels)
        .zip(calib)
        .map(|((spec, label), stats)| {
            let (threshold, error) = match stats.and_then(|s| {
                threshold_from_statistics(&s, plan.pfa_target).map_err(|e| e.to_string())
            }) {
                Ok(t) => (Some(t), None),
                Err(e) => (None, Some(e)),
            };
            DetectorReport {
                label,
                spec: spec.clone(),
                threshold,
                error,
                pd_curve: Vec::new(),
                pfa_sweep: Vec::new(),
            }
        })
        .collect();

    let live: Vec<usize> = (0..reports.len())
        .filter(|&i| reports[i].threshold.is_some())
        .collect();
    let live_specs: Vec<DetectorSpec> = live.iter().map(|&i| plan.detectors[i].clone()).collect();

    if !live.is_empty() {
        for (si, &snr_db) in plan.snr_grid_db.iter().enumerate() {
            let mut sc = plan.scenario.clone();
            sc.hypothesis = Hypothesis::H1;
            sc.snr_db = snr_db;
            let results = eval_trials(
                &sc,
                &live_specs,
                plan.master_seed,
                CTX_PD_BASE + si as u16,
                plan.pd_trials,
            )?;
            for (&ri, stats) in live.iter().zip(results) {
                attach_rate(&mut reports[ri], stats, |report, est| {
                    report.pd_curve.push(PdPoint { snr_db, pd: est });
                });
            }
        }

        if let Some(axis) = &plan.sweep {
            for (vi, &value) in axis.values().iter().enumerate() {
                let mut sc = axis.apply(&plan.scenario, value);
                sc.hypothesis = Hypothesis::H0;
                let results = eval_trials(
                    &sc,
                    &live_specs,
                    plan.master_seed,
                    CTX_SWEEP_BASE + vi as u16,
                    plan.pd_trials,
                )?;
                for (&ri, stats) in live.iter().zip(results) {
                    let axis_name = axis.name();
                    attach_rate(&mut reports[ri], stats, |report, est| {
                        report.pfa_sweep.push(SweepPoint {
                            axis: axis_name.into(),
                            value,
                            pfa: est,
                        });
                    });
                }
            }
        }
    }

    let convergence = match &plan.convergence {
        Some(c) => Some(convergence_profile(
            &plan.scenario,
            c.trials,
            c.max_iters,
            plan.master_seed,
        )?),
        None => None,
    };

    Ok(McReport {
        plan: plan.clone(),
        detectors: reports,
        convergence,
        warnings,
        timing: None,
    })
}

/// Counts exceedances of the report's own threshold and appends the rate via
/// `push`; a per-detector evaluation error downgrades the detector instead
/// of failing the run.
fn attach_rate(
    report: &mut DetectorReport,
    stats: Result<Vec<f64>, String>,
    push: impl FnOnce(&mut DetectorReport, RateEstimate),
) {
    if report.error.is_some() {
        return;
    }
    let threshold = report
        .threshold
        .expect("attach_rate only runs on calibrated detectors");
    match stats {
        Ok(s) => {
            let successes = s.iter().filter(|&&x| x > threshold).count() as u64;
            let est = RateEstimate::from_counts(successes, s.len() as u64, WILSON_Z_95);
            push(report, est);
        }
        Err(e) => report.error = Some(e),
    }
}
