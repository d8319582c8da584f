//! Cyclic-estimation GLRT detector for heterogeneous clutter.
//!
//! The data model: the cell under test is `z = α·v + c₀` and the K secondary
//! cells are `z_k = c_k`, where every disturbance vector shares one unknown
//! covariance structure but each secondary carries its own unknown power
//! level: `c₀ ~ CN(0, R)`, `c_k ~ CN(0, γ_k·R)`. Maximizing the joint
//! likelihood over `R` in closed form compresses the problem down to `α` and
//! the power levels `γ_k`; those are estimated by cyclic coordinate ascent:
//!
//! * amplitude update: `α̂ = v†A⁻¹z / v†A⁻¹v` with `A = Σ_k z_k z_k†/γ̂_k`;
//! * power updates, cells swept in ascending index order: each `γ̂_h` is set
//!   to its exact per-coordinate maximizer `((K+1−N)/N)·z_h†B_h⁻¹z_h`, where
//!   `B_h` collects the target-residual outer product plus every *other*
//!   cell's scaled outer product (cells already visited in the sweep enter
//!   with their updated values);
//! * the same recursion runs under both hypotheses — under H0 the amplitude
//!   is pinned at zero — and the detection statistic compares the two
//!   compressed log-likelihoods at the final estimates.
//!
//! Every coordinate update increases the compressed likelihood, so the
//! per-iteration trace is nondecreasing up to rounding; the recursion stops
//! after a fixed iteration budget, or earlier when the relative likelihood
//! change drops below a configurable threshold.
//!
//! Two sweep implementations are provided and must agree: a naive one that
//! reassembles and refactorizes each `B_h` from scratch, and a fast one that
//! maintains the inverse of the full accumulator and reaches each `B_h` by
//! Sherman–Morrison rank-one downdates (O(N²) per cell instead of
//! O(K·N² + N³)), falling back to a full refactorization whenever a downdate
//! loses positive definiteness.

use serde::{Deserialize, Serialize};

use crate::linalg::{self, HermitianMatrix, LinalgError};
use crate::sim::Hypothesis;
use crate::{C64, CMatrix, CVector};

/// A coordinate step may lower the tracked log-likelihood by at most this
/// fraction of its magnitude before it counts as a monotonicity violation.
pub const MONOTONICITY_REL_TOL: f64 = 1e-9;

/// Errors from the cyclic detector.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DetectorError {
    /// Operand shapes are incompatible.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    /// Fewer secondary cells than the vector dimension: the compressed
    /// likelihood is unbounded and the accumulator is singular.
    #[error("need at least N = {n} secondary cells, got K = {k}")]
    InsufficientSecondaries { k: usize, n: usize },
    /// A vector that must be nonzero (steering, or the cell under test when
    /// it seeds the power initializer) was zero.
    #[error("vector must be nonzero and finite")]
    ZeroVector,
    /// The steering quadratic form `v†A⁻¹v` was not positive and finite.
    #[error("degenerate steering vector: v†A⁻¹v = {value:e}")]
    DegenerateSteering { value: f64 },
    /// Options are out of range.
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    /// The final statistic was not finite.
    #[error("detection statistic is not finite")]
    NonFiniteStatistic,
    /// A linear-algebra kernel failed.
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// How the per-cell power levels are initialized before the first sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// `γ̂_k = |z_k†z|²/‖z‖⁴`: the quadratic form of `z_k` through the
    /// Moore–Penrose pseudoinverse of `z·z†`. Scales with the power of each
    /// secondary cell, which is what preserves the detector's false-alarm
    /// invariance to per-cell power.
    #[default]
    MpPseudoinverse,
    /// `γ̂_k = (z_k†z_k)/(z†z)`: plain power ratio. Also per-cell-power
    /// equivariant.
    PowerRatio,
    /// `γ̂_k = 1` for every cell. *Not* power-equivariant; kept as a
    /// diagnostic/negative control.
    Unit,
}

/// Relative clamp bounds for the power levels, applied as multiples of the
/// data scale `s = (1/K)·Σ_k ‖z_k‖²/N` (the average per-sample secondary
/// power). Uniformly rescaling the data moves the window with it, so the
/// clamp never disturbs scale invariance; the power-level equivariance
/// theorems additionally assume no clamp engages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, f64)", into = "(f64, f64)")]
pub struct GammaClamp {
    pub lo: f64,
    pub hi: f64,
}

impl Default for GammaClamp {
    fn default() -> Self {
        Self { lo: 1e-12, hi: 1e12 }
    }
}

impl From<(f64, f64)> for GammaClamp {
    fn from((lo, hi): (f64, f64)) -> Self {
        Self { lo, hi }
    }
}

impl From<GammaClamp> for (f64, f64) {
    fn from(c: GammaClamp) -> Self {
        (c.lo, c.hi)
    }
}

/// Knobs for the cyclic recursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CyclicOptions {
    /// Iteration budget for each hypothesis.
    pub max_iters: usize,
    /// Early-stop threshold on the relative log-likelihood change per
    /// iteration; 0 disables early stopping and runs the full budget.
    pub epsilon: f64,
    /// Power-level initialization.
    pub init_mode: InitMode,
    /// Relative clamp bounds for the power levels.
    pub gamma_clamp: GammaClamp,
    /// Use the Sherman–Morrison sweep (with refactorization fallback) instead
    /// of the naive full-refactorization sweep.
    pub fast_path: bool,
}

impl Default for CyclicOptions {
    fn default() -> Self {
        Self {
            max_iters: 20,
            epsilon: 0.0,
            init_mode: InitMode::default(),
            gamma_clamp: GammaClamp::default(),
            fast_path: true,
        }
    }
}

impl CyclicOptions {
    /// Checks option ranges; returns a message naming the offending field.
    pub fn validate(&self) -> Result<(), DetectorError> {
        if self.max_iters == 0 {
            return Err(DetectorError::InvalidOptions(
                "max_iters must be at least 1".into(),
            ));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(DetectorError::InvalidOptions(format!(
                "epsilon must be nonnegative and finite, got {}",
                self.epsilon
            )));
        }
        let GammaClamp { lo, hi } = self.gamma_clamp;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(DetectorError::InvalidOptions(format!(
                "gamma_clamp bounds must satisfy 0 < lo <= hi < inf, got ({lo}, {hi})"
            )));
        }
        Ok(())
    }
}

/// Final state of one hypothesis' recursion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleState {
    /// Final amplitude estimate; present only under H1.
    pub alpha: Option<C64>,
    /// Final power-level estimates, one per secondary cell.
    pub gammas: Vec<f64>,
    /// Inverse of the final secondary accumulator `Σ_k z_k z_k†/γ̂_k`
    /// (H1 recursion only).
    pub a_inv: Option<HermitianMatrix>,
    /// Compressed log-likelihood after initialization (entry 0) and after
    /// each completed iteration; nondecreasing up to rounding.
    pub loglik_trace: Vec<f64>,
    /// Iterations actually executed.
    pub iterations: usize,
    /// Whether the relative-change stopping rule fired before the budget.
    pub stopped_early: bool,
    /// Number of power updates that hit a clamp bound.
    pub clamp_events: u32,
    /// Number of full refactorizations the fast path fell back to.
    pub refactorizations: u32,
    /// Coordinate steps that lowered the likelihood beyond
    /// [`MONOTONICITY_REL_TOL`]; expected to be zero.
    pub monotonicity_violations: u32,
}

impl CycleState {
    /// Relative log-likelihood change over the last completed iteration.
    pub fn delta_loglik_final(&self) -> f64 {
        let t = self.loglik_trace.len();
        if t < 2 {
            return f64::NAN;
        }
        let prev = self.loglik_trace[t - 2];
        (self.loglik_trace[t - 1] - prev).abs() / prev.abs().max(f64::MIN_POSITIVE)
    }
}

/// Value pair indexed by hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerHypothesis<T> {
    pub h1: T,
    pub h0: T,
}

/// Everything `detect` reports for one cell under test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionOutcome {
    /// Log-domain detection statistic; compare against a log-domain threshold.
    pub log_statistic: f64,
    /// Iterations executed per hypothesis.
    pub iterations_used: PerHypothesis<usize>,
    /// Relative log-likelihood change over each recursion's last iteration.
    pub delta_loglik_final: PerHypothesis<f64>,
    /// True when the relative-change stopping rule halted both recursions
    /// before the iteration budget (always false when `epsilon` is 0).
    pub converged: bool,
    /// Final estimator state per hypothesis, including the likelihood traces.
    pub estimates: PerHypothesis<CycleState>,
}

/// The clamp window `[lo·s, hi·s]`, `s = (1/K)·Σ_k ‖z_k‖²/N`.
///
/// Errors with [`DetectorError::ZeroVector`] if the secondary set carries no
/// energy at all — every power level would then be pinned to zero.
fn clamp_window(
    secondaries: &CMatrix,
    clamp: GammaClamp,
) -> Result<(f64, f64), DetectorError> {
    let k = secondaries.ncols().max(1) as f64;
    let n = secondaries.nrows().max(1) as f64;
    let s = secondaries.norm_squared() / (k * n);
    if s > 0.0 && s.is_finite() {
        Ok((clamp.lo * s, clamp.hi * s))
    } else {
        Err(DetectorError::ZeroVector)
    }
}

/// Initial power levels for the secondary cells.
///
/// Returns the per-cell estimates together with the number of cells that hit
/// a clamp bound. The clamp window is `[clamp.lo·s, clamp.hi·s]` with
/// `s = (1/K)·Σ_k ‖z_k‖²/N` the average per-sample secondary power, so
/// uniformly rescaling the data moves the window with it.
pub fn init_gammas(
    z: &CVector,
    secondaries: &CMatrix,
    mode: InitMode,
    clamp: GammaClamp,
) -> Result<(Vec<f64>, u32), DetectorError> {
    let n = z.len();
    let k = secondaries.ncols();
    if secondaries.nrows() != n {
        return Err(DetectorError::DimensionMismatch {
            expected: n,
            got: secondaries.nrows(),
        });
    }
    if k == 0 {
        return Err(DetectorError::InsufficientSecondaries { k, n });
    }
    let (lo, hi) = clamp_window(secondaries, clamp)?;
    let znorm2 = z.norm_squared();
    let mut clamp_events = 0u32;
    let mut gammas = Vec::with_capacity(k);
    for idx in 0..k {
        let col = secondaries.column(idx);
        let raw = match mode {
            InitMode::MpPseudoinverse => {
                if znorm2 == 0.0 || !znorm2.is_finite() {
                    return Err(DetectorError::ZeroVector);
                }
                // z_k†(z·z†)⁺z_k = |z_k†z|²/‖z‖⁴
                let inner: C64 = col.iter().zip(z.iter()).map(|(a, b)| a.conj() * b).sum();
                inner.norm_sqr() / (znorm2 * znorm2)
            }
            InitMode::PowerRatio => {
                if znorm2 == 0.0 || !znorm2.is_finite() {
                    return Err(DetectorError::ZeroVector);
                }
                col.norm_squared() / znorm2
            }
            InitMode::Unit => 1.0,
        };
        let clamped = raw.clamp(lo, hi);
        if clamped != raw {
            clamp_events += 1;
        }
        gammas.push(clamped);
    }
    Ok((gammas, clamp_events))
}

/// Amplitude update: `α̂ = v†A⁻¹z / v†A⁻¹v`, where `A_inv` is the inverse of
/// the secondary accumulator `Σ_k z_k z_k†/γ̂_k`.
pub fn estimate_alpha(
    z: &CVector,
    v: &CVector,
    a_inv: &HermitianMatrix,
) -> Result<C64, DetectorError> {
    if z.len() != a_inv.n() || v.len() != a_inv.n() {
        return Err(DetectorError::DimensionMismatch {
            expected: a_inv.n(),
            got: if z.len() != a_inv.n() { z.len() } else { v.len() },
        });
    }
    let w = a_inv.entries() * v;
    alpha_from_products(w.dotc(z), v.dotc(&w).re)
}

fn alpha_from_products(num: C64, den: f64) -> Result<C64, DetectorError> {
    if !(den > 0.0 && den.is_finite()) {
        return Err(DetectorError::DegenerateSteering { value: den });
    }
    Ok(num / den)
}

/// Per-coordinate power update: the exact maximizer of the compressed
/// likelihood in `γ_h` with everything else held fixed,
/// `((K+1−N)/N)·z_h†B_h⁻¹z_h`, clamped to `bounds`. Returns the new value and
/// whether a clamp engaged. `bh_inv` is the inverse of `B_h` (the full
/// accumulator with cell `h` removed).
pub fn gamma_coordinate_update(
    zh: &CVector,
    bh_inv: &HermitianMatrix,
    n: usize,
    k: usize,
    bounds: (f64, f64),
) -> Result<(f64, bool), DetectorError> {
    if zh.len() != bh_inv.n() {
        return Err(DetectorError::DimensionMismatch {
            expected: bh_inv.n(),
            got: zh.len(),
        });
    }
    if k < n {
        return Err(DetectorError::InsufficientSecondaries { k, n });
    }
    let q = zh.dotc(&(bh_inv.entries() * zh)).re.max(0.0);
    Ok(apply_gamma_update(q, n, k, bounds))
}

fn apply_gamma_update(q: f64, n: usize, k: usize, (lo, hi): (f64, f64)) -> (f64, bool) {
    let raw = ((k + 1 - n) as f64 / n as f64) * q;
    let clamped = raw.clamp(lo, hi);
    (clamped, clamped != raw)
}

/// Compressed log-likelihood of the data at the given amplitude and power
/// levels (the covariance structure is already maximized out):
///
/// `N(K+1)·ln((K+1)/(e·π)) − N·Σ_k ln γ_k − (K+1)·ln det[(z−αv)(z−αv)† + Σ_k z_k z_k†/γ_k]`
///
/// with `α` forced to zero under H0.
pub fn partially_compressed_loglik(
    hypothesis: Hypothesis,
    z: &CVector,
    secondaries: &CMatrix,
    v: &CVector,
    alpha: C64,
    gammas: &[f64],
) -> Result<f64, DetectorError> {
    let n = z.len();
    let k = secondaries.ncols();
    if secondaries.nrows() != n || v.len() != n {
        return Err(DetectorError::DimensionMismatch {
            expected: n,
            got: if secondaries.nrows() != n {
                secondaries.nrows()
            } else {
                v.len()
            },
        });
    }
    if gammas.len() != k {
        return Err(DetectorError::DimensionMismatch {
            expected: k,
            got: gammas.len(),
        });
    }
    if gammas.iter().any(|&g| !(g > 0.0 && g.is_finite())) {
        return Err(DetectorError::InvalidOptions(
            "power levels must be positive and finite".into(),
        ));
    }
    let target = match hypothesis {
        Hypothesis::H0 => z.clone(),
        Hypothesis::H1 => z - v * alpha,
    };
    let m = assemble_accumulator(&target, secondaries, gammas);
    let logdet = HermitianMatrix::from_entries_unchecked(m).logdet()?;
    Ok(loglik_value(n, k, gammas, logdet))
}

/// Runs the cyclic recursion for one hypothesis and returns its final state.
pub fn run_hypothesis(
    hypothesis: Hypothesis,
    z: &CVector,
    secondaries: &CMatrix,
    v: &CVector,
    opts: &CyclicOptions,
) -> Result<CycleState, DetectorError> {
    validate_problem(z, secondaries, v, opts)?;
    let mut engine = Engine::new(hypothesis, z, secondaries, v, opts)?;
    engine.run()?;
    Ok(engine.into_state())
}

/// Full detection: runs both hypotheses and evaluates the log-domain GLRT
/// statistic at the final estimates,
///
/// `(N/(K+1))·(Σ ln γ̂⁰_k − Σ ln γ̂¹_k) + ln det M₀ − ln det M₁`
///
/// with `M₀ = z z† + Σ z_k z_k†/γ̂⁰_k` and
/// `M₁ = (z−α̂v)(z−α̂v)† + Σ z_k z_k†/γ̂¹_k`.
pub fn detect(
    z: &CVector,
    secondaries: &CMatrix,
    v: &CVector,
    opts: &CyclicOptions,
) -> Result<DetectionOutcome, DetectorError> {
    validate_problem(z, secondaries, v, opts)?;
    let n = z.len();
    let k = secondaries.ncols();

    let h1 = run_hypothesis(Hypothesis::H1, z, secondaries, v, opts)?;
    let h0 = run_hypothesis(Hypothesis::H0, z, secondaries, v, opts)?;

    let alpha = h1.alpha.expect("H1 recursion always produces an amplitude");
    let residual = z - v * alpha;
    let m1 = HermitianMatrix::from_entries_unchecked(assemble_accumulator(
        &residual,
        secondaries,
        &h1.gammas,
    ));
    let m0 =
        HermitianMatrix::from_entries_unchecked(assemble_accumulator(z, secondaries, &h0.gammas));

    let gamma_term: f64 = h0
        .gammas
        .iter()
        .zip(h1.gammas.iter())
        .map(|(g0, g1)| g0.ln() - g1.ln())
        .sum();
    let log_statistic =
        (n as f64 / (k + 1) as f64) * gamma_term + m0.logdet()? - m1.logdet()?;
    if !log_statistic.is_finite() {
        return Err(DetectorError::NonFiniteStatistic);
    }

    let converged = opts.epsilon > 0.0 && h1.stopped_early && h0.stopped_early;
    Ok(DetectionOutcome {
        log_statistic,
        iterations_used: PerHypothesis {
            h1: h1.iterations,
            h0: h0.iterations,
        },
        delta_loglik_final: PerHypothesis {
            h1: h1.delta_loglik_final(),
            h0: h0.delta_loglik_final(),
        },
        converged,
        estimates: PerHypothesis { h1, h0 },
    })
}

fn validate_problem(
    z: &CVector,
    secondaries: &CMatrix,
    v: &CVector,
    opts: &CyclicOptions,
) -> Result<(), DetectorError> {
    opts.validate()?;
    let n = z.len();
    if n == 0 {
        return Err(DetectorError::ZeroVector);
    }
    if secondaries.nrows() != n {
        return Err(DetectorError::DimensionMismatch {
            expected: n,
            got: secondaries.nrows(),
        });
    }
    if v.len() != n {
        return Err(DetectorError::DimensionMismatch {
            expected: n,
            got: v.len(),
        });
    }
    let k = secondaries.ncols();
    if k < n {
        return Err(DetectorError::InsufficientSecondaries { k, n });
    }
    if v.norm_squared() == 0.0 || !v.norm_squared().is_finite() {
        return Err(DetectorError::ZeroVector);
    }
    Ok(())
}

/// `target·target† + Σ_k z_k z_k†/γ_k`, assembled densely (exactly Hermitian).
fn assemble_accumulator(target: &CVector, secondaries: &CMatrix, gammas: &[f64]) -> CMatrix {
    let n = target.len();
    let mut m = CMatrix::zeros(n, n);
    linalg::accumulate_outer_lower(&mut m, target, 1.0);
    for (idx, &g) in gammas.iter().enumerate() {
        linalg::accumulate_outer_lower(&mut m, &secondaries.column(idx), 1.0 / g);
    }
    linalg::mirror_lower(&mut m);
    m
}


/// Likelihood value from its three ingredients.
fn loglik_value(n: usize, k: usize, gammas: &[f64], logdet: f64) -> f64 {
    let nf = n as f64;
    let kp1 = (k + 1) as f64;
    let constant = nf * kp1 * (kp1 / (std::f64::consts::E * std::f64::consts::PI)).ln();
    let gamma_sum: f64 = gammas.iter().map(|g| g.ln()).sum();
    constant - nf * gamma_sum - kp1 * logdet
}

/// Shared state of one hypothesis' recursion.
struct Engine<'a> {
    hypothesis: Hypothesis,
    z: &'a CVector,
    secondaries: &'a CMatrix,
    v: &'a CVector,
    opts: &'a CyclicOptions,
    n: usize,
    k: usize,
    bounds: (f64, f64),
    gammas: Vec<f64>,
    alpha: C64,
    /// Inverse of `S = target·target† + Σ z_k z_k†/γ_k` (fast path).
    sinv: CMatrix,
    /// `ln det S`, tracked alongside `sinv`.
    logdet_s: f64,
    /// Running log-likelihood (kept in sync with `sinv`/`gammas`).
    loglik: f64,
    trace: Vec<f64>,
    scratch: CVector,
    iterations: usize,
    stopped_early: bool,
    clamp_events: u32,
    refactorizations: u32,
    monotonicity_violations: u32,
}

impl<'a> Engine<'a> {
    fn new(
        hypothesis: Hypothesis,
        z: &'a CVector,
        secondaries: &'a CMatrix,
        v: &'a CVector,
        opts: &'a CyclicOptions,
    ) -> Result<Self, DetectorError> {
        let n = z.len();
        let k = secondaries.ncols();
        let bounds = clamp_window(secondaries, opts.gamma_clamp)?;
        let (gammas, clamp_events) = init_gammas(z, secondaries, opts.init_mode, opts.gamma_clamp)?;
        Ok(Self {
            hypothesis,
            z,
            secondaries,
            v,
            opts,
            n,
            k,
            bounds,
            gammas,
            alpha: C64::new(0.0, 0.0),
            sinv: CMatrix::zeros(n, n),
            logdet_s: 0.0,
            loglik: 0.0,
            trace: Vec::with_capacity(opts.max_iters + 1),
            scratch: CVector::zeros(n),
            iterations: 0,
            stopped_early: false,
            clamp_events,
            refactorizations: 0,
            monotonicity_violations: 0,
        })
    }

    fn target(&self) -> CVector {
        match self.hypothesis {
            Hypothesis::H0 => self.z.clone(),
            Hypothesis::H1 => self.z - self.v * self.alpha,
        }
    }

    /// Rebuilds `sinv` and `logdet_s` from scratch at the current estimates.
    fn refactorize(&mut self) -> Result<(), DetectorError> {
        let target = self.target();
        let m = HermitianMatrix::from_entries_unchecked(assemble_accumulator(
            &target,
            self.secondaries,
            &self.gammas,
        ));
        self.logdet_s = m.logdet()?;
        self.sinv = m.inverse()?.into_entries();
        Ok(())
    }

    fn record_step(&mut self, delta: f64) {
        if delta < -MONOTONICITY_REL_TOL * self.loglik.abs().max(1.0) {
            self.monotonicity_violations += 1;
        }
        self.loglik += delta;
    }

    fn run(&mut self) -> Result<(), DetectorError> {
        // Initial accumulator at α = 0 under both hypotheses.
        self.alpha = C64::new(0.0, 0.0);
        self.refactorize()?;
        self.loglik = loglik_value(self.n, self.k, &self.gammas, self.logdet_s);
        self.trace.push(self.loglik);

        for iter in 1..=self.opts.max_iters {
            if self.hypothesis == Hypothesis::H1 {
                self.alpha_step()?;
            }
            if self.opts.fast_path {
                self.sweep_fast()?;
            } else {
                self.sweep_naive()?;
            }
            self.iterations = iter;
            // Authoritative per-iteration value from the tracked log-det.
            let l = loglik_value(self.n, self.k, &self.gammas, self.logdet_s);
            self.loglik = l;
            let prev = *self.trace.last().expect("trace has the initial entry");
            self.trace.push(l);
            if self.opts.epsilon > 0.0 {
                let delta = (l - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
                if delta < self.opts.epsilon {
                    self.stopped_early = true;
                    break;
                }
            }
        }
        Ok(())
    }

    /// One amplitude update (H1 only): removes the current target term from
    /// `S`, re-estimates α on the bare accumulator, and adds the new target
    /// residual back.
    fn alpha_step(&mut self) -> Result<(), DetectorError> {
        let target_old = self.target();
        // q_old = r_old†A⁻¹r_old, needed for the likelihood change.
        let q_old = match linalg::sm_update_inv_in_place(
            &mut self.sinv,
            &target_old,
            -1.0,
            &mut self.scratch,
        ) {
            Ok(denom) => {
                self.logdet_s += denom.ln();
                (1.0 - denom) / denom
            }
            Err(LinalgError::DowndateSingular { .. }) => {
                self.refactorizations += 1;
                let m = HermitianMatrix::from_entries_unchecked(assemble_bare(
                    self.secondaries,
                    &self.gammas,
                ));
                self.logdet_s = m.logdet()?;
                self.sinv = m.inverse()?.into_entries();
                let u = &self.sinv * &target_old;
                target_old.dotc(&u).re
            }
            Err(e) => return Err(e.into()),
        };

        // α̂ from the bare accumulator inverse.
        let w = &self.sinv * self.v;
        let num = w.dotc(self.z);
        let den = self.v.dotc(&w).re;
        self.alpha = alpha_from_products(num, den)?;

        let target_new = self.z - self.v * self.alpha;
        let denom_up =
            linalg::sm_update_inv_in_place(&mut self.sinv, &target_new, 1.0, &mut self.scratch)?;
        self.logdet_s += denom_up.ln();
        let kp1 = (self.k + 1) as f64;
        // denom_up = 1 + q_new; the step's likelihood change is
        // −(K+1)·[ln(1+q_new) − ln(1+q_old)].
        self.record_step(-kp1 * (denom_up.ln() - (1.0 + q_old).ln()));
        Ok(())
    }

    /// Sherman–Morrison sweep: each cell is removed from the maintained
    /// inverse, its power re-estimated, and added back.
    fn sweep_fast(&mut self) -> Result<(), DetectorError> {
        let nf = self.n as f64;
        let kp1 = (self.k + 1) as f64;
        for h in 0..self.k {
            let zh: CVector = self.secondaries.column(h).into_owned();
            let g_old = self.gammas[h];
            let q = match linalg::sm_update_inv_in_place(
                &mut self.sinv,
                &zh,
                -1.0 / g_old,
                &mut self.scratch,
            ) {
                Ok(denom) => {
                    self.logdet_s += denom.ln();
                    // q = z_h†B_h⁻¹z_h from the downdate denominator.
                    (g_old * (1.0 - denom) / denom).max(0.0)
                }
                Err(LinalgError::DowndateSingular { .. }) => {
                    self.refactorizations += 1;
                    let target = self.target();
                    let m = HermitianMatrix::from_entries_unchecked(assemble_without(
                        &target,
                        self.secondaries,
                        &self.gammas,
                        h,
                    ));
                    self.logdet_s = m.logdet()?;
                    let q = m.inv_quadform(&zh)?;
                    self.sinv = m.inverse()?.into_entries();
                    q
                }
                Err(e) => return Err(e.into()),
            };
            let (g_new, clamped) = apply_gamma_update(q, self.n, self.k, self.bounds);
            if clamped {
                self.clamp_events += 1;
            }
            self.gammas[h] = g_new;
            let denom_up =
                linalg::sm_update_inv_in_place(&mut self.sinv, &zh, 1.0 / g_new, &mut self.scratch)?;
            self.logdet_s += denom_up.ln();
            // ΔL = −N·ln(γ_new/γ_old) − (K+1)·[ln(1+q/γ_new) − ln(1+q/γ_old)]
            self.record_step(
                -nf * (g_new / g_old).ln() - kp1 * (denom_up.ln() - (1.0 + q / g_old).ln()),
            );
        }
        Ok(())
    }

    /// Naive sweep: reassembles and refactorizes each `B_h` from scratch.
    fn sweep_naive(&mut self) -> Result<(), DetectorError> {
        let nf = self.n as f64;
        let kp1 = (self.k + 1) as f64;
        let target = self.target();
        for h in 0..self.k {
            let zh: CVector = self.secondaries.column(h).into_owned();
            let g_old = self.gammas[h];
            let bh = HermitianMatrix::from_entries_unchecked(assemble_without(
                &target,
                self.secondaries,
                &self.gammas,
                h,
            ));
            let q = bh.inv_quadform(&zh)?;
            let (g_new, clamped) = apply_gamma_update(q, self.n, self.k, self.bounds);
            if clamped {
                self.clamp_events += 1;
            }
            self.gammas[h] = g_new;
            self.record_step(
                -nf * (g_new / g_old).ln()
                    - kp1 * ((1.0 + q / g_new).ln() - (1.0 + q / g_old).ln()),
            );
        }
        // Refresh the tracked inverse and log-det at the swept powers.
        self.refactorize()
    }

    fn into_state(mut self) -> CycleState {
        let (alpha, a_inv) = match self.hypothesis {
            Hypothesis::H0 => (None, None),
            Hypothesis::H1 => {
                // Final bare-accumulator inverse for downstream consumers.
                let a_inv = HermitianMatrix::from_entries_unchecked(assemble_bare(
                    self.secondaries,
                    &self.gammas,
                ))
                .inverse()
                .ok();
                (Some(self.alpha), a_inv)
            }
        };
        CycleState {
            alpha,
            gammas: std::mem::take(&mut self.gammas),
            a_inv,
            loglik_trace: std::mem::take(&mut self.trace),
            iterations: self.iterations,
            stopped_early: self.stopped_early,
            clamp_events: self.clamp_events,
            refactorizations: self.refactorizations,
            monotonicity_violations: self.monotonicity_violations,
        }
    }
}

/// `Σ_k z_k z_k†/γ_k` (no target term).
fn assemble_bare(secondaries: &CMatrix, gammas: &[f64]) -> CMatrix {
    let n = secondaries.nrows();
    let mut m = CMatrix::zeros(n, n);
    for (idx, &g) in gammas.iter().enumerate() {
        linalg::accumulate_outer_lower(&mut m, &secondaries.column(idx), 1.0 / g);
    }
    linalg::mirror_lower(&mut m);
    m
}

/// `target·target† + Σ_{k≠h} z_k z_k†/γ_k`.
fn assemble_without(
    target: &CVector,
    secondaries: &CMatrix,
    gammas: &[f64],
    h: usize,
) -> CMatrix {
    let n = target.len();
    let mut m = CMatrix::zeros(n, n);
    linalg::accumulate_outer_lower(&mut m, target, 1.0);
    for (idx, &g) in gammas.iter().enumerate() {
        if idx != h {
            linalg::accumulate_outer_lower(&mut m, &secondaries.column(idx), 1.0 / g);
        }
    }
    linalg::mirror_lower(&mut m);
    m
}
