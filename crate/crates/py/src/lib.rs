//! Python bindings for the adaptive-detection library.
//!
//! The module mirrors the core surface with plain-Python types: complex
//! samples cross the boundary as `complex` objects, snapshot sets as lists of
//! lists (one inner list per secondary cell), and Monte Carlo plans/reports as
//! JSON strings so the full experiment harness stays scriptable without any
//! binary dependency beyond this extension.

use std::collections::BTreeMap;

use hetclutter_core::baselines::{CovEstimatorSpec, CovKind, FpInit};
use hetclutter_core::detector::{self, CyclicOptions};
use hetclutter_core::io::{self, IqCube};
use hetclutter_core::mc::{self, ExperimentPlan};
use hetclutter_core::rng::TrialKey;
use hetclutter_core::sim::{self, ClutterScenario, Hypothesis};
use hetclutter_core::{C64, CMatrix, CVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_cvector(x: Vec<C64>) -> PyResult<CVector> {
    if x.is_empty() {
        return Err(value_err("vector must not be empty"));
    }
    Ok(CVector::from_vec(x))
}

/// Columns are cells: `cols[j][i]` is pulse `i` of cell `j`.
fn to_cmatrix(cols: &[Vec<C64>]) -> PyResult<CMatrix> {
    let k = cols.len();
    if k == 0 {
        return Err(value_err("at least one secondary cell is required"));
    }
    let n = cols[0].len();
    if n == 0 {
        return Err(value_err("secondary cells must not be empty"));
    }
    if let Some(bad) = cols.iter().position(|c| c.len() != n) {
        return Err(value_err(format!(
            "secondary cell {bad} has {} samples, expected {n}",
            cols[bad].len()
        )));
    }
    Ok(CMatrix::from_fn(n, k, |i, j| cols[j][i]))
}

/// `(window_index, cell_under_test, secondary_cells)`.
type SnapshotTuple = (usize, Vec<C64>, Vec<Vec<C64>>);

fn vec_of(v: &CVector) -> Vec<C64> {
    v.iter().copied().collect()
}

fn cols_of(m: &CMatrix) -> Vec<Vec<C64>> {
    m.column_iter()
        .map(|c| c.iter().copied().collect())
        .collect()
}

fn parse_estimator(name: &str, iterations: usize) -> PyResult<CovEstimatorSpec> {
    let kind = match name {
        "scm" => CovKind::Scm,
        "nscm" => CovKind::Nscm,
        "recursive" => CovKind::Recursive,
        "persymmetric-recursive" => CovKind::PersymmetricRecursive,
        other => {
            return Err(value_err(format!(
                "unknown estimator {other:?}; expected \"scm\", \"nscm\", \
                 \"recursive\", or \"persymmetric-recursive\""
            )))
        }
    };
    Ok(CovEstimatorSpec {
        kind,
        iterations,
        init: FpInit::default(),
    })
}

/// Compound-Gaussian scenario description: geometry, speckle correlation,
/// texture shape, thermal-noise floor, and the target placed under `h1`.
#[pyclass(module = "hetclutter_py", frozen, from_py_object)]
#[derive(Clone)]
struct Scenario {
    inner: ClutterScenario,
}

#[pymethods]
impl Scenario {
    #[new]
    #[pyo3(signature = (n=8, k=16, rho=0.95, nu=0.5, sigma2=0.0, doppler=0.0, snr_db=15.0, hypothesis="h0"))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        n: usize,
        k: usize,
        rho: f64,
        nu: f64,
        sigma2: f64,
        doppler: f64,
        snr_db: f64,
        hypothesis: &str,
    ) -> PyResult<Self> {
        let hypothesis = match hypothesis {
            "h0" | "H0" => Hypothesis::H0,
            "h1" | "H1" => Hypothesis::H1,
            other => {
                return Err(value_err(format!(
                    "hypothesis must be \"h0\" or \"h1\", got {other:?}"
                )))
            }
        };
        let inner = ClutterScenario {
            n,
            k,
            rho,
            nu,
            sigma2,
            doppler,
            snr_db,
            hypothesis,
        };
        inner.validate().map_err(value_err)?;
        Ok(Self { inner })
    }

    /// The scenario every default is taken from: N=8, K=16, rho=0.95,
    /// nu=0.5, clutter-only, zero-Doppler steering, 15 dB target under h1.
    #[staticmethod]
    fn reference() -> Self {
        Self {
            inner: ClutterScenario::reference(),
        }
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }
    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }
    #[getter]
    fn rho(&self) -> f64 {
        self.inner.rho
    }
    #[getter]
    fn nu(&self) -> f64 {
        self.inner.nu
    }
    #[getter]
    fn sigma2(&self) -> f64 {
        self.inner.sigma2
    }
    #[getter]
    fn doppler(&self) -> f64 {
        self.inner.doppler
    }
    #[getter]
    fn snr_db(&self) -> f64 {
        self.inner.snr_db
    }
    #[getter]
    fn hypothesis(&self) -> &'static str {
        match self.inner.hypothesis {
            Hypothesis::H0 => "h0",
            Hypothesis::H1 => "h1",
        }
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!(
            "Scenario(n={}, k={}, rho={}, nu={}, sigma2={}, doppler={}, snr_db={}, hypothesis=\"{}\")",
            s.n, s.k, s.rho, s.nu, s.sigma2, s.doppler, s.snr_db, self.hypothesis()
        )
    }
}

/// Knobs for the cyclic recursion. `epsilon=0` runs the full iteration
/// budget; a positive value stops early once the relative log-likelihood
/// change per iteration drops below it.
#[pyclass(module = "hetclutter_py", frozen, from_py_object)]
#[derive(Clone, Default)]
struct Options {
    inner: CyclicOptions,
}

#[pymethods]
impl Options {
    #[new]
    #[pyo3(signature = (max_iters=20, epsilon=0.0, fast_path=true))]
    fn new(max_iters: usize, epsilon: f64, fast_path: bool) -> PyResult<Self> {
        if epsilon.is_nan() || epsilon < 0.0 {
            return Err(value_err(format!("epsilon must be >= 0, got {epsilon}")));
        }
        Ok(Self {
            inner: CyclicOptions {
                max_iters,
                epsilon,
                fast_path,
                ..CyclicOptions::default()
            },
        })
    }

    #[getter]
    fn max_iters(&self) -> usize {
        self.inner.max_iters
    }
    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon
    }
    #[getter]
    fn fast_path(&self) -> bool {
        self.inner.fast_path
    }

    fn __repr__(&self) -> String {
        format!(
            "Options(max_iters={}, epsilon={}, fast_path={})",
            self.inner.max_iters, self.inner.epsilon, self.inner.fast_path
        )
    }
}

/// One simulated trial: cell under test, secondary cells, steering vector,
/// and the generator's ground truth.
#[pyclass(module = "hetclutter_py", frozen, get_all)]
struct Dataset {
    /// Cell under test, length `n`.
    z: Vec<C64>,
    /// Secondary cells, one inner list per cell.
    secondaries: Vec<Vec<C64>>,
    /// Steering vector, length `n`.
    v: Vec<C64>,
    /// Target amplitude the generator injected (zero under h0).
    true_alpha: C64,
    /// True texture power of each secondary cell.
    true_gammas: Vec<f64>,
}

/// Everything one detection run reports.
#[pyclass(module = "hetclutter_py", frozen, get_all)]
struct Outcome {
    /// Log-domain detection statistic; compare against a log-domain threshold.
    log_statistic: f64,
    iterations_h0: usize,
    iterations_h1: usize,
    /// True when the relative-change stopping rule halted both recursions
    /// before the iteration budget.
    converged: bool,
    /// Final amplitude estimate from the h1 recursion.
    alpha: Option<C64>,
    /// Final per-cell power-level estimates under each hypothesis.
    gammas_h0: Vec<f64>,
    gammas_h1: Vec<f64>,
    /// Compressed log-likelihood after initialization (entry 0) and after
    /// each completed iteration; nondecreasing up to rounding.
    loglik_h0: Vec<f64>,
    loglik_h1: Vec<f64>,
}

/// Pulse-major IQ data cube (`sample(p, b)` is pulse `p`, range bin `b`).
#[pyclass(module = "hetclutter_py", frozen)]
struct Cube {
    inner: IqCube,
}

#[pymethods]
impl Cube {
    #[new]
    #[pyo3(signature = (pulses, range_bins, samples, metadata=None))]
    fn new(
        pulses: usize,
        range_bins: usize,
        samples: Vec<C64>,
        metadata: Option<BTreeMap<String, String>>,
    ) -> PyResult<Self> {
        let inner = IqCube::new(pulses, range_bins, samples, metadata.unwrap_or_default())
            .map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Reads a cube from the binary IQ format.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: io::load_iq(path).map_err(value_err)?,
        })
    }

    /// Writes the cube in the binary IQ format (atomically).
    fn save(&self, path: &str) -> PyResult<()> {
        io::save_iq(&self.inner, path).map_err(runtime_err)
    }

    #[getter]
    fn pulses(&self) -> usize {
        self.inner.pulses()
    }
    #[getter]
    fn range_bins(&self) -> usize {
        self.inner.range_bins()
    }
    #[getter]
    fn metadata(&self) -> BTreeMap<String, String> {
        self.inner.metadata.clone()
    }

    /// All samples in pulse-major order (`samples[p * range_bins + b]`).
    fn samples(&self) -> Vec<C64> {
        self.inner.samples().to_vec()
    }

    /// Splits the slow-time dimension into windows of `window` pulses with
    /// the given overlap, then pairs each window of the cell under test with
    /// the matching windows of the `k` nearest non-guard bins. Returns
    /// `(window_index, z, secondaries)` tuples ready for `detect` / `nmf`.
    #[pyo3(signature = (cut_bin, window, overlap, k, guard=0))]
    fn cut_snapshots(
        &self,
        cut_bin: usize,
        window: usize,
        overlap: usize,
        k: usize,
        guard: usize,
    ) -> PyResult<Vec<SnapshotTuple>> {
        let snapshots = io::window_cpi(&self.inner, window, overlap).map_err(value_err)?;
        let cells = io::build_cut_secondary(&snapshots, cut_bin, k, guard).map_err(value_err)?;
        Ok(cells
            .into_iter()
            .map(|c| (c.window_index, vec_of(&c.z), cols_of(&c.secondaries)))
            .collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Cube(pulses={}, range_bins={})",
            self.inner.pulses(),
            self.inner.range_bins()
        )
    }
}

/// Draws one dataset for the scenario. Bit-reproducible for a given
/// `(scenario, seed, context, trial)`; distinct trials are independent.
#[pyfunction]
#[pyo3(signature = (scenario, seed, trial=0, context=0))]
fn simulate(scenario: &Scenario, seed: u64, trial: u32, context: u16) -> PyResult<Dataset> {
    let ds = sim::gen_dataset(&scenario.inner, TrialKey::new(seed, context, trial))
        .map_err(value_err)?;
    Ok(Dataset {
        z: vec_of(&ds.z),
        secondaries: cols_of(&ds.secondaries),
        v: vec_of(&ds.v),
        true_alpha: ds.truth.alpha,
        true_gammas: ds.truth.gammas.clone(),
    })
}

/// Unit-modulus Doppler steering vector of length `n`.
#[pyfunction]
#[pyo3(signature = (n, doppler=0.0))]
fn steering_vector(n: usize, doppler: f64) -> PyResult<Vec<C64>> {
    if n == 0 {
        return Err(value_err("n must be at least 1"));
    }
    Ok(vec_of(&sim::steering_vector(n, doppler)))
}

/// Runs the proposed detector on one snapshot: cell under test `z`, the
/// secondary cells, and the steering vector `v`.
#[pyfunction]
#[pyo3(signature = (z, secondaries, v, options=None))]
fn detect(
    py: Python<'_>,
    z: Vec<C64>,
    secondaries: Vec<Vec<C64>>,
    v: Vec<C64>,
    options: Option<Options>,
) -> PyResult<Outcome> {
    let z = to_cvector(z)?;
    let s = to_cmatrix(&secondaries)?;
    let v = to_cvector(v)?;
    let opts = options.map(|o| o.inner).unwrap_or_default();
    let out = py
        .detach(|| detector::detect(&z, &s, &v, &opts))
        .map_err(value_err)?;
    Ok(Outcome {
        log_statistic: out.log_statistic,
        iterations_h0: out.iterations_used.h0,
        iterations_h1: out.iterations_used.h1,
        converged: out.converged,
        alpha: out.estimates.h1.alpha,
        gammas_h0: out.estimates.h0.gammas.clone(),
        gammas_h1: out.estimates.h1.gammas.clone(),
        loglik_h0: out.estimates.h0.loglik_trace.clone(),
        loglik_h1: out.estimates.h1.loglik_trace.clone(),
    })
}

/// Normalized matched filter statistic (in [0, 1]) with the covariance
/// estimated from the secondary cells by the named estimator.
#[pyfunction]
#[pyo3(signature = (z, secondaries, v, estimator="nscm", iterations=3))]
fn nmf(
    py: Python<'_>,
    z: Vec<C64>,
    secondaries: Vec<Vec<C64>>,
    v: Vec<C64>,
    estimator: &str,
    iterations: usize,
) -> PyResult<f64> {
    let spec = parse_estimator(estimator, iterations)?;
    let z = to_cvector(z)?;
    let s = to_cmatrix(&secondaries)?;
    let v = to_cvector(v)?;
    py.detach(|| {
        let rhat = spec.estimate(&s)?;
        hetclutter_core::baselines::nmf_statistic(&z, &v, &rhat)
    })
    .map_err(value_err)
}

/// Order-statistic threshold: the value exceeded by round(len * pfa) of the
/// given statistics (strict `>`).
#[pyfunction]
fn calibrate_threshold(statistics: Vec<f64>, pfa: f64) -> PyResult<f64> {
    mc::threshold_from_statistics(&statistics, pfa).map_err(value_err)
}

/// Wilson score interval for a binomial rate at critical value `z`.
#[pyfunction]
fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    mc::wilson_interval(successes, trials, z)
}

/// Runs a full Monte Carlo experiment plan. Takes the plan as a JSON string
/// (same schema as the CLI's `curves --plan` file) and returns the report as
/// a JSON string; the GIL is released while the experiment runs.
#[pyfunction]
fn run_plan_json(py: Python<'_>, plan_json: &str) -> PyResult<String> {
    let plan: ExperimentPlan = serde_json::from_str(plan_json).map_err(value_err)?;
    plan.validate().map_err(value_err)?;
    let report = py.detach(|| mc::run_plan(&plan)).map_err(runtime_err)?;
    serde_json::to_string_pretty(&report).map_err(runtime_err)
}

#[pymodule]
fn hetclutter_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scenario>()?;
    m.add_class::<Options>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Outcome>()?;
    m.add_class::<Cube>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(steering_vector, m)?)?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(nmf, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(wilson_interval, m)?)?;
    m.add_function(wrap_pyfunction!(run_plan_json, m)?)?;
    Ok(())
}
