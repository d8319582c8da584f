//! Adaptive radar detection in heterogeneous, clutter-dominated environments.
//!
//! This crate implements a coherent detection chain for scenarios where the
//! disturbance is compound-Gaussian clutter whose power level changes from
//! range cell to range cell, so classical sample-covariance detectors lose
//! their false-alarm regulation. The centerpiece is a generalized likelihood
//! ratio detector that treats every secondary cell as sharing one covariance
//! structure up to an unknown per-cell power level, and estimates all unknowns
//! by cyclic (coordinate-ascent) maximization of the joint likelihood.
//!
//! Module map:
//!
//! * [`linalg`] — dense Hermitian kernels: Cholesky factorization, log-determinants,
//!   quadratic forms, rank-one inverse updates, Householder alignment, and
//!   covariance whitening rotations.
//! * [`sim`] — compound-Gaussian (SIRP) clutter simulation: gamma-distributed
//!   texture, exponentially correlated speckle, steering vectors, and full
//!   primary/secondary dataset generation with reproducible seeding.
//! * [`detector`] — the cyclic GLRT detector: per-cell power estimation,
//!   target-amplitude estimation, likelihood bookkeeping, and the detection
//!   statistic, with both a naive and a rank-one-accelerated sweep.
//! * [`baselines`] — comparison detectors: sample covariance, normalized sample
//!   covariance, fixed-point and persymmetric covariance estimators, and the
//!   normalized matched filter statistic.
//! * [`mc`] — Monte Carlo harness: threshold calibration, detection-probability
//!   and false-alarm sweeps, convergence profiling, and experiment plans.
//! * [`io`] — IQ data container (`IQCUBE01`), CPI windowing, and selection of
//!   secondary range bins around a cell under test.

pub mod baselines;
pub mod detector;
pub mod io;
pub mod linalg;
pub mod mc;
pub mod rng;
pub mod sim;

pub use baselines::{nmf_statistic, CovEstimatorSpec, CovKind};
pub use detector::{detect, CyclicOptions, DetectionOutcome, InitMode};
pub use io::{load_iq, save_iq, window_cpi, IqCube};
pub use linalg::HermitianMatrix;
pub use mc::{run_plan, DetectorSpec, ExperimentPlan, McReport};
pub use sim::{gen_dataset, ClutterScenario, DataSet, Hypothesis};

/// Complex sample type used throughout the crate.
pub type C64 = num_complex::Complex<f64>;

/// Column vector of complex samples.
pub type CVector = nalgebra::DVector<C64>;

/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
