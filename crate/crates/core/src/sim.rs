//! Compound-Gaussian (SIRP) clutter simulation.
//!
//! Generates the primary/secondary data a coherent radar detector consumes:
//! a cell under test `z` and `K` secondary cells `z_k`, each of the form
//! `τ·L·g + σ·n` where `L·L†` is a shared exponentially-correlated speckle
//! covariance, `τ` is a per-cell texture amplitude with gamma-distributed
//! power (`E[τ²] = 1`), and `n` is white thermal noise. Under the target
//! hypothesis the cell under test carries an additional `α·v` component whose
//! amplitude is set from a requested signal-to-noise ratio.
//!
//! Sampling is addressed by [`TrialKey`](crate::rng::TrialKey): snapshot slot
//! 0 is the cell under test and slots `1..=K` are the secondary cells, so
//! datasets are bit-reproducible for a given `(scenario, key)` and unchanged
//! cells keep their values when `K` grows.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::{HermitianMatrix, LinalgError};
use crate::rng::TrialKey;
use crate::{C64, CMatrix, CVector};

/// Errors from scenario validation and dataset generation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    /// Speckle one-lag correlation outside `[0, 1)`.
    #[error("one-lag correlation must satisfy 0 <= rho < 1, got {rho}")]
    InvalidRho { rho: f64 },
    /// A scenario field is out of range.
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    /// A linear-algebra kernel failed while building the dataset.
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Which hypothesis the cell under test is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    /// Disturbance only.
    H0,
    /// Disturbance plus target component `α·v`.
    H1,
}

/// Texture handling for the cell under test.
///
/// `Design` pins the cell-under-test texture power to 1 (the secondary cells
/// stay random); `Sirp` draws it from the same gamma law as the secondaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutTextureMode {
    #[default]
    Design,
    Sirp,
}

/// Complete description of one synthetic detection problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClutterScenario {
    /// Number of pulses per snapshot (vector dimension).
    #[serde(rename = "N")]
    pub n: usize,
    /// Number of secondary cells.
    #[serde(rename = "K")]
    pub k: usize,
    /// One-lag speckle correlation, `0 ≤ rho < 1`.
    pub rho: f64,
    /// Gamma texture shape; texture power has mean 1 and variance `1/nu`.
    pub nu: f64,
    /// Thermal-noise power per sample.
    pub sigma2: f64,
    /// Normalized target Doppler frequency (cycles per pulse).
    pub doppler: f64,
    /// Target signal-to-noise ratio in dB (used under `H1`).
    pub snr_db: f64,
    /// Hypothesis the cell under test is drawn from.
    pub hypothesis: Hypothesis,
}

impl ClutterScenario {
    /// Checks every field range; returns a message naming the offending field.
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n == 0 {
            return Err(SimError::InvalidScenario("N must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(SimError::InvalidScenario("K must be at least 1".into()));
        }
        if !(self.rho >= 0.0 && self.rho < 1.0) {
            return Err(SimError::InvalidRho { rho: self.rho });
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(SimError::InvalidScenario(format!(
                "nu must be positive and finite, got {}",
                self.nu
            )));
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(SimError::InvalidScenario(format!(
                "sigma2 must be nonnegative and finite, got {}",
                self.sigma2
            )));
        }
        if !self.doppler.is_finite() {
            return Err(SimError::InvalidScenario("doppler must be finite".into()));
        }
        if !self.snr_db.is_finite() {
            return Err(SimError::InvalidScenario("snr_db must be finite".into()));
        }
        Ok(())
    }

    /// Linear signal-to-noise ratio.
    pub fn snr_linear(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    /// Reference heterogeneous-clutter scenario used by tests and presets:
    /// 8 pulses, 16 secondary cells, strongly correlated speckle, spiky
    /// texture, no thermal noise, a zero-Doppler steering vector, and the
    /// disturbance-only hypothesis.
    pub fn reference() -> Self {
        Self {
            n: 8,
            k: 16,
            rho: 0.95,
            nu: 0.5,
            sigma2: 0.0,
            doppler: 0.0,
            snr_db: 15.0,
            hypothesis: Hypothesis::H0,
        }
    }
}

/// One generated detection problem plus the ground truth that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    /// Cell under test (length N).
    pub z: CVector,
    /// Secondary cells, one per column (N×K).
    pub secondaries: CMatrix,
    /// Steering vector (length N).
    pub v: CVector,
    /// Ground truth used by the generator.
    pub truth: TruthRecord,
}

/// Ground truth recorded alongside a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub hypothesis: Hypothesis,
    /// Target amplitude actually added to the cell under test (0 under H0).
    pub alpha: C64,
    /// True texture powers `τ_k²` of the secondary cells.
    pub gammas: Vec<f64>,
    /// Shared unit-power speckle covariance.
    pub covariance: HermitianMatrix,
    /// Texture power applied to the cell under test (1 in design mode).
    pub cut_texture: f64,
}

#[derive(Serialize, Deserialize)]
struct DataSetDto {
    z: Vec<C64>,
    #[serde(rename = "Z")]
    secondaries: Vec<Vec<C64>>,
    v: Vec<C64>,
    truth: TruthRecord,
}

impl Serialize for DataSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let dto = DataSetDto {
            z: self.z.iter().copied().collect(),
            secondaries: (0..self.secondaries.ncols())
                .map(|k| self.secondaries.column(k).iter().copied().collect())
                .collect(),
            v: self.v.iter().copied().collect(),
            truth: self.truth.clone(),
        };
        dto.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DataSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error as _;
        let dto = DataSetDto::deserialize(deserializer)?;
        let n = dto.z.len();
        if dto.v.len() != n {
            return Err(D::Error::custom("steering vector length must match z"));
        }
        for col in &dto.secondaries {
            if col.len() != n {
                return Err(D::Error::custom("secondary cell length must match z"));
            }
        }
        let k = dto.secondaries.len();
        Ok(DataSet {
            z: CVector::from_vec(dto.z),
            secondaries: CMatrix::from_fn(n, k, |i, j| dto.secondaries[j][i]),
            v: CVector::from_vec(dto.v),
            truth: dto.truth,
        })
    }
}

/// Temporal steering vector `v_n = exp(j·2π·doppler·n)`, `n = 0..N-1`.
pub fn steering_vector(n: usize, doppler: f64) -> CVector {
    CVector::from_fn(n, |i, _| {
        C64::from_polar(1.0, std::f64::consts::TAU * doppler * i as f64)
    })
}

/// Exponentially correlated speckle covariance `R[m₁,m₂] = rho^|m₁−m₂|`
/// (unit power, Toeplitz, persymmetric).
pub fn exp_covariance(n: usize, rho: f64) -> Result<HermitianMatrix, SimError> {
    if !(0.0..1.0).contains(&rho) {
        return Err(SimError::InvalidRho { rho });
    }
    let m = CMatrix::from_fn(n, n, |i, j| {
        C64::new(rho.powi((i as i32 - j as i32).abs()), 0.0)
    });
    Ok(HermitianMatrix::from_entries_unchecked(m))
}

/// Texture amplitude `τ = sqrt(g)` with `g ~ Gamma(shape ν, scale 1/ν)`,
/// so the texture power has mean 1 and variance `1/ν`.
pub fn sample_texture(nu: f64, rng: &mut impl Rng) -> Result<f64, SimError> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(SimError::InvalidScenario(format!(
            "nu must be positive and finite, got {nu}"
        )));
    }
    let gamma = Gamma::new(nu, 1.0 / nu)
        .map_err(|e| SimError::InvalidScenario(format!("gamma texture: {e}")))?;
    // Floor keeps recorded texture powers strictly positive.
    Ok(gamma.sample(rng).max(1e-300).sqrt())
}

/// Circular complex standard normal: independent real and imaginary parts of
/// variance 1/2, so `E[|x|²] = 1`.
pub fn complex_standard_normal(rng: &mut impl Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// One disturbance snapshot `τ·L·g + σ·n` with `g`, `n` circular complex
/// standard normal vectors and `L` the Cholesky factor of the speckle
/// covariance. Thermal noise is drawn even when `sigma2 = 0`, so datasets
/// that differ only in `sigma2` share their speckle and texture draws.
pub fn sample_snapshot(
    chol_r: &CMatrix,
    texture: f64,
    sigma2: f64,
    rng: &mut impl Rng,
) -> CVector {
    let n = chol_r.nrows();
    let g = CVector::from_fn(n, |_, _| complex_standard_normal(rng));
    let thermal = CVector::from_fn(n, |_, _| complex_standard_normal(rng));
    let mut x = chol_r * g * C64::new(texture, 0.0);
    if sigma2 > 0.0 {
        x += thermal * C64::new(sigma2.sqrt(), 0.0);
    }
    x
}

/// Target amplitude realizing a requested linear SNR against disturbance
/// covariance `R + σ²I`: `|α| = sqrt(snr / v†(R+σ²I)⁻¹v)`, phase 0.
pub fn alpha_from_snr(
    snr_linear: f64,
    v: &CVector,
    r: &HermitianMatrix,
    sigma2: f64,
) -> Result<C64, SimError> {
    if !(snr_linear >= 0.0 && snr_linear.is_finite()) {
        return Err(SimError::InvalidScenario(format!(
            "snr must be nonnegative and finite, got {snr_linear}"
        )));
    }
    let total = HermitianMatrix::from_entries_unchecked(
        r.entries() + CMatrix::identity(r.n(), r.n()) * C64::new(sigma2, 0.0),
    );
    let quad = total.inv_quadform(v)?;
    Ok(C64::new((snr_linear / quad).sqrt(), 0.0))
}

/// Generates one dataset with the cell-under-test texture pinned to 1
/// (design mode). See [`gen_dataset_with_mode`].
pub fn gen_dataset(scenario: &ClutterScenario, key: TrialKey) -> Result<DataSet, SimError> {
    gen_dataset_with_mode(scenario, CutTextureMode::Design, key)
}

/// Generates one dataset for the scenario under the given cell-under-test
/// texture mode. Bit-reproducible for a given `(scenario, mode, key)`; the
/// snapshot at slot `s` depends only on `key` and `s`, so growing `K` leaves
/// existing cells unchanged.
pub fn gen_dataset_with_mode(
    scenario: &ClutterScenario,
    mode: CutTextureMode,
    key: TrialKey,
) -> Result<DataSet, SimError> {
    scenario.validate()?;
    let n = scenario.n;
    let k = scenario.k;
    if k > u16::MAX as usize - 1 {
        return Err(SimError::InvalidScenario(format!(
            "K = {k} exceeds the addressable snapshot range"
        )));
    }
    let v = steering_vector(n, scenario.doppler);
    let r = exp_covariance(n, scenario.rho)?;
    let chol = r.factor()?.clone();

    // Cell under test: slot 0. The texture draw happens in both modes so the
    // speckle stream is identical across modes.
    let mut cut_rng = key.rng(0);
    let tau0_draw = sample_texture(scenario.nu, &mut cut_rng)?;
    let tau0 = match mode {
        CutTextureMode::Design => 1.0,
        CutTextureMode::Sirp => tau0_draw,
    };
    let mut z = sample_snapshot(&chol, tau0, scenario.sigma2, &mut cut_rng);
    let alpha = match scenario.hypothesis {
        Hypothesis::H0 => C64::new(0.0, 0.0),
        Hypothesis::H1 => {
            let a = alpha_from_snr(scenario.snr_linear(), &v, &r, scenario.sigma2)?;
            z += &v * a;
            a
        }
    };

    let mut secondaries = CMatrix::zeros(n, k);
    let mut gammas = Vec::with_capacity(k);
    for idx in 0..k {
        let mut rng = key.rng((idx + 1) as u16);
        let tau = sample_texture(scenario.nu, &mut rng)?;
        gammas.push(tau * tau);
        let cell = sample_snapshot(&chol, tau, scenario.sigma2, &mut rng);
        secondaries.set_column(idx, &cell);
    }

    Ok(DataSet {
        z,
        secondaries,
        v,
        truth: TruthRecord {
            hypothesis: scenario.hypothesis,
            alpha,
            gammas,
            covariance: r,
            cut_texture: tau0 * tau0,
        },
    })
}
