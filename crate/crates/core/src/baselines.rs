//! Competitor detection chain: covariance estimators paired with the
//! normalized matched filter.
//!
//! The estimators cover the standard ladder used against non-Gaussian,
//! power-heterogeneous clutter:
//!
//! * [`scm`] — plain sample covariance matrix, the Gaussian reference;
//! * [`nscm`] — normalized sample covariance matrix, which divides each
//!   secondary vector by its own power before averaging and is therefore
//!   exactly invariant to per-cell power levels;
//! * [`recursive_fp`] — the recursive fixed-point (Tyler-style) estimate,
//!   which re-normalizes by the Mahalanobis power under the current iterate;
//! * [`persymmetrize`] / [`persym_recursive_fp`] — the same fixed point with
//!   the doubly-symmetric (persymmetric) structure of many radar covariance
//!   models enforced after every step.
//!
//! [`nmf_statistic`] evaluates the normalized matched filter — the squared
//! cosine of the angle between the cell under test and the steering vector in
//! the whitened geometry — against any of these estimates. The statistic is
//! invariant to scaling of `z`, `v`, and the covariance estimate, so the
//! scalar normalization conventions of the estimators never affect detection
//! decisions.

use serde::{Deserialize, Serialize};

use crate::linalg::{self, HermitianMatrix, LinalgError};
use crate::{C64, CMatrix, CVector};

/// Errors from the baseline estimators and detector.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BaselineError {
    /// Operand shapes are incompatible.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    /// A vector required to be nonzero (a secondary cell for [`nscm`], or
    /// `z`/`v` for [`nmf_statistic`]) was zero.
    #[error("vector must be nonzero")]
    ZeroVector,
    /// Estimator configuration is out of range.
    #[error("invalid estimator spec: {0}")]
    InvalidSpec(String),
    /// A linear-algebra kernel failed (typically a non-positive-definite
    /// iterate on degenerate data).
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Which covariance estimate feeds the normalized matched filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovKind {
    /// Sample covariance matrix.
    Scm,
    /// Normalized sample covariance matrix.
    #[default]
    Nscm,
    /// Recursive fixed-point estimate.
    Recursive,
    /// Recursive fixed-point estimate with persymmetry enforced each step.
    PersymmetricRecursive,
}

/// Starting point for the recursive kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FpInit {
    /// Start from the normalized sample covariance matrix.
    #[default]
    Nscm,
    /// Start from the identity (sensitivity checks).
    Identity,
}

/// Serializable description of a covariance estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CovEstimatorSpec {
    pub kind: CovKind,
    /// Fixed-point iteration count for the recursive kinds.
    pub iterations: usize,
    /// Starting point for the recursive kinds.
    pub init: FpInit,
}

impl Default for CovEstimatorSpec {
    fn default() -> Self {
        Self {
            kind: CovKind::default(),
            iterations: 3,
            init: FpInit::default(),
        }
    }
}

impl CovEstimatorSpec {
    /// Runs the described estimator on the secondary data.
    pub fn estimate(&self, secondaries: &CMatrix) -> Result<HermitianMatrix, BaselineError> {
        let n = secondaries.nrows();
        match self.kind {
            CovKind::Scm => scm(secondaries),
            CovKind::Nscm => nscm(secondaries),
            CovKind::Recursive => {
                let init = self.initial(secondaries, false)?;
                recursive_fp(secondaries, self.iterations, &init)
            }
            CovKind::PersymmetricRecursive => {
                if self.init == FpInit::Identity {
                    let init = persymmetrize(&HermitianMatrix::identity(n));
                    persym_recursive_fp_from(secondaries, self.iterations, init)
                } else {
                    persym_recursive_fp(secondaries, self.iterations)
                }
            }
        }
    }

    fn initial(
        &self,
        secondaries: &CMatrix,
        persym: bool,
    ) -> Result<HermitianMatrix, BaselineError> {
        if self.iterations == 0 {
            return Err(BaselineError::InvalidSpec(
                "recursive estimators need iterations >= 1".into(),
            ));
        }
        let base = match self.init {
            FpInit::Nscm => nscm(secondaries)?,
            FpInit::Identity => HermitianMatrix::identity(secondaries.nrows()),
        };
        Ok(if persym { persymmetrize(&base) } else { base })
    }
}

/// Sample covariance matrix `(1/K)·Σ_k z_k z_k†`.
///
/// May be singular when `K < N`; consumers that factor it must handle that.
pub fn scm(secondaries: &CMatrix) -> Result<HermitianMatrix, BaselineError> {
    let k = secondaries.ncols();
    if k == 0 {
        return Err(BaselineError::InvalidSpec(
            "need at least one secondary cell".into(),
        ));
    }
    let n = secondaries.nrows();
    let mut m = CMatrix::zeros(n, n);
    let w = 1.0 / k as f64;
    for col in secondaries.column_iter() {
        linalg::accumulate_outer_lower(&mut m, &col, w);
    }
    linalg::mirror_lower(&mut m);
    Ok(HermitianMatrix::from_entries_unchecked(m))
}

/// Normalized sample covariance matrix `(N/K)·Σ_k z_k z_k†/(z_k†z_k)`.
///
/// Each cell is divided by its own power before averaging, so the output is
/// exactly invariant to per-cell complex scaling and has trace `N`.
pub fn nscm(secondaries: &CMatrix) -> Result<HermitianMatrix, BaselineError> {
    let k = secondaries.ncols();
    if k == 0 {
        return Err(BaselineError::InvalidSpec(
            "need at least one secondary cell".into(),
        ));
    }
    let n = secondaries.nrows();
    let mut m = CMatrix::zeros(n, n);
    let nk = n as f64 / k as f64;
    for col in secondaries.column_iter() {
        let p = col.norm_squared();
        if !(p > 0.0 && p.is_finite()) {
            return Err(BaselineError::ZeroVector);
        }
        linalg::accumulate_outer_lower(&mut m, &col, nk / p);
    }
    linalg::mirror_lower(&mut m);
    Ok(HermitianMatrix::from_entries_unchecked(m))
}

/// Recursive fixed-point covariance estimate.
///
/// Iterates `M ← (N/K)·Σ_k z_k z_k†/(z_k†M⁻¹z_k)` from `init` for the given
/// number of steps. The Mahalanobis normalization makes every iterate exactly
/// invariant to per-cell complex scaling of the data.
pub fn recursive_fp(
    secondaries: &CMatrix,
    iterations: usize,
    init: &HermitianMatrix,
) -> Result<HermitianMatrix, BaselineError> {
    if iterations == 0 {
        return Err(BaselineError::InvalidSpec(
            "recursive estimators need iterations >= 1".into(),
        ));
    }
    let n = secondaries.nrows();
    let k = secondaries.ncols();
    if init.n() != n {
        return Err(BaselineError::DimensionMismatch {
            expected: n,
            got: init.n(),
        });
    }
    if k < n {
        return Err(BaselineError::InvalidSpec(format!(
            "recursive estimator needs K >= N, got K = {k}, N = {n}"
        )));
    }
    let mut current = init.clone();
    for _ in 0..iterations {
        current = fp_step(secondaries, &current)?;
    }
    Ok(current)
}

/// One fixed-point step `(N/K)·Σ_k z_k z_k†/(z_k†M⁻¹z_k)`.
fn fp_step(
    secondaries: &CMatrix,
    current: &HermitianMatrix,
) -> Result<HermitianMatrix, BaselineError> {
    let n = secondaries.nrows();
    let k = secondaries.ncols();
    let nk = n as f64 / k as f64;
    let mut next = CMatrix::zeros(n, n);
    for col in secondaries.column_iter() {
        let q = current.inv_quadform(&col.into_owned())?;
        if !(q > 0.0 && q.is_finite()) {
            return Err(BaselineError::ZeroVector);
        }
        linalg::accumulate_outer_lower(&mut next, &col, nk / q);
    }
    linalg::mirror_lower(&mut next);
    Ok(HermitianMatrix::from_entries_unchecked(next))
}

/// Projects a Hermitian matrix onto the persymmetric subspace:
/// `(M + J·conj(M)·J)/2`, with `J` the anti-diagonal exchange matrix.
///
/// Output entries satisfy `out(i, j) = conj(out(N−1−i, N−1−j))`; the
/// projection is idempotent and preserves Hermitianness.
pub fn persymmetrize(m: &HermitianMatrix) -> HermitianMatrix {
    let n = m.n();
    let e = m.entries();
    let mut out = CMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            out[(i, j)] = (e[(i, j)] + e[(n - 1 - i, n - 1 - j)].conj()) * 0.5;
        }
    }
    // The average of a Hermitian matrix and a Hermitian transform of it can
    // pick up rounding asymmetry; re-mirror so the result is exactly
    // Hermitian as well as persymmetric.
    for j in 0..n {
        out[(j, j)].im = 0.0;
        for i in (j + 1)..n {
            let avg = (out[(i, j)] + out[(j, i)].conj()) * 0.5;
            out[(i, j)] = avg;
            out[(j, i)] = avg.conj();
        }
    }
    HermitianMatrix::from_entries_unchecked(out)
}

/// Recursive fixed point with persymmetry enforced after every step,
/// starting from the persymmetrized normalized sample covariance matrix.
pub fn persym_recursive_fp(
    secondaries: &CMatrix,
    iterations: usize,
) -> Result<HermitianMatrix, BaselineError> {
    let init = persymmetrize(&nscm(secondaries)?);
    persym_recursive_fp_from(secondaries, iterations, init)
}

fn persym_recursive_fp_from(
    secondaries: &CMatrix,
    iterations: usize,
    init: HermitianMatrix,
) -> Result<HermitianMatrix, BaselineError> {
    if iterations == 0 {
        return Err(BaselineError::InvalidSpec(
            "recursive estimators need iterations >= 1".into(),
        ));
    }
    let n = secondaries.nrows();
    let k = secondaries.ncols();
    if k < n {
        return Err(BaselineError::InvalidSpec(format!(
            "recursive estimator needs K >= N, got K = {k}, N = {n}"
        )));
    }
    let mut current = init;
    for _ in 0..iterations {
        current = persymmetrize(&fp_step(secondaries, &current)?);
    }
    Ok(current)
}

/// Normalized matched filter statistic
/// `|v†M⁻¹z|² / ((v†M⁻¹v)(z†M⁻¹z))` — the squared cosine between `z` and `v`
/// in the geometry whitened by `M`. Always in `[0, 1]`, and invariant to
/// complex scaling of `z` or `v` and positive scaling of `M`.
pub fn nmf_statistic(
    z: &CVector,
    v: &CVector,
    m: &HermitianMatrix,
) -> Result<f64, BaselineError> {
    let n = m.n();
    if z.len() != n || v.len() != n {
        return Err(BaselineError::DimensionMismatch {
            expected: n,
            got: if z.len() != n { z.len() } else { v.len() },
        });
    }
    if z.norm_squared() == 0.0 || v.norm_squared() == 0.0 {
        return Err(BaselineError::ZeroVector);
    }
    let l = m.factor()?;
    let a = linalg::solve_lower(l, v);
    let b = linalg::solve_lower(l, z);
    let cross: C64 = a.dotc(&b);
    let denom = a.norm_squared() * b.norm_squared();
    if !(denom > 0.0 && denom.is_finite()) {
        return Err(BaselineError::ZeroVector);
    }
    Ok((cross.norm_sqr() / denom).clamp(0.0, 1.0))
}
