//! Dense Hermitian linear algebra kernels sized for adaptive-detection work.
//!
//! Everything here targets small, dense, Hermitian matrices (dimensions in the
//! tens, occasionally a few hundred): Cholesky factorization with a relative
//! pivot guard, log-determinants and quadratic forms computed through
//! triangular solves instead of explicit inverses, Sherman–Morrison rank-one
//! updates of a maintained inverse, Householder reflections that align a
//! vector with the first coordinate axis, and whitening rotations built from a
//! Hermitian eigendecomposition.
//!
//! Two conventions hold throughout:
//!
//! * matrices handed to these kernels are Hermitian; [`HermitianMatrix`]
//!   validates that on construction and stores an exactly-mirrored copy, so
//!   downstream kernels may rely on perfect conjugate symmetry;
//! * factorizations are cached: the first operation that needs the Cholesky
//!   factor computes it, later ones reuse it.

use std::sync::OnceLock;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{C64, CMatrix, CVector};

/// Relative pivot floor for Cholesky factorization: a pivot at or below
/// `CHOLESKY_PIVOT_REL_TOL * trace(M)/N` fails the factorization.
pub const CHOLESKY_PIVOT_REL_TOL: f64 = 1e-14;

/// Relative conjugate-symmetry tolerance accepted by [`HermitianMatrix::new`].
pub const HERMITIAN_REL_TOL: f64 = 1e-12;

/// Smallest admissible Sherman–Morrison denominator. At or below this value a
/// rank-one downdate would lose positive definiteness and the caller must
/// refactorize instead.
pub const SM_DENOMINATOR_MIN: f64 = 1e-10;

/// Absolute Frobenius tolerance on `‖U†U − I‖` enforced when constructing a
/// [`UnitaryTransform`].
pub const UNITARY_TOL: f64 = 1e-10;

/// Errors produced by the Hermitian kernels.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    /// Operand shapes are incompatible.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    /// A Cholesky pivot fell at or below the relative floor; the matrix is not
    /// positive definite to working precision.
    #[error("matrix is not positive definite (pivot {pivot_index} = {pivot:e})")]
    NotPositiveDefinite { pivot_index: usize, pivot: f64 },
    /// A rank-one downdate would make the matrix lose positive definiteness.
    #[error("rank-one downdate is singular (denominator {denominator:e})")]
    DowndateSingular { denominator: f64 },
    /// An input vector that must be nonzero was zero (or not finite).
    #[error("vector must be nonzero and finite")]
    ZeroVector,
    /// Matrix entries are not conjugate-symmetric to working precision.
    #[error("matrix is not Hermitian (relative deviation {deviation:e})")]
    NotHermitian { deviation: f64 },
}

/// Hermitian matrix with an internally cached Cholesky factor.
///
/// The stored entries are exactly conjugate-symmetric: constructors either
/// mirror the lower triangle or validate and then re-symmetrize the input.
/// The cached factor is computed on first use and shared by later calls.
#[derive(Debug, Clone)]
pub struct HermitianMatrix {
    entries: CMatrix,
    chol: OnceLock<Result<CMatrix, LinalgError>>,
}

impl PartialEq for HermitianMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl HermitianMatrix {
    /// Validates that `m` is square and conjugate-symmetric to
    /// [`HERMITIAN_REL_TOL`] (relative, Frobenius), then stores the exactly
    /// symmetrized matrix `(M + M†)/2`.
    pub fn new(m: CMatrix) -> Result<Self, LinalgError> {
        if m.nrows() != m.ncols() {
            return Err(LinalgError::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let scale = m.norm();
        let deviation = (&m - m.adjoint()).norm();
        if deviation > HERMITIAN_REL_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(LinalgError::NotHermitian {
                deviation: deviation / scale.max(f64::MIN_POSITIVE),
            });
        }
        let mut sym = m;
        mirror_lower(&mut sym);
        Ok(Self::from_entries_unchecked(sym))
    }

    /// Builds a Hermitian matrix from the lower triangle of `m` (upper entries
    /// are ignored, the diagonal keeps only its real part).
    pub fn from_lower_triangle(m: &CMatrix) -> Result<Self, LinalgError> {
        if m.nrows() != m.ncols() {
            return Err(LinalgError::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let mut sym = m.clone();
        mirror_lower(&mut sym);
        Ok(Self::from_entries_unchecked(sym))
    }

    /// Wraps entries already known to be exactly conjugate-symmetric.
    pub(crate) fn from_entries_unchecked(entries: CMatrix) -> Self {
        Self {
            entries,
            chol: OnceLock::new(),
        }
    }

    /// Identity matrix of dimension `n`.
    pub fn identity(n: usize) -> Self {
        Self::from_entries_unchecked(CMatrix::identity(n, n))
    }

    /// Matrix dimension.
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    /// Read access to the stored entries.
    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    /// Consumes the wrapper and returns the entries.
    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    /// Real trace of the matrix.
    pub fn trace(&self) -> f64 {
        (0..self.n()).map(|i| self.entries[(i, i)].re).sum()
    }

    /// Lower-triangular Cholesky factor `L` with `L·L† = M`, computed once and
    /// cached. Fails with [`LinalgError::NotPositiveDefinite`] when a pivot
    /// falls at or below `CHOLESKY_PIVOT_REL_TOL · trace(M)/N`.
    pub fn factor(&self) -> Result<&CMatrix, LinalgError> {
        self.chol
            .get_or_init(|| cholesky_lower(&self.entries))
            .as_ref()
            .map_err(|e| e.clone())
    }

    /// `ln det M`, computed from the Cholesky factor diagonal.
    pub fn logdet(&self) -> Result<f64, LinalgError> {
        let l = self.factor()?;
        Ok((0..l.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
    }

    /// Quadratic form `x† M⁻¹ x ≥ 0`, via one triangular solve (no explicit
    /// inverse is formed).
    pub fn inv_quadform(&self, x: &CVector) -> Result<f64, LinalgError> {
        if x.len() != self.n() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.n(),
                got: x.len(),
            });
        }
        let l = self.factor()?;
        let y = solve_lower(l, x);
        Ok(y.norm_squared())
    }

    /// Solves `M u = b` through the cached factor.
    pub fn solve(&self, b: &CVector) -> Result<CVector, LinalgError> {
        if b.len() != self.n() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.n(),
                got: b.len(),
            });
        }
        let l = self.factor()?;
        Ok(solve_lower_adjoint(l, &solve_lower(l, b)))
    }

    /// Explicit inverse, assembled column by column through the cached factor
    /// and re-symmetrized exactly.
    pub fn inverse(&self) -> Result<HermitianMatrix, LinalgError> {
        let n = self.n();
        let l = self.factor()?;
        let mut inv = CMatrix::zeros(n, n);
        let mut e = CVector::zeros(n);
        for j in 0..n {
            e[j] = C64::new(1.0, 0.0);
            let col = solve_lower_adjoint(l, &solve_lower(l, &e));
            inv.set_column(j, &col);
            e[j] = C64::new(0.0, 0.0);
        }
        mirror_lower(&mut inv);
        Ok(HermitianMatrix::from_entries_unchecked(inv))
    }
}

impl Serialize for HermitianMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let n = self.n();
        let rows: Vec<Vec<C64>> = (0..n)
            .map(|i| (0..n).map(|j| self.entries[(i, j)]).collect())
            .collect();
        rows.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for HermitianMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rows: Vec<Vec<C64>> = Vec::deserialize(deserializer)?;
        let n = rows.len();
        for row in &rows {
            if row.len() != n {
                return Err(D::Error::custom(format!(
                    "expected {n}x{n} matrix, found row of length {}",
                    row.len()
                )));
            }
        }
        let m = CMatrix::from_fn(n, n, |i, j| rows[i][j]);
        HermitianMatrix::new(m).map_err(D::Error::custom)
    }
}

/// Unitary linear map; `‖U†U − I‖ ≤ 1e-10` (Frobenius) is enforced when one
/// is constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryTransform {
    u: CMatrix,
}

impl UnitaryTransform {
    /// Validates unitarity and wraps the matrix.
    pub fn new(u: CMatrix) -> Result<Self, LinalgError> {
        if u.nrows() != u.ncols() {
            return Err(LinalgError::DimensionMismatch {
                expected: u.nrows(),
                got: u.ncols(),
            });
        }
        let n = u.nrows();
        let deviation = (u.adjoint() * &u - CMatrix::identity(n, n)).norm();
        if deviation.is_nan() || deviation > UNITARY_TOL {
            return Err(LinalgError::NotHermitian { deviation });
        }
        Ok(Self { u })
    }

    /// Matrix dimension.
    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    /// Read access to the matrix.
    pub fn matrix(&self) -> &CMatrix {
        &self.u
    }

    /// Applies the transform to a vector.
    pub fn apply(&self, x: &CVector) -> CVector {
        &self.u * x
    }
}

/// Lower-triangular Cholesky factor of a Hermitian positive definite matrix.
pub fn cholesky(m: &HermitianMatrix) -> Result<CMatrix, LinalgError> {
    m.factor().cloned()
}

/// `ln det M` for Hermitian positive definite `M`.
pub fn logdet(m: &HermitianMatrix) -> Result<f64, LinalgError> {
    m.logdet()
}

/// Quadratic form `x† M⁻¹ x` for Hermitian positive definite `M`.
pub fn inv_quadform(m: &HermitianMatrix, x: &CVector) -> Result<f64, LinalgError> {
    m.inv_quadform(x)
}

/// Sherman–Morrison rank-one update of a maintained inverse.
///
/// Given `Minv = M⁻¹`, returns `(M + c·x·x†)⁻¹ = Minv − c·(Minv x)(Minv x)† / (1 + c·x† Minv x)`.
/// Fails with [`LinalgError::DowndateSingular`] when the denominator falls at
/// or below [`SM_DENOMINATOR_MIN`], which for a downdate (`c < 0`) means the
/// updated matrix would no longer be positive definite.
pub fn sm_update_inv(
    minv: &HermitianMatrix,
    x: &CVector,
    c: f64,
) -> Result<HermitianMatrix, LinalgError> {
    if x.len() != minv.n() {
        return Err(LinalgError::DimensionMismatch {
            expected: minv.n(),
            got: x.len(),
        });
    }
    let mut entries = minv.entries().clone();
    let mut u = CVector::zeros(x.len());
    sm_update_inv_in_place(&mut entries, x, c, &mut u)?;
    Ok(HermitianMatrix::from_entries_unchecked(entries))
}

/// In-place Sherman–Morrison update used by performance-sensitive sweeps.
///
/// `minv` must be exactly Hermitian on entry and stays exactly Hermitian on
/// exit; `u` is scratch space of matching length. Returns the denominator
/// `1 + c·x† Minv x`, whose logarithm is the change in `ln det M`.
pub(crate) fn sm_update_inv_in_place(
    minv: &mut CMatrix,
    x: &CVector,
    c: f64,
    u: &mut CVector,
) -> Result<f64, LinalgError> {
    let n = minv.nrows();
    debug_assert_eq!(x.len(), n);
    debug_assert_eq!(u.len(), n);
    u.gemv(C64::new(1.0, 0.0), minv, x, C64::new(0.0, 0.0));
    let p = x.dotc(u).re;
    let denominator = 1.0 + c * p;
    if denominator.is_nan() || denominator <= SM_DENOMINATOR_MIN {
        return Err(LinalgError::DowndateSingular { denominator });
    }
    let beta = c / denominator;
    for j in 0..n {
        let uj = u[j].conj() * beta;
        for i in j..n {
            minv[(i, j)] -= u[i] * uj;
        }
    }
    mirror_lower(minv);
    Ok(denominator)
}

/// Unitary transform `U` with `U·w = ‖w‖·e₁` (real, nonnegative first entry),
/// built from a single complex Householder reflection and a phase correction.
pub fn householder_align(w: &CVector) -> Result<UnitaryTransform, LinalgError> {
    let n = w.len();
    let norm = w.norm();
    if n == 0 || norm == 0.0 || !norm.is_finite() {
        return Err(LinalgError::ZeroVector);
    }
    // Phase of the leading entry; defaults to +1 when that entry vanishes.
    let w0 = w[0];
    let phase = if w0.norm() > 0.0 {
        w0 / C64::new(w0.norm(), 0.0)
    } else {
        C64::new(1.0, 0.0)
    };
    // Reflector direction u = w + phase·‖w‖·e₁ gives H·w = −phase·‖w‖·e₁.
    let mut u = w.clone();
    u[0] += phase * C64::new(norm, 0.0);
    let unorm2 = u.norm_squared();
    let mut h = CMatrix::identity(n, n);
    let scale = C64::new(2.0 / unorm2, 0.0);
    for j in 0..n {
        let uj = u[j].conj() * scale;
        for i in 0..n {
            h[(i, j)] -= u[i] * uj;
        }
    }
    // Rescale the first output coordinate so the image is +‖w‖·e₁.
    let d0 = -phase.conj();
    for j in 0..n {
        h[(0, j)] *= d0;
    }
    UnitaryTransform::new(h)
}

/// Whitening rotation for a covariance `R` and steering vector `v`: returns
/// `T = U·R^(−1/2)` with `T·R·T† = I` and `T·v` a positive real multiple of
/// `e₁`. `R^(−1/2)` is the Hermitian (eigendecomposition) square root.
pub fn whitening_rotation(r: &HermitianMatrix, v: &CVector) -> Result<CMatrix, LinalgError> {
    let n = r.n();
    if v.len() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            got: v.len(),
        });
    }
    let trace = r.trace();
    let eig = r.entries().clone().symmetric_eigen();
    let tol = CHOLESKY_PIVOT_REL_TOL * trace.max(0.0) / n as f64;
    let mut inv_sqrt = CMatrix::zeros(n, n);
    // R^(−1/2) = Q·diag(λ^(−1/2))·Q†, assembled as a sum of scaled projectors.
    for (idx, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda <= tol {
            return Err(LinalgError::NotPositiveDefinite {
                pivot_index: idx,
                pivot: lambda,
            });
        }
        let q = eig.eigenvectors.column(idx);
        let s = C64::new(1.0 / lambda.sqrt(), 0.0);
        for j in 0..n {
            let qj = q[j].conj() * s;
            for i in 0..n {
                inv_sqrt[(i, j)] += q[i] * qj;
            }
        }
    }
    let w = &inv_sqrt * v;
    let u = householder_align(&w)?;
    Ok(u.matrix() * inv_sqrt)
}

/// Quadratic form of `z_k` through the Moore–Penrose pseudoinverse of the
/// rank-one matrix `z·z†`: evaluates to `|z_k† z|² / ‖z‖⁴`.
pub fn pinv_rank1_quadform(z: &CVector, zk: &CVector) -> Result<f64, LinalgError> {
    if zk.len() != z.len() {
        return Err(LinalgError::DimensionMismatch {
            expected: z.len(),
            got: zk.len(),
        });
    }
    let znorm2 = z.norm_squared();
    if znorm2 == 0.0 || !znorm2.is_finite() {
        return Err(LinalgError::ZeroVector);
    }
    Ok(zk.dotc(z).norm_sqr() / (znorm2 * znorm2))
}

/// Copies the strict lower triangle onto the upper as conjugates and forces
/// the diagonal real, making the matrix exactly Hermitian.
/// Adds `scale · x x†` to the lower triangle of `m`; callers mirror when
/// the full matrix is needed.
pub(crate) fn accumulate_outer_lower<S>(
    m: &mut CMatrix,
    x: &nalgebra::Matrix<C64, nalgebra::Dyn, nalgebra::U1, S>,
    scale: f64,
) where
    S: nalgebra::storage::Storage<C64, nalgebra::Dyn, nalgebra::U1>,
{
    let n = x.len();
    for j in 0..n {
        let xj = x[j].conj() * scale;
        for i in j..n {
            m[(i, j)] += x[i] * xj;
        }
    }
}

pub(crate) fn mirror_lower(m: &mut CMatrix) {
    let n = m.nrows();
    for j in 0..n {
        m[(j, j)].im = 0.0;
        for i in (j + 1)..n {
            m[(j, i)] = m[(i, j)].conj();
        }
    }
}

/// Forward substitution: solves `L y = b` for lower-triangular `L`.
pub(crate) fn solve_lower(l: &CMatrix, b: &CVector) -> CVector {
    let n = b.len();
    let mut y = b.clone();
    for i in 0..n {
        for k in 0..i {
            let term = l[(i, k)] * y[k];
            y[i] -= term;
        }
        y[i] /= l[(i, i)];
    }
    y
}

/// Back substitution: solves `L† x = y` for lower-triangular `L`.
fn solve_lower_adjoint(l: &CMatrix, y: &CVector) -> CVector {
    let n = y.len();
    let mut x = y.clone();
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let term = l[(k, i)].conj() * x[k];
            x[i] -= term;
        }
        x[i] /= l[(i, i)];
    }
    x
}

/// Cholesky factorization kernel with the relative pivot guard.
fn cholesky_lower(m: &CMatrix) -> Result<CMatrix, LinalgError> {
    let n = m.nrows();
    let trace: f64 = (0..n).map(|i| m[(i, i)].re).sum();
    let tol = CHOLESKY_PIVOT_REL_TOL * trace.max(0.0) / n.max(1) as f64;
    let mut l = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if d.is_nan() || d <= tol {
            return Err(LinalgError::NotPositiveDefinite {
                pivot_index: j,
                pivot: d,
            });
        }
        let s = d.sqrt();
        l[(j, j)] = C64::new(s, 0.0);
        let sinv = 1.0 / s;
        for i in (j + 1)..n {
            let mut acc = m[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = acc * sinv;
        }
    }
    Ok(l)
}
