//! Dense symmetric and orthogonal kernels shared by every other module.
//!
//! Everything here works on small dense matrices (`p×p` shapes, `n×p`
//! bases) and is backed by nalgebra's decompositions. Non-uniqueness of
//! eigen- and singular vectors is removed by two fixed conventions:
//! values are sorted in descending order, and every returned vector has its
//! entry of largest magnitude nonnegative (ties go to the lowest row).

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{Error, Result};
use crate::math;

pub type Matrix = DMatrix<f64>;

/// Relative Frobenius asymmetry accepted by [`SymMatrix::new`].
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Frobenius tolerance on `UᵀU − I` accepted by [`StiefelBasis::new`].
pub const ORTHONORMALITY_TOL: f64 = 1e-10;
/// Relative eigengap below which a dominant subspace is rejected.
pub const EIGENGAP_TOL: f64 = 1e-8;

const MAX_SWEEPS: usize = 10_000;

pub fn frobenius(m: &Matrix) -> f64 {
    m.norm()
}

/// `‖actual − expected‖_F / ‖expected‖_F`, falling back to the absolute
/// error when `expected` vanishes.
pub fn relative_error(actual: &Matrix, expected: &Matrix) -> f64 {
    let diff = (actual - expected).norm();
    let scale = expected.norm();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

pub(crate) fn symmetrized(m: Matrix) -> Matrix {
    let t = m.transpose();
    (m + t) * 0.5
}

fn check_square(m: &Matrix) -> Result<()> {
    if m.nrows() == 0 {
        return Err(Error::EmptyInput);
    }
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: (m.nrows(), m.nrows()),
            found: (m.nrows(), m.ncols()),
        });
    }
    Ok(())
}

fn check_finite(m: &Matrix) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

/// Index of the entry of largest magnitude, lowest index on ties.
fn pivot_index<'a>(entries: impl Iterator<Item = &'a f64>) -> usize {
    let mut best = 0;
    let mut best_abs = -1.0;
    for (i, v) in entries.enumerate() {
        let a = math::abs(*v);
        if a > best_abs {
            best = i;
            best_abs = a;
        }
    }
    best
}

/// Flips columns of `m` so each column's pivot entry is nonnegative,
/// applying the same flips to `partner` when given.
pub(crate) fn fix_column_signs(m: &mut Matrix, mut partner: Option<&mut Matrix>) {
    for j in 0..m.ncols() {
        let col = m.column(j);
        let i = pivot_index(col.iter());
        if col[i] < 0.0 {
            m.column_mut(j).neg_mut();
            if let Some(p) = partner.as_deref_mut() {
                p.column_mut(j).neg_mut();
            }
        }
    }
}

/// A real symmetric matrix, stored densely and exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    /// Accepts `m` if it is square, finite and symmetric to within
    /// [`SYMMETRY_TOL`] relative; the stored copy is `(m + mᵀ)/2`.
    pub fn new(m: Matrix) -> Result<Self> {
        check_square(&m)?;
        check_finite(&m)?;
        let scale = m.norm();
        let asym = (&m - m.transpose()).norm();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric {
                asymmetry: asym / scale,
            });
        }
        Ok(Self(symmetrized(m)))
    }

    /// Replaces `m` by its symmetric part without checking asymmetry.
    pub fn symmetrize(m: Matrix) -> Result<Self> {
        check_square(&m)?;
        check_finite(&m)?;
        Ok(Self(symmetrized(m)))
    }

    pub(crate) fn from_matrix_unchecked(m: Matrix) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        Self(symmetrized(m))
    }

    pub fn identity(n: usize) -> Self {
        Self(Matrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(Matrix::zeros(n, n))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(Matrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// Matrix exponential; the result is always positive definite.
    pub fn exp(&self) -> Result<SpdMatrix> {
        spd_fn(self, MatrixFunction::Exp).map(|s| SpdMatrix(s.0))
    }
}

/// Eigendecomposition with eigenvalues in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors, one per column, matching `values`.
    pub vectors: Matrix,
}

impl SymEigen {
    /// `V · diag(f(λ)) · Vᵀ`.
    pub fn compose(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let mut scaled = self.vectors.clone();
        for (j, &l) in self.values.iter().enumerate() {
            scaled.column_mut(j).scale_mut(f(l));
        }
        symmetrized(scaled * self.vectors.transpose())
    }
}

pub fn sym_eig(m: &SymMatrix) -> Result<SymEigen> {
    let n = m.dim();
    let eig = SymmetricEigen::try_new(m.0.clone(), f64::EPSILON, MAX_SWEEPS)
        .ok_or(Error::NumericalFailure)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (j, &i) in order.iter().enumerate() {
        vectors.set_column(j, &eig.eigenvectors.column(i));
    }
    fix_column_signs(&mut vectors, None);
    Ok(SymEigen { values, vectors })
}

/// `V · diag(f(λ)) · Vᵀ` straight from the solver's unordered spectrum,
/// for inner loops that need neither sorted values nor fixed signs.
/// With `positive`, a nonpositive eigenvalue is an error.
pub(crate) fn spectral_map(m: &Matrix, positive: bool, f: impl Fn(f64) -> f64) -> Result<Matrix> {
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, MAX_SWEEPS).ok_or(Error::NumericalFailure)?;
    if positive {
        let min = eig.eigenvalues.min();
        if !(min > 0.0) {
            return Err(Error::NotPositiveDefinite {
                min,
                max: eig.eigenvalues.max(),
            });
        }
    }
    let mut scaled = eig.eigenvectors.clone();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        scaled.column_mut(j).scale_mut(f(l));
    }
    Ok(symmetrized(scaled * eig.eigenvectors.transpose()))
}

fn check_spd_spectrum(values: &[f64]) -> Result<()> {
    let max = values[0];
    let min = values[values.len() - 1];
    let floor = values.len() as f64 * f64::EPSILON * max;
    if max > 0.0 && min > floor {
        Ok(())
    } else {
        Err(Error::NotPositiveDefinite { min, max })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFunction {
    Sqrt,
    InvSqrt,
    Log,
    /// Exponential of an arbitrary symmetric matrix.
    Exp,
}

/// Applies a scalar function to the spectrum of `m`.
///
/// `Sqrt`, `InvSqrt` and `Log` require `m` to pass the positive-definiteness
/// test (smallest eigenvalue above `dim·ε·λ_max`).
pub fn spd_fn(m: &SymMatrix, f: MatrixFunction) -> Result<SymMatrix> {
    let eig = sym_eig(m)?;
    if f != MatrixFunction::Exp {
        check_spd_spectrum(&eig.values).map_err(|_| Error::Domain("matrix function requires an SPD argument"))?;
    }
    let out = match f {
        MatrixFunction::Sqrt => eig.compose(math::sqrt),
        MatrixFunction::InvSqrt => eig.compose(|l| 1.0 / math::sqrt(l)),
        MatrixFunction::Log => eig.compose(math::ln),
        MatrixFunction::Exp => eig.compose(math::exp),
    };
    Ok(SymMatrix(out))
}

/// A symmetric positive definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix(Matrix);

impl SpdMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        Self::from_sym(SymMatrix::new(m)?)
    }

    pub fn from_sym(s: SymMatrix) -> Result<Self> {
        let eig = sym_eig(&s)?;
        check_spd_spectrum(&eig.values)?;
        Ok(Self(s.0))
    }

    /// Symmetrizes `m` and trusts the caller on definiteness.
    pub(crate) fn from_matrix_unchecked(m: Matrix) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        Self(symmetrized(m))
    }

    pub fn identity(p: usize) -> Self {
        Self(Matrix::identity(p, p))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::from_sym(SymMatrix::from_diagonal(diag)?)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn to_sym(&self) -> SymMatrix {
        SymMatrix(self.0.clone())
    }

    pub fn eigen(&self) -> Result<SymEigen> {
        let eig = sym_eig(&SymMatrix(self.0.clone()))?;
        if eig.values[eig.values.len() - 1] > 0.0 {
            Ok(eig)
        } else {
            Err(Error::NotPositiveDefinite {
                min: eig.values[eig.values.len() - 1],
                max: eig.values[0],
            })
        }
    }

    pub fn sqrt(&self) -> Result<SpdMatrix> {
        Ok(Self(self.eigen()?.compose(math::sqrt)))
    }

    /// `(X^{1/2}, X^{-1/2})` from one eigendecomposition.
    pub fn sqrt_and_inv_sqrt(&self) -> Result<(SpdMatrix, SpdMatrix)> {
        let eig = self.eigen()?;
        Ok((
            Self(eig.compose(math::sqrt)),
            Self(eig.compose(|l| 1.0 / math::sqrt(l))),
        ))
    }

    pub fn inv_sqrt(&self) -> Result<SpdMatrix> {
        Ok(Self(self.eigen()?.compose(|l| 1.0 / math::sqrt(l))))
    }

    pub fn log(&self) -> Result<SymMatrix> {
        Ok(SymMatrix(self.eigen()?.compose(math::ln)))
    }

    pub fn inverse(&self) -> Result<SpdMatrix> {
        Ok(Self(self.eigen()?.compose(|l| 1.0 / l)))
    }

    pub fn powf(&self, t: f64) -> Result<SpdMatrix> {
        Ok(Self(self.eigen()?.compose(|l| math::powf(l, t))))
    }

    pub fn scaled(&self, s: f64) -> Result<SpdMatrix> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Domain("scale factor must be positive and finite"));
        }
        Ok(Self(&self.0 * s))
    }

    /// `Qᵀ A Q` for a square orthogonal `q`.
    pub fn rotated(&self, q: &Matrix) -> Result<SpdMatrix> {
        if q.nrows() != self.dim() || q.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: (self.dim(), self.dim()),
                found: (q.nrows(), q.ncols()),
            });
        }
        Ok(Self(symmetrized(q.transpose() * &self.0 * q)))
    }
}

/// Thin SVD `M = left · diag(σ) · rightᵀ` of an `n×p` matrix with `p ≤ n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactSvd {
    pub left: Matrix,
    pub singular_values: Vec<f64>,
    pub right: Matrix,
}

impl CompactSvd {
    /// Orthonormal polar factor `left · rightᵀ`.
    pub fn polar(&self) -> Matrix {
        &self.left * self.right.transpose()
    }
}

pub fn compact_svd(m: &Matrix) -> Result<CompactSvd> {
    let (n, p) = m.shape();
    if p == 0 || p > n {
        return Err(Error::Domain("compact SVD needs 1 <= columns <= rows"));
    }
    check_finite(m)?;
    let svd = SVD::try_new(m.clone(), true, true, f64::EPSILON, MAX_SWEEPS)
        .ok_or(Error::NumericalFailure)?;
    let u = svd.u.ok_or(Error::NumericalFailure)?;
    let v = svd.v_t.ok_or(Error::NumericalFailure)?.transpose();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut left = Matrix::zeros(n, p);
    let mut right = Matrix::zeros(p, p);
    let mut singular_values = Vec::with_capacity(p);
    for (j, &i) in order.iter().enumerate() {
        left.set_column(j, &u.column(i));
        right.set_column(j, &v.column(i));
        singular_values.push(svd.singular_values[i]);
    }
    fix_column_signs(&mut left, Some(&mut right));
    Ok(CompactSvd {
        left,
        singular_values,
        right,
    })
}

/// An `n×p` matrix with orthonormal columns, a basis of a `p`-plane in `ℝⁿ`.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelBasis(Matrix);

impl StiefelBasis {
    pub fn new(m: Matrix) -> Result<Self> {
        let (n, p) = m.shape();
        if p == 0 || p > n {
            return Err(Error::Domain("a basis needs 1 <= p <= n columns"));
        }
        check_finite(&m)?;
        let residual = orthonormality_residual(&m);
        if residual > ORTHONORMALITY_TOL {
            return Err(Error::NotOrthonormal { residual });
        }
        Ok(Self(m))
    }

    /// Closest orthonormal matrix to `m` (its polar factor); `m` must have
    /// full column rank.
    pub fn orthonormalize(m: &Matrix) -> Result<Self> {
        let svd = compact_svd(m)?;
        let smax = svd.singular_values[0];
        let smin = svd.singular_values[svd.singular_values.len() - 1];
        if !(smin > m.nrows() as f64 * f64::EPSILON * smax) {
            return Err(Error::RankDeficient {
                rank: m.ncols(),
                eigenvalue: smin,
            });
        }
        Ok(Self(svd.polar()))
    }

    pub(crate) fn from_matrix_unchecked(m: Matrix) -> Self {
        debug_assert!(orthonormality_residual(&m) < 1e-8);
        Self(m)
    }

    /// The first `p` canonical basis vectors of `ℝⁿ`.
    pub fn canonical(n: usize, p: usize) -> Result<Self> {
        Self::new(Matrix::identity(n, p))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn p(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// Orthogonal projector `U Uᵀ` onto the span.
    pub fn projector(&self) -> Matrix {
        &self.0 * self.0.transpose()
    }

    /// Another basis `U O` of the same subspace, `O ∈ O(p)`.
    pub fn rotated(&self, o: &Matrix) -> Result<Self> {
        if o.nrows() != self.p() || o.ncols() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: (self.p(), self.p()),
                found: o.shape(),
            });
        }
        Self::new(&self.0 * o)
    }

    /// The basis `Q U` of the rotated subspace, `Q ∈ O(n)`.
    pub fn transformed(&self, q: &Matrix) -> Result<Self> {
        if q.nrows() != self.n() || q.ncols() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: (self.n(), self.n()),
                found: q.shape(),
            });
        }
        Self::new(q * &self.0)
    }
}

pub fn orthonormality_residual(m: &Matrix) -> f64 {
    let p = m.ncols();
    (m.transpose() * m - Matrix::identity(p, p)).norm()
}

fn gap_check(values: &[f64], p: usize, total_dim: usize) -> Result<()> {
    if p >= total_dim {
        return Ok(());
    }
    let next = values.get(p).copied().unwrap_or(0.0);
    let gap = values[p - 1] - next;
    let threshold = EIGENGAP_TOL * math::abs(values[0]);
    if gap > threshold {
        Ok(())
    } else {
        Err(Error::AmbiguousSubspace { gap, threshold })
    }
}

/// Basis of the span of the eigenvectors of the `p` largest eigenvalues.
pub fn dominant_subspace(m: &SymMatrix, p: usize) -> Result<StiefelBasis> {
    if p == 0 || p > m.dim() {
        return Err(Error::Domain("subspace dimension must satisfy 1 <= p <= dim"));
    }
    let eig = sym_eig(m)?;
    gap_check(&eig.values, p, m.dim())?;
    Ok(StiefelBasis(eig.vectors.columns(0, p).into_owned()))
}

/// Dominant `p`-subspace of `Z Zᵀ` for an `n×k` factor `Z`, without
/// forming the `n×n` product when `k ≤ n`.
///
/// An eigenvector `v` of the `k×k` Gram matrix `Zᵀ Z` with eigenvalue `θ`
/// gives the eigenvector `Z v / √θ` of `Z Zᵀ`. Cost is `O(n k²)`.
pub fn dominant_subspace_of_factor(z: &Matrix, p: usize) -> Result<StiefelBasis> {
    let (n, k) = z.shape();
    if p == 0 || p > n {
        return Err(Error::Domain("subspace dimension must satisfy 1 <= p <= n"));
    }
    check_finite(z)?;
    if k > n {
        let gram = SymMatrix::from_matrix_unchecked(z * z.transpose());
        return dominant_subspace(&gram, p);
    }
    if p > k {
        return Err(Error::AmbiguousSubspace {
            gap: 0.0,
            threshold: 0.0,
        });
    }
    let gram = z.transpose() * z;
    let (v, theta) = match small_dominant_by_iteration(&gram, p) {
        Some(found) => found,
        None => {
            let eig = sym_eig(&SymMatrix::from_matrix_unchecked(gram))?;
            gap_check(&eig.values, p, n)?;
            (eig.vectors.columns(0, p).into_owned(), eig.values[..p].to_vec())
        }
    };
    let mut basis = z * v;
    for (j, t) in theta.iter().enumerate() {
        basis.column_mut(j).unscale_mut(math::sqrt(*t));
    }
    let mut basis = basis.qr().q();
    fix_column_signs(&mut basis, None);
    Ok(StiefelBasis(basis))
}

const SUBSPACE_ITERATIONS: usize = 60;
const SUBSPACE_RESIDUAL_TOL: f64 = 1e-13;

/// Block subspace iteration with Rayleigh-Ritz on a small PSD matrix,
/// started from the first `p` coordinate vectors.
///
/// Returns `None` unless the Ritz pairs converge and the leftover trace is
/// below the smallest Ritz value by the eigengap margin, which certifies
/// that the block is the dominant subspace; callers fall back to a dense
/// eigendecomposition.
fn small_dominant_by_iteration(g: &Matrix, p: usize) -> Option<(Matrix, Vec<f64>)> {
    let k = g.nrows();
    if p >= k {
        return None;
    }
    let trace = g.trace();
    let mut x = Matrix::identity(k, p);
    for _ in 0..SUBSPACE_ITERATIONS {
        let y = g * &x;
        let h = x.transpose() * &y;
        let eig = SymmetricEigen::try_new(h.clone() + h.transpose(), f64::EPSILON, 0)?;
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut s = Matrix::zeros(p, p);
        let mut theta = Vec::with_capacity(p);
        for (j, &i) in order.iter().enumerate() {
            s.set_column(j, &eig.eigenvectors.column(i));
            theta.push(0.5 * eig.eigenvalues[i]);
        }
        x = &x * &s;
        let y = y * s;
        let mut residual = y.clone();
        for (j, &t) in theta.iter().enumerate() {
            residual.column_mut(j).axpy(-t, &x.column(j), 1.0);
        }
        if residual.norm() <= SUBSPACE_RESIDUAL_TOL * theta[0] {
            let leftover = trace - theta.iter().sum::<f64>();
            return (leftover < theta[p - 1] - EIGENGAP_TOL * theta[0]).then_some((x, theta));
        }
        x = y.qr().q();
    }
    None
}

fn orthogonalize(v: &mut DVector<f64>, basis: &Matrix, cols: usize) {
    // Two passes of modified Gram-Schmidt.
    for _ in 0..2 {
        for j in 0..cols {
            let c = basis.column(j);
            let d = c.dot(v);
            v.axpy(-d, &c, 1.0);
        }
    }
}

/// Up to `count` orthonormal vectors orthogonal to the orthonormal columns
/// of `existing`, chosen deterministically from projected canonical vectors.
///
/// Returns an `n×count` matrix and the number of columns actually filled;
/// unfilled columns (when the complement is too small) are zero.
pub(crate) fn complement_columns(existing: &Matrix, count: usize) -> (Matrix, usize) {
    let n = existing.nrows();
    let m = existing.ncols();
    let mut all = Matrix::zeros(n, m + count);
    all.columns_mut(0, m).copy_from(existing);
    let mut filled = 0;
    let available = n.saturating_sub(m).min(count);
    let mut used = alloc::vec![false; n];
    for threshold in [0.5, 1e-6] {
        for k in 0..n {
            if filled == available {
                break;
            }
            if used[k] {
                continue;
            }
            let mut v = DVector::zeros(n);
            v[k] = 1.0;
            orthogonalize(&mut v, &all, m + filled);
            let norm = v.norm();
            if norm > threshold {
                used[k] = true;
                all.set_column(m + filled, &(v / norm));
                filled += 1;
            }
        }
    }
    (all.columns(m, count).into_owned(), filled)
}
