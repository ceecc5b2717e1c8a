//! Rank-preserving geometric means on `S⁺(p, n)`.
//!
//! A rank-`p` PSD matrix is stored as `A = U R² Uᵀ` with `U ∈ St(p, n)` and
//! `R² ∈ P_p`. The mean of several such matrices is built in three steps:
//! a mean subspace `W` of the spans, a transport of every shape into `W`
//! along the aligned bases, and an SPD mean of the transported shapes.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::grassmann::{
    align, alignment_rotations, chordal_mean, grassmann_distance, grassmann_geodesic,
    karcher_mean_grassmann_with_report, mean_tangent, GrassmannMeanConfig, KARCHER_BALL_RADIUS,
};
use crate::linalg::{relative_error, sym_eig, symmetrized, Matrix, SpdMatrix, StiefelBasis, SymMatrix};
use crate::math;
use crate::random;
use crate::spd::{
    geometric_mean_with_report, loewner_gap, resolve_weights, spd_geodesic, SpdMeanConfig,
    SpdMeanMethod, SpdMeanReport,
};

/// Default relative threshold for numerical rank decisions.
pub const RANK_TOL: f64 = 1e-10;
/// Tolerance on `‖UᵀΔ‖` for a tangent to count as horizontal.
pub const HORIZONTAL_TOL: f64 = 1e-10;

/// `A = U R² Uᵀ`: a flat `p`-dimensional ellipsoid of shape `R²` inside the
/// subspace spanned by `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdFixedRank {
    basis: StiefelBasis,
    shape: SpdMatrix,
}

impl PsdFixedRank {
    pub fn new(basis: StiefelBasis, shape: SpdMatrix) -> Result<Self> {
        if shape.dim() != basis.p() {
            return Err(Error::DimensionMismatch {
                expected: (basis.p(), basis.p()),
                found: (shape.dim(), shape.dim()),
            });
        }
        Ok(Self { basis, shape })
    }

    pub(crate) fn from_parts_unchecked(basis: StiefelBasis, shape: SpdMatrix) -> Self {
        debug_assert_eq!(basis.p(), shape.dim());
        Self { basis, shape }
    }

    /// `z zᵀ` as a rank-one element: `U = z/‖z‖`, `R² = ‖z‖²`.
    pub fn rank_one(z: &[f64]) -> Result<Self> {
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        let v = Matrix::from_column_slice(z.len(), 1, z);
        let norm = v.norm();
        if z.is_empty() || norm == 0.0 {
            return Err(Error::RankDeficient {
                rank: 1,
                eigenvalue: 0.0,
            });
        }
        Ok(Self {
            basis: StiefelBasis::from_matrix_unchecked(v / norm),
            shape: SpdMatrix::from_matrix_unchecked(Matrix::from_element(1, 1, norm * norm)),
        })
    }

    pub fn n(&self) -> usize {
        self.basis.n()
    }

    pub fn p(&self) -> usize {
        self.basis.p()
    }

    pub fn basis(&self) -> &StiefelBasis {
        &self.basis
    }

    pub fn shape(&self) -> &SpdMatrix {
        &self.shape
    }

    pub fn into_parts(self) -> (StiefelBasis, SpdMatrix) {
        (self.basis, self.shape)
    }

    pub fn to_dense(&self) -> Matrix {
        let u = self.basis.as_matrix();
        symmetrized(u * self.shape.as_matrix() * u.transpose())
    }

    /// The same matrix in the representation `(U O, Oᵀ R² O)`.
    pub fn with_representative(&self, o: &Matrix) -> Result<Self> {
        Ok(Self {
            basis: self.basis.rotated(o)?,
            shape: self.shape.rotated(o)?,
        })
    }

    /// `μ A`.
    pub fn scaled(&self, mu: f64) -> Result<Self> {
        Ok(Self {
            basis: self.basis.clone(),
            shape: self.shape.scaled(mu)?,
        })
    }

    /// `Q A Qᵀ` for an orthogonal `n×n` matrix `Q`.
    pub fn transformed(&self, q: &Matrix) -> Result<Self> {
        Ok(Self {
            basis: self.basis.transformed(q)?,
            shape: self.shape.clone(),
        })
    }

    /// Moore–Penrose pseudo-inverse `U R⁻² Uᵀ`.
    pub fn pseudo_inverse(&self) -> Result<Self> {
        Ok(Self {
            basis: self.basis.clone(),
            shape: self.shape.inverse()?,
        })
    }
}

/// Rank-`p` factorization of a symmetric PSD matrix from its top `p`
/// eigenpairs, with `R² = Uᵀ A U`.
pub fn factorize(dense: &SymMatrix, p: usize, rank_tol: f64) -> Result<PsdFixedRank> {
    let n = dense.dim();
    if p == 0 || p > n {
        return Err(Error::Domain("rank must lie in 1..=n"));
    }
    if !(rank_tol >= 0.0) {
        return Err(Error::InvalidConfig("rank tolerance must be nonnegative"));
    }
    let eig = sym_eig(dense)?;
    let top = eig.values[0];
    let bottom = eig.values[n - 1];
    if top <= 0.0 {
        return Err(Error::RankDeficient {
            rank: p,
            eigenvalue: top,
        });
    }
    if bottom < -rank_tol * top {
        return Err(Error::NotPsd { eigenvalue: bottom });
    }
    if eig.values[p - 1] <= rank_tol * top {
        return Err(Error::RankDeficient {
            rank: p,
            eigenvalue: eig.values[p - 1],
        });
    }
    let u = eig.vectors.columns(0, p).into_owned();
    let shape = symmetrized(u.transpose() * dense.as_matrix() * &u);
    Ok(PsdFixedRank {
        basis: StiefelBasis::from_matrix_unchecked(u),
        shape: SpdMatrix::from_matrix_unchecked(shape),
    })
}

/// Number of eigenvalues above `rank_tol · λ₁`.
pub fn numerical_rank(dense: &Matrix, rank_tol: f64) -> Result<usize> {
    let eig = sym_eig(&SymMatrix::symmetrize(dense.clone())?)?;
    let top = eig.values[0].max(0.0);
    Ok(eig.values.iter().filter(|&&l| l > rank_tol * top && l > 0.0).count())
}

fn check_same_shape(a: &PsdFixedRank, b: &PsdFixedRank) -> Result<()> {
    if a.n() != b.n() || a.p() != b.p() {
        return Err(Error::DimensionMismatch {
            expected: (a.n(), a.p()),
            found: (b.n(), b.p()),
        });
    }
    Ok(())
}

/// Weighted two-matrix mean with weight `1 − α` on `a1` and `α` on `a2`:
/// the subspace moves along the Grassmann geodesic and the shape along the
/// SPD geodesic between the shapes read in the aligned bases.
pub fn mean_two(a1: &PsdFixedRank, a2: &PsdFixedRank, alpha: f64) -> Result<PsdFixedRank> {
    check_same_shape(a1, a2)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain("weight must lie in [0, 1]"));
    }
    let pair = align(&a1.basis, &a2.basis)?;
    let r1 = a1.shape.rotated(pair.rotation1())?;
    let r2 = a2.shape.rotated(pair.rotation2())?;
    Ok(PsdFixedRank {
        basis: grassmann_geodesic(&pair, alpha),
        shape: spd_geodesic(&r1, &r2, alpha)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SubspaceMethod {
    /// Dominant subspace of the weighted projector centroid.
    #[default]
    Chordal,
    /// Riemannian (Karcher) mean of the spans.
    Karcher,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedRankMeanConfig {
    /// Shape mean; its tolerance and iteration cap also drive the Karcher
    /// subspace iteration.
    pub spd: SpdMeanConfig,
    pub subspace: SubspaceMethod,
    pub weights: Option<Vec<f64>>,
    /// Require every span within `π/(4√2)` of the mean subspace.
    pub ball_check: bool,
}

impl Default for FixedRankMeanConfig {
    fn default() -> Self {
        Self {
            spd: SpdMeanConfig::default(),
            subspace: SubspaceMethod::Chordal,
            weights: None,
            ball_check: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FixedRankMeanReport {
    /// Karcher subspace iterations (zero for the chordal mean).
    pub subspace_iterations: usize,
    /// `‖Σ wᵢ log_W(Uᵢ)‖_F` at the returned subspace.
    pub subspace_gradient_norm: f64,
    pub spd: SpdMeanReport,
}

fn check_inputs(matrices: &[PsdFixedRank]) -> Result<()> {
    let first = matrices.first().ok_or(Error::EmptyInput)?;
    matrices.iter().try_for_each(|m| check_same_shape(first, m))
}

pub fn mean_n(matrices: &[PsdFixedRank], config: &FixedRankMeanConfig) -> Result<PsdFixedRank> {
    mean_n_with_report(matrices, config).map(|(m, _)| m)
}

/// N-matrix rank-preserving mean `W M(T₁², …, T_N²) Wᵀ`.
pub fn mean_n_with_report(
    matrices: &[PsdFixedRank],
    config: &FixedRankMeanConfig,
) -> Result<(PsdFixedRank, FixedRankMeanReport)> {
    check_inputs(matrices)?;
    config.spd.validate()?;
    let weights = resolve_weights(config.weights.as_deref(), matrices.len())?;
    let spans: Vec<StiefelBasis> = matrices.iter().map(|m| m.basis.clone()).collect();

    let mut report = FixedRankMeanReport::default();
    let w = match config.subspace {
        SubspaceMethod::Chordal => {
            let w = chordal_mean(&spans, Some(&weights))?;
            if config.ball_check {
                for u in &spans {
                    let distance = grassmann_distance(&w, u)?;
                    if distance >= KARCHER_BALL_RADIUS {
                        return Err(Error::OutOfBall {
                            distance,
                            radius: KARCHER_BALL_RADIUS,
                        });
                    }
                }
            }
            w
        }
        SubspaceMethod::Karcher => {
            let grassmann = GrassmannMeanConfig {
                max_iterations: config.spd.max_iterations,
                tolerance: config.spd.tolerance,
                ball_check: config.ball_check,
            };
            let (w, r) = karcher_mean_grassmann_with_report(&spans, Some(&weights), &grassmann)?;
            report.subspace_iterations = r.iterations;
            w
        }
    };
    report.subspace_gradient_norm = mean_tangent(&w, &spans, &weights)?.norm();

    let (mean, spd_report) = mean_in_subspace(matrices, &w, &weights, &config.spd)?;
    report.spd = spd_report;
    Ok((mean, report))
}

/// Steps two and three of the mean for a given basis `w` of the mean
/// subspace: transport every shape into `w` and average the results.
pub fn mean_in_subspace(
    matrices: &[PsdFixedRank],
    w: &StiefelBasis,
    weights: &[f64],
    config: &SpdMeanConfig,
) -> Result<(PsdFixedRank, SpdMeanReport)> {
    check_inputs(matrices)?;
    // Tᵢ² = Oᵢᵂ Oᵢᵀ Rᵢ² Oᵢ Oᵢᵂᵀ; the product Oᵢ Oᵢᵂᵀ is the polar factor of
    // Uᵢᵀ W and does not depend on how the SVD resolves repeated angles.
    let mut transported = Vec::with_capacity(matrices.len());
    for m in matrices {
        let (o, ow) = alignment_rotations(&m.basis, w)?;
        transported.push(m.shape.rotated(&(o * ow.transpose()))?);
    }
    let (shape, report) = geometric_mean_with_report(&transported, Some(weights), config)?;
    Ok((
        PsdFixedRank {
            basis: w.clone(),
            shape,
        },
        report,
    ))
}

/// Horizontal tangent `(Δ, D)` at some `A = U R² Uᵀ`: `Δ` moves the
/// subspace (`UᵀΔ = 0`), `D` moves the shape.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizontalTangent {
    delta: Matrix,
    d_shape: SymMatrix,
}

impl HorizontalTangent {
    pub fn new(delta: Matrix, d_shape: SymMatrix) -> Result<Self> {
        if delta.ncols() != d_shape.dim() {
            return Err(Error::DimensionMismatch {
                expected: (delta.nrows(), d_shape.dim()),
                found: delta.shape(),
            });
        }
        if delta.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { delta, d_shape })
    }

    /// Tangent at `base` with the vertical part of `delta` removed.
    pub fn projected(base: &PsdFixedRank, delta: &Matrix, d_shape: SymMatrix) -> Result<Self> {
        let u = base.basis.as_matrix();
        Self::new(delta - u * (u.transpose() * delta), d_shape)
    }

    pub fn zeros(n: usize, p: usize) -> Self {
        Self {
            delta: Matrix::zeros(n, p),
            d_shape: SymMatrix::zeros(p),
        }
    }

    pub fn delta(&self) -> &Matrix {
        &self.delta
    }

    pub fn d_shape(&self) -> &SymMatrix {
        &self.d_shape
    }
}

/// `g_k((Δ₁, D₁), (Δ₂, D₂)) = tr(Δ₁ᵀΔ₂) + k tr(R⁻¹ D₁ R⁻² D₂ R⁻¹)` at `base`.
pub fn metric_inner(base: &PsdFixedRank, v1: &HorizontalTangent, v2: &HorizontalTangent, k: f64) -> Result<f64> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Domain("metric weight must be positive"));
    }
    let u = base.basis.as_matrix();
    for v in [v1, v2] {
        if v.delta.shape() != u.shape() {
            return Err(Error::DimensionMismatch {
                expected: u.shape(),
                found: v.delta.shape(),
            });
        }
        if (u.transpose() * &v.delta).norm() > HORIZONTAL_TOL {
            return Err(Error::Domain("tangent is not horizontal"));
        }
    }
    let inv = base.shape.inverse()?;
    let subspace_part = v1.delta.dot(&v2.delta);
    let shape_part = (inv.as_matrix() * v1.d_shape.as_matrix() * inv.as_matrix() * v2.d_shape.as_matrix()).trace();
    Ok(subspace_part + k * shape_part)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropertyStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyCheck {
    pub name: &'static str,
    pub status: PropertyStatus,
    pub residual: f64,
    pub threshold: f64,
    pub note: &'static str,
}

impl PropertyCheck {
    fn measured(name: &'static str, residual: f64, threshold: f64, note: &'static str) -> Self {
        let status = if residual < threshold {
            PropertyStatus::Pass
        } else {
            PropertyStatus::Fail
        };
        Self {
            name,
            status,
            residual,
            threshold,
            note,
        }
    }

    fn skipped(name: &'static str, note: &'static str) -> Self {
        Self {
            name,
            status: PropertyStatus::Skipped,
            residual: f64::NAN,
            threshold: f64::NAN,
            note,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PropertyReport {
    pub checks: Vec<PropertyCheck>,
}

impl PropertyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != PropertyStatus::Fail)
    }

    pub fn get(&self, name: &str) -> Option<&PropertyCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &PropertyCheck> {
        self.checks.iter().filter(|c| c.status == PropertyStatus::Fail)
    }
}

fn dense_mean(matrices: &[PsdFixedRank], config: &FixedRankMeanConfig) -> Result<Matrix> {
    mean_n(matrices, config).map(|m| m.to_dense())
}

fn same_span_and_commuting(matrices: &[PsdFixedRank]) -> Result<bool> {
    let first = &matrices[0];
    for m in matrices {
        if grassmann_distance(&first.basis, &m.basis)? > 1e-10 {
            return Ok(false);
        }
    }
    let dense: Vec<Matrix> = matrices.iter().map(|m| m.to_dense()).collect();
    for a in &dense {
        for b in &dense {
            let scale = a.norm() * b.norm();
            if (a * b - b * a).norm() > 1e-10 * scale {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Commuting same-span family built on the first input's basis and
/// eigenvectors, with random spectra.
fn derived_commuting_family<R: Rng + ?Sized>(matrices: &[PsdFixedRank], rng: &mut R) -> Result<Vec<PsdFixedRank>> {
    let first = &matrices[0];
    let p = first.p();
    let eig = first.shape.eigen()?;
    let mut family = Vec::with_capacity(matrices.len());
    for _ in matrices {
        let spectrum: Vec<f64> = (0..p).map(|_| math::exp(rng.random_range(-2.0..2.0))).collect();
        let mut scaled = eig.vectors.clone();
        for (j, &l) in spectrum.iter().enumerate() {
            scaled.column_mut(j).scale_mut(l);
        }
        let shape = SpdMatrix::from_matrix_unchecked(scaled * eig.vectors.transpose());
        family.push(PsdFixedRank::from_parts_unchecked(first.basis.clone(), shape));
    }
    Ok(family)
}

fn check_pp1<R: Rng + ?Sized>(
    matrices: &[PsdFixedRank],
    weights: &[f64],
    config: &FixedRankMeanConfig,
    rng: &mut R,
) -> Result<PropertyCheck> {
    let (family, note) = if same_span_and_commuting(matrices)? {
        (matrices.to_vec(), "inputs")
    } else {
        (derived_commuting_family(matrices, rng)?, "derived commuting family")
    };
    let u = family[0].basis.as_matrix();
    let p = family[0].p();
    let mut log_sum = Matrix::zeros(p, p);
    for (m, &w) in family.iter().zip(weights) {
        let c = SpdMatrix::from_matrix_unchecked(u.transpose() * m.to_dense() * u);
        log_sum += c.log()?.into_matrix() * w;
    }
    let expected_shape = SymMatrix::from_matrix_unchecked(symmetrized(log_sum)).exp()?;
    let expected = u * expected_shape.as_matrix() * u.transpose();
    let residual = relative_error(&dense_mean(&family, config)?, &expected);
    Ok(PropertyCheck::measured("PP1'", residual, 1e-8, note))
}

fn check_pp2<R: Rng + ?Sized>(
    matrices: &[PsdFixedRank],
    weights: &[f64],
    config: &FixedRankMeanConfig,
    base: &Matrix,
    trials: usize,
    rng: &mut R,
) -> Result<PropertyCheck> {
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let alphas: Vec<f64> = matrices.iter().map(|_| rng.random_range(0.1..10.0)).collect();
        let scaled: Vec<PsdFixedRank> = matrices
            .iter()
            .zip(&alphas)
            .map(|(m, &a)| m.scaled(a))
            .collect::<Result<_>>()?;
        let factor: f64 = alphas.iter().zip(weights).map(|(&a, &w)| math::powf(a, w)).product();
        worst = worst.max(relative_error(&dense_mean(&scaled, config)?, &(base * factor)));
    }
    Ok(PropertyCheck::measured("PP2", worst, 1e-8, "joint homogeneity"))
}

fn check_pp3<R: Rng + ?Sized>(
    matrices: &[PsdFixedRank],
    weights: &[f64],
    config: &FixedRankMeanConfig,
    base: &Matrix,
    trials: usize,
    rng: &mut R,
) -> Result<PropertyCheck> {
    let mut worst: f64 = 0.0;
    let mut order: Vec<usize> = (0..matrices.len()).collect();
    for _ in 0..trials {
        order.shuffle(rng);
        let permuted: Vec<PsdFixedRank> = order.iter().map(|&i| matrices[i].clone()).collect();
        let mut cfg = config.clone();
        cfg.weights = Some(order.iter().map(|&i| weights[i]).collect());
        worst = worst.max(relative_error(&dense_mean(&permuted, &cfg)?, base));
    }
    Ok(PropertyCheck::measured("PP3", worst, 1e-9, "permutation invariance"))
}

fn check_pp4<R: Rng + ?Sized>(
    matrices: &[PsdFixedRank],
    config: &FixedRankMeanConfig,
    trials: usize,
    rng: &mut R,
) -> Result<PropertyCheck> {
    if config.spd.method != SpdMeanMethod::Alm {
        return Ok(PropertyCheck::skipped("PP4", "monotonicity is only established for alm"));
    }
    let lower = mean_n(matrices, config)?;
    let w = lower.basis.as_matrix();
    let lower_restricted = w.transpose() * lower.to_dense() * w;
    let mut worst: f64 = 0.0;
    for _ in 0..trials.max(1) {
        let upper_inputs: Vec<PsdFixedRank> = matrices
            .iter()
            .map(|m| {
                let g = random::gaussian_matrix(m.p(), m.p(), rng);
                let shape = SpdMatrix::from_matrix_unchecked(m.shape.as_matrix() + &g * g.transpose());
                PsdFixedRank::from_parts_unchecked(m.basis.clone(), shape)
            })
            .collect();
        let upper = dense_mean(&upper_inputs, config)?;
        let upper_restricted = w.transpose() * &upper * w;
        let gap = loewner_gap(&lower_restricted, &upper_restricted)? / upper.norm();
        worst = worst.max(-gap);
    }
    Ok(PropertyCheck::measured("PP4", worst.max(0.0), 1e-9, "Loewner order on the mean range"))
}

fn check_pp5(matrices: &[PsdFixedRank], config: &FixedRankMeanConfig, base: &Matrix) -> Result<PropertyCheck> {
    let k = 1e4;
    let mut smallest = f64::INFINITY;
    let shifted: Vec<PsdFixedRank> = matrices
        .iter()
        .map(|m| {
            let eig = m.shape.eigen()?;
            smallest = smallest.min(eig.values[eig.values.len() - 1]);
            let p = m.p();
            let shape = SpdMatrix::from_matrix_unchecked(m.shape.as_matrix() + Matrix::identity(p, p) / k);
            Ok(PsdFixedRank::from_parts_unchecked(m.basis.clone(), shape))
        })
        .collect::<Result<_>>()?;
    // A ≤ A⁽ᵏ⁾ ≤ (1 + 1/(k λ_min)) A, so the relative error is at most 1/(k λ_min).
    let threshold = 1e-4 * (1.0 / smallest).max(1.0);
    let residual = relative_error(&dense_mean(&shifted, config)?, base);
    Ok(PropertyCheck::measured("PP5", residual, threshold, "decreasing sequence at k = 1e4"))
}

fn check_pp6<R: Rng + ?Sized>(
    matrices: &[PsdFixedRank],
    config: &FixedRankMeanConfig,
    base: &Matrix,
    trials: usize,
    rng: &mut R,
) -> Result<PropertyCheck> {
    let n = matrices[0].n();
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let mu = math::exp(rng.random_range(math::ln(0.1)..math::ln(10.0)));
        let p = random::random_orthogonal(n, rng);
        let pt = p.transpose();
        let moved: Vec<PsdFixedRank> = matrices
            .iter()
            .map(|m| m.transformed(&pt)?.scaled(mu))
            .collect::<Result<_>>()?;
        let expected = &pt * base * &p * mu;
        worst = worst.max(relative_error(&dense_mean(&moved, config)?, &expected));
    }
    Ok(PropertyCheck::measured("PP6'", worst, 1e-8, "scaled orthogonal congruence"))
}

fn check_pp7(matrices: &[PsdFixedRank], config: &FixedRankMeanConfig) -> Result<PropertyCheck> {
    let inverses: Vec<PsdFixedRank> = matrices.iter().map(|m| m.pseudo_inverse()).collect::<Result<_>>()?;
    let of_inverses = dense_mean(&inverses, config)?;
    let inverse_of_mean = mean_n(matrices, config)?.pseudo_inverse()?.to_dense();
    let residual = relative_error(&of_inverses, &inverse_of_mean);
    Ok(PropertyCheck::measured("PP7'", residual, 1e-8, "pseudo-inverse commutes with the mean"))
}

/// Runs the property checks on `matrices` under `config`. Randomized checks
/// use `trials` draws from `rng`.
pub fn verify_properties<R: Rng + ?Sized>(
    matrices: &[PsdFixedRank],
    config: &FixedRankMeanConfig,
    trials: usize,
    rng: &mut R,
) -> Result<PropertyReport> {
    check_inputs(matrices)?;
    let weights = resolve_weights(config.weights.as_deref(), matrices.len())?;
    let mut cfg = config.clone();
    cfg.weights = Some(weights.clone());
    let base = dense_mean(matrices, &cfg)?;
    let checks = alloc::vec![
        check_pp1(matrices, &weights, &cfg, rng)?,
        check_pp2(matrices, &weights, &cfg, &base, trials, rng)?,
        check_pp3(matrices, &weights, &cfg, &base, trials, rng)?,
        check_pp4(matrices, &cfg, trials, rng)?,
        check_pp5(matrices, &cfg, &base)?,
        check_pp6(matrices, &cfg, &base, trials, rng)?,
        check_pp7(matrices, &cfg)?,
    ];
    Ok(PropertyReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grassmann::subspace_mean_two;
    use crate::spd::ando_mean;
    use core::f64::consts::PI;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn basis(n: usize, cols: &[&[f64]]) -> StiefelBasis {
        let mut m = Matrix::zeros(n, cols.len());
        for (j, c) in cols.iter().enumerate() {
            for (i, &x) in c.iter().enumerate() {
                m[(i, j)] = x;
            }
        }
        StiefelBasis::orthonormalize(&m).unwrap()
    }

    fn diag(d: &[f64]) -> SpdMatrix {
        SpdMatrix::from_diagonal(d).unwrap()
    }

    fn triple(seed: u64) -> Vec<PsdFixedRank> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let center = random::random_stiefel(6, 2, &mut rng);
        (0..3)
            .map(|_| {
                let u = random::perturbed_subspace(&center, 0.25, &mut rng);
                PsdFixedRank::new(u, random::random_spd(2, 1.0, &mut rng)).unwrap()
            })
            .collect()
    }

    #[test]
    fn factorize_examples() {
        let a = SymMatrix::from_diagonal(&[3.0, 2.0, 0.0]).unwrap();
        let f = factorize(&a, 2, RANK_TOL).unwrap();
        assert!((f.basis().projector() - Matrix::from_diagonal(&nalgebra::DVector::from_vec(alloc::vec![1.0, 1.0, 0.0]))).norm() < 1e-15);
        assert!((f.to_dense() - a.as_matrix()).norm() < 1e-15);
        let r = 3.0;
        let z = [r / core::f64::consts::SQRT_2, r / core::f64::consts::SQRT_2];
        let zz = Matrix::from_column_slice(2, 1, &z);
        let f = factorize(&SymMatrix::new(&zz * zz.transpose()).unwrap(), 1, RANK_TOL).unwrap();
        assert!((f.shape().as_matrix()[(0, 0)] - r * r).abs() < 1e-13);
        assert!((f.basis().projector() - &zz * zz.transpose() / (r * r)).norm() < 1e-15);
    }

    #[test]
    fn factorize_round_trip_and_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let a = random::random_psd_fixed_rank(7, 3, 1.5, &mut rng);
        let f = factorize(&SymMatrix::new(a.to_dense()).unwrap(), 3, RANK_TOL).unwrap();
        assert!((f.to_dense() - a.to_dense()).norm() < 1e-9);
        let neg = SymMatrix::from_diagonal(&[1.0, -0.1]).unwrap();
        assert!(matches!(factorize(&neg, 1, RANK_TOL), Err(Error::NotPsd { .. })));
        let low = SymMatrix::from_diagonal(&[1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(factorize(&low, 2, RANK_TOL), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn pseudo_inverse_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let u = random::random_stiefel(5, 2, &mut rng);
        let proj = PsdFixedRank::new(u, SpdMatrix::identity(2)).unwrap();
        assert!((proj.pseudo_inverse().unwrap().to_dense() - proj.to_dense()).norm() < 1e-15);
        let a = PsdFixedRank::rank_one(&[2.0, 0.0]).unwrap();
        assert!((a.pseudo_inverse().unwrap().shape().as_matrix()[(0, 0)] - 0.25).abs() < 1e-16);
        let a = random::random_psd_fixed_rank(6, 3, 1.0, &mut rng);
        let d = a.to_dense();
        let pinv = a.pseudo_inverse().unwrap().to_dense();
        assert!((&d * &pinv * &d - &d).norm() < 1e-9);
        let twice = a.pseudo_inverse().unwrap().pseudo_inverse().unwrap();
        assert!(relative_error(&twice.to_dense(), &d) < 1e-10);
    }

    #[test]
    fn representation_change_keeps_dense_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let a = random::random_psd_fixed_rank(6, 3, 1.0, &mut rng);
        let o = random::random_orthogonal(3, &mut rng);
        let b = a.with_representative(&o).unwrap();
        assert!((a.to_dense() - b.to_dense()).norm() < 1e-13);
        assert_eq!(numerical_rank(&a.to_dense(), RANK_TOL).unwrap(), 3);
    }

    #[test]
    fn mean_two_idempotent_and_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let a = random::random_psd_fixed_rank(6, 2, 1.0, &mut rng);
        let m = mean_two(&a, &a, 0.5).unwrap();
        assert!(relative_error(&m.to_dense(), &a.to_dense()) < 1e-12);
        let u = random::perturbed_subspace(a.basis(), 0.8, &mut rng);
        let b = PsdFixedRank::new(u, random::random_spd(2, 1.0, &mut rng)).unwrap();
        assert!(relative_error(&mean_two(&a, &b, 0.0).unwrap().to_dense(), &a.to_dense()) < 1e-9);
        assert!(relative_error(&mean_two(&a, &b, 1.0).unwrap().to_dense(), &b.to_dense()) < 1e-9);
        let mid = mean_two(&a, &b, 0.5).unwrap();
        assert_eq!(numerical_rank(&mid.to_dense(), RANK_TOL).unwrap(), 2);
        let w = subspace_mean_two(a.basis(), b.basis(), 0.5).unwrap();
        assert!(grassmann_distance(mid.basis(), &w).unwrap() < 1e-10);
    }

    #[test]
    fn mean_two_planar_bisector() {
        let a = PsdFixedRank::rank_one(&[2.0, 0.0]).unwrap();
        let b = PsdFixedRank::rank_one(&[math::cos(PI / 3.0), math::sin(PI / 3.0)]).unwrap();
        let m = mean_two(&a, &b, 0.5).unwrap();
        let dir = [math::cos(PI / 6.0), math::sin(PI / 6.0)];
        let v = Matrix::from_column_slice(2, 1, &dir);
        let expected = &v * v.transpose() * 2.0;
        assert!((m.to_dense() - expected).norm() < 1e-14);
    }

    #[test]
    fn mean_two_same_span_is_ando_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let u = random::random_stiefel(5, 2, &mut rng);
        let r1 = random::random_spd(2, 1.0, &mut rng);
        let r2 = random::random_spd(2, 1.0, &mut rng);
        let a = PsdFixedRank::new(u.clone(), r1.clone()).unwrap();
        let b = PsdFixedRank::new(u.clone(), r2.clone()).unwrap();
        let expected = PsdFixedRank::new(u, ando_mean(&r1, &r2).unwrap()).unwrap().to_dense();
        let m = mean_two(&a, &b, 0.5).unwrap();
        assert!(relative_error(&m.to_dense(), &expected) < 1e-12);
        let o = random::random_orthogonal(2, &mut rng);
        let m2 = mean_two(&a.with_representative(&o).unwrap(), &b, 0.5).unwrap();
        assert!(relative_error(&m2.to_dense(), &expected) < 1e-12);
    }

    #[test]
    fn mean_n_examples() {
        let cfg = FixedRankMeanConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let a = random::random_psd_fixed_rank(6, 2, 1.0, &mut rng);
        let m = mean_n(&[a.clone(), a.clone(), a.clone()], &cfg).unwrap();
        assert!(relative_error(&m.to_dense(), &a.to_dense()) < 1e-12);

        let u = basis(4, &[&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0]]);
        let inputs: Vec<PsdFixedRank> = [[1.0, 1.0], [8.0, 27.0], [64.0, 8.0]]
            .iter()
            .map(|d| PsdFixedRank::new(u.clone(), diag(d)).unwrap())
            .collect();
        let m = mean_n(&inputs, &cfg).unwrap();
        let expected = Matrix::from_diagonal(&nalgebra::DVector::from_vec(alloc::vec![8.0, 6.0, 0.0, 0.0]));
        assert!((m.to_dense() - expected).norm() < 1e-9);
    }

    #[test]
    fn mean_n_of_projectors_is_subspace_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let center = random::random_stiefel(7, 3, &mut rng);
        let spans: Vec<StiefelBasis> = (0..4).map(|_| random::perturbed_subspace(&center, 0.3, &mut rng)).collect();
        let inputs: Vec<PsdFixedRank> = spans
            .iter()
            .map(|u| PsdFixedRank::new(u.clone(), SpdMatrix::identity(3)).unwrap())
            .collect();
        for method in [SubspaceMethod::Chordal, SubspaceMethod::Karcher] {
            let cfg = FixedRankMeanConfig {
                subspace: method,
                ..Default::default()
            };
            let m = mean_n(&inputs, &cfg).unwrap();
            assert!((m.to_dense() - m.basis().projector()).norm() < 1e-9);
        }
    }

    #[test]
    fn mean_n_two_inputs_matches_mean_two() {
        let cfg = FixedRankMeanConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(48);
        for _ in 0..5 {
            let a = random::random_psd_fixed_rank(6, 2, 1.0, &mut rng);
            let u = random::perturbed_subspace(a.basis(), 0.7, &mut rng);
            let b = PsdFixedRank::new(u, random::random_spd(2, 1.0, &mut rng)).unwrap();
            let m = mean_n(&[a.clone(), b.clone()], &cfg).unwrap();
            let direct = mean_two(&a, &b, 0.5).unwrap();
            assert!((m.to_dense() - direct.to_dense()).norm() < 1e-7);
        }
    }

    #[test]
    fn mean_n_full_rank_reduces_to_spd_mean() {
        let cfg = FixedRankMeanConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(49);
        let a = random::random_psd_fixed_rank(3, 3, 1.0, &mut rng);
        let b = random::random_psd_fixed_rank(3, 3, 1.0, &mut rng);
        let m = mean_n(&[a.clone(), b.clone()], &cfg).unwrap();
        let ando = ando_mean(
            &SpdMatrix::new(a.to_dense()).unwrap(),
            &SpdMatrix::new(b.to_dense()).unwrap(),
        )
        .unwrap();
        assert!(relative_error(&m.to_dense(), ando.as_matrix()) < 1e-9);
    }

    #[test]
    fn mean_n_rejects_bad_input() {
        let cfg = FixedRankMeanConfig::default();
        assert!(matches!(mean_n(&[], &cfg), Err(Error::EmptyInput)));
        let a = PsdFixedRank::rank_one(&[1.0, 0.0]).unwrap();
        let b = PsdFixedRank::rank_one(&[0.0, 1.0]).unwrap();
        assert!(mean_n(&[a.clone(), b.clone()], &cfg).is_err());
        let c = PsdFixedRank::rank_one(&[1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(mean_n(&[a, c], &cfg), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn metric_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let base = PsdFixedRank::new(random::random_stiefel(5, 2, &mut rng), SpdMatrix::identity(2)).unwrap();
        let zero = HorizontalTangent::zeros(5, 2);
        assert_eq!(metric_inner(&base, &zero, &zero, 1.0).unwrap(), 0.0);
        let shape_only = HorizontalTangent::new(Matrix::zeros(5, 2), SymMatrix::identity(2)).unwrap();
        assert!((metric_inner(&base, &shape_only, &shape_only, 1.0).unwrap() - 2.0).abs() < 1e-14);
        let g = random::gaussian_matrix(5, 2, &mut rng);
        let mut v = HorizontalTangent::projected(&base, &g, SymMatrix::zeros(2)).unwrap();
        let norm = v.delta.norm();
        v.delta /= norm;
        assert!((metric_inner(&base, &v, &v, 3.0).unwrap() - 1.0).abs() < 1e-14);
        let vertical = HorizontalTangent::new(base.basis().as_matrix().clone(), SymMatrix::zeros(2)).unwrap();
        assert!(metric_inner(&base, &vertical, &vertical, 1.0).is_err());
    }

    #[test]
    fn metric_is_symmetric_positive_and_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let base = random::random_psd_fixed_rank(6, 2, 1.0, &mut rng);
        let tangent = |rng: &mut ChaCha8Rng| {
            let g = random::gaussian_matrix(6, 2, rng);
            let d = random::gaussian_matrix(2, 2, rng);
            HorizontalTangent::projected(&base, &g, SymMatrix::symmetrize(&d + d.transpose()).unwrap()).unwrap()
        };
        let v1 = tangent(&mut rng);
        let v2 = tangent(&mut rng);
        let k = 0.7;
        let g12 = metric_inner(&base, &v1, &v2, k).unwrap();
        let g21 = metric_inner(&base, &v2, &v1, k).unwrap();
        assert!((g12 - g21).abs() < 1e-12 * g12.abs().max(1.0));
        assert!(metric_inner(&base, &v1, &v1, k).unwrap() > 0.0);
        let q = random::random_orthogonal(6, &mut rng);
        let moved = base.transformed(&q).unwrap();
        let rot = |v: &HorizontalTangent| HorizontalTangent::new(&q * &v.delta, v.d_shape.clone()).unwrap();
        let g12q = metric_inner(&moved, &rot(&v1), &rot(&v2), k).unwrap();
        assert!((g12 - g12q).abs() < 1e-10 * g12.abs().max(1.0));
    }

    #[test]
    fn property_report_on_random_triple() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let inputs = triple(53);
        let report = verify_properties(&inputs, &FixedRankMeanConfig::default(), 3, &mut rng).unwrap();
        assert!(report.all_passed(), "{report:?}");
        assert_eq!(report.get("PP4").unwrap().status, PropertyStatus::Skipped);
        let alm = FixedRankMeanConfig {
            spd: SpdMeanConfig {
                method: SpdMeanMethod::Alm,
                ..Default::default()
            },
            ..Default::default()
        };
        let report = verify_properties(&inputs, &alm, 2, &mut rng).unwrap();
        assert!(report.all_passed(), "{report:?}");
        assert_eq!(report.get("PP4").unwrap().status, PropertyStatus::Pass);
    }
}
