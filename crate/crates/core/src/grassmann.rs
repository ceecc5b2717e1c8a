//! Subspaces of `ℝⁿ` as points of the Grassmann manifold `Gr(p, n)`.
//!
//! A subspace is carried by any [`StiefelBasis`] spanning it. Two bases are
//! *aligned* when they are the endpoints of a horizontal geodesic, i.e. when
//! `Y₁ᵀ Y₂ = cos Σ` is diagonal with the principal angles `Σ`. Aligned bases
//! come from the SVD `U₁ᵀ U₂ = O₁ cos Σ O₂ᵀ`, and the geodesic between them
//! is `Y(t) = Y₁ cos(Σt) + X sin(Σt)`.
//!
//! Principal angles are evaluated as `atan2(sin θ, cos θ)` with the sines
//! taken from the component of `Y₂` orthogonal to `Y₁`; this keeps full
//! relative accuracy for small angles, where `arccos` of a singular value
//! close to one loses half the digits.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI, SQRT_2};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{complement_columns, compact_svd, dominant_subspace_of_factor, Matrix, StiefelBasis};
use crate::math;
use crate::spd::resolve_weights;

/// Principal angles at or above `π/2 − CUT_LOCUS_MARGIN` are rejected.
pub const CUT_LOCUS_MARGIN: f64 = 1e-6;
/// Radius of the geodesic ball in which the Karcher mean of subspaces is
/// unique: `π / (4√2)`.
pub const KARCHER_BALL_RADIUS: f64 = PI / (4.0 * SQRT_2);
/// Sines below this are treated as zero angles when building directions.
const ZERO_SINE: f64 = 1e-10;
/// A normalized residual that keeps less than this norm after removing the
/// directions already chosen is numerically dependent on them.
const DEPENDENT_NORM: f64 = 0.5;

/// Principal angles between two `p`-planes, ascending in `[0, π/2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalAngles(Vec<f64>);

impl PrincipalAngles {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn largest(&self) -> f64 {
        self.0.last().copied().unwrap_or(0.0)
    }

    /// `‖θ‖₂`, the Grassmann geodesic distance.
    pub fn norm(&self) -> f64 {
        math::sqrt(self.0.iter().map(|t| t * t).sum())
    }
}

/// Bases `y1 = U₁O₁`, `y2 = U₂O₂` of two subspaces with `y1ᵀy2 = cos Σ`,
/// and the direction `X` (`Xᵀy1 = 0`) of the geodesic joining them.
///
/// Columns of `X` for nonzero angles are orthonormal. Zero-angle columns
/// are completed orthonormally while `ℝⁿ` has room left and are zero
/// otherwise; they never move the geodesic.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPair {
    y1: StiefelBasis,
    y2: StiefelBasis,
    angles: PrincipalAngles,
    direction: Matrix,
    rotation1: Matrix,
    rotation2: Matrix,
}

impl AlignedPair {
    pub fn y1(&self) -> &StiefelBasis {
        &self.y1
    }

    pub fn y2(&self) -> &StiefelBasis {
        &self.y2
    }

    pub fn angles(&self) -> &PrincipalAngles {
        &self.angles
    }

    /// `X`, orthonormal on nonzero-angle columns and completed by
    /// orthonormal vectors on zero-angle columns where room allows.
    pub fn direction(&self) -> &Matrix {
        &self.direction
    }

    /// `O₁` with `y1 = U₁ O₁`.
    pub fn rotation1(&self) -> &Matrix {
        &self.rotation1
    }

    /// `O₂` with `y2 = U₂ O₂`.
    pub fn rotation2(&self) -> &Matrix {
        &self.rotation2
    }
}

struct Alignment {
    o1: Matrix,
    o2: Matrix,
    y1: Matrix,
    y2: Matrix,
    /// `(I − y1 y1ᵀ) y2`, whose column norms are the sines.
    residual: Matrix,
    sines: Vec<f64>,
    angles: Vec<f64>,
}

fn check_pair(u1: &StiefelBasis, u2: &StiefelBasis) -> Result<()> {
    if u1.n() != u2.n() || u1.p() != u2.p() {
        return Err(Error::DimensionMismatch {
            expected: (u1.n(), u1.p()),
            found: (u2.n(), u2.p()),
        });
    }
    Ok(())
}

fn permute_columns(m: &Matrix, order: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(m.nrows(), m.ncols());
    for (j, &i) in order.iter().enumerate() {
        out.set_column(j, &m.column(i));
    }
    out
}

fn alignment(u1: &StiefelBasis, u2: &StiefelBasis) -> Result<Alignment> {
    check_pair(u1, u2)?;
    let svd = compact_svd(&(u1.as_matrix().transpose() * u2.as_matrix()))?;
    let mut o1 = svd.left;
    let mut o2 = svd.right;
    let mut y1 = u1.as_matrix() * &o1;
    let mut y2 = u2.as_matrix() * &o2;
    let mut residual = &y2 - &y1 * (y1.transpose() * &y2);
    let p = u1.p();
    let mut sines: Vec<f64> = (0..p).map(|j| residual.column(j).norm()).collect();
    let mut angles: Vec<f64> = (0..p)
        .map(|j| math::atan2(sines[j], svd.singular_values[j].clamp(0.0, 1.0)))
        .collect();
    if angles.windows(2).any(|w| w[0] > w[1]) {
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| angles[a].total_cmp(&angles[b]));
        o1 = permute_columns(&o1, &order);
        o2 = permute_columns(&o2, &order);
        y1 = permute_columns(&y1, &order);
        y2 = permute_columns(&y2, &order);
        residual = permute_columns(&residual, &order);
        sines = order.iter().map(|&i| sines[i]).collect();
        angles = order.iter().map(|&i| angles[i]).collect();
    }
    Ok(Alignment {
        o1,
        o2,
        y1,
        y2,
        residual,
        sines,
        angles,
    })
}

fn check_cut_locus(angles: &[f64]) -> Result<()> {
    let largest = angles.last().copied().unwrap_or(0.0);
    if largest >= FRAC_PI_2 - CUT_LOCUS_MARGIN {
        return Err(Error::AlignmentSingular { angle: largest });
    }
    Ok(())
}

pub fn principal_angles(u1: &StiefelBasis, u2: &StiefelBasis) -> Result<PrincipalAngles> {
    Ok(PrincipalAngles(alignment(u1, u2)?.angles))
}

pub fn grassmann_distance(u1: &StiefelBasis, u2: &StiefelBasis) -> Result<f64> {
    principal_angles(u1, u2).map(|a| a.norm())
}

fn build_direction(al: &Alignment) -> Matrix {
    let (n, p) = al.y1.shape();
    let mut direction = Matrix::zeros(n, p);
    let mut basis = Matrix::zeros(n, 2 * p);
    basis.columns_mut(0, p).copy_from(&al.y1);
    let mut count = p;
    let mut zero_columns = Vec::new();
    // Largest angles first: a sine barely above ZERO_SINE may be noise, and
    // must not use up a complement direction that a real angle needs.
    for j in (0..p).rev() {
        if al.sines[j] <= ZERO_SINE {
            zero_columns.push(j);
            continue;
        }
        let mut v: DVector<f64> = al.residual.column(j) / al.sines[j];
        for _ in 0..2 {
            for k in 0..count {
                let c = basis.column(k);
                let d = c.dot(&v);
                v.axpy(-d, &c, 1.0);
            }
        }
        let norm = v.norm();
        if norm < DEPENDENT_NORM {
            zero_columns.push(j);
            continue;
        }
        let v = v / norm;
        direction.set_column(j, &v);
        basis.set_column(count, &v);
        count += 1;
    }
    zero_columns.sort_unstable();
    if !zero_columns.is_empty() {
        let (fill, _) = complement_columns(&basis.columns(0, count).into_owned(), zero_columns.len());
        for (k, &j) in zero_columns.iter().enumerate() {
            direction.set_column(j, &fill.column(k));
        }
    }
    direction
}

/// Aligned representatives of two subspaces whose principal angles are all
/// below `π/2 − CUT_LOCUS_MARGIN`.
pub fn align(u1: &StiefelBasis, u2: &StiefelBasis) -> Result<AlignedPair> {
    let al = alignment(u1, u2)?;
    check_cut_locus(&al.angles)?;
    let direction = build_direction(&al);
    Ok(AlignedPair {
        y1: StiefelBasis::from_matrix_unchecked(al.y1),
        y2: StiefelBasis::from_matrix_unchecked(al.y2),
        angles: PrincipalAngles(al.angles),
        direction,
        rotation1: al.o1,
        rotation2: al.o2,
    })
}

/// `(O₁, O₂)` of the alignment of `u1` with `u2`, after the cut-locus check.
pub(crate) fn alignment_rotations(u1: &StiefelBasis, u2: &StiefelBasis) -> Result<(Matrix, Matrix)> {
    let al = alignment(u1, u2)?;
    check_cut_locus(&al.angles)?;
    Ok((al.o1, al.o2))
}

/// `Y(t) = y1 cos(Σt) + X sin(Σt)`.
pub fn grassmann_geodesic(pair: &AlignedPair, t: f64) -> StiefelBasis {
    let mut y = pair.y1.as_matrix().clone();
    for (j, &theta) in pair.angles.0.iter().enumerate() {
        let (s, c) = (math::sin(theta * t), math::cos(theta * t));
        let col = pair.y1.as_matrix().column(j) * c + pair.direction.column(j) * s;
        y.set_column(j, &col);
    }
    StiefelBasis::from_matrix_unchecked(y)
}

/// Weighted mean of two subspaces: weight `1 − α` on `u1`, `α` on `u2`.
pub fn subspace_mean_two(u1: &StiefelBasis, u2: &StiefelBasis, alpha: f64) -> Result<StiefelBasis> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain("weight must lie in [0, 1]"));
    }
    Ok(grassmann_geodesic(&align(u1, u2)?, alpha))
}

/// Riemannian logarithm at `w`: the horizontal tangent `X Σ O₁ᵀ` pointing
/// from `w` to `span(u)`, expressed for the basis `w` itself.
pub fn log_map(w: &StiefelBasis, u: &StiefelBasis) -> Result<Matrix> {
    let al = alignment(w, u)?;
    check_cut_locus(&al.angles)?;
    let mut scaled = al.residual;
    for j in 0..scaled.ncols() {
        let factor = if al.sines[j] > 0.0 {
            al.angles[j] / al.sines[j]
        } else {
            1.0
        };
        scaled.column_mut(j).scale_mut(factor);
    }
    Ok(scaled * al.o1.transpose())
}

/// Riemannian exponential at `w` of the tangent `Δ` (its vertical part is
/// discarded): `W V cos S Vᵀ + Q sin S Vᵀ` with `Δ = Q S Vᵀ`.
pub fn exp_map(w: &StiefelBasis, tangent: &Matrix) -> Result<StiefelBasis> {
    if tangent.shape() != (w.n(), w.p()) {
        return Err(Error::DimensionMismatch {
            expected: (w.n(), w.p()),
            found: tangent.shape(),
        });
    }
    let wm = w.as_matrix();
    let horizontal = tangent - wm * (wm.transpose() * tangent);
    if horizontal.norm() == 0.0 {
        return Ok(w.clone());
    }
    let svd = compact_svd(&horizontal)?;
    let p = w.p();
    let mut cos_part = svd.right.clone();
    let mut sin_part = svd.left.clone();
    for j in 0..p {
        let s = svd.singular_values[j];
        cos_part.column_mut(j).scale_mut(math::cos(s));
        sin_part.column_mut(j).scale_mut(math::sin(s));
    }
    let moved = (wm * cos_part + sin_part) * svd.right.transpose();
    StiefelBasis::orthonormalize(&moved)
}

fn check_subspaces(subspaces: &[StiefelBasis]) -> Result<(usize, usize)> {
    let first = subspaces.first().ok_or(Error::EmptyInput)?;
    for u in subspaces {
        check_pair(first, u)?;
    }
    Ok((first.n(), first.p()))
}

/// Chordal mean: the dominant `p`-subspace of `Σ wᵢ Uᵢ Uᵢᵀ`, computed from
/// the `n × Np` factor `[√w₁ U₁, …]` in `O(n N² p²)`.
pub fn chordal_mean(subspaces: &[StiefelBasis], weights: Option<&[f64]>) -> Result<StiefelBasis> {
    let (n, p) = check_subspaces(subspaces)?;
    let weights = resolve_weights(weights, subspaces.len())?;
    let mut factor = Matrix::zeros(n, p * subspaces.len());
    for (i, (u, &w)) in subspaces.iter().zip(&weights).enumerate() {
        factor
            .columns_mut(i * p, p)
            .copy_from(&(u.as_matrix() * math::sqrt(w)));
    }
    dominant_subspace_of_factor(&factor, p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrassmannMeanConfig {
    pub max_iterations: usize,
    /// Threshold on the Frobenius norm of the mean tangent.
    pub tolerance: f64,
    /// Reject inputs farther than [`KARCHER_BALL_RADIUS`] from the chordal
    /// initializer.
    pub ball_check: bool,
}

impl Default for GrassmannMeanConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-10,
            ball_check: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GrassmannMeanReport {
    pub iterations: usize,
    pub gradient_norm: f64,
}

/// `Σ wᵢ log_W(Uᵢ)`, the negative Riemannian gradient of half the
/// weighted sum of squared distances.
pub fn mean_tangent(w: &StiefelBasis, subspaces: &[StiefelBasis], weights: &[f64]) -> Result<Matrix> {
    let mut tangent = Matrix::zeros(w.n(), w.p());
    for (u, &wt) in subspaces.iter().zip(weights) {
        tangent += log_map(w, u)? * wt;
    }
    Ok(tangent)
}

pub fn karcher_mean_grassmann(
    subspaces: &[StiefelBasis],
    weights: Option<&[f64]>,
    config: &GrassmannMeanConfig,
) -> Result<StiefelBasis> {
    karcher_mean_grassmann_with_report(subspaces, weights, config).map(|(w, _)| w)
}

/// Riemannian gradient descent with unit step from the chordal mean.
pub fn karcher_mean_grassmann_with_report(
    subspaces: &[StiefelBasis],
    weights: Option<&[f64]>,
    config: &GrassmannMeanConfig,
) -> Result<(StiefelBasis, GrassmannMeanReport)> {
    if !(config.tolerance > 0.0) || config.max_iterations == 0 {
        return Err(Error::InvalidConfig("tolerance must be positive and max_iterations at least 1"));
    }
    check_subspaces(subspaces)?;
    let weights = resolve_weights(weights, subspaces.len())?;
    let mut w = chordal_mean(subspaces, Some(&weights))?;
    if config.ball_check {
        for u in subspaces {
            let distance = grassmann_distance(&w, u)?;
            if distance >= KARCHER_BALL_RADIUS {
                return Err(Error::OutOfBall {
                    distance,
                    radius: KARCHER_BALL_RADIUS,
                });
            }
        }
    }
    let mut gradient_norm = f64::INFINITY;
    for iteration in 0..config.max_iterations {
        let tangent = mean_tangent(&w, subspaces, &weights)?;
        gradient_norm = tangent.norm();
        if gradient_norm < config.tolerance {
            return Ok((
                w,
                GrassmannMeanReport {
                    iterations: iteration,
                    gradient_norm,
                },
            ));
        }
        w = exp_map(&w, &tangent)?;
    }
    Err(Error::NoConvergence {
        iterations: config.max_iterations,
        residual: gradient_norm,
        last_iterate: Some(alloc::boxed::Box::new(w.into_matrix())),
    })
}

/// The rotation of `ℝⁿ` closest to the identity that maps `y1` onto `y2`:
/// a planar rotation by `θⱼ` in each plane `(y1ⱼ, Xⱼ)` and the identity on
/// the orthogonal complement of those planes.
pub fn minimal_rotation(pair: &AlignedPair) -> Matrix {
    let n = pair.y1.n();
    let mut r = Matrix::identity(n, n);
    for (j, &theta) in pair.angles.0.iter().enumerate() {
        if theta == 0.0 || pair.direction.column(j).norm() == 0.0 {
            continue;
        }
        let a = pair.y1.as_matrix().column(j);
        let x = pair.direction.column(j);
        let (s, c) = (math::sin(theta), math::cos(theta));
        r += (a * a.transpose() + x * x.transpose()) * (c - 1.0);
        r += (x * a.transpose() - a * x.transpose()) * s;
    }
    r
}
