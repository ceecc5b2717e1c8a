//! Seeded generators for test inputs, property checks and experiments.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::fixed_rank::PsdFixedRank;
use crate::grassmann;
use crate::linalg::{Matrix, SpdMatrix, StiefelBasis};
use crate::math;

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Haar-distributed orthogonal matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Matrix {
    haar_columns(gaussian_matrix(n, n, rng))
}

/// Uniformly distributed `p`-plane in `ℝⁿ`, with a Haar-distributed basis.
pub fn random_stiefel<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> StiefelBasis {
    StiefelBasis::from_matrix_unchecked(haar_columns(gaussian_matrix(n, p, rng)))
}

/// `Q` from the thin QR of a Gaussian matrix, with the sign of `R`'s
/// diagonal folded in so that the distribution is Haar.
fn haar_columns(g: Matrix) -> Matrix {
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `Q diag(e^{s_k}) Qᵀ` with `s_k` uniform in `[-log_spread, log_spread]`.
pub fn random_spd<R: Rng + ?Sized>(p: usize, log_spread: f64, rng: &mut R) -> SpdMatrix {
    let q = random_orthogonal(p, rng);
    let mut scaled = q.clone();
    for j in 0..p {
        let s: f64 = rng.random_range(-1.0..=1.0) * log_spread;
        scaled.column_mut(j).scale_mut(math::exp(s));
    }
    SpdMatrix::from_matrix_unchecked(scaled * q.transpose())
}

pub fn random_psd_fixed_rank<R: Rng + ?Sized>(n: usize, p: usize, log_spread: f64, rng: &mut R) -> PsdFixedRank {
    let basis = random_stiefel(n, p, rng);
    let shape = random_spd(p, log_spread, rng);
    PsdFixedRank::from_parts_unchecked(basis, shape)
}

/// A subspace at Grassmann distance exactly `distance` (< π/2) from `base`,
/// in a uniformly random horizontal direction.
pub fn perturbed_subspace<R: Rng + ?Sized>(base: &StiefelBasis, distance: f64, rng: &mut R) -> StiefelBasis {
    let u = base.as_matrix();
    let g = gaussian_matrix(base.n(), base.p(), rng);
    let horizontal = &g - u * (u.transpose() * &g);
    let norm = horizontal.norm();
    let tangent = horizontal * (distance / norm);
    grassmann::exp_map(base, &tangent).expect("horizontal tangent of a valid basis")
}

/// Random skew-symmetric `n×n` matrix of unit Frobenius norm.
pub fn random_skew<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Matrix {
    let g = gaussian_matrix(n, n, rng);
    let k = &g - g.transpose();
    let norm = k.norm();
    k / norm
}

/// Exponential of a square matrix by scaling and squaring a Taylor series.
pub fn expm(m: &Matrix) -> Matrix {
    let n = m.nrows();
    let norm = m.norm();
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale *= 0.5;
        squarings += 1;
    }
    let a = m * scale;
    let mut term = Matrix::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=20 {
        term = &term * &a / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Rotation `exp(ε K)` for a random unit-norm skew `K`.
pub fn rotation_of_magnitude<R: Rng + ?Sized>(n: usize, epsilon: f64, rng: &mut R) -> Matrix {
    expm(&(random_skew(n, rng) * epsilon))
}

/// Haar-distributed element of SO(p).
pub fn random_rotation<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Matrix {
    let mut q = random_orthogonal(p, rng);
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    q
}
