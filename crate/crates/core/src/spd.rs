//! Geometric means and distances on the open cone of SPD matrices.
//!
//! All quantities are taken with respect to the affine-invariant metric
//! `g_A(D₁, D₂) = tr(D₁ A⁻¹ D₂ A⁻¹)`: its geodesic midpoint is the Ando mean
//! `A # B`, its distance is `‖log(A^{-1/2} B A^{-1/2})‖_F`, and its Karcher
//! mean of N points is the `ls` mean. The Ando–Li–Mathias (`alm`) mean is the
//! common limit of the recursive "average the others" iteration.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{spectral_map, symmetrized, Matrix, SpdMatrix, SymMatrix};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpdMeanMethod {
    /// Karcher (least-squares) mean.
    #[default]
    Ls,
    /// Ando–Li–Mathias recursive mean.
    Alm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpdMeanConfig {
    pub method: SpdMeanMethod,
    pub max_iterations: usize,
    /// Stopping threshold: Karcher gradient norm per dimension for `ls`,
    /// largest pairwise distance for `alm`.
    pub tolerance: f64,
    /// Step along the Karcher gradient, in `(0, 1]`.
    pub step_size: f64,
}

impl Default for SpdMeanConfig {
    fn default() -> Self {
        Self {
            method: SpdMeanMethod::Ls,
            max_iterations: 200,
            tolerance: 1e-10,
            step_size: 1.0,
        }
    }
}

impl SpdMeanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig("tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be at least 1"));
        }
        if !(self.step_size > 0.0 && self.step_size <= 1.0) {
            return Err(Error::InvalidConfig("step_size must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Convergence diagnostics of an iterative mean.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpdMeanReport {
    pub iterations: usize,
    /// Final Karcher gradient norm (`ls`) or pairwise diameter (`alm`).
    pub residual: f64,
}

/// Checks optional weights against `count` inputs and returns them, or
/// uniform weights when absent. Weights must be positive and sum to one.
pub fn resolve_weights(weights: Option<&[f64]>, count: usize) -> Result<Vec<f64>> {
    match weights {
        None => Ok(alloc::vec![1.0 / count as f64; count]),
        Some(w) => {
            if w.len() != count {
                return Err(Error::InvalidWeights("one weight per input is required"));
            }
            if !w.iter().all(|&x| x > 0.0 && x.is_finite()) {
                return Err(Error::InvalidWeights("weights must be positive and finite"));
            }
            let sum: f64 = w.iter().sum();
            if math::abs(sum - 1.0) > 1e-9 {
                return Err(Error::InvalidWeights("weights must sum to one"));
            }
            Ok(w.to_vec())
        }
    }
}

fn check_same_dim(a: &SpdMatrix, b: &SpdMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: (a.dim(), a.dim()),
            found: (b.dim(), b.dim()),
        });
    }
    Ok(())
}

fn check_all_same_dim(matrices: &[SpdMatrix]) -> Result<()> {
    let first = matrices.first().ok_or(Error::EmptyInput)?;
    matrices.iter().try_for_each(|m| check_same_dim(first, m))
}

/// `A^{1/2} f(A^{-1/2} B A^{-1/2}) A^{1/2}` with `f` applied spectrally.
fn congruence_map(a: &SpdMatrix, b: &SpdMatrix, f: impl Fn(f64) -> f64) -> Result<SpdMatrix> {
    check_same_dim(a, b)?;
    let half = a.sqrt()?;
    let inv_half = a.inv_sqrt()?;
    let whitened = SpdMatrix::from_matrix_unchecked(inv_half.as_matrix() * b.as_matrix() * inv_half.as_matrix());
    let inner = whitened.eigen()?.compose(f);
    Ok(SpdMatrix::from_matrix_unchecked(
        half.as_matrix() * inner * half.as_matrix(),
    ))
}

/// Ando geometric mean `A # B = A^{1/2} (A^{-1/2} B A^{-1/2})^{1/2} A^{1/2}`.
pub fn ando_mean(a: &SpdMatrix, b: &SpdMatrix) -> Result<SpdMatrix> {
    congruence_map(a, b, math::sqrt)
}

/// Point at parameter `t ∈ [0, 1]` on the geodesic from `a` to `b`:
/// `A^{1/2} (A^{-1/2} B A^{-1/2})^t A^{1/2}`.
pub fn spd_geodesic(a: &SpdMatrix, b: &SpdMatrix, t: f64) -> Result<SpdMatrix> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain("geodesic parameter must lie in [0, 1]"));
    }
    check_same_dim(a, b)?;
    if t == 0.0 {
        return Ok(a.clone());
    }
    if t == 1.0 {
        return Ok(b.clone());
    }
    if t == 0.5 {
        return ando_mean(a, b);
    }
    congruence_map(a, b, |l| math::powf(l, t))
}

/// Affine-invariant distance `√(Σ log² λ_k)` over the generalized
/// eigenvalues of the pencil `(B, A)`.
pub fn spd_distance(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    check_same_dim(a, b)?;
    let inv_half = a.inv_sqrt()?;
    let whitened = SpdMatrix::from_matrix_unchecked(inv_half.as_matrix() * b.as_matrix() * inv_half.as_matrix());
    let eig = whitened.eigen()?;
    let sq: f64 = eig.values.iter().map(|&l| {
        let g = math::ln(l);
        g * g
    }).sum();
    Ok(math::sqrt(sq))
}

fn arithmetic_mean(matrices: &[SpdMatrix], weights: &[f64]) -> SpdMatrix {
    let p = matrices[0].dim();
    let mut acc = Matrix::zeros(p, p);
    for (m, &w) in matrices.iter().zip(weights) {
        acc += m.as_matrix() * w;
    }
    SpdMatrix::from_matrix_unchecked(acc)
}

/// Weighted Karcher (`ls`) mean on the SPD cone.
pub fn karcher_mean_spd(
    matrices: &[SpdMatrix],
    weights: Option<&[f64]>,
    config: &SpdMeanConfig,
) -> Result<SpdMatrix> {
    karcher_mean_spd_with_report(matrices, weights, config).map(|(m, _)| m)
}

/// Fixed-point iteration
/// `X ← X^{1/2} exp(step · Σ wᵢ log(X^{-1/2} Aᵢ X^{-1/2})) X^{1/2}`
/// from the weighted arithmetic mean, stopping once the gradient norm drops
/// below `tolerance · p`.
pub fn karcher_mean_spd_with_report(
    matrices: &[SpdMatrix],
    weights: Option<&[f64]>,
    config: &SpdMeanConfig,
) -> Result<(SpdMatrix, SpdMeanReport)> {
    config.validate()?;
    check_all_same_dim(matrices)?;
    let weights = resolve_weights(weights, matrices.len())?;
    if matrices.len() == 1 {
        return Ok((matrices[0].clone(), SpdMeanReport::default()));
    }
    let p = matrices[0].dim();
    let threshold = config.tolerance * p as f64;
    let mut x = arithmetic_mean(matrices, &weights);
    let mut residual = f64::INFINITY;
    for iteration in 0..config.max_iterations {
        let (half, inv_half) = x.sqrt_and_inv_sqrt()?;
        let mut gradient = Matrix::zeros(p, p);
        for (a, &w) in matrices.iter().zip(&weights) {
            let whitened = inv_half.as_matrix() * a.as_matrix() * inv_half.as_matrix();
            gradient += spectral_map(&whitened, true, math::ln)? * w;
        }
        residual = gradient.norm();
        if !residual.is_finite() {
            return Err(Error::NonFinite);
        }
        if residual < threshold {
            return Ok((
                x,
                SpdMeanReport {
                    iterations: iteration,
                    residual,
                },
            ));
        }
        let step = spectral_map(&symmetrized(gradient * config.step_size), false, math::exp)?;
        x = SpdMatrix::from_matrix_unchecked(half.as_matrix() * step * half.as_matrix());
    }
    Err(Error::NoConvergence {
        iterations: config.max_iterations,
        residual,
        last_iterate: Some(Box::new(x.into_matrix())),
    })
}

/// Ando–Li–Mathias mean of two or more SPD matrices.
pub fn alm_mean(matrices: &[SpdMatrix], config: &SpdMeanConfig) -> Result<SpdMatrix> {
    alm_mean_with_report(matrices, config).map(|(m, _)| m)
}

/// Replaces every matrix by the `alm` mean of the others until the largest
/// pairwise distance falls below `tolerance`. The recursion bottoms out at
/// the Ando mean, so the cost grows factorially with the number of inputs.
pub fn alm_mean_with_report(matrices: &[SpdMatrix], config: &SpdMeanConfig) -> Result<(SpdMatrix, SpdMeanReport)> {
    config.validate()?;
    if matrices.len() < 2 {
        return Err(Error::TooFewInputs {
            required: 2,
            found: matrices.len(),
        });
    }
    check_all_same_dim(matrices)?;
    alm_recursive(matrices, config)
}

fn diameter(matrices: &[SpdMatrix]) -> Result<f64> {
    let mut d: f64 = 0.0;
    for i in 0..matrices.len() {
        for j in i + 1..matrices.len() {
            d = d.max(spd_distance(&matrices[i], &matrices[j])?);
        }
    }
    Ok(d)
}

fn alm_recursive(matrices: &[SpdMatrix], config: &SpdMeanConfig) -> Result<(SpdMatrix, SpdMeanReport)> {
    if matrices.len() == 2 {
        return Ok((ando_mean(&matrices[0], &matrices[1])?, SpdMeanReport::default()));
    }
    let mut current = matrices.to_vec();
    let mut residual = f64::INFINITY;
    for iteration in 0..config.max_iterations {
        residual = diameter(&current)?;
        if residual < config.tolerance {
            return Ok((
                current.swap_remove(0),
                SpdMeanReport {
                    iterations: iteration,
                    residual,
                },
            ));
        }
        let mut next = Vec::with_capacity(current.len());
        for skip in 0..current.len() {
            let others: Vec<SpdMatrix> = current
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != skip)
                .map(|(_, m)| m.clone())
                .collect();
            next.push(alm_recursive(&others, config)?.0);
        }
        current = next;
    }
    Err(Error::NoConvergence {
        iterations: config.max_iterations,
        residual,
        last_iterate: Some(Box::new(current.swap_remove(0).into_matrix())),
    })
}

/// Dispatches to the mean selected by `config.method`. The `alm` mean is
/// unweighted; non-uniform weights are rejected for it.
pub fn geometric_mean_with_report(
    matrices: &[SpdMatrix],
    weights: Option<&[f64]>,
    config: &SpdMeanConfig,
) -> Result<(SpdMatrix, SpdMeanReport)> {
    match config.method {
        SpdMeanMethod::Ls => karcher_mean_spd_with_report(matrices, weights, config),
        SpdMeanMethod::Alm => {
            let w = resolve_weights(weights, matrices.len().max(1))?;
            if w.iter().any(|&x| math::abs(x - w[0]) > 1e-12) {
                return Err(Error::InvalidConfig("the alm mean does not accept non-uniform weights"));
            }
            if matrices.len() == 1 {
                config.validate()?;
                return Ok((matrices[0].clone(), SpdMeanReport::default()));
            }
            alm_mean_with_report(matrices, config)
        }
    }
}

/// Smallest eigenvalue of `b − a`; nonnegative iff `a ≤ b` in the Loewner order.
pub fn loewner_gap(a: &Matrix, b: &Matrix) -> Result<f64> {
    let diff = SymMatrix::symmetrize(symmetrized(b - a))?;
    let eig = crate::linalg::sym_eig(&diff)?;
    Ok(eig.values[eig.values.len() - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag(d: &[f64]) -> SpdMatrix {
        SpdMatrix::from_diagonal(d).unwrap()
    }

    fn close(a: &SpdMatrix, b: &SpdMatrix, tol: f64) -> bool {
        crate::linalg::relative_error(a.as_matrix(), b.as_matrix()) < tol
    }

    #[test]
    fn ando_rank_collapse_example() {
        let eps = 0.1;
        let m = ando_mean(&diag(&[4.0, eps * eps]), &diag(&[eps * eps, 1.0])).unwrap();
        let expected = Matrix::from_diagonal(&nalgebra::DVector::from_vec(alloc::vec![0.2, 0.1]));
        assert!((m.as_matrix() - expected).amax() < 1e-12);
    }

    #[test]
    fn ando_idempotent_and_per_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random::random_spd(3, 1.0, &mut rng);
        assert!(close(&ando_mean(&a, &a).unwrap(), &a, 1e-12));
        let m = ando_mean(&diag(&[2.0, 8.0]), &diag(&[8.0, 2.0])).unwrap();
        assert!(close(&m, &diag(&[4.0, 4.0]), 1e-14));
    }

    #[test]
    fn ando_dimension_mismatch() {
        let r = ando_mean(&diag(&[1.0]), &diag(&[1.0, 2.0]));
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn geodesic_endpoints_and_scalar_case() {
        let a = diag(&[1.0, 1.0]);
        let b = diag(&[4.0, 9.0]);
        assert_eq!(spd_geodesic(&a, &b, 0.0).unwrap(), a);
        assert_eq!(spd_geodesic(&a, &b, 1.0).unwrap(), b);
        assert!(close(&spd_geodesic(&a, &b, 0.5).unwrap(), &diag(&[2.0, 3.0]), 1e-14));
        // a^{1-t} b^t = 1 · 16^{1/4} = 2
        assert!(close(&spd_geodesic(&diag(&[1.0]), &diag(&[16.0]), 0.25).unwrap(), &diag(&[2.0]), 1e-14));
        assert!(matches!(spd_geodesic(&a, &b, 1.5), Err(Error::Domain(_))));
        assert!(matches!(spd_geodesic(&a, &b, -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn geodesic_has_proportional_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10 {
            let a = random::random_spd(4, 1.0, &mut rng);
            let b = random::random_spd(4, 1.0, &mut rng);
            let t: f64 = rng.random_range(0.0..1.0);
            let g = spd_geodesic(&a, &b, t).unwrap();
            let lhs = spd_distance(&a, &g).unwrap();
            let rhs = t * spd_distance(&a, &b).unwrap();
            assert!((lhs - rhs).abs() < 1e-8);
        }
    }

    #[test]
    fn distance_examples() {
        let e = core::f64::consts::E;
        assert!(spd_distance(&diag(&[3.0, 2.0]), &diag(&[3.0, 2.0])).unwrap() < 1e-15);
        let d = spd_distance(&SpdMatrix::identity(2), &diag(&[e * e, e * e])).unwrap();
        assert!((d - 2.0 * core::f64::consts::SQRT_2).abs() < 1e-14);
        let d = spd_distance(&diag(&[1.0, 1.0]), &diag(&[e, 1.0])).unwrap();
        assert!((d - 1.0).abs() < 1e-14);
    }

    #[test]
    fn distance_invariances() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10 {
            let a = random::random_spd(3, 1.0, &mut rng);
            let b = random::random_spd(3, 1.0, &mut rng);
            let d = spd_distance(&a, &b).unwrap();
            assert!((spd_distance(&b, &a).unwrap() - d).abs() < 1e-10);
            let g = random::gaussian_matrix(3, 3, &mut rng);
            let ga = SpdMatrix::from_matrix_unchecked(&g * a.as_matrix() * g.transpose());
            let gb = SpdMatrix::from_matrix_unchecked(&g * b.as_matrix() * g.transpose());
            assert!((spd_distance(&ga, &gb).unwrap() - d).abs() < 1e-8);
            let di = spd_distance(&a.inverse().unwrap(), &b.inverse().unwrap()).unwrap();
            assert!((di - d).abs() < 1e-8);
        }
    }

    #[test]
    fn karcher_trivial_and_commuting() {
        let cfg = SpdMeanConfig::default();
        let a = diag(&[3.0, 1.0]);
        assert_eq!(karcher_mean_spd(core::slice::from_ref(&a), None, &cfg).unwrap(), a);
        let m = karcher_mean_spd(&[diag(&[1.0]), diag(&[8.0]), diag(&[64.0])], None, &cfg).unwrap();
        assert!((m.as_matrix()[(0, 0)] - 8.0).abs() < 1e-12);
    }

    #[test]
    fn karcher_two_matrices_is_geodesic_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let cfg = SpdMeanConfig::default();
        for _ in 0..5 {
            let a = random::random_spd(3, 1.0, &mut rng);
            let b = random::random_spd(3, 1.0, &mut rng);
            let w2: f64 = rng.random_range(0.1..0.9);
            let k = karcher_mean_spd(&[a.clone(), b.clone()], Some(&[1.0 - w2, w2]), &cfg).unwrap();
            let g = spd_geodesic(&a, &b, w2).unwrap();
            assert!(close(&k, &g, 1e-8));
        }
        let eps = 0.1;
        let k = karcher_mean_spd(&[diag(&[4.0, eps * eps]), diag(&[eps * eps, 1.0])], None, &cfg).unwrap();
        assert!(close(&k, &diag(&[0.2, 0.1]), 1e-10));
    }

    #[test]
    fn karcher_satisfies_first_order_condition() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let cfg = SpdMeanConfig::default();
        let ms: Vec<SpdMatrix> = (0..4).map(|_| random::random_spd(3, 1.0, &mut rng)).collect();
        let (x, report) = karcher_mean_spd_with_report(&ms, None, &cfg).unwrap();
        assert!(report.residual < cfg.tolerance * 3.0);
        let inv_half = x.inv_sqrt().unwrap();
        let mut g = Matrix::zeros(3, 3);
        for a in &ms {
            let w = SpdMatrix::from_matrix_unchecked(inv_half.as_matrix() * a.as_matrix() * inv_half.as_matrix());
            g += w.log().unwrap().into_matrix() * 0.25;
        }
        assert!(g.norm() < 3e-10);
    }

    #[test]
    fn karcher_reports_non_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let ms: Vec<SpdMatrix> = (0..3).map(|_| random::random_spd(3, 2.0, &mut rng)).collect();
        let cfg = SpdMeanConfig {
            max_iterations: 1,
            ..Default::default()
        };
        match karcher_mean_spd(&ms, None, &cfg) {
            Err(Error::NoConvergence {
                iterations,
                last_iterate,
                ..
            }) => {
                assert_eq!(iterations, 1);
                assert!(last_iterate.is_some());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn karcher_rejects_bad_weights() {
        let a = diag(&[1.0]);
        let cfg = SpdMeanConfig::default();
        let both = [a.clone(), a.clone()];
        assert!(matches!(karcher_mean_spd(&both, Some(&[0.5]), &cfg), Err(Error::InvalidWeights(_))));
        assert!(matches!(karcher_mean_spd(&both, Some(&[0.7, 0.7]), &cfg), Err(Error::InvalidWeights(_))));
        assert!(matches!(karcher_mean_spd(&both, Some(&[1.5, -0.5]), &cfg), Err(Error::InvalidWeights(_))));
        assert_eq!(karcher_mean_spd(&[], None, &cfg), Err(Error::EmptyInput));
    }

    #[test]
    fn alm_base_case_commuting_and_idempotent() {
        let cfg = SpdMeanConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = random::random_spd(3, 1.0, &mut rng);
        let b = random::random_spd(3, 1.0, &mut rng);
        assert!(close(&alm_mean(&[a.clone(), b.clone()], &cfg).unwrap(), &ando_mean(&a, &b).unwrap(), 1e-15));
        let m = alm_mean(&[diag(&[1.0, 1.0]), diag(&[8.0, 27.0]), diag(&[64.0, 8.0])], &cfg).unwrap();
        assert!(close(&m, &diag(&[8.0, 6.0]), 1e-9));
        let m = alm_mean(&[a.clone(), a.clone(), a.clone()], &cfg).unwrap();
        assert!(close(&m, &a, 1e-12));
        assert!(matches!(alm_mean(&[a], &cfg), Err(Error::TooFewInputs { .. })));
    }

    #[test]
    fn alm_matches_karcher_on_clustered_triples() {
        let cfg = SpdMeanConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let base = random::random_spd(3, 1.0, &mut rng);
        let ms: Vec<SpdMatrix> = (0..3)
            .map(|_| {
                let e = random::random_spd(3, 0.15, &mut rng);
                let h = base.sqrt().unwrap();
                SpdMatrix::from_matrix_unchecked(h.as_matrix() * e.as_matrix() * h.as_matrix())
            })
            .collect();
        let alm = alm_mean(&ms, &cfg).unwrap();
        let ls = karcher_mean_spd(&ms, None, &cfg).unwrap();
        // the two means differ at third order in the spread
        assert!(close(&alm, &ls, 1e-6));
        // permutation invariance
        let perm = [ms[2].clone(), ms[0].clone(), ms[1].clone()];
        assert!(close(&alm_mean(&perm, &cfg).unwrap(), &alm, 1e-9));
    }

    #[test]
    fn alm_four_matrices_commuting() {
        let cfg = SpdMeanConfig::default();
        let ms = [diag(&[1.0]), diag(&[2.0]), diag(&[4.0]), diag(&[8.0])];
        let m = alm_mean(&ms, &cfg).unwrap();
        // (1·2·4·8)^{1/4} = 2^{1.5}
        assert!((m.as_matrix()[(0, 0)] - 2f64.powf(1.5)).abs() < 1e-9);
    }

    #[test]
    fn loewner_gap_sign() {
        let a = diag(&[1.0, 2.0]);
        let b = diag(&[2.0, 2.5]);
        assert!(loewner_gap(a.as_matrix(), b.as_matrix()).unwrap() > 0.0);
        assert!(loewner_gap(b.as_matrix(), a.as_matrix()).unwrap() < 0.0);
    }
}
