use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rankmean_core::grassmann::{
    align, chordal_mean, grassmann_distance, grassmann_geodesic, karcher_mean_grassmann, minimal_rotation,
    principal_angles,
};
use rankmean_core::linalg::{orthonormality_residual, Matrix, StiefelBasis, SymMatrix};
use rankmean_core::random;
use rankmean_core::GrassmannMeanConfig;

fn nearby_pair(seed: u64, n: usize, p: usize, distance: f64) -> (ChaCha8Rng, StiefelBasis, StiefelBasis) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u1 = random::random_stiefel(n, p, &mut rng);
    let u2 = random::perturbed_subspace(&u1, distance, &mut rng);
    (rng, u1, u2)
}

/// Geodesic distance to the identity on SO(n) from the eigenvalues
/// `cos φ` of the symmetric part.
fn so_distance_to_identity(r: &Matrix) -> f64 {
    let sym = SymMatrix::symmetrize((r + r.transpose()) * 0.5).unwrap();
    let eig = rankmean_core::linalg::sym_eig(&sym).unwrap();
    eig.values.iter().map(|c| c.clamp(-1.0, 1.0).acos().powi(2)).sum::<f64>().sqrt()
}

/// Rotation preserving `span(y)`: `O` inside, `Q` on the complement.
fn span_preserving_rotation<R: Rng>(y: &Matrix, small: Option<f64>, rng: &mut R) -> Matrix {
    let (n, p) = y.shape();
    let full = {
        let g = random::gaussian_matrix(n, n - p, rng);
        let mut m = Matrix::zeros(n, n);
        m.columns_mut(0, p).copy_from(y);
        m.columns_mut(p, n - p).copy_from(&(&g - y * (y.transpose() * &g)));
        m.qr().q()
    };
    let inner = |k: usize, rng: &mut R| match small {
        Some(eps) => random::rotation_of_magnitude(k, eps, rng),
        None => random::random_rotation(k, rng),
    };
    let mut block = Matrix::zeros(n, n);
    block.view_mut((0, 0), (p, p)).copy_from(&inner(p, rng));
    block.view_mut((p, p), (n - p, n - p)).copy_from(&inner(n - p, rng));
    &full * block * full.transpose()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn angles_are_symmetric_and_in_range(seed in any::<u64>(), p in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u1 = random::random_stiefel(7, p, &mut rng);
        let u2 = random::random_stiefel(7, p, &mut rng);
        let a = principal_angles(&u1, &u2).unwrap();
        let b = principal_angles(&u2, &u1).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x - y).abs() < 1e-12);
            prop_assert!((0.0..=std::f64::consts::FRAC_PI_2).contains(x));
        }
    }

    #[test]
    fn aligned_segment_has_grassmann_length(seed in any::<u64>(), d in 0.05f64..1.4) {
        let (_, u1, u2) = nearby_pair(seed, 8, 3, d);
        let pair = align(&u1, &u2).unwrap();
        let y1 = pair.y1().as_matrix();
        let y2 = pair.y2().as_matrix();
        let cos: Vec<f64> = pair.angles().as_slice().iter().map(|t| t.cos()).collect();
        let target = Matrix::from_diagonal(&nalgebra::DVector::from_vec(cos));
        prop_assert!((y1.transpose() * y2 - target).norm() < 1e-9);
        prop_assert!((pair.angles().norm() - grassmann_distance(&u1, &u2).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn geodesic_constant_speed(seed in any::<u64>(), s in 0.0f64..1.0, t in 0.0f64..1.0) {
        let (_, u1, u2) = nearby_pair(seed, 6, 2, 1.1);
        let pair = align(&u1, &u2).unwrap();
        let d = grassmann_distance(&grassmann_geodesic(&pair, s), &grassmann_geodesic(&pair, t)).unwrap();
        prop_assert!((d - (t - s).abs() * pair.angles().norm()).abs() < 1e-7);
    }

    #[test]
    fn distance_rotation_invariant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u1 = random::random_stiefel(6, 2, &mut rng);
        let u2 = random::random_stiefel(6, 2, &mut rng);
        let q = random::random_orthogonal(6, &mut rng);
        let d = grassmann_distance(&u1, &u2).unwrap();
        let dq = grassmann_distance(&u1.transformed(&q).unwrap(), &u2.transformed(&q).unwrap()).unwrap();
        prop_assert!((d - dq).abs() < 1e-10);
    }

    #[test]
    fn minimal_rotation_carries_span(seed in any::<u64>(), d in 0.05f64..1.4) {
        let (_, u1, u2) = nearby_pair(seed, 7, 3, d);
        let r = minimal_rotation(&align(&u1, &u2).unwrap());
        let moved = StiefelBasis::new(&r * u1.as_matrix()).unwrap();
        prop_assert!(grassmann_distance(&moved, &u2).unwrap() < 1e-9);
    }

    #[test]
    fn chordal_two_subspaces_is_midpoint(seed in any::<u64>(), d in 0.05f64..1.4) {
        let (_, u1, u2) = nearby_pair(seed, 7, 3, d);
        let c = chordal_mean(&[u1.clone(), u2.clone()], None).unwrap();
        let g = grassmann_geodesic(&align(&u1, &u2).unwrap(), 0.5);
        prop_assert!(grassmann_distance(&c, &g).unwrap() < 1e-8);
    }
}

#[test]
fn minimal_rotation_beats_sampled_rotations() {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    for trial in 0..5 {
        let u1 = random::random_stiefel(6, 2, &mut rng);
        let u2 = random::perturbed_subspace(&u1, 0.4 + 0.2 * trial as f64, &mut rng);
        let pair = align(&u1, &u2).unwrap();
        let r = minimal_rotation(&pair);
        let best = so_distance_to_identity(&r);
        // ‖log R‖_F² = 2 Σ θⱼ² for a block planar rotation
        assert!((best - std::f64::consts::SQRT_2 * pair.angles().norm()).abs() < 1e-7);
        for k in 0..100 {
            let small = if k % 2 == 0 { Some(rng.random_range(1e-3..0.3)) } else { None };
            let g = span_preserving_rotation(pair.y1().as_matrix(), small, &mut rng);
            let other = &r * g;
            let moved = StiefelBasis::new(&other * u1.as_matrix()).unwrap();
            assert!(grassmann_distance(&moved, &u2).unwrap() < 1e-8);
            assert!(best <= so_distance_to_identity(&other) + 1e-9);
        }
    }
}

#[test]
fn karcher_two_subspaces_is_midpoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(72);
    for _ in 0..10 {
        let u1 = random::random_stiefel(8, 3, &mut rng);
        let u2 = random::perturbed_subspace(&u1, 1.0, &mut rng);
        let k = karcher_mean_grassmann(&[u1.clone(), u2.clone()], None, &GrassmannMeanConfig::default()).unwrap();
        let g = grassmann_geodesic(&align(&u1, &u2).unwrap(), 0.5);
        assert!(grassmann_distance(&k, &g).unwrap() < 1e-8);
    }
}

#[test]
fn noisy_zero_angle_does_not_steal_a_direction() {
    // In ℝ⁵ two 3-planes have at most two nonzero angles; this draw has a
    // third angle of order 1e-10 made of rounding noise.
    let mut rng = ChaCha8Rng::seed_from_u64(9099214882626569812);
    let u1 = random::random_psd_fixed_rank(5, 3, 1.0, &mut rng).basis().clone();
    let u2 = random::perturbed_subspace(&u1, 0.5, &mut rng);
    let pair = align(&u1, &u2).unwrap();
    assert!(pair.angles().as_slice()[0] < 1e-8);
    let x = pair.direction();
    assert!((x.transpose() * pair.y1().as_matrix()).norm() < 1e-12);
    for t in [0.25, 0.5, 1.0] {
        let y = grassmann_geodesic(&pair, t);
        assert!(orthonormality_residual(y.as_matrix()) < 1e-12);
    }
    let end = grassmann_geodesic(&pair, 1.0);
    assert!((end.projector() - u2.projector()).norm() < 1e-9);
}
