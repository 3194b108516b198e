//! Property tests for the subspace geometry invariants.

use mmsd_core::geometry::{
    afe, orthonormalize, principal_angles, squared_distance, uniform_stiefel, OrthonormalBasis,
};
use mmsd_core::seeding::rng_from_seed;
use proptest::prelude::*;

fn random_pair(seed: u64, n: usize, p: usize) -> (OrthonormalBasis, OrthonormalBasis) {
    let mut rng = rng_from_seed(seed);
    let u1 = uniform_stiefel(n, p, &mut rng).unwrap();
    let u2 = uniform_stiefel(n, p, &mut rng).unwrap();
    (u1, u2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distance_equals_doubled_sum_of_squared_sines(seed in any::<u64>(), n in 3usize..12, p_off in 1usize..4) {
        // The singular values of P₁ - P₂ are the sines of the principal
        // angles, each with multiplicity two, so the squared projector
        // distance is exactly twice Σ sin²θ.
        let p = p_off.min(n - 1);
        let (u1, u2) = random_pair(seed, n, p);
        let d2 = squared_distance(&u1, &u2).unwrap();
        let via_angles = principal_angles(&u1, &u2).unwrap().sum_sin_sq();
        prop_assert!((d2 - 2.0 * via_angles).abs() < 1e-8);
    }

    #[test]
    fn distance_is_bounded_and_complements_afe(seed in any::<u64>(), n in 3usize..12, p_off in 1usize..4) {
        let p = p_off.min(n - 1);
        let (u1, u2) = random_pair(seed, n, p);
        let d2 = squared_distance(&u1, &u2).unwrap();
        prop_assert!((0.0..=2.0 * p as f64 + 1e-12).contains(&d2));
        let a = afe(&u1, &u2).unwrap();
        prop_assert!((a - (1.0 - d2 / (2.0 * p as f64))).abs() < 1e-10);
    }

    #[test]
    fn distance_ignores_right_rotations(seed in any::<u64>(), n in 3usize..10, p_off in 1usize..4) {
        let p = p_off.min(n - 1);
        let (u1, u2) = random_pair(seed, n, p);
        let mut rng = rng_from_seed(seed ^ 0xABCD);
        let q = uniform_stiefel(p, p, &mut rng).unwrap();
        let rotated = OrthonormalBasis::new(u1.matrix() * q.matrix()).unwrap();
        let d_base = squared_distance(&u1, &u2).unwrap();
        let d_rot = squared_distance(&rotated, &u2).unwrap();
        prop_assert!((d_base - d_rot).abs() < 1e-9);
    }

    #[test]
    fn orthonormalize_is_projection_onto_same_range(seed in any::<u64>(), n in 3usize..10, p_off in 1usize..4) {
        let p = p_off.min(n - 1);
        let mut rng = rng_from_seed(seed);
        let u = uniform_stiefel(n, p, &mut rng).unwrap();
        // Well-conditioned right factor keeps the range and the rank.
        let mut t = nalgebra::DMatrix::<f64>::identity(p, p);
        for i in 0..p {
            for j in 0..p {
                t[(i, j)] += 0.3 * (rand::Rng::random::<f64>(&mut rng) - 0.5);
            }
        }
        let m = u.matrix() * &t;
        if let Ok(r) = orthonormalize(&m) {
            prop_assert!(r.ortho_defect() < 1e-10);
            prop_assert!(squared_distance(&r, &u).unwrap() < 1e-9);
        }
    }
}
