use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vocaltrack_core::metrics::{l1, pcc, pearson, rmse};
use vocaltrack_core::types::{Trajectory, FRAME_RATE, NUM_COORDS};

fn random_traj(rng: &mut ChaCha8Rng, t: usize) -> Trajectory {
    let coords = (0..t * NUM_COORDS).map(|_| rng.random_range(0.0f32..96.0)).collect();
    Trajectory::from_flat("c", FRAME_RATE, coords).unwrap()
}

/// Coordinates on a 1/1024 lattice, so power-of-two scales and 1/8 offsets
/// stay exact in f32.
fn lattice_traj(rng: &mut ChaCha8Rng, t: usize) -> Trajectory {
    let coords = (0..t * NUM_COORDS).map(|_| rng.random_range(0..96 * 1024) as f32 / 1024.0).collect();
    Trajectory::from_flat("c", FRAME_RATE, coords).unwrap()
}

fn map(t: &Trajectory, f: impl Fn(f32) -> f32) -> Trajectory {
    t.with_coords(t.coords().iter().map(|v| f(*v)).collect()).unwrap()
}

#[test]
fn identities_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..20 {
        let x = random_traj(&mut rng, 30);
        assert_eq!(rmse(&x, &x).unwrap().overall, 0.0);
        assert_eq!(l1(&x, &x).unwrap().overall, 0.0);
        assert!((pcc(&x, &x).unwrap().mean - 1.0).abs() < 1e-12);
        assert!((pcc(&map(&x, |v| -v), &x).unwrap().mean + 1.0).abs() < 1e-12);
    }
}

#[test]
fn l1_never_exceeds_rmse() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..1000 {
        let t = rng.random_range(1..8);
        let (a, b) = (random_traj(&mut rng, t), random_traj(&mut rng, t));
        assert!(l1(&a, &b).unwrap().overall <= rmse(&a, &b).unwrap().overall + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pcc_is_affine_invariant(seed in 0u64..1000, k in -3i32..4, b in -160i32..160) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = lattice_traj(&mut rng, 12);
        let y = lattice_traj(&mut rng, 12);
        let (a, b) = (2f32.powi(k), b as f32 / 8.0);
        let base = pcc(&x, &y).unwrap().mean;
        let moved = pcc(&map(&x, |v| a * v + b), &y).unwrap().mean;
        prop_assert!((base - moved).abs() < 1e-9, "{base} {moved}");
        prop_assert!((-1.0..=1.0).contains(&base));
    }

    #[test]
    fn pearson_is_affine_invariant(seed in 0u64..1000, a in 0.05f64..20.0, b in -50.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..40).map(|_| rng.random_range(0.0..96.0)).collect();
        let y: Vec<f64> = (0..40).map(|_| rng.random_range(0.0..96.0)).collect();
        let moved: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let (base, moved) = (pearson(&x, &y).unwrap(), pearson(&moved, &y).unwrap());
        prop_assert!((base - moved).abs() < 1e-9, "{base} {moved}");
    }

    #[test]
    fn errors_depend_only_on_the_difference(seed in 0u64..1000, shift in -30.0f32..30.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_traj(&mut rng, 5);
        let y = random_traj(&mut rng, 5);
        let (xs, ys) = (map(&x, |v| v + shift), map(&y, |v| v + shift));
        prop_assert!((rmse(&x, &y).unwrap().overall - rmse(&xs, &ys).unwrap().overall).abs() < 1e-4);
        prop_assert!((l1(&x, &y).unwrap().overall - l1(&xs, &ys).unwrap().overall).abs() < 1e-4);
    }
}
