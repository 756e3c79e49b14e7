use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vocaltrack_core::losses::{
    apply_articulatory_weighting, kl_grid, kl_grid_grad, mse_grid, mse_grid_grad, pixel_kl, pixel_mse,
};
use vocaltrack_core::types::{ArticulatorWeights, HeatmapKind, HeatmapStack, GRID_PIXELS, NUM_POINTS};

/// Direct KL(t ‖ softmax(z)) without max subtraction, for small logits.
fn kl_reference(z: &[f64], t: &[f64]) -> f64 {
    let norm: f64 = z.iter().map(|v| v.exp()).sum();
    t.iter()
        .zip(z)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, z)| t * (t.ln() - (z.exp() / norm).ln()))
        .sum()
}

fn random_distribution(rng: &mut ChaCha8Rng, n: usize, sparse: bool) -> Vec<f64> {
    let mut t: Vec<f64> = (0..n)
        .map(|_| if sparse && rng.random_bool(0.3) { 0.0 } else { rng.random::<f64>() })
        .collect();
    if t.iter().all(|v| *v == 0.0) {
        t[0] = 1.0;
    }
    let s: f64 = t.iter().sum();
    t.iter_mut().for_each(|v| *v /= s);
    t
}

fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[i] += h;
            b[i] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = numeric.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-12);
    analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs() / scale).fold(0.0, f64::max)
}

#[test]
fn kl_is_nonnegative_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..10_000 {
        let n = rng.random_range(2..64);
        let t = random_distribution(&mut rng, n, i % 2 == 0);
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-8.0..8.0)).collect();
        let kl = kl_grid(&z, &t);
        assert!(kl >= -1e-12, "pair {i}: {kl}");
        assert!((kl - kl_reference(&z, &t)).abs() < 1e-9);
    }
}

#[test]
fn kl_vanishes_only_at_the_target() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let t = random_distribution(&mut rng, 16, false);
        let z: Vec<f64> = t.iter().map(|v| v.ln() + 3.7).collect();
        assert!(kl_grid(&z, &t).abs() < 1e-9);
        let mut moved = z.clone();
        moved[rng.random_range(0..16)] += 0.05;
        assert!(kl_grid(&moved, &t) > 1e-9);
    }
}

#[test]
fn hand_case_is_ln2() {
    let kl = kl_grid(&[0.0; 4], &[0.5, 0.5, 0.0, 0.0]);
    assert!((kl - std::f64::consts::LN_2).abs() < 1e-6);
}

#[test]
fn gradients_match_finite_differences_on_small_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..25 {
        let t = random_distribution(&mut rng, 64, true);
        let z: Vec<f64> = (0..64).map(|_| rng.random_range(-2.0..2.0)).collect();
        let numeric = central_difference(|z| kl_reference(z, &t), &z, 1e-3);
        assert!(max_relative_error(&kl_grid_grad(&z, &t), &numeric) < 1e-4);

        let pred: Vec<f64> = (0..64).map(|_| rng.random::<f64>()).collect();
        let numeric = central_difference(
            |p| p.iter().zip(&t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 64.0,
            &pred,
            1e-3,
        );
        assert!(max_relative_error(&mse_grid_grad(&pred, &t), &numeric) < 1e-4);
    }
}

fn random_stack(rng: &mut ChaCha8Rng, kind: HeatmapKind) -> HeatmapStack {
    let mut data = Vec::with_capacity(NUM_POINTS * GRID_PIXELS);
    for _ in 0..NUM_POINTS {
        let g: Vec<f64> = match kind {
            HeatmapKind::Logits => (0..GRID_PIXELS).map(|_| rng.random_range(-3.0..3.0)).collect(),
            _ => random_distribution(rng, GRID_PIXELS, true),
        };
        data.extend(g.iter().map(|v| *v as f32));
    }
    HeatmapStack::new(kind, data).unwrap()
}

fn permute(h: &HeatmapStack, perm: &[usize]) -> HeatmapStack {
    let data = perm.iter().flat_map(|&i| h.grid(i).iter().copied()).collect();
    HeatmapStack::new(h.kind, data).unwrap()
}

#[test]
fn pixel_losses_are_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let logits = random_stack(&mut rng, HeatmapKind::Logits);
    let target = random_stack(&mut rng, HeatmapKind::GaussianTarget);
    let perm: Vec<usize> = (0..NUM_POINTS).map(|i| (i * 37 + 5) % NUM_POINTS).collect();
    let kl = pixel_kl(&logits, &target).unwrap();
    let kl_p = pixel_kl(&permute(&logits, &perm), &permute(&target, &perm)).unwrap();
    let pred = random_stack(&mut rng, HeatmapKind::Probabilities);
    let mse = pixel_mse(&pred, &target).unwrap();
    let mse_p = pixel_mse(&permute(&pred, &perm), &permute(&target, &perm)).unwrap();
    for (j, &i) in perm.iter().enumerate() {
        assert_eq!(kl_p[j], kl[i]);
        assert_eq!(mse_p[j], mse[i]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn uniform_weighting_is_the_plain_mean(per_point in proptest::collection::vec(0.0f64..10.0, NUM_POINTS)) {
        let mean = per_point.iter().sum::<f64>() / NUM_POINTS as f64;
        let got = apply_articulatory_weighting(&per_point, &ArticulatorWeights::uniform()).unwrap();
        prop_assert!((got - mean).abs() <= 1e-12 * mean.max(1.0));
    }

    #[test]
    fn mse_of_a_constant_offset(offset in -1.0f64..1.0, n in 1usize..100) {
        let t: Vec<f64> = (0..n).map(|i| i as f64 * 0.01).collect();
        let p: Vec<f64> = t.iter().map(|v| v + offset).collect();
        prop_assert!((mse_grid(&p, &t) - offset * offset).abs() < 1e-12);
    }
}
