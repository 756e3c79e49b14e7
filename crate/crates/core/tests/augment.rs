use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vocaltrack_core::augment::{
    apply_to_frame, apply_to_points, rotation_of, sample_affine, sample_valid_affine, AffineTransform, AugmentConfig,
};
use vocaltrack_core::codec::{decode, render_target, CodecConfig};
use vocaltrack_core::synth::{generate_synthetic_clip, SyntheticSpec};
use vocaltrack_core::types::{Frame, HeatmapKind, HeatmapStack, GRID, NUM_POINTS};

#[test]
fn rotation_samples_are_centred() {
    let cfg = AugmentConfig { rotation_deg: 10.0, ..AugmentConfig::none() };
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let n = 10_000;
    let angles: Vec<f64> = (0..n).map(|_| rotation_of(&sample_affine(&cfg, &mut rng))).collect();
    let mean = angles.iter().sum::<f64>() / n as f64;
    assert!(mean.abs() < 0.5, "{mean}");
    assert!(angles.iter().all(|a| a.abs() <= 10.0));
    let spread = angles.iter().map(|a| a * a).sum::<f64>() / n as f64;
    // Uniform on ±10° has variance 100/3.
    assert!((spread - 100.0 / 3.0).abs() < 2.0);
}

#[test]
fn four_quarter_turns_restore_the_frame() {
    let clip = generate_synthetic_clip(&SyntheticSpec { seed: 3, frames: 1, ..Default::default() }, "c").unwrap();
    let frame = &clip.frames[0];
    let quarter = AffineTransform::rotation(90.0);
    let mut f = frame.clone();
    for _ in 0..4 {
        f = apply_to_frame(&f, &quarter).unwrap();
    }
    let mae: f64 = f
        .pixels()
        .iter()
        .zip(frame.pixels())
        .map(|(a, b)| (a - b).abs() as f64)
        .sum::<f64>()
        / (GRID * GRID) as f64;
    assert!(mae < 1e-3, "{mae}");
}

#[test]
fn warping_a_target_matches_rendering_moved_points() {
    let clip = generate_synthetic_clip(&SyntheticSpec { seed: 5, frames: 1, ..Default::default() }, "c").unwrap();
    let points = clip.trajectory.frame(0);
    let codec = CodecConfig::default();
    let target = render_target(&points, &codec).unwrap();
    let cfg = AugmentConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..6 {
        let t = sample_valid_affine(&cfg, &points, &mut rng);
        let (moved, valid) = apply_to_points(&points, &t);
        let direct = render_target(&moved, &codec).unwrap();
        let mut warped = Vec::with_capacity(NUM_POINTS * GRID * GRID);
        for i in 0..NUM_POINTS {
            let peak = target.grid(i).iter().fold(0.0f32, |m, v| m.max(*v));
            let g: Vec<f32> = target.grid(i).iter().map(|v| v / peak).collect();
            let w = apply_to_frame(&Frame::new(GRID, GRID, g).unwrap(), &t).unwrap();
            warped.extend_from_slice(w.pixels());
        }
        let warped = HeatmapStack::new(HeatmapKind::GaussianTarget, warped).unwrap();
        let fine_a = decode(&direct, &codec).unwrap();
        let fine_b = decode(&warped, &codec).unwrap();
        for i in 0..NUM_POINTS {
            assert!(valid[i]);
            let (p, q) = (fine_a.points()[i], fine_b.points()[i]);
            assert!((p[0] - q[0]).abs() < 0.5 && (p[1] - q[1]).abs() < 0.5, "point {i}: {p:?} vs {q:?}");
        }
    }
}
