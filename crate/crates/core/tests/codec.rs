use proptest::prelude::*;
use vocaltrack_core::codec::{decode, render_target, soft_argmax, CodecConfig};
use vocaltrack_core::types::{shift_keypoints, HeatmapKind, HeatmapStack, KeypointSet, GRID, NUM_POINTS};

const MARGIN: f32 = 6.0;
const HI: f32 = (GRID - 1) as f32 - MARGIN;

fn round_trip_error(points: &[[f32; 2]], cfg: &CodecConfig) -> f64 {
    let mut worst = 0.0f64;
    for chunk in points.chunks(NUM_POINTS) {
        let mut batch = chunk.to_vec();
        batch.resize(NUM_POINTS, [48.0, 48.0]);
        let set = KeypointSet::new(batch).unwrap();
        let back = decode(&render_target(&set, cfg).unwrap(), cfg).unwrap();
        for (p, q) in chunk.iter().zip(back.points()) {
            worst = worst.max(((p[0] - q[0]) as f64).abs()).max(((p[1] - q[1]) as f64).abs());
        }
    }
    worst
}

#[test]
fn every_interior_pixel_round_trips() {
    let cfg = CodecConfig::default();
    let lo = MARGIN as usize;
    let hi = HI as usize;
    let points: Vec<[f32; 2]> = (lo..=hi)
        .flat_map(|y| (lo..=hi).map(move |x| [x as f32, y as f32]))
        .collect();
    assert!(round_trip_error(&points, &cfg) < 0.1);
}

// Truncating to the top k pixels biases off-grid centres by up to about
// 0.13 px, so the bound here is looser than at grid points.
#[test]
fn quarter_pixel_offsets_stay_within_top_k_bias() {
    let cfg = CodecConfig::default();
    let mut points = Vec::new();
    let steps = ((HI - MARGIN) * 4.0) as usize;
    for iy in (0..=steps).step_by(3) {
        for ix in 0..=steps {
            points.push([MARGIN + ix as f32 * 0.25, MARGIN + iy as f32 * 0.25]);
        }
    }
    assert!(round_trip_error(&points, &cfg) < 0.15);
}

fn single_grid(values: &[(usize, f32)]) -> HeatmapStack {
    let mut h = HeatmapStack::zeros(HeatmapKind::Probabilities);
    for i in 0..NUM_POINTS {
        for &(idx, v) in values {
            h.grid_mut(i)[idx] = v;
        }
    }
    h
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn integer_shifts_are_equivariant(
        x in MARGIN..HI, y in MARGIN..HI, dx in -20i32..=20, dy in -20i32..=20,
    ) {
        let (sx, sy) = (x + dx as f32, y + dy as f32);
        prop_assume!((MARGIN..=HI).contains(&sx) && (MARGIN..=HI).contains(&sy));
        let cfg = CodecConfig::default();
        let p = KeypointSet::new(vec![[x, y]; NUM_POINTS]).unwrap();
        let a = decode(&render_target(&p, &cfg).unwrap(), &cfg).unwrap();
        let b = decode(&render_target(&shift_keypoints(&p, dx as f32, dy as f32), &cfg).unwrap(), &cfg).unwrap();
        let (pa, pb) = (a.points()[0], b.points()[0]);
        prop_assert!((pb[0] - pa[0] - dx as f32).abs() < 1e-4, "{pa:?} {pb:?}");
        prop_assert!((pb[1] - pa[1] - dy as f32).abs() < 1e-4, "{pa:?} {pb:?}");
    }

    #[test]
    fn decode_ignores_positive_rescaling(
        scores in proptest::collection::vec((0usize..GRID * GRID, 0.01f32..1.0), 1..40),
        scale in 0.01f32..100.0,
        k in 1usize..60,
    ) {
        let cfg = CodecConfig { k, ..Default::default() };
        let base = single_grid(&scores);
        let scaled: Vec<(usize, f32)> = scores.iter().map(|&(i, v)| (i, v * scale)).collect();
        let a = decode(&base, &cfg).unwrap();
        let b = decode(&single_grid(&scaled), &cfg).unwrap();
        for (p, q) in a.points().iter().zip(b.points()) {
            prop_assert!((p[0] - q[0]).abs() < 1e-3 && (p[1] - q[1]).abs() < 1e-3);
        }
    }

    #[test]
    fn full_k_is_soft_argmax(
        scores in proptest::collection::vec((0usize..GRID * GRID, 0.0f32..1.0), 1..40),
    ) {
        prop_assume!(scores.iter().any(|s| s.1 > 0.0));
        let cfg = CodecConfig { k: GRID * GRID, ..Default::default() };
        let h = single_grid(&scores);
        let got = decode(&h, &cfg).unwrap().points()[0];
        let (x, y) = soft_argmax(h.grid(0), GRID).unwrap();
        prop_assert_eq!(got, [x as f32, y as f32]);
    }
}
