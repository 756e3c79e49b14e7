//! Conversion between keypoints and per-point heatmaps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{HeatmapKind, HeatmapStack, KeypointSet, GRID, GRID_PIXELS, NUM_POINTS};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodecConfig {
    /// Gaussian standard deviation of rendered targets, in pixels.
    pub sigma: f64,
    /// Number of highest-scoring pixels averaged when decoding.
    pub k: usize,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self { sigma: 2.0, k: 25 }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Invalid(format!("codec sigma {} must be positive", self.sigma)));
        }
        if self.k == 0 || self.k > GRID_PIXELS {
            return Err(Error::Invalid(format!("codec k {} must be in 1..={GRID_PIXELS}", self.k)));
        }
        Ok(())
    }
}

/// Renders one isotropic Gaussian per point, normalized to unit mass.
///
/// Points near the border are truncated by the grid and renormalized, so every
/// grid stays a probability distribution.
pub fn render_target(points: &KeypointSet, cfg: &CodecConfig) -> Result<HeatmapStack> {
    cfg.validate()?;
    let mut out = HeatmapStack::zeros(HeatmapKind::GaussianTarget);
    for (index, p) in points.points().iter().enumerate() {
        let (x, y) = (p[0], p[1]);
        if !(0.0..GRID as f32).contains(&x) || !(0.0..GRID as f32).contains(&y) {
            return Err(Error::PointOutsideGrid {
                index,
                x,
                y,
                grid: GRID,
            });
        }
        render_grid(x as f64, y as f64, cfg.sigma, out.grid_mut(index));
    }
    Ok(out)
}

/// Separable Gaussian on one grid; `dst` is row-major `GRID × GRID`.
pub(crate) fn render_grid(x: f64, y: f64, sigma: f64, dst: &mut [f32]) {
    let denom = 2.0 * sigma * sigma;
    let gx: Vec<f64> = (0..GRID).map(|c| (-(c as f64 - x).powi(2) / denom).exp()).collect();
    let gy: Vec<f64> = (0..GRID).map(|r| (-(r as f64 - y).powi(2) / denom).exp()).collect();
    let norm = gx.iter().sum::<f64>() * gy.iter().sum::<f64>();
    for (r, row) in dst.chunks_exact_mut(GRID).enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = (gy[r] * gx[c] / norm) as f32;
        }
    }
}

/// Per-grid softmax over all pixels.
pub fn normalize_probs(h: &HeatmapStack) -> Result<HeatmapStack> {
    if h.kind != HeatmapKind::Logits {
        return Err(Error::Invalid(format!("normalize_probs expects logits, got {:?}", h.kind)));
    }
    if h.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    let mut out = HeatmapStack::zeros(HeatmapKind::Probabilities);
    for i in 0..NUM_POINTS {
        softmax_into(h.grid(i), out.grid_mut(i));
    }
    Ok(out)
}

pub(crate) fn softmax_into(logits: &[f32], dst: &mut [f32]) {
    let m = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let mut sum = 0.0f64;
    for (d, l) in dst.iter_mut().zip(logits) {
        let e = (*l as f64 - m).exp();
        *d = e as f32;
        sum += e;
    }
    for d in dst.iter_mut() {
        *d = (*d as f64 / sum) as f32;
    }
}

/// Locates each point as the score-weighted mean of its `k` best pixels.
///
/// Ties at the k-th rank go to the lower row-major index, so the output is
/// deterministic.
pub fn decode(h: &HeatmapStack, cfg: &CodecConfig) -> Result<KeypointSet> {
    cfg.validate()?;
    if h.kind == HeatmapKind::Logits {
        return Err(Error::Invalid(
            "decode expects nonnegative scores; apply normalize_probs to logits first".into(),
        ));
    }
    let mut points = Vec::with_capacity(NUM_POINTS);
    let mut order: Vec<u32> = Vec::with_capacity(GRID_PIXELS);
    for (i, grid) in h.grids().enumerate() {
        if grid.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Invalid(format!("heatmap {i} has negative or non-finite scores")));
        }
        let (x, y) = decode_grid(grid, GRID, cfg.k, &mut order).ok_or(Error::DegenerateHeatmap(i))?;
        points.push([x as f32, y as f32]);
    }
    KeypointSet::new(points)
}

/// Weighted top-k centroid of a square `side × side` grid, or `None` when the
/// selected scores sum to zero.
pub(crate) fn decode_grid(grid: &[f32], side: usize, k: usize, order: &mut Vec<u32>) -> Option<(f64, f64)> {
    let k = k.min(grid.len());
    order.clear();
    order.extend(0..grid.len() as u32);
    let rank = |a: &u32, b: &u32| {
        grid[*b as usize]
            .total_cmp(&grid[*a as usize])
            .then_with(|| a.cmp(b))
    };
    if k < order.len() {
        order.select_nth_unstable_by(k - 1, rank);
    }
    let selected = &mut order[..k];
    // Accumulate in index order so k = all pixels is bit-identical to a plain
    // weighted centroid.
    selected.sort_unstable();
    let (mut sw, mut sx, mut sy) = (0.0f64, 0.0f64, 0.0f64);
    for &idx in selected.iter() {
        let w = grid[idx as usize] as f64;
        let idx = idx as usize;
        sw += w;
        sx += w * (idx % side) as f64;
        sy += w * (idx / side) as f64;
    }
    (sw > 0.0).then(|| (sx / sw, sy / sw))
}

/// Score-weighted centroid over every pixel of one grid.
pub fn soft_argmax(grid: &[f32], side: usize) -> Option<(f64, f64)> {
    let (mut sw, mut sx, mut sy) = (0.0f64, 0.0f64, 0.0f64);
    for (idx, w) in grid.iter().enumerate() {
        let w = *w as f64;
        sw += w;
        sx += w * (idx % side) as f64;
        sy += w * (idx / side) as f64;
    }
    (sw > 0.0).then(|| (sx / sw, sy / sw))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points_at(x: f32, y: f32) -> KeypointSet {
        KeypointSet::new(vec![[x, y]; NUM_POINTS]).unwrap()
    }

    /// Normalizer of the sampled Gaussian by brute-force summation.
    fn brute_force_normalizer(x: f64, y: f64, sigma: f64) -> f64 {
        let mut s = 0.0;
        for r in 0..GRID {
            for c in 0..GRID {
                s += (-((c as f64 - x).powi(2) + (r as f64 - y).powi(2)) / (2.0 * sigma * sigma)).exp();
            }
        }
        s
    }

    #[test]
    fn rendered_peak_matches_continuous_normalizer() {
        let norm = brute_force_normalizer(48.0, 48.0, 2.0);
        // Away from borders the sampled normalizer equals 2πσ² to many digits.
        assert!((norm - 2.0 * std::f64::consts::PI * 4.0).abs() < 1e-6);
        let h = render_target(&points_at(48.0, 48.0), &CodecConfig::default()).unwrap();
        let peak = h.grid(0)[48 * GRID + 48] as f64;
        assert!((peak - 1.0 / norm).abs() < 1e-7);
        assert!((peak - 0.03979).abs() < 1e-5);
    }

    #[test]
    fn rendered_grids_sum_to_one_even_at_border() {
        let mut pts = vec![[48.0, 48.0]; NUM_POINTS];
        pts[0] = [0.0, 0.0];
        pts[1] = [95.5, 10.0];
        pts[2] = [3.3, 94.9];
        let h = render_target(&KeypointSet::new(pts).unwrap(), &CodecConfig::default()).unwrap();
        for g in h.grids() {
            let s: f64 = g.iter().map(|v| *v as f64).sum();
            assert!((s - 1.0).abs() < 1e-6, "{s}");
        }
    }

    #[test]
    fn render_rejects_points_outside_grid() {
        let mut pts = vec![[48.0, 48.0]; NUM_POINTS];
        pts[5] = [96.0, 10.0];
        let err = render_target(&KeypointSet::new(pts).unwrap(), &CodecConfig::default());
        assert!(matches!(err, Err(Error::PointOutsideGrid { index: 5, .. })));
    }

    #[test]
    fn softmax_examples() {
        let zeros = HeatmapStack::zeros(HeatmapKind::Logits);
        let p = normalize_probs(&zeros).unwrap();
        assert!(p.grid(0).iter().all(|v| (*v - 1.0 / 9216.0).abs() < 1e-10));

        let mut spike = HeatmapStack::zeros(HeatmapKind::Logits);
        spike.grid_mut(3)[1234] = 50.0;
        let p = normalize_probs(&spike).unwrap();
        let expected = 1.0 / (1.0 + 9215.0 * (-50.0f64).exp());
        assert!((p.grid(3)[1234] as f64 - expected).abs() < 1e-7);
        assert!(p.grid(3)[1234] > 0.999_999);

        let mut nan = HeatmapStack::zeros(HeatmapKind::Logits);
        nan.grid_mut(0)[0] = f32::NAN;
        assert!(matches!(normalize_probs(&nan), Err(Error::NonFinite(_))));
        assert!(normalize_probs(&p).is_err());
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let mut a = HeatmapStack::zeros(HeatmapKind::Logits);
        for (i, v) in a.grid_mut(0).iter_mut().enumerate() {
            *v = ((i * 31 % 97) as f32) * 0.05;
        }
        let mut b = a.clone();
        b.grid_mut(0).iter_mut().for_each(|v| *v += 7.0);
        let (pa, pb) = (normalize_probs(&a).unwrap(), normalize_probs(&b).unwrap());
        for (x, y) in pa.grid(0).iter().zip(pb.grid(0)) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn decode_single_pixel() {
        let mut h = HeatmapStack::zeros(HeatmapKind::Probabilities);
        for i in 0..NUM_POINTS {
            h.grid_mut(i)[20 * GRID + 10] = 1.0;
        }
        for k in [1, 25, GRID_PIXELS] {
            let kp = decode(&h, &CodecConfig { sigma: 2.0, k }).unwrap();
            assert!(kp.points().iter().all(|p| *p == [10.0, 20.0]));
        }
    }

    #[test]
    fn decode_rejects_degenerate_and_logits() {
        let h = HeatmapStack::zeros(HeatmapKind::Probabilities);
        assert!(matches!(decode(&h, &CodecConfig::default()), Err(Error::DegenerateHeatmap(0))));
        let l = HeatmapStack::zeros(HeatmapKind::Logits);
        assert!(decode(&l, &CodecConfig::default()).is_err());
    }

    #[test]
    fn tie_break_prefers_lower_index() {
        let mut grid = vec![0.0f32; 16];
        grid[3] = 1.0;
        grid[9] = 1.0;
        let mut order = Vec::new();
        // k = 1 picks index 3 → (3, 0)
        assert_eq!(decode_grid(&grid, 4, 1, &mut order), Some((3.0, 0.0)));
    }

    #[test]
    fn full_k_equals_soft_argmax_exactly() {
        let grid: Vec<f32> = (0..GRID_PIXELS).map(|i| ((i * 7919) % 1000) as f32 / 1000.0).collect();
        let mut order = Vec::new();
        let a = decode_grid(&grid, GRID, GRID_PIXELS, &mut order).unwrap();
        let b = soft_argmax(&grid, GRID).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn decode_is_invariant_to_rescaling() {
        let h = render_target(&points_at(40.3, 51.7), &CodecConfig::default()).unwrap();
        let mut scaled = h.clone();
        let data: Vec<f32> = h.data().iter().map(|v| v * 4.0).collect();
        scaled = HeatmapStack::new(scaled.kind, data).unwrap();
        let a = decode(&h, &CodecConfig::default()).unwrap();
        let b = decode(&scaled, &CodecConfig::default()).unwrap();
        for (p, q) in a.points().iter().zip(b.points()) {
            assert!((p[0] - q[0]).abs() < 1e-6 && (p[1] - q[1]).abs() < 1e-6);
        }
    }
}
