//! Trajectory error metrics: RMSE, L1 and Pearson correlation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Trajectory, NUM_COORDS, NUM_POINTS};

fn check_shapes(pred: &Trajectory, target: &Trajectory) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "prediction has {} frames, target {}",
            pred.len(),
            target.len()
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointMetric {
    pub overall: f64,
    /// One value per point, over that point's `2·T` coordinates.
    pub per_point: Vec<f64>,
}

/// Root mean squared coordinate error.
pub fn rmse(pred: &Trajectory, target: &Trajectory) -> Result<PointMetric> {
    check_shapes(pred, target)?;
    let per_point_sq = per_point_mean(pred, target, |d| d * d);
    let overall = (per_point_sq.iter().sum::<f64>() / NUM_POINTS as f64).sqrt();
    Ok(PointMetric {
        overall,
        per_point: per_point_sq.into_iter().map(f64::sqrt).collect(),
    })
}

/// Mean absolute coordinate error.
pub fn l1(pred: &Trajectory, target: &Trajectory) -> Result<PointMetric> {
    check_shapes(pred, target)?;
    let per_point = per_point_mean(pred, target, f64::abs);
    let overall = per_point.iter().sum::<f64>() / NUM_POINTS as f64;
    Ok(PointMetric { overall, per_point })
}

fn per_point_mean(pred: &Trajectory, target: &Trajectory, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut acc = vec![0.0f64; NUM_POINTS];
    for (i, (p, t)) in pred.coords().iter().zip(target.coords()).enumerate() {
        acc[(i % NUM_COORDS) / 2] += f(*p as f64 - *t as f64);
    }
    let n = 2.0 * pred.len() as f64;
    acc.into_iter().map(|s| s / n).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Correlation {
    /// Mean over dimensions with nonzero variance in both series.
    pub mean: f64,
    /// Per coordinate dimension; `None` where the correlation is undefined.
    pub per_dim: Vec<Option<f64>>,
    pub skipped: usize,
}

/// Pearson correlation of two series, `None` if either is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation per coordinate over time, averaged over dimensions.
pub fn pcc(pred: &Trajectory, target: &Trajectory) -> Result<Correlation> {
    check_shapes(pred, target)?;
    if pred.len() < 2 {
        return Err(Error::Invalid("correlation needs at least two frames".into()));
    }
    let per_dim: Vec<Option<f64>> = (0..NUM_COORDS)
        .map(|d| pearson(&pred.series(d), &target.series(d)))
        .collect();
    let defined: Vec<f64> = per_dim.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::UndefinedCorrelation);
    }
    Ok(Correlation {
        mean: defined.iter().sum::<f64>() / defined.len() as f64,
        skipped: NUM_COORDS - defined.len(),
        per_dim,
    })
}

/// Metrics for one clip, with stable serialized key names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipMetrics {
    pub clip_id: String,
    pub frames: usize,
    pub rmse: f64,
    pub l1: f64,
    /// `None` when no dimension has a defined correlation.
    pub pcc: Option<f64>,
    pub pcc_skipped_dims: usize,
    pub per_point_rmse: Vec<f64>,
    pub per_point_l1: Vec<f64>,
    pub per_point_pcc: Vec<Option<f64>>,
}

pub fn evaluate_clip(pred: &Trajectory, target: &Trajectory) -> Result<ClipMetrics> {
    let r = rmse(pred, target)?;
    let a = l1(pred, target)?;
    let (pcc_mean, skipped, per_point_pcc) = match pcc(pred, target) {
        Ok(c) => {
            let per_point = (0..NUM_POINTS)
                .map(|p| {
                    let vals: Vec<f64> = c.per_dim[2 * p..2 * p + 2].iter().flatten().copied().collect();
                    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
                })
                .collect();
            (Some(c.mean), c.skipped, per_point)
        }
        Err(Error::UndefinedCorrelation) | Err(Error::Invalid(_)) => {
            (None, NUM_COORDS, vec![None; NUM_POINTS])
        }
        Err(e) => return Err(e),
    };
    Ok(ClipMetrics {
        clip_id: target.clip_id.clone(),
        frames: target.len(),
        rmse: r.overall,
        l1: a.overall,
        pcc: pcc_mean,
        pcc_skipped_dims: skipped,
        per_point_rmse: r.per_point,
        per_point_l1: a.per_point,
        per_point_pcc,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusMetrics {
    pub clips: usize,
    pub frames: usize,
    pub rmse: f64,
    pub l1: f64,
    pub pcc: Option<f64>,
}

/// Duration-weighted (frame-count-weighted) mean of clip metrics. PCC is
/// averaged over the clips where it is defined.
pub fn aggregate(clips: &[ClipMetrics]) -> CorpusMetrics {
    let frames: usize = clips.iter().map(|c| c.frames).sum();
    let wmean = |f: &dyn Fn(&ClipMetrics) -> f64| {
        if frames == 0 {
            0.0
        } else {
            clips.iter().map(|c| f(c) * c.frames as f64).sum::<f64>() / frames as f64
        }
    };
    let pcc_frames: usize = clips.iter().filter(|c| c.pcc.is_some()).map(|c| c.frames).sum();
    let pcc = (pcc_frames > 0).then(|| {
        clips
            .iter()
            .filter_map(|c| c.pcc.map(|p| p * c.frames as f64))
            .sum::<f64>()
            / pcc_frames as f64
    });
    CorpusMetrics {
        clips: clips.len(),
        frames,
        rmse: wmean(&|c| c.rmse),
        l1: wmean(&|c| c.l1),
        pcc,
    }
}
