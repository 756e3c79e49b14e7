//! Training objectives for the heatmap network and the fusion model.
//!
//! Grid-level kernels (`*_grid`) work on plain `f64` slices of any size and
//! carry closed-form gradients; the stack-level functions apply them to all 95
//! point channels of a [`HeatmapStack`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{
    ArticulatorWeights, HeatmapKind, HeatmapStack, PitchContour, Trajectory, GRID_PIXELS,
    NUM_COORDS, NUM_POINTS,
};

/// Floor applied to target probabilities inside the logarithm.
pub const LOG_TARGET_FLOOR: f64 = 1e-12;
/// Allowed deviation of a target grid's mass from 1.
pub const TARGET_MASS_TOL: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Mse,
    Kl,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub objective: Objective,
    pub use_articulatory_weighting: bool,
    #[serde(skip)]
    pub weights: Option<ArticulatorWeights>,
    pub lambda_traj: f64,
    pub lambda_pitch: f64,
    /// Pitch errors are measured in units of this many Hz.
    pub pitch_unit_hz: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Kl,
            use_articulatory_weighting: false,
            weights: None,
            lambda_traj: 1.0,
            lambda_pitch: 0.1,
            pitch_unit_hz: 100.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_traj < 0.0 || self.lambda_pitch < 0.0 || !(self.lambda_traj + self.lambda_pitch > 0.0) {
            return Err(Error::Invalid(
                "multi-task lambdas must be nonnegative with a positive sum".into(),
            ));
        }
        if !(self.pitch_unit_hz > 0.0) {
            return Err(Error::Invalid("pitch unit must be positive".into()));
        }
        Ok(())
    }

    /// Weights used for aggregation: the configured ones when weighting is
    /// on, uniform otherwise.
    pub fn effective_weights(&self) -> ArticulatorWeights {
        match (&self.weights, self.use_articulatory_weighting) {
            (Some(w), true) => w.clone(),
            _ => ArticulatorWeights::uniform(),
        }
    }
}

/// Mean squared error over one grid.
pub fn mse_grid(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64
}

pub fn mse_grid_grad(pred: &[f64], target: &[f64]) -> Vec<f64> {
    let n = pred.len() as f64;
    pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect()
}

/// Log-softmax with max subtraction.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// `KL(target ‖ softmax(logits))`; zero-probability target pixels contribute 0.
pub fn kl_grid(logits: &[f64], target: &[f64]) -> f64 {
    let logp = log_softmax(logits);
    target
        .iter()
        .zip(&logp)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, lp)| t * (t.max(LOG_TARGET_FLOOR).ln() - lp))
        .sum()
}

/// Gradient of [`kl_grid`] with respect to the logits:
/// `softmax(logits)·Σtarget − target`.
pub fn kl_grid_grad(logits: &[f64], target: &[f64]) -> Vec<f64> {
    let mass: f64 = target.iter().sum();
    log_softmax(logits)
        .iter()
        .zip(target)
        .map(|(lp, t)| lp.exp() * mass - t)
        .collect()
}

/// KL value and `coef`-scaled gradient written into `grad`, computed in one
/// pass over `f32` storage with `f64` accumulation.
fn kl_fused(logits: &[f32], target: &[f32], coef: f64, grad: &mut [f32], exps: &mut Vec<f32>) -> f64 {
    let mf = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let m = mf as f64;
    exps.clear();
    exps.extend(logits.iter().map(|z| (z - mf).exp()));
    let sum: f64 = exps.iter().map(|e| *e as f64).sum();
    let lse = m + sum.ln();
    let mut mass = 0.0;
    let mut loss = 0.0;
    for (z, t) in logits.iter().zip(target) {
        let t = *t as f64;
        if t > 0.0 {
            mass += t;
            loss += t * (t.max(LOG_TARGET_FLOOR).ln() - (*z as f64 - lse));
        }
    }
    for ((g, e), t) in grad.iter_mut().zip(exps.iter()).zip(target) {
        *g = (coef * (*e as f64 / sum * mass - *t as f64)) as f32;
    }
    loss
}

fn mse_fused(pred: &[f32], target: &[f32], coef: f64, grad: &mut [f32]) -> f64 {
    let n = pred.len() as f64;
    let mut loss = 0.0;
    for ((g, p), t) in grad.iter_mut().zip(pred).zip(target) {
        let d = *p as f64 - *t as f64;
        loss += d * d;
        *g = (coef * 2.0 * d / n) as f32;
    }
    loss / n
}

fn check_pair(pred: &HeatmapStack, target: &HeatmapStack) -> Result<()> {
    if target.kind == HeatmapKind::Logits {
        return Err(Error::Invalid("loss target must be a distribution, not logits".into()));
    }
    if pred.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("prediction"));
    }
    Ok(())
}

fn check_target_mass(target: &HeatmapStack) -> Result<()> {
    for (i, g) in target.grids().enumerate() {
        let mass: f64 = g.iter().map(|v| *v as f64).sum();
        if (mass - 1.0).abs() > TARGET_MASS_TOL || g.iter().any(|v| *v < 0.0) {
            return Err(Error::Invalid(format!(
                "target grid {i} is not a distribution (mass {mass})"
            )));
        }
    }
    Ok(())
}

fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|x| *x as f64).collect()
}

/// Per-point pixel-wise mean squared error.
pub fn pixel_mse(pred: &HeatmapStack, target: &HeatmapStack) -> Result<Vec<f64>> {
    check_pair(pred, target)?;
    Ok((0..NUM_POINTS)
        .map(|i| mse_grid(&to_f64(pred.grid(i)), &to_f64(target.grid(i))))
        .collect())
}

/// Per-point `KL(target ‖ softmax(pred_logits))`.
pub fn pixel_kl(pred_logits: &HeatmapStack, target: &HeatmapStack) -> Result<Vec<f64>> {
    check_pair(pred_logits, target)?;
    check_target_mass(target)?;
    Ok((0..NUM_POINTS)
        .map(|i| kl_grid(&to_f64(pred_logits.grid(i)), &to_f64(target.grid(i))))
        .collect())
}

/// `Σ wᵢ·lossᵢ / Σ wᵢ` with `w` the combined articulator weights.
pub fn apply_articulatory_weighting(per_point: &[f64], w: &ArticulatorWeights) -> Result<f64> {
    weighted_mean(per_point, w.combined())
}

fn weighted_mean(values: &[f64], weights: &[f64]) -> Result<f64> {
    if values.len() != weights.len() {
        return Err(Error::Shape(format!(
            "{} values but {} weights",
            values.len(),
            weights.len()
        )));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Invalid("weights sum to zero".into()));
    }
    Ok(values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total)
}

/// Scalar heatmap objective for one sample and its gradient with respect to
/// the network output.
pub struct HeatmapLoss {
    pub value: f64,
    pub per_point: Vec<f64>,
    pub grad: Vec<f32>,
}

/// Evaluates the configured objective (MSE on raw outputs, or KL on their
/// softmax) with articulatory or uniform point weighting.
pub fn heatmap_loss(pred: &HeatmapStack, target: &HeatmapStack, cfg: &LossConfig) -> Result<HeatmapLoss> {
    check_pair(pred, target)?;
    let weights = cfg.effective_weights();
    let total: f64 = weights.combined().iter().sum();
    let mut per_point = Vec::with_capacity(NUM_POINTS);
    let mut grad = vec![0.0f32; NUM_POINTS * GRID_PIXELS];
    let mut exps = Vec::with_capacity(GRID_PIXELS);
    for (i, g) in grad.chunks_exact_mut(GRID_PIXELS).enumerate() {
        let coef = weights.combined()[i] / total;
        per_point.push(match cfg.objective {
            Objective::Mse => mse_fused(pred.grid(i), target.grid(i), coef, g),
            Objective::Kl => kl_fused(pred.grid(i), target.grid(i), coef, g, &mut exps),
        });
    }
    let value = weighted_mean(&per_point, weights.combined())?;
    Ok(HeatmapLoss {
        value,
        per_point,
        grad,
    })
}

/// `λ_traj·mean|Δtraj| + λ_pitch·mean|Δpitch|`, pitch measured in
/// `pitch_unit_hz`. With articulatory weighting on, the trajectory term is a
/// weighted mean of per-point errors.
pub fn multitask_weighted_l1(
    pred_traj: &Trajectory,
    target_traj: &Trajectory,
    pred_pitch: &PitchContour,
    target_pitch: &PitchContour,
    cfg: &LossConfig,
) -> Result<f64> {
    cfg.validate()?;
    let t = target_traj.len();
    if pred_traj.len() != t || pred_pitch.len() != t || target_pitch.len() != t {
        return Err(Error::Shape(format!(
            "multi-task lengths differ: traj {}/{}, pitch {}/{}",
            pred_traj.len(),
            t,
            pred_pitch.len(),
            target_pitch.len()
        )));
    }
    let mut per_point = vec![0.0f64; NUM_POINTS];
    for (i, (p, q)) in pred_traj.coords().iter().zip(target_traj.coords()).enumerate() {
        per_point[(i % NUM_COORDS) / 2] += (*p as f64 - *q as f64).abs();
    }
    per_point.iter_mut().for_each(|v| *v /= 2.0 * t as f64);
    let traj_term = weighted_mean(&per_point, cfg.effective_weights().combined())?;
    let pitch_term = pred_pitch
        .f0()
        .iter()
        .zip(target_pitch.f0())
        .map(|(a, b)| (*a as f64 - *b as f64).abs())
        .sum::<f64>()
        / (t as f64 * cfg.pitch_unit_hz);
    Ok(cfg.lambda_traj * traj_term + cfg.lambda_pitch * pitch_term)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_toy_grid_is_ln2() {
        let kl = kl_grid(&[0.0; 4], &[0.5, 0.5, 0.0, 0.0]);
        assert!((kl - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn kl_is_zero_at_the_target() {
        let target = [0.1, 0.2, 0.3, 0.4];
        let logits: Vec<f64> = target.iter().map(|t: &f64| t.ln() + 3.0).collect();
        assert!(kl_grid(&logits, &target).abs() < 1e-12);
    }

    #[test]
    fn mse_constant_offset() {
        let t = vec![0.25; 16];
        let p: Vec<f64> = t.iter().map(|v| v + 0.1).collect();
        assert!((mse_grid(&p, &t) - 0.01).abs() < 1e-12);
    }

    #[test]
    fn weighting_examples() {
        let per_point: Vec<f64> = (0..NUM_POINTS).map(|i| i as f64 * 0.5).collect();
        let uniform = ArticulatorWeights::uniform();
        let plain = per_point.iter().sum::<f64>() / NUM_POINTS as f64;
        assert_eq!(apply_articulatory_weighting(&per_point, &uniform).unwrap(), plain);

        let mut imp = vec![0.0; NUM_POINTS];
        imp[17] = 3.0;
        let single = ArticulatorWeights::new(imp, vec![2.0; NUM_POINTS]).unwrap();
        assert_eq!(apply_articulatory_weighting(&per_point, &single).unwrap(), per_point[17]);

        assert!(apply_articulatory_weighting(&per_point[..10], &uniform).is_err());
    }

    #[test]
    fn doubling_importance_doubles_unnormalized_contribution() {
        let per_point = vec![1.5; NUM_POINTS];
        let base = ArticulatorWeights::uniform();
        let mut imp = vec![1.0; NUM_POINTS];
        imp[4] = 2.0;
        let doubled = ArticulatorWeights::new(imp, vec![1.0; NUM_POINTS]).unwrap();
        let contrib = |w: &ArticulatorWeights| w.combined()[4] * per_point[4];
        assert_eq!(contrib(&doubled), 2.0 * contrib(&base));
    }

    #[test]
    fn stack_loss_matches_grid_kernels() {
        let logits: Vec<f32> = (0..NUM_POINTS * GRID_PIXELS)
            .map(|i| ((i * 2654435761usize) % 1000) as f32 / 250.0 - 2.0)
            .collect();
        let pred = HeatmapStack::new(HeatmapKind::Logits, logits).unwrap();
        let mut points = Vec::new();
        for i in 0..NUM_POINTS {
            points.push([10.0 + (i % 70) as f32, 12.0 + (i / 7) as f32 * 0.9]);
        }
        let target = crate::codec::render_target(
            &crate::types::KeypointSet::new(points).unwrap(),
            &crate::codec::CodecConfig::default(),
        )
        .unwrap();
        for objective in [Objective::Kl, Objective::Mse] {
            let cfg = LossConfig { objective, ..Default::default() };
            let fast = heatmap_loss(&pred, &target, &cfg).unwrap();
            for i in [0, 47, 94] {
                let (p, t) = (to_f64(pred.grid(i)), to_f64(target.grid(i)));
                let (value, grad) = match objective {
                    Objective::Kl => (kl_grid(&p, &t), kl_grid_grad(&p, &t)),
                    Objective::Mse => (mse_grid(&p, &t), mse_grid_grad(&p, &t)),
                };
                assert!((fast.per_point[i] - value).abs() < 1e-9 * value.abs().max(1.0));
                let g = &fast.grad[i * GRID_PIXELS..(i + 1) * GRID_PIXELS];
                for (a, b) in g.iter().zip(&grad) {
                    assert!((*a as f64 * NUM_POINTS as f64 - b).abs() < 1e-8 + 1e-5 * b.abs());
                }
            }
        }
    }

    #[test]
    fn lambda_validation() {
        let cfg = LossConfig {
            lambda_traj: 0.0,
            lambda_pitch: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
