//! Multi-task training of the fusion model.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vocaltrack_nn::optim::{cosine_lr, Adam};
use vocaltrack_nn::Module;

use super::features::FeatureSequence;
use super::model::{FusionModel, FusionOutput};
use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::types::{PitchContour, Trajectory, NUM_COORDS};

/// One clip: upstream keypoints, aligned audio, and the targets.
#[derive(Clone, Debug)]
pub struct FusionSample {
    pub keypoints: Trajectory,
    pub features: Option<FeatureSequence>,
    pub target: Trajectory,
    pub pitch: PitchContour,
}

impl FusionSample {
    fn check(&self) -> Result<()> {
        let t = self.target.len();
        let feat_ok = self.features.as_ref().is_none_or(|f| f.len() == t);
        if self.keypoints.len() != t || self.pitch.len() != t || !feat_ok {
            return Err(Error::Shape(format!(
                "clip {}: keypoints, features, targets and pitch must share T = {t}",
                self.target.clip_id
            )));
        }
        Ok(())
    }

    fn window(&self, start: usize, len: usize) -> Result<Self> {
        let cut = |tr: &Trajectory| {
            Trajectory::from_flat(
                tr.clip_id.clone(),
                tr.frame_rate,
                tr.coords()[start * NUM_COORDS..(start + len) * NUM_COORDS].to_vec(),
            )
        };
        Ok(Self {
            keypoints: cut(&self.keypoints)?,
            features: self
                .features
                .as_ref()
                .map(|f| {
                    FeatureSequence::new(
                        f.rate,
                        f.offset_secs + start as f64 / f.rate,
                        f.dim(),
                        f.data()[start * f.dim()..(start + len) * f.dim()].to_vec(),
                    )
                })
                .transpose()?,
            target: cut(&self.target)?,
            pitch: PitchContour::new(self.pitch.f0()[start..start + len].to_vec())?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub warmup_steps: usize,
    /// Random crop length per step; `None` trains on whole clips.
    pub window: Option<usize>,
    pub loss: LossConfig,
    pub seed: u64,
    pub checkpoint_path: Option<PathBuf>,
}

impl Default for FusionTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            learning_rate: 5e-4,
            warmup_steps: 20,
            window: None,
            loss: LossConfig::default(),
            seed: 0,
            checkpoint_path: None,
        }
    }
}

/// Multi-task L1 value with gradients with respect to the output
/// coordinates and pitch (Hz).
pub struct FusionLoss {
    pub value: f64,
    pub dcoords: Vec<f32>,
    pub dpitch: Vec<f32>,
}

pub fn fusion_loss(out: &FusionOutput, target: &Trajectory, pitch: &PitchContour, cfg: &LossConfig) -> Result<FusionLoss> {
    let t = target.len();
    if out.coords.len() != t * NUM_COORDS || out.pitch_hz.len() != t || pitch.len() != t {
        return Err(Error::Shape("fusion output and targets disagree in length".into()));
    }
    let weights = cfg.effective_weights();
    let total: f64 = weights.combined().iter().sum();
    let mut value = 0.0;
    let mut dcoords = Vec::with_capacity(out.coords.len());
    for (i, (p, q)) in out.coords.iter().zip(target.coords()).enumerate() {
        let w = cfg.lambda_traj * weights.combined()[(i % NUM_COORDS) / 2] / (total * 2.0 * t as f64);
        let d = *p as f64 - *q as f64;
        value += w * d.abs();
        dcoords.push((w * sign(d)) as f32);
    }
    let wp = cfg.lambda_pitch / (t as f64 * cfg.pitch_unit_hz);
    let mut dpitch = Vec::with_capacity(t);
    for (p, q) in out.pitch_hz.iter().zip(pitch.f0()) {
        let d = *p as f64 - *q as f64;
        value += wp * d.abs();
        dpitch.push((wp * sign(d)) as f32);
    }
    Ok(FusionLoss { value, dcoords, dpitch })
}

fn sign(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionEpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FusionReport {
    pub initial_val_loss: Option<f64>,
    pub epochs: Vec<FusionEpochLog>,
    pub step_losses: Vec<f64>,
}

/// Mean multi-task loss over clips; `zero_audio` feeds zeros to the audio
/// channels instead of each clip's features.
pub fn evaluate_fusion(model: &FusionModel, samples: &[FusionSample], cfg: &LossConfig, zero_audio: bool) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Invalid("no clips to evaluate".into()));
    }
    let mut total = 0.0;
    for s in samples {
        s.check()?;
        let audio = if zero_audio || model.config().audio_dim == 0 { None } else { s.features.as_ref() };
        let out = model.forward(&s.keypoints, audio)?;
        total += fusion_loss(&out, &s.target, &s.pitch, cfg)?.value;
    }
    Ok(total / samples.len() as f64)
}

/// Per-dimension mean and standard deviation of all training features.
pub fn feature_stats(samples: &[FusionSample], dim: usize) -> (Vec<f32>, Vec<f32>) {
    let mut sum = vec![0.0f64; dim];
    let mut sq = vec![0.0f64; dim];
    let mut n = 0usize;
    for f in samples.iter().filter_map(|s| s.features.as_ref()) {
        for i in 0..f.len() {
            for (k, v) in f.row(i).iter().enumerate() {
                sum[k] += *v as f64;
                sq[k] += (*v as f64).powi(2);
            }
            n += 1;
        }
    }
    let n = n.max(1) as f64;
    let mean: Vec<f32> = sum.iter().map(|s| (s / n) as f32).collect();
    let std = sq
        .iter()
        .zip(&sum)
        .map(|(q, s)| ((q / n - (s / n).powi(2)).max(0.0).sqrt().max(1e-3)) as f32)
        .collect();
    (mean, std)
}

/// One clip per step with Adam and a cosine schedule. Fits the audio
/// standardization on the training set first when the model has audio
/// channels and no statistics yet.
pub fn train_fusion(
    model: &mut FusionModel,
    train_set: &[FusionSample],
    val_set: &[FusionSample],
    cfg: &FusionTrainConfig,
) -> Result<FusionReport> {
    cfg.loss.validate()?;
    if cfg.epochs == 0 {
        return Err(Error::Invalid("epochs must be at least 1".into()));
    }
    if train_set.is_empty() {
        return Err(Error::Invalid("empty training set".into()));
    }
    for s in train_set.iter().chain(val_set) {
        s.check()?;
    }
    let dim = model.config().audio_dim;
    if dim > 0 {
        if train_set.iter().any(|s| s.features.is_none()) {
            return Err(Error::Invalid("audio model needs features for every training clip".into()));
        }
        if model.config().feature_mean.is_empty() {
            let (mean, std) = feature_stats(train_set, dim);
            model.set_feature_stats(mean, std)?;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::default();
    let total_steps = train_set.len() * cfg.epochs;
    let mut report = FusionReport {
        initial_val_loss: (!val_set.is_empty())
            .then(|| evaluate_fusion(model, val_set, &cfg.loss, false))
            .transpose()?,
        ..Default::default()
    };
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for &i in &order {
            let full = &train_set[i];
            let t = full.target.len();
            let cropped;
            let s = match cfg.window {
                Some(w) if w < t => {
                    cropped = full.window(rng.random_range(0..=t - w), w)?;
                    &cropped
                }
                _ => full,
            };
            let audio = if dim > 0 { s.features.as_ref() } else { None };
            let (out, ctx) = model.forward_train(&s.keypoints, audio)?;
            let loss = fusion_loss(&out, &s.target, &s.pitch, &cfg.loss)?;
            if !loss.value.is_finite() {
                return Err(Error::Diverged { step, loss: loss.value });
            }
            model.zero_grad();
            model.backward(ctx, &loss.dcoords, &loss.dpitch);
            opt.step(model, cosine_lr(cfg.learning_rate, step, total_steps, cfg.warmup_steps.min(total_steps / 2)));
            report.step_losses.push(loss.value);
            epoch_loss += loss.value;
            step += 1;
        }
        let val_loss = (!val_set.is_empty())
            .then(|| evaluate_fusion(model, val_set, &cfg.loss, false))
            .transpose()?;
        report.epochs.push(FusionEpochLog {
            epoch: epoch + 1,
            train_loss: epoch_loss / train_set.len() as f64,
            val_loss,
        });
        if let Some(path) = &cfg.checkpoint_path {
            model.to_checkpoint().save(path)?;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::model::FusionConfig;
    use crate::losses::multitask_weighted_l1;
    use crate::types::{ArticulatorWeights, NUM_POINTS};

    fn traj(t: usize, f: impl Fn(usize, usize) -> f32) -> Trajectory {
        let c = (0..t * NUM_COORDS).map(|i| f(i / NUM_COORDS, i % NUM_COORDS)).collect();
        Trajectory::from_flat("c", 83.33, c).unwrap()
    }

    #[test]
    fn loss_matches_reference_objective() {
        let target = traj(6, |t, d| 20.0 + (t * 3 + d) as f32 * 0.1);
        let out = FusionOutput {
            coords: traj(6, |t, d| 21.0 + ((t + d) % 5) as f32 * 0.3).coords().to_vec(),
            pitch_hz: vec![120.0, 0.0, 130.0, 180.0, 150.0, 90.0],
        };
        let pitch = PitchContour::new(vec![110.0, 100.0, 140.0, 170.0, 0.0, 95.0]).unwrap();
        let importance: Vec<f64> = (0..NUM_POINTS).map(|i| 1.0 + (i % 3) as f64).collect();
        let cfg = LossConfig {
            use_articulatory_weighting: true,
            weights: Some(ArticulatorWeights::new(importance, vec![1.5; NUM_POINTS]).unwrap()),
            ..Default::default()
        };
        let got = fusion_loss(&out, &target, &pitch, &cfg).unwrap().value;
        let pred = target.with_coords(out.coords.clone()).unwrap();
        let reference =
            multitask_weighted_l1(&pred, &target, &PitchContour::new(out.pitch_hz.clone()).unwrap(), &pitch, &cfg).unwrap();
        assert!((got - reference).abs() < 1e-12);
    }

    #[test]
    fn pitch_weight_zero_silences_pitch_head() {
        let cfg = FusionConfig { width: 16, depth: 1, heads: 2, ..Default::default() };
        let mut model = FusionModel::build(&cfg).unwrap();
        let kp = traj(8, |t, d| 30.0 + (t + d % 7) as f32);
        let target = traj(8, |t, d| 31.0 + (t + d % 5) as f32);
        let pitch = PitchContour::new(vec![150.0; 8]).unwrap();
        let (out, ctx) = model.forward_train(&kp, None).unwrap();
        let loss_cfg = LossConfig { lambda_pitch: 0.0, ..Default::default() };
        let l = fusion_loss(&out, &target, &pitch, &loss_cfg).unwrap();
        assert!(l.dpitch.iter().all(|g| *g == 0.0));
        model.zero_grad();
        model.backward(ctx, &l.dcoords, &l.dpitch);
        let mut pitch_grad = 0.0f32;
        model.visit_params(&mut |p| {
            if p.name.starts_with("pitch_head") {
                pitch_grad += p.grad.iter().map(|g| g.abs()).sum::<f32>();
            }
        });
        assert_eq!(pitch_grad, 0.0);
    }
}
