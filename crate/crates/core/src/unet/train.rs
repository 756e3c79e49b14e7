//! Training loop for the vision-only segmenter.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vocaltrack_nn::optim::{cosine_lr, Adam};
use vocaltrack_nn::{Module, Tensor};

use super::{frames_to_tensor, UNet};
use crate::augment::{augment, AugmentConfig};
use crate::codec::{render_target, CodecConfig};
use crate::error::{Error, Result};
use crate::losses::{heatmap_loss, LossConfig};
use crate::types::{Frame, HeatmapKind, HeatmapStack, KeypointSet, GRID_PIXELS, NUM_POINTS};

/// One padded frame with its annotation in padded coordinates.
#[derive(Clone, Debug)]
pub struct TrainSample {
    pub frame: Frame,
    pub points: KeypointSet,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub warmup_steps: usize,
    pub loss: LossConfig,
    pub augment: AugmentConfig,
    pub codec: CodecConfig,
    pub seed: u64,
    /// Written after every epoch when set.
    pub checkpoint_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 6,
            batch_size: 8,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            warmup_steps: 20,
            loss: LossConfig::default(),
            augment: AugmentConfig::default(),
            codec: CodecConfig::default(),
            seed: 0,
            checkpoint_path: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Invalid("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Invalid("batch size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Invalid(format!("bad learning rate {}", self.learning_rate)));
        }
        self.loss.validate()?;
        self.augment.validate()?;
        self.codec.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub learning_rate: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_val_loss: Option<f64>,
    pub epochs: Vec<EpochLog>,
    /// Loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.step_losses.last().copied()
    }
}

/// Mean loss of `samples` without augmentation.
pub fn evaluate_loss(model: &UNet, samples: &[TrainSample], cfg: &TrainConfig) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Invalid("no samples to evaluate".into()));
    }
    let mut total = 0.0;
    for chunk in samples.chunks(cfg.batch_size) {
        let frames: Vec<Frame> = chunk.iter().map(|s| s.frame.clone()).collect();
        let out = model.forward(&frames_to_tensor(&frames)?)?;
        for (s, grids) in chunk.iter().zip(out.data().chunks_exact(NUM_POINTS * GRID_PIXELS)) {
            let pred = HeatmapStack::new(HeatmapKind::Logits, grids.to_vec())?;
            let target = render_target(&s.points, &cfg.codec)?;
            total += heatmap_loss(&pred, &target, &cfg.loss)?.value;
        }
    }
    Ok(total / samples.len() as f64)
}

/// Minibatch training with per-epoch shuffling, on-line augmentation and a
/// cosine learning-rate schedule. Aborts on the first non-finite loss.
pub fn train(model: &mut UNet, train_set: &[TrainSample], val_set: &[TrainSample], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Invalid("empty training set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = match cfg.optimizer {
        OptimizerKind::Adam => Adam::default(),
    };
    let steps_per_epoch = train_set.len().div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let mut report = TrainReport {
        initial_val_loss: (!val_set.is_empty())
            .then(|| evaluate_loss(model, val_set, cfg))
            .transpose()?,
        ..Default::default()
    };
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut lr = cfg.learning_rate;
        for batch in order.chunks(cfg.batch_size) {
            let mut frames = Vec::with_capacity(batch.len());
            let mut targets = Vec::with_capacity(batch.len());
            for &i in batch {
                let s = &train_set[i];
                let (f, p) = augment(&s.frame, &s.points, &cfg.augment, &mut rng)?;
                frames.push(f);
                targets.push(render_target(&p, &cfg.codec)?);
            }
            let (out, ctx) = model.forward_train(&frames_to_tensor(&frames)?)?;
            let per = NUM_POINTS * GRID_PIXELS;
            let scale = 1.0 / batch.len() as f32;
            let mut grad = Vec::with_capacity(out.numel());
            let mut loss = 0.0;
            for (grids, target) in out.data().chunks_exact(per).zip(&targets) {
                let pred = HeatmapStack::new(HeatmapKind::Logits, grids.to_vec())?;
                let l = heatmap_loss(&pred, target, &cfg.loss)?;
                loss += l.value / batch.len() as f64;
                grad.extend(l.grad.iter().map(|g| g * scale));
            }
            if !loss.is_finite() {
                return Err(Error::Diverged { step, loss });
            }
            model.zero_grad();
            model.backward(ctx, &Tensor::new(out.shape(), grad));
            lr = cosine_lr(cfg.learning_rate, step, total_steps, cfg.warmup_steps.min(total_steps / 2));
            opt.step(model, lr);
            report.step_losses.push(loss);
            epoch_loss += loss * batch.len() as f64;
            step += 1;
        }
        let val_loss = (!val_set.is_empty())
            .then(|| evaluate_loss(model, val_set, cfg))
            .transpose()?;
        if let Some(v) = val_loss.filter(|v| !v.is_finite()) {
            return Err(Error::Diverged { step, loss: v });
        }
        report.epochs.push(EpochLog {
            epoch: epoch + 1,
            train_loss: epoch_loss / train_set.len() as f64,
            val_loss,
            learning_rate: lr,
        });
        if let Some(path) = &cfg.checkpoint_path {
            model.to_checkpoint().save(path)?;
        }
    }
    Ok(report)
}
