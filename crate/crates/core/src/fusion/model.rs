//! Fusion Transformer: U-Net keypoints plus aligned audio features in,
//! refined keypoints and pitch out.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vocaltrack_nn::layers::{
    relu, relu_backward, softplus, softplus_backward, Conv1d, Conv1dCtx, LayerNorm, LayerNormCtx,
    Linear, LinearCtx, MultiHeadAttention, MultiHeadAttentionCtx,
};
use vocaltrack_nn::{impl_module, Checkpoint, Module, Param, Tensor};

use super::features::FeatureSequence;
use crate::error::{Error, Result};
use crate::types::{PitchContour, Trajectory, GRID, NUM_COORDS};

pub const MODEL_KIND: &str = "fusion";
pub const CONV_BLOCKS: usize = 3;
/// Pitch head output unit.
pub const PITCH_SCALE_HZ: f32 = 100.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionalEncoding {
    #[default]
    Sinusoidal,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    /// Audio feature width; 0 builds the keypoint-only ablation.
    pub audio_dim: usize,
    pub width: usize,
    pub depth: usize,
    pub heads: usize,
    pub conv_blocks: usize,
    pub conv_kernel: usize,
    pub ffn_multiplier: usize,
    pub positional: PositionalEncoding,
    pub seed: u64,
    /// Per-dimension standardization of audio features, fitted on the
    /// training set.
    pub feature_mean: Vec<f32>,
    pub feature_std: Vec<f32>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            audio_dim: 0,
            width: 256,
            depth: 4,
            heads: 4,
            conv_blocks: CONV_BLOCKS,
            conv_kernel: 3,
            ffn_multiplier: 2,
            positional: PositionalEncoding::Sinusoidal,
            seed: 0,
            feature_mean: Vec::new(),
            feature_std: Vec::new(),
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.conv_blocks != CONV_BLOCKS {
            return Err(Error::Invalid(format!("the front-end has exactly {CONV_BLOCKS} residual blocks")));
        }
        if self.width == 0 || self.heads == 0 || self.width % self.heads != 0 {
            return Err(Error::Invalid(format!(
                "width {} must be a positive multiple of heads {}",
                self.width, self.heads
            )));
        }
        if self.conv_kernel % 2 == 0 || self.ffn_multiplier == 0 {
            return Err(Error::Invalid("conv kernel must be odd and the FFN multiplier positive".into()));
        }
        let stats = [self.feature_mean.len(), self.feature_std.len()];
        if stats != [0, 0] && stats != [self.audio_dim, self.audio_dim] {
            return Err(Error::Invalid("feature statistics do not match audio_dim".into()));
        }
        if self.feature_std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Invalid("feature standard deviations must be positive".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        NUM_COORDS + self.audio_dim
    }
}

#[derive(Clone, Debug)]
struct ResConvBlock {
    norm: LayerNorm,
    conv: Conv1d,
}

impl_module!(ResConvBlock { norm, conv });

#[derive(Clone, Debug)]
struct EncoderLayer {
    norm1: LayerNorm,
    attn: MultiHeadAttention,
    norm2: LayerNorm,
    ff1: Linear,
    ff2: Linear,
}

impl_module!(EncoderLayer { norm1, attn, norm2, ff1, ff2 });

struct EncoderCtx {
    norm1: LayerNormCtx,
    attn: MultiHeadAttentionCtx,
    norm2: LayerNormCtx,
    ff1: LinearCtx,
    hidden: Tensor,
    ff2: LinearCtx,
}

pub struct FusionCtx {
    input: LinearCtx,
    blocks: Vec<(LayerNormCtx, Tensor, Conv1dCtx)>,
    layers: Vec<EncoderCtx>,
    final_norm: LayerNormCtx,
    traj: LinearCtx,
    pitch: LinearCtx,
    pitch_pre: Vec<f32>,
}

#[derive(Clone, Debug)]
pub struct FusionModel {
    config: FusionConfig,
    input: Linear,
    blocks: Vec<ResConvBlock>,
    layers: Vec<EncoderLayer>,
    final_norm: LayerNorm,
    traj_head: Linear,
    pitch_head: Linear,
}

impl Module for FusionModel {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        self.input.visit_params(f);
        self.blocks.visit_params(f);
        self.layers.visit_params(f);
        self.final_norm.visit_params(f);
        self.traj_head.visit_params(f);
        self.pitch_head.visit_params(f);
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.input.visit_params_mut(f);
        self.blocks.visit_params_mut(f);
        self.layers.visit_params_mut(f);
        self.final_norm.visit_params_mut(f);
        self.traj_head.visit_params_mut(f);
        self.pitch_head.visit_params_mut(f);
    }
}

/// Raw network outputs for one clip.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionOutput {
    /// `T × 190`, padded-frame pixels.
    pub coords: Vec<f32>,
    /// `T` values in Hz, nonnegative.
    pub pitch_hz: Vec<f32>,
}

pub fn sinusoidal_encoding(frames: usize, width: usize) -> Vec<f32> {
    let mut pe = vec![0.0f32; frames * width];
    for t in 0..frames {
        for i in 0..width {
            let freq = 1.0 / 10000f64.powf((i - i % 2) as f64 / width as f64);
            let a = t as f64 * freq;
            pe[t * width + i] = if i % 2 == 0 { a.sin() } else { a.cos() } as f32;
        }
    }
    pe
}

const COORD_CENTER: f32 = GRID as f32 / 2.0;

impl FusionModel {
    pub fn build(config: &FusionConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let w = config.width;
        let input = Linear::new("input", config.input_dim(), w, &mut rng);
        let blocks = (0..config.conv_blocks)
            .map(|i| ResConvBlock {
                norm: LayerNorm::new(&format!("block{i}.norm"), w),
                conv: Conv1d::new(&format!("block{i}.conv"), w, w, config.conv_kernel, &mut rng),
            })
            .collect();
        let layers = (0..config.depth)
            .map(|i| EncoderLayer {
                norm1: LayerNorm::new(&format!("layer{i}.norm1"), w),
                attn: MultiHeadAttention::new(&format!("layer{i}.attn"), w, config.heads, &mut rng),
                norm2: LayerNorm::new(&format!("layer{i}.norm2"), w),
                ff1: Linear::new(&format!("layer{i}.ff1"), w, w * config.ffn_multiplier, &mut rng),
                ff2: Linear::new(&format!("layer{i}.ff2"), w * config.ffn_multiplier, w, &mut rng),
            })
            .collect();
        // Zero trajectory head: an untrained model passes keypoints through.
        let mut traj_head = Linear::new("traj_head", w, NUM_COORDS, &mut rng);
        traj_head.weight.value.iter_mut().for_each(|v| *v = 0.0);
        Ok(Self {
            config: config.clone(),
            input,
            blocks,
            layers,
            final_norm: LayerNorm::new("final_norm", w),
            traj_head,
            pitch_head: Linear::new("pitch_head", w, 1, &mut rng),
        })
    }

    pub fn config(&self) -> &FusionConfig {
        &self.config
    }

    /// Replaces the audio standardization statistics.
    pub fn set_feature_stats(&mut self, mean: Vec<f32>, std: Vec<f32>) -> Result<()> {
        let mut cfg = self.config.clone();
        cfg.feature_mean = mean;
        cfg.feature_std = std;
        cfg.validate()?;
        self.config = cfg;
        Ok(())
    }

    /// Network input rows `[keypoints / 48 - 1, standardized audio]`.
    /// `audio = None` feeds zeros to the audio channels.
    pub fn assemble_input(&self, keypoints: &Trajectory, audio: Option<&FeatureSequence>) -> Result<Tensor> {
        let t = keypoints.len();
        let d = self.config.audio_dim;
        if let Some(a) = audio {
            if a.len() != t || a.dim() != d {
                return Err(Error::Shape(format!(
                    "audio features are {}×{}, expected {t}×{d}",
                    a.len(),
                    a.dim()
                )));
            }
        }
        let mut data = Vec::with_capacity(t * self.config.input_dim());
        for i in 0..t {
            data.extend(keypoints.frame_coords(i).iter().map(|v| v / COORD_CENTER - 1.0));
            match audio {
                Some(a) => {
                    for (k, v) in a.row(i).iter().enumerate() {
                        let (m, s) = (
                            self.config.feature_mean.get(k).copied().unwrap_or(0.0),
                            self.config.feature_std.get(k).copied().unwrap_or(1.0),
                        );
                        data.push((v - m) / s);
                    }
                }
                None => data.extend(std::iter::repeat_n(0.0, d)),
            }
        }
        Ok(Tensor::new(&[t, self.config.input_dim()], data))
    }

    pub fn forward(&self, keypoints: &Trajectory, audio: Option<&FeatureSequence>) -> Result<FusionOutput> {
        Ok(self.forward_train(keypoints, audio)?.0)
    }

    pub fn forward_train(
        &self,
        keypoints: &Trajectory,
        audio: Option<&FeatureSequence>,
    ) -> Result<(FusionOutput, FusionCtx)> {
        if keypoints.is_empty() {
            return Err(Error::Invalid("empty keypoint sequence".into()));
        }
        let x = self.assemble_input(keypoints, audio)?;
        let t = keypoints.len();
        let (mut h, input) = self.input.forward_train(&x);
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (n, nctx) = b.norm.forward_train(&h);
            let a = relu(&n);
            let (c, cctx) = b.conv.forward_train(&a);
            h.add_assign(&c);
            blocks.push((nctx, a, cctx));
        }
        if self.config.positional == PositionalEncoding::Sinusoidal {
            h.add_assign(&Tensor::new(&[t, self.config.width], sinusoidal_encoding(t, self.config.width)));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let (n1, norm1) = l.norm1.forward_train(&h);
            let (a, attn) = l.attn.forward_train(&n1);
            h.add_assign(&a);
            let (n2, norm2) = l.norm2.forward_train(&h);
            let (f1, ff1) = l.ff1.forward_train(&n2);
            let hidden = relu(&f1);
            let (f2, ff2) = l.ff2.forward_train(&hidden);
            h.add_assign(&f2);
            layers.push(EncoderCtx {
                norm1,
                attn,
                norm2,
                ff1,
                hidden,
                ff2,
            });
        }
        let (z, final_norm) = self.final_norm.forward_train(&h);
        let (dt, traj) = self.traj_head.forward_train(&z);
        let (p, pitch) = self.pitch_head.forward_train(&z);
        let mut coords = keypoints.coords().to_vec();
        for (c, d) in coords.iter_mut().zip(dt.data()) {
            *c += d;
        }
        let pitch_pre = p.into_data();
        let pitch_hz = pitch_pre.iter().map(|v| PITCH_SCALE_HZ * softplus(*v)).collect();
        Ok((
            FusionOutput { coords, pitch_hz },
            FusionCtx {
                input,
                blocks,
                layers,
                final_norm,
                traj,
                pitch,
                pitch_pre,
            },
        ))
    }

    /// Accumulates gradients given `d loss / d coords` (`T × 190`) and
    /// `d loss / d pitch_hz` (`T`).
    pub fn backward(&mut self, ctx: FusionCtx, dcoords: &[f32], dpitch: &[f32]) {
        let t = dpitch.len();
        let dp: Vec<f32> = dpitch
            .iter()
            .zip(&ctx.pitch_pre)
            .map(|(g, v)| g * PITCH_SCALE_HZ * softplus_backward(*v))
            .collect();
        let mut dz = self.traj_head.backward(ctx.traj, &Tensor::new(&[t, NUM_COORDS], dcoords.to_vec()));
        dz.add_assign(&self.pitch_head.backward(ctx.pitch, &Tensor::new(&[t, 1], dp)));
        let mut dh = self.final_norm.backward(ctx.final_norm, &dz);
        for (l, c) in self.layers.iter_mut().zip(ctx.layers).rev() {
            let d = l.ff2.backward(c.ff2, &dh);
            let d = relu_backward(&c.hidden, &d);
            let d = l.ff1.backward(c.ff1, &d);
            dh.add_assign(&l.norm2.backward(c.norm2, &d));
            let d = l.attn.backward(c.attn, &dh);
            dh.add_assign(&l.norm1.backward(c.norm1, &d));
        }
        for (b, (nctx, act, cctx)) in self.blocks.iter_mut().zip(ctx.blocks).rev() {
            let d = b.conv.backward(cctx, &dh);
            let d = relu_backward(&act, &d);
            dh.add_assign(&b.norm.backward(nctx, &d));
        }
        self.input.backward(ctx.input, &dh);
    }

    /// Refined trajectory and pitch for one clip.
    pub fn predict(
        &self,
        keypoints: &Trajectory,
        audio: Option<&FeatureSequence>,
    ) -> Result<(Trajectory, PitchContour)> {
        let out = self.forward(keypoints, audio)?;
        if out.coords.iter().chain(&out.pitch_hz).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("fusion output"));
        }
        Ok((keypoints.with_coords(out.coords)?, PitchContour::new(out.pitch_hz)?))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::from_module(
            MODEL_KIND,
            serde_json::to_value(&self.config).expect("config serializes"),
            self,
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(MODEL_KIND)?;
        let config: FusionConfig = serde_json::from_value(ck.config.clone())?;
        let mut model = Self::build(&config)?;
        ck.load_into(&mut model)?;
        Ok(model)
    }
}
