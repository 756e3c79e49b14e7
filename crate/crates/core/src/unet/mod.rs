//! Attention-gated U-Net mapping one padded frame to 95 heatmap logit grids.

mod gate;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vocaltrack_nn::layers::{
    max_pool2, max_pool2_backward, relu, relu_backward, Conv2d, Conv2dCtx, ConvTranspose2x2,
    ConvTranspose2x2Ctx, GroupNorm, GroupNormCtx, MaxPoolCtx,
};
use vocaltrack_nn::{impl_module, Checkpoint, Module, Tensor};

use crate::codec::{decode, normalize_probs, CodecConfig};
use crate::error::{Error, Result};
use crate::filter::{smooth, FilterConfig};
use crate::types::{Frame, HeatmapKind, HeatmapStack, KeypointSet, Trajectory, GRID, GRID_PIXELS, NUM_POINTS};

pub use gate::{AttentionGate, AttentionGateCtx};
pub use train::{evaluate_loss, train, EpochLog, OptimizerKind, TrainConfig, TrainReport, TrainSample};

pub const MODEL_KIND: &str = "unet";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UNetConfig {
    /// Number of contracting levels; each halves the spatial size.
    pub depth: usize,
    /// Channels at full resolution, doubling per level.
    pub base_channels: usize,
    pub attention: bool,
    /// Appends normalized row and column coordinates as two extra input
    /// channels, which lets small networks tell points apart by position.
    pub coord_channels: bool,
    /// Group count of the normalization layers (capped by channel count).
    pub norm_groups: usize,
    pub out_channels: usize,
    pub seed: u64,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self {
            depth: 4,
            base_channels: 32,
            attention: true,
            coord_channels: false,
            norm_groups: 8,
            out_channels: NUM_POINTS,
            seed: 0,
        }
    }
}

impl UNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || GRID % (1 << self.depth) != 0 {
            return Err(Error::Invalid(format!(
                "depth {} does not evenly halve a {GRID}-pixel grid (1 ≤ depth ≤ 5)",
                self.depth
            )));
        }
        if self.out_channels != NUM_POINTS {
            return Err(Error::Invalid(format!("out_channels must be {NUM_POINTS}")));
        }
        if self.base_channels == 0 || self.norm_groups == 0 {
            return Err(Error::Invalid("channel and group counts must be positive".into()));
        }
        for l in 0..=self.depth {
            let ch = self.channels(l);
            if ch % self.groups_for(ch) != 0 {
                return Err(Error::Invalid(format!(
                    "{ch} channels do not divide into {} groups",
                    self.groups_for(ch)
                )));
            }
        }
        Ok(())
    }

    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    fn groups_for(&self, channels: usize) -> usize {
        self.norm_groups.min(channels)
    }

    /// Spatial side of the bottleneck for a 96×96 input.
    pub fn bottleneck_size(&self) -> usize {
        GRID >> self.depth
    }
}

#[derive(Clone, Debug)]
struct ConvBlock {
    conv1: Conv2d,
    norm1: GroupNorm,
    conv2: Conv2d,
    norm2: GroupNorm,
}

impl_module!(ConvBlock { conv1, norm1, conv2, norm2 });

struct ConvBlockCtx {
    conv1: Conv2dCtx,
    norm1: GroupNormCtx,
    act1: Tensor,
    conv2: Conv2dCtx,
    norm2: GroupNormCtx,
    act2: Tensor,
}

impl ConvBlock {
    fn new(name: &str, cin: usize, cout: usize, groups: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            conv1: Conv2d::new(&format!("{name}.conv1"), cin, cout, 3, rng),
            norm1: GroupNorm::new(&format!("{name}.norm1"), groups, cout),
            conv2: Conv2d::new(&format!("{name}.conv2"), cout, cout, 3, rng),
            norm2: GroupNorm::new(&format!("{name}.norm2"), groups, cout),
        }
    }

    fn forward(&self, x: &Tensor) -> Tensor {
        let x = relu(&self.norm1.forward(&self.conv1.forward(x)));
        relu(&self.norm2.forward(&self.conv2.forward(&x)))
    }

    fn forward_train(&self, x: &Tensor) -> (Tensor, ConvBlockCtx) {
        let (y, conv1) = self.conv1.forward_train(x);
        let (y, norm1) = self.norm1.forward_train(&y);
        let act1 = relu(&y);
        let (y, conv2) = self.conv2.forward_train(&act1);
        let (y, norm2) = self.norm2.forward_train(&y);
        let act2 = relu(&y);
        (
            act2.clone(),
            ConvBlockCtx {
                conv1,
                norm1,
                act1,
                conv2,
                norm2,
                act2,
            },
        )
    }

    fn backward(&mut self, ctx: ConvBlockCtx, dy: &Tensor) -> Tensor {
        let d = relu_backward(&ctx.act2, dy);
        let d = self.norm2.backward(ctx.norm2, &d);
        let d = self.conv2.backward(ctx.conv2, &d);
        let d = relu_backward(&ctx.act1, &d);
        let d = self.norm1.backward(ctx.norm1, &d);
        self.conv1.backward(ctx.conv1, &d)
    }
}

#[derive(Clone, Debug)]
struct DecoderLevel {
    up: ConvTranspose2x2,
    gate: Option<AttentionGate>,
    block: ConvBlock,
}

impl_module!(DecoderLevel { up, gate, block });

struct DecoderCtx {
    up: ConvTranspose2x2Ctx,
    gate: Option<AttentionGateCtx>,
    block: ConvBlockCtx,
    skip_channels: usize,
}

/// The segmentation network. Parameters are read-only during inference, so a
/// model can be shared between threads.
#[derive(Clone, Debug)]
pub struct UNet {
    config: UNetConfig,
    encoders: Vec<ConvBlock>,
    bottleneck: ConvBlock,
    decoders: Vec<DecoderLevel>,
    head: Conv2d,
}

impl Module for UNet {
    fn visit_params(&self, f: &mut dyn FnMut(&vocaltrack_nn::Param)) {
        self.encoders.visit_params(f);
        self.bottleneck.visit_params(f);
        self.decoders.visit_params(f);
        self.head.visit_params(f);
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut vocaltrack_nn::Param)) {
        self.encoders.visit_params_mut(f);
        self.bottleneck.visit_params_mut(f);
        self.decoders.visit_params_mut(f);
        self.head.visit_params_mut(f);
    }
}

/// Everything the backward pass needs from one training forward pass.
pub struct UNetCtx {
    encoders: Vec<ConvBlockCtx>,
    pools: Vec<MaxPoolCtx>,
    bottleneck: ConvBlockCtx,
    /// Indexed by level (0 = full resolution).
    decoders: Vec<Option<DecoderCtx>>,
    head: Conv2dCtx,
}

impl UNet {
    pub fn build(config: &UNetConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let depth = config.depth;
        let mut encoders = Vec::with_capacity(depth);
        let mut cin = if config.coord_channels { 3 } else { 1 };
        for l in 0..depth {
            let ch = config.channels(l);
            encoders.push(ConvBlock::new(&format!("enc{l}"), cin, ch, config.groups_for(ch), &mut rng));
            cin = ch;
        }
        let bch = config.channels(depth);
        let bottleneck = ConvBlock::new("bottleneck", cin, bch, config.groups_for(bch), &mut rng);
        let mut decoders = Vec::with_capacity(depth);
        for l in 0..depth {
            let ch = config.channels(l);
            let below = config.channels(l + 1);
            let up = ConvTranspose2x2::new(&format!("dec{l}.up"), below, ch, &mut rng);
            let gate = config
                .attention
                .then(|| AttentionGate::new(&format!("dec{l}.gate"), ch, ch, (ch / 2).max(1), &mut rng));
            let block = ConvBlock::new(&format!("dec{l}.block"), 2 * ch, ch, config.groups_for(ch), &mut rng);
            decoders.push(DecoderLevel { up, gate, block });
        }
        let head = Conv2d::new("head", config.channels(0), config.out_channels, 1, &mut rng);
        Ok(Self {
            config: config.clone(),
            encoders,
            bottleneck,
            decoders,
            head,
        })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.config
    }

    /// Parameters owned by the attention gates.
    pub fn gate_param_count(&self) -> usize {
        self.decoders.iter().map(|d| d.gate.param_count()).sum()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let shape = x.shape();
        let unit = 1 << self.config.depth;
        match shape {
            [n, 1, h, w] if *n > 0 && h % unit == 0 && w % unit == 0 && *h > 0 && *w > 0 => Ok(()),
            _ => Err(Error::Shape(format!(
                "U-Net input must be B×1×H×W with H, W divisible by {unit}, got {shape:?}"
            ))),
        }
    }

    fn network_input(&self, x: &Tensor) -> Tensor {
        if !self.config.coord_channels {
            return x.clone();
        }
        let (n, _, h, w) = x.dims4();
        let mut data = Vec::with_capacity(n * 3 * h * w);
        for img in x.data().chunks_exact(h * w) {
            data.extend_from_slice(img);
            for r in 0..h {
                data.extend((0..w).map(|_| 2.0 * r as f32 / (h - 1).max(1) as f32 - 1.0));
            }
            for _ in 0..h {
                data.extend((0..w).map(|c| 2.0 * c as f32 / (w - 1).max(1) as f32 - 1.0));
            }
        }
        Tensor::new(&[n, 3, h, w], data)
    }

    /// Logits of shape `B × 95 × H × W`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut skips = Vec::with_capacity(self.config.depth);
        let mut h = self.network_input(x);
        for enc in &self.encoders {
            let y = enc.forward(&h);
            h = max_pool2(&y).0;
            skips.push(y);
        }
        let mut h = self.bottleneck.forward(&h);
        for (l, dec) in self.decoders.iter().enumerate().rev() {
            let up = dec.up.forward(&h);
            let skip = match &dec.gate {
                Some(g) => g.forward(&skips[l], &up).0,
                None => skips[l].clone(),
            };
            h = dec.block.forward(&Tensor::cat_channels(&skip, &up));
        }
        Ok(self.head.forward(&h))
    }

    /// Attention masks per decoder level (index 0 = full resolution) for the
    /// given input; empty when gating is off.
    pub fn attention_masks(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        self.check_input(x)?;
        let mut skips = Vec::new();
        let mut h = self.network_input(x);
        for enc in &self.encoders {
            let y = enc.forward(&h);
            h = max_pool2(&y).0;
            skips.push(y);
        }
        let mut h = self.bottleneck.forward(&h);
        let mut masks = vec![None; self.config.depth];
        for (l, dec) in self.decoders.iter().enumerate().rev() {
            let up = dec.up.forward(&h);
            let skip = match &dec.gate {
                Some(g) => {
                    let (s, m) = g.forward(&skips[l], &up);
                    masks[l] = Some(m);
                    s
                }
                None => skips[l].clone(),
            };
            h = dec.block.forward(&Tensor::cat_channels(&skip, &up));
        }
        Ok(masks.into_iter().flatten().collect())
    }

    pub fn forward_train(&self, x: &Tensor) -> Result<(Tensor, UNetCtx)> {
        self.check_input(x)?;
        let depth = self.config.depth;
        let mut enc_ctx = Vec::with_capacity(depth);
        let mut pools = Vec::with_capacity(depth);
        let mut skips = Vec::with_capacity(depth);
        let mut h = self.network_input(x);
        for enc in &self.encoders {
            let (y, ctx) = enc.forward_train(&h);
            let (p, pctx) = max_pool2(&y);
            enc_ctx.push(ctx);
            pools.push(pctx);
            skips.push(y);
            h = p;
        }
        let (mut h, bottleneck) = self.bottleneck.forward_train(&h);
        let mut dec_ctx: Vec<Option<DecoderCtx>> = (0..depth).map(|_| None).collect();
        for (l, dec) in self.decoders.iter().enumerate().rev() {
            let (up, up_ctx) = dec.up.forward_train(&h);
            let (skip, gate_ctx) = match &dec.gate {
                Some(g) => {
                    let (s, c) = g.forward_train(&skips[l], &up);
                    (s, Some(c))
                }
                None => (skips[l].clone(), None),
            };
            let (y, block_ctx) = dec.block.forward_train(&Tensor::cat_channels(&skip, &up));
            dec_ctx[l] = Some(DecoderCtx {
                up: up_ctx,
                gate: gate_ctx,
                block: block_ctx,
                skip_channels: skip.dims4().1,
            });
            h = y;
        }
        let (out, head) = self.head.forward_train(&h);
        Ok((
            out,
            UNetCtx {
                encoders: enc_ctx,
                pools,
                bottleneck,
                decoders: dec_ctx,
                head,
            },
        ))
    }

    /// Accumulates parameter gradients for `d logits`.
    pub fn backward(&mut self, ctx: UNetCtx, dlogits: &Tensor) {
        let depth = self.config.depth;
        let mut d = self.head.backward(ctx.head, dlogits);
        let mut dskips: Vec<Option<Tensor>> = (0..depth).map(|_| None).collect();
        for (l, dctx) in ctx.decoders.into_iter().enumerate() {
            let dctx = dctx.expect("decoder context recorded for every level");
            let dec = &mut self.decoders[l];
            let dcat = dec.block.backward(dctx.block, &d);
            let (dskip_gated, mut dup) = dcat.split_channels(dctx.skip_channels);
            let dskip = match (&mut dec.gate, dctx.gate) {
                (Some(g), Some(gctx)) => {
                    let (ds, dg) = g.backward(gctx, &dskip_gated);
                    dup.add_assign(&dg);
                    ds
                }
                _ => dskip_gated,
            };
            dskips[l] = Some(dskip);
            d = dec.up.backward(dctx.up, &dup);
        }
        let mut d = self.bottleneck.backward(ctx.bottleneck, &d);
        let encs = ctx.encoders.into_iter().zip(ctx.pools).enumerate().rev();
        for (l, (ectx, pctx)) in encs {
            let mut dy = max_pool2_backward(pctx, &d);
            dy.add_assign(dskips[l].as_ref().expect("skip gradient"));
            d = self.encoders[l].backward(ectx, &dy);
        }
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
        let config: UNetConfig = serde_json::from_value(ck.config.clone())?;
        let mut model = Self::build(&config)?;
        ck.load_into(&mut model)?;
        Ok(model)
    }
}

/// Stacks padded frames into a `B × 1 × 96 × 96` tensor.
pub fn frames_to_tensor(frames: &[Frame]) -> Result<Tensor> {
    if let Some(f) = frames.iter().find(|f| !f.is_padded()) {
        return Err(Error::Shape(format!(
            "U-Net expects padded {GRID}×{GRID} frames, got {}×{}",
            f.height(),
            f.width()
        )));
    }
    let mut data = Vec::with_capacity(frames.len() * GRID_PIXELS);
    for f in frames {
        data.extend_from_slice(f.pixels());
    }
    Ok(Tensor::new(&[frames.len(), 1, GRID, GRID], data))
}

/// Logit heatmaps for each frame of a batch.
pub fn forward_frames(model: &UNet, frames: &[Frame]) -> Result<Vec<HeatmapStack>> {
    let out = model.forward(&frames_to_tensor(frames)?)?;
    if !out.all_finite() {
        return Err(Error::NonFinite("U-Net logits"));
    }
    let per = NUM_POINTS * GRID_PIXELS;
    out.data()
        .chunks_exact(per)
        .map(|c| HeatmapStack::new(HeatmapKind::Logits, c.to_vec()))
        .collect()
}

/// Per-frame decoded keypoints of a clip, before temporal smoothing.
pub fn predict_raw(model: &UNet, frames: &[Frame], codec: &CodecConfig, batch: usize) -> Result<Vec<KeypointSet>> {
    let mut out = Vec::with_capacity(frames.len());
    for chunk in frames.chunks(batch.max(1)) {
        for logits in forward_frames(model, chunk)? {
            out.push(decode(&normalize_probs(&logits)?, codec)?);
        }
    }
    Ok(out)
}

pub struct Prediction {
    pub raw: Trajectory,
    pub smoothed: Option<Trajectory>,
}

impl Prediction {
    /// The smoothed track when filtering was requested, else the raw one.
    pub fn best(&self) -> &Trajectory {
        self.smoothed.as_ref().unwrap_or(&self.raw)
    }
}

/// Forward → softmax → top-k decode per frame, then optional temporal
/// smoothing (`None` disables it).
pub fn predict_keypoints(
    model: &UNet,
    clip_id: &str,
    frames: &[Frame],
    codec: &CodecConfig,
    filter: Option<&FilterConfig>,
) -> Result<Prediction> {
    if frames.is_empty() {
        return Err(Error::Invalid("cannot label an empty clip".into()));
    }
    let raw = Trajectory::from_frames(clip_id, &predict_raw(model, frames, codec, 8)?)?;
    let smoothed = filter.map(|f| smooth(&raw, f));
    Ok(Prediction { raw, smoothed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> UNetConfig {
        UNetConfig {
            depth: 2,
            base_channels: 4,
            norm_groups: 2,
            ..Default::default()
        }
    }

    fn input(n: usize, side: usize) -> Tensor {
        let data = (0..n * side * side)
            .map(|i| ((i * 7919) % 97) as f32 / 97.0)
            .collect();
        Tensor::new(&[n, 1, side, side], data)
    }

    #[test]
    fn config_validation() {
        assert!(UNetConfig { depth: 6, ..Default::default() }.validate().is_err());
        assert!(UNetConfig { depth: 0, ..Default::default() }.validate().is_err());
        assert!(UNetConfig { out_channels: 10, ..Default::default() }.validate().is_err());
        assert!(UNetConfig { depth: 5, ..Default::default() }.validate().is_ok());
        assert_eq!(UNetConfig::default().bottleneck_size(), 6);
    }

    #[test]
    fn shape_contract_on_small_inputs() {
        let model = UNet::build(&small()).unwrap();
        for n in [1, 3] {
            let out = model.forward(&input(n, 16)).unwrap();
            assert_eq!(out.shape(), &[n, NUM_POINTS, 16, 16]);
            assert!(out.all_finite());
        }
        assert!(model.forward(&input(1, 18)).is_err());
    }

    #[test]
    fn train_forward_matches_inference() {
        let model = UNet::build(&small()).unwrap();
        let x = input(2, 16);
        let a = model.forward(&x).unwrap();
        let (b, _) = model.forward_train(&x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn attention_masks_are_open_interval() {
        let model = UNet::build(&small()).unwrap();
        let masks = model.attention_masks(&input(2, 16)).unwrap();
        assert_eq!(masks.len(), 2);
        for m in masks {
            assert!(m.data().iter().all(|v| *v > 0.0 && *v < 1.0));
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let model = UNet::build(&UNetConfig { seed: 4, ..small() }).unwrap();
        let ck = model.to_checkpoint();
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        let back = UNet::from_checkpoint(&Checkpoint::read_from(&bytes[..]).unwrap()).unwrap();
        let x = input(1, 16);
        assert_eq!(model.forward(&x).unwrap(), back.forward(&x).unwrap());
    }
}
