use rand::Rng;

use super::linear::{Linear, LinearCtx};
use crate::{gemm, impl_module, Tensor};

/// Full (non-causal) multi-head self-attention over a `(time, width)` sequence.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub qkv: Linear,
    pub out: Linear,
    heads: usize,
    width: usize,
}

impl_module!(MultiHeadAttention { qkv, out });

pub struct MultiHeadAttentionCtx {
    qkv_ctx: LinearCtx,
    out_ctx: LinearCtx,
    /// Per head: (q, k, v, probs), each head-local and contiguous.
    heads: Vec<[Vec<f32>; 4]>,
    time: usize,
}

impl MultiHeadAttention {
    pub fn new<R: Rng + ?Sized>(name: &str, width: usize, heads: usize, rng: &mut R) -> Self {
        assert!(heads > 0 && width % heads == 0, "width must divide into heads");
        Self {
            qkv: Linear::new(&format!("{name}.qkv"), width, 3 * width, rng),
            out: Linear::new(&format!("{name}.out"), width, width, rng),
            heads,
            width,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        self.forward_train(x).0
    }

    pub fn forward_train(&self, x: &Tensor) -> (Tensor, MultiHeadAttentionCtx) {
        let (t, c) = x.dims2();
        assert_eq!(c, self.width);
        let dh = c / self.heads;
        let scale = 1.0 / (dh as f32).sqrt();
        let (qkv, qkv_ctx) = self.qkv.forward_train(x);
        let mut merged = vec![0.0f32; t * c];
        let mut heads = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let take = |block: usize| -> Vec<f32> {
                let mut v = Vec::with_capacity(t * dh);
                for r in 0..t {
                    let base = r * 3 * c + block * c + h * dh;
                    v.extend_from_slice(&qkv.data()[base..base + dh]);
                }
                v
            };
            let (q, k, v) = (take(0), take(1), take(2));
            let mut probs = vec![0.0f32; t * t];
            gemm(t, dh, t, &q, false, &k, true, &mut probs, 0.0);
            for row in probs.chunks_mut(t) {
                let m = row.iter().fold(f32::NEG_INFINITY, |a, b| a.max(*b * scale));
                let mut sum = 0.0f32;
                for s in row.iter_mut() {
                    *s = (*s * scale - m).exp();
                    sum += *s;
                }
                row.iter_mut().for_each(|s| *s /= sum);
            }
            let mut o = vec![0.0f32; t * dh];
            gemm(t, t, dh, &probs, false, &v, false, &mut o, 0.0);
            for r in 0..t {
                merged[r * c + h * dh..r * c + (h + 1) * dh]
                    .copy_from_slice(&o[r * dh..(r + 1) * dh]);
            }
            heads.push([q, k, v, probs]);
        }
        let (y, out_ctx) = self.out.forward_train(&Tensor::new(&[t, c], merged));
        (
            y,
            MultiHeadAttentionCtx {
                qkv_ctx,
                out_ctx,
                heads,
                time: t,
            },
        )
    }

    pub fn backward(&mut self, ctx: MultiHeadAttentionCtx, dy: &Tensor) -> Tensor {
        let t = ctx.time;
        let c = self.width;
        let dh = c / self.heads;
        let scale = 1.0 / (dh as f32).sqrt();
        let dmerged = self.out.backward(ctx.out_ctx, dy);
        let mut dqkv = vec![0.0f32; t * 3 * c];
        for (h, [q, k, v, probs]) in ctx.heads.iter().enumerate() {
            let mut d_o = Vec::with_capacity(t * dh);
            for r in 0..t {
                d_o.extend_from_slice(&dmerged.data()[r * c + h * dh..r * c + (h + 1) * dh]);
            }
            let mut dprobs = vec![0.0f32; t * t];
            gemm(t, dh, t, &d_o, false, v, true, &mut dprobs, 0.0);
            let mut dv = vec![0.0f32; t * dh];
            gemm(t, t, dh, probs, true, &d_o, false, &mut dv, 0.0);
            // softmax backward, folded with the score scale
            for (drow, prow) in dprobs.chunks_mut(t).zip(probs.chunks(t)) {
                let dot: f32 = drow.iter().zip(prow).map(|(a, b)| a * b).sum();
                for (d, p) in drow.iter_mut().zip(prow) {
                    *d = p * (*d - dot) * scale;
                }
            }
            let mut dq = vec![0.0f32; t * dh];
            gemm(t, t, dh, &dprobs, false, k, false, &mut dq, 0.0);
            let mut dk = vec![0.0f32; t * dh];
            gemm(t, t, dh, &dprobs, true, q, false, &mut dk, 0.0);
            for r in 0..t {
                for (block, src) in [(0, &dq), (1, &dk), (2, &dv)] {
                    let base = r * 3 * c + block * c + h * dh;
                    dqkv[base..base + dh].copy_from_slice(&src[r * dh..(r + 1) * dh]);
                }
            }
        }
        self.qkv.backward(ctx.qkv_ctx, &Tensor::new(&[t, 3 * c], dqkv))
    }
}
