use rand::Rng;
use vocaltrack_nn::layers::{relu, relu_backward, sigmoid, Conv2d, Conv2dCtx};
use vocaltrack_nn::{impl_module, Tensor};

/// Additive attention gate on a skip connection.
///
/// `mask = σ(ψ(relu(W_s·skip + W_g·gating)))` is a single-channel spatial map
/// in `(0, 1)`; the output is `mask ⊙ skip`, broadcast over channels. The
/// gating signal must already be at the skip's spatial size.
#[derive(Clone, Debug)]
pub struct AttentionGate {
    pub w_skip: Conv2d,
    pub w_gate: Conv2d,
    pub psi: Conv2d,
}

impl_module!(AttentionGate { w_skip, w_gate, psi });

pub struct AttentionGateCtx {
    skip: Tensor,
    mask: Tensor,
    hidden: Tensor,
    skip_ctx: Conv2dCtx,
    gate_ctx: Conv2dCtx,
    psi_ctx: Conv2dCtx,
}

impl AttentionGate {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        skip_channels: usize,
        gate_channels: usize,
        inter_channels: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            w_skip: Conv2d::new(&format!("{name}.w_skip"), skip_channels, inter_channels, 1, rng),
            w_gate: Conv2d::new(&format!("{name}.w_gate"), gate_channels, inter_channels, 1, rng),
            psi: Conv2d::new(&format!("{name}.psi"), inter_channels, 1, 1, rng),
        }
    }

    /// Returns `(gated skip, mask)`.
    pub fn forward(&self, skip: &Tensor, gating: &Tensor) -> (Tensor, Tensor) {
        let (out, ctx) = self.forward_train(skip, gating);
        (out, ctx.mask)
    }

    pub fn forward_train(&self, skip: &Tensor, gating: &Tensor) -> (Tensor, AttentionGateCtx) {
        let (n, c, h, w) = skip.dims4();
        let (gn, _, gh, gw) = gating.dims4();
        assert_eq!((n, h, w), (gn, gh, gw), "attention gate: gating/skip spatial mismatch");
        let (mut pre, skip_ctx) = self.w_skip.forward_train(skip);
        let (g, gate_ctx) = self.w_gate.forward_train(gating);
        pre.add_assign(&g);
        let hidden = relu(&pre);
        let (logit, psi_ctx) = self.psi.forward_train(&hidden);
        let mask = Tensor::new(
            logit.shape(),
            logit.data().iter().map(|v| sigmoid(*v)).collect(),
        );
        let plane = h * w;
        let mut out = skip.clone();
        for s in 0..n {
            let m = &mask.data()[s * plane..(s + 1) * plane];
            for ch in 0..c {
                let row = &mut out.data_mut()[(s * c + ch) * plane..][..plane];
                for (v, mv) in row.iter_mut().zip(m) {
                    *v *= mv;
                }
            }
        }
        (
            out,
            AttentionGateCtx {
                skip: skip.clone(),
                mask,
                hidden,
                skip_ctx,
                gate_ctx,
                psi_ctx,
            },
        )
    }

    /// Returns `(d skip, d gating)`.
    pub fn backward(&mut self, ctx: AttentionGateCtx, dy: &Tensor) -> (Tensor, Tensor) {
        let (n, c, h, w) = ctx.skip.dims4();
        let plane = h * w;
        let mut dskip = dy.clone();
        let mut dlogit = Tensor::zeros(&[n, 1, h, w]);
        for s in 0..n {
            let m = &ctx.mask.data()[s * plane..(s + 1) * plane];
            let dl = &mut dlogit.data_mut()[s * plane..(s + 1) * plane];
            for ch in 0..c {
                let off = (s * c + ch) * plane;
                let x = &ctx.skip.data()[off..off + plane];
                let g = &dy.data()[off..off + plane];
                for i in 0..plane {
                    dl[i] += g[i] * x[i];
                }
                let ds = &mut dskip.data_mut()[off..off + plane];
                for (d, mv) in ds.iter_mut().zip(m) {
                    *d *= mv;
                }
            }
            for (d, mv) in dl.iter_mut().zip(m) {
                *d *= mv * (1.0 - mv);
            }
        }
        let dhidden = self.psi.backward(ctx.psi_ctx, &dlogit);
        let dpre = relu_backward(&ctx.hidden, &dhidden);
        let dgate = self.w_gate.backward(ctx.gate_ctx, &dpre);
        dskip.add_assign(&self.w_skip.backward(ctx.skip_ctx, &dpre));
        (dskip, dgate)
    }
}
