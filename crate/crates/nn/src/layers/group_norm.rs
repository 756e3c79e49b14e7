use crate::{impl_module, Param, Tensor};

const EPS: f64 = 1e-5;

/// Group normalization with per-channel affine parameters. Statistics are per
/// sample, so results do not depend on batch composition.
#[derive(Clone, Debug)]
pub struct GroupNorm {
    pub gamma: Param,
    pub beta: Param,
    groups: usize,
    channels: usize,
}

impl_module!(GroupNorm { gamma, beta });

pub struct GroupNormCtx {
    xhat: Vec<f32>,
    inv_std: Vec<f32>,
    shape: (usize, usize, usize, usize),
}

impl GroupNorm {
    pub fn new(name: &str, groups: usize, channels: usize) -> Self {
        assert!(groups > 0 && channels % groups == 0, "channels must divide into groups");
        Self {
            gamma: Param::filled(format!("{name}.gamma"), &[channels], 1.0),
            beta: Param::zeros(format!("{name}.beta"), &[channels]),
            groups,
            channels,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        self.forward_train(x).0
    }

    pub fn forward_train(&self, x: &Tensor) -> (Tensor, GroupNormCtx) {
        let (n, c, h, w) = x.dims4();
        assert_eq!(c, self.channels);
        let plane = h * w;
        let cpg = c / self.groups;
        let glen = cpg * plane;
        let mut xhat = vec![0.0f32; x.numel()];
        let mut out = vec![0.0f32; x.numel()];
        let mut inv_std = Vec::with_capacity(n * self.groups);
        for s in 0..n {
            for g in 0..self.groups {
                let off = (s * c + g * cpg) * plane;
                let seg = &x.data()[off..off + glen];
                let mean = seg.iter().map(|v| *v as f64).sum::<f64>() / glen as f64;
                let var = seg
                    .iter()
                    .map(|v| {
                        let d = *v as f64 - mean;
                        d * d
                    })
                    .sum::<f64>()
                    / glen as f64;
                let istd = 1.0 / (var + EPS).sqrt();
                inv_std.push(istd as f32);
                for ci in 0..cpg {
                    let ch = g * cpg + ci;
                    let (ga, be) = (self.gamma.value[ch], self.beta.value[ch]);
                    for i in 0..plane {
                        let idx = off + ci * plane + i;
                        let xh = ((x.data()[idx] as f64 - mean) * istd) as f32;
                        xhat[idx] = xh;
                        out[idx] = ga * xh + be;
                    }
                }
            }
        }
        (
            Tensor::new(x.shape(), out),
            GroupNormCtx {
                xhat,
                inv_std,
                shape: (n, c, h, w),
            },
        )
    }

    pub fn backward(&mut self, ctx: GroupNormCtx, dy: &Tensor) -> Tensor {
        let (n, c, h, w) = ctx.shape;
        let plane = h * w;
        let cpg = c / self.groups;
        let glen = (cpg * plane) as f64;
        let mut dx = vec![0.0f32; dy.numel()];
        for s in 0..n {
            for g in 0..self.groups {
                let off = (s * c + g * cpg) * plane;
                // Sums of dxhat and dxhat·xhat over the group.
                let mut sum_d = 0.0f64;
                let mut sum_dx = 0.0f64;
                for ci in 0..cpg {
                    let ch = g * cpg + ci;
                    let ga = self.gamma.value[ch] as f64;
                    let mut gsum = 0.0f64;
                    let mut bsum = 0.0f64;
                    for i in 0..plane {
                        let idx = off + ci * plane + i;
                        let d = dy.data()[idx] as f64;
                        let xh = ctx.xhat[idx] as f64;
                        gsum += d * xh;
                        bsum += d;
                        sum_d += d * ga;
                        sum_dx += d * ga * xh;
                    }
                    self.gamma.grad[ch] += gsum as f32;
                    self.beta.grad[ch] += bsum as f32;
                }
                let istd = ctx.inv_std[s * self.groups + g] as f64;
                let mean_d = sum_d / glen;
                let mean_dx = sum_dx / glen;
                for ci in 0..cpg {
                    let ch = g * cpg + ci;
                    let ga = self.gamma.value[ch] as f64;
                    for i in 0..plane {
                        let idx = off + ci * plane + i;
                        let dxh = dy.data()[idx] as f64 * ga;
                        let xh = ctx.xhat[idx] as f64;
                        dx[idx] = (istd * (dxh - mean_d - xh * mean_dx)) as f32;
                    }
                }
            }
        }
        Tensor::new(dy.shape(), dx)
    }
}
