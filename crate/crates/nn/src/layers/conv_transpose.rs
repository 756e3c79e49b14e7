use rand::Rng;

use crate::{gemm, impl_module, Param, Tensor};

/// Transposed convolution with a 2×2 kernel and stride 2 (exact 2× upsampling).
///
/// Weight layout is `[cout, 2, 2, cin]`, i.e. a `(cout·4) × cin` matrix whose
/// rows are indexed by `(co, dy, dx)`.
#[derive(Clone, Debug)]
pub struct ConvTranspose2x2 {
    pub weight: Param,
    pub bias: Param,
    in_channels: usize,
    out_channels: usize,
}

impl_module!(ConvTranspose2x2 { weight, bias });

pub struct ConvTranspose2x2Ctx {
    input: Tensor,
}

impl ConvTranspose2x2 {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            weight: Param::kaiming(
                format!("{name}.weight"),
                &[out_channels, 2, 2, in_channels],
                in_channels,
                rng,
            ),
            bias: Param::zeros(format!("{name}.bias"), &[out_channels]),
            in_channels,
            out_channels,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let (n, c, h, w) = x.dims4();
        assert_eq!(c, self.in_channels);
        let plane = h * w;
        let cout = self.out_channels;
        let (oh, ow) = (2 * h, 2 * w);
        let mut out = vec![0.0f32; n * cout * oh * ow];
        let mut tmp = vec![0.0f32; cout * 4 * plane];
        for s in 0..n {
            let input = &x.data()[s * c * plane..(s + 1) * c * plane];
            gemm(cout * 4, c, plane, &self.weight.value, false, input, false, &mut tmp, 0.0);
            let dst = &mut out[s * cout * oh * ow..(s + 1) * cout * oh * ow];
            for co in 0..cout {
                let b = self.bias.value[co];
                for sub in 0..4 {
                    let (ay, ax) = (sub / 2, sub % 2);
                    let src = &tmp[(co * 4 + sub) * plane..][..plane];
                    for y in 0..h {
                        let row = &mut dst[(co * oh + 2 * y + ay) * ow..][..ow];
                        for xx in 0..w {
                            row[2 * xx + ax] = src[y * w + xx] + b;
                        }
                    }
                }
            }
        }
        Tensor::new(&[n, cout, oh, ow], out)
    }

    pub fn forward_train(&self, x: &Tensor) -> (Tensor, ConvTranspose2x2Ctx) {
        (self.forward(x), ConvTranspose2x2Ctx { input: x.clone() })
    }

    pub fn backward(&mut self, ctx: ConvTranspose2x2Ctx, dy: &Tensor) -> Tensor {
        let x = ctx.input;
        let (n, c, h, w) = x.dims4();
        let plane = h * w;
        let cout = self.out_channels;
        let (oh, ow) = (2 * h, 2 * w);
        let mut dx = vec![0.0f32; n * c * plane];
        let mut gathered = vec![0.0f32; cout * 4 * plane];
        for s in 0..n {
            let g = &dy.data()[s * cout * oh * ow..(s + 1) * cout * oh * ow];
            for co in 0..cout {
                let mut bsum = 0.0f32;
                for sub in 0..4 {
                    let (ay, ax) = (sub / 2, sub % 2);
                    let dst = &mut gathered[(co * 4 + sub) * plane..][..plane];
                    for y in 0..h {
                        let row = &g[(co * oh + 2 * y + ay) * ow..][..ow];
                        for xx in 0..w {
                            let v = row[2 * xx + ax];
                            dst[y * w + xx] = v;
                            bsum += v;
                        }
                    }
                }
                self.bias.grad[co] += bsum;
            }
            let input = &x.data()[s * c * plane..(s + 1) * c * plane];
            gemm(cout * 4, plane, c, &gathered, false, input, true, &mut self.weight.grad, 1.0);
            let dxs = &mut dx[s * c * plane..(s + 1) * c * plane];
            gemm(c, cout * 4, plane, &self.weight.value, true, &gathered, false, dxs, 0.0);
        }
        Tensor::new(&[n, c, h, w], dx)
    }
}
