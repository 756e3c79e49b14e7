use rand::Rng;

use crate::{gemm, impl_module, Param, Tensor};

/// Stride-1 2-D convolution with odd kernel and zero "same" padding.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
}

impl_module!(Conv2d { weight, bias });

pub struct Conv2dCtx {
    /// Per-sample im2col matrices (`cin·k·k × h·w`); the raw input for 1×1.
    cols: Vec<Vec<f32>>,
    in_shape: (usize, usize, usize, usize),
}

impl Conv2d {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Self {
        assert!(kernel % 2 == 1, "kernel must be odd");
        let fan_in = in_channels * kernel * kernel;
        Self {
            weight: Param::kaiming(
                format!("{name}.weight"),
                &[out_channels, in_channels, kernel, kernel],
                fan_in,
                rng,
            ),
            bias: Param::zeros(format!("{name}.bias"), &[out_channels]),
            in_channels,
            out_channels,
            kernel,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        self.forward_train(x).0
    }

    pub fn forward_train(&self, x: &Tensor) -> (Tensor, Conv2dCtx) {
        let (n, c, h, w) = x.dims4();
        assert_eq!(c, self.in_channels, "{}: channel mismatch", self.weight.name);
        let plane = h * w;
        let kdim = c * self.kernel * self.kernel;
        let mut out = vec![0.0f32; n * self.out_channels * plane];
        let mut cols = Vec::with_capacity(n);
        for s in 0..n {
            let input = &x.data()[s * c * plane..(s + 1) * c * plane];
            let col = if self.kernel == 1 {
                input.to_vec()
            } else {
                im2col(input, c, h, w, self.kernel)
            };
            let dst = &mut out[s * self.out_channels * plane..(s + 1) * self.out_channels * plane];
            for (co, row) in dst.chunks_mut(plane).enumerate() {
                row.fill(self.bias.value[co]);
            }
            gemm(
                self.out_channels,
                kdim,
                plane,
                &self.weight.value,
                false,
                &col,
                false,
                dst,
                1.0,
            );
            cols.push(col);
        }
        (
            Tensor::new(&[n, self.out_channels, h, w], out),
            Conv2dCtx {
                cols,
                in_shape: (n, c, h, w),
            },
        )
    }

    pub fn backward(&mut self, ctx: Conv2dCtx, dy: &Tensor) -> Tensor {
        let (n, c, h, w) = ctx.in_shape;
        let plane = h * w;
        let kdim = c * self.kernel * self.kernel;
        let cout = self.out_channels;
        let mut dx = vec![0.0f32; n * c * plane];
        let mut dcol = vec![0.0f32; kdim * plane];
        for (s, col) in ctx.cols.iter().enumerate() {
            let g = &dy.data()[s * cout * plane..(s + 1) * cout * plane];
            for (co, row) in g.chunks(plane).enumerate() {
                self.bias.grad[co] += row.iter().sum::<f32>();
            }
            // dW += dY · colᵀ
            gemm(cout, plane, kdim, g, false, col, true, &mut self.weight.grad, 1.0);
            // dcol = Wᵀ · dY
            let dxs = &mut dx[s * c * plane..(s + 1) * c * plane];
            if self.kernel == 1 {
                gemm(kdim, cout, plane, &self.weight.value, true, g, false, dxs, 0.0);
            } else {
                gemm(kdim, cout, plane, &self.weight.value, true, g, false, &mut dcol, 0.0);
                col2im(&dcol, dxs, c, h, w, self.kernel);
            }
        }
        Tensor::new(&[n, c, h, w], dx)
    }
}

fn im2col(input: &[f32], c: usize, h: usize, w: usize, k: usize) -> Vec<f32> {
    let pad = (k / 2) as isize;
    let plane = h * w;
    let mut col = vec![0.0f32; c * k * k * plane];
    for ci in 0..c {
        let src = &input[ci * plane..(ci + 1) * plane];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((ci * k + ky) * k + kx) * plane..][..plane];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                let x0 = (-dx).max(0) as usize;
                let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                if x0 >= x1 {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let sy = sy as usize;
                    let sx0 = (x0 as isize + dx) as usize;
                    row[y * w + x0..y * w + x1]
                        .copy_from_slice(&src[sy * w + sx0..sy * w + sx0 + (x1 - x0)]);
                }
            }
        }
    }
    col
}

fn col2im(col: &[f32], out: &mut [f32], c: usize, h: usize, w: usize, k: usize) {
    let pad = (k / 2) as isize;
    let plane = h * w;
    for ci in 0..c {
        let dst = &mut out[ci * plane..(ci + 1) * plane];
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((ci * k + ky) * k + kx) * plane..][..plane];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                let x0 = (-dx).max(0) as usize;
                let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                if x0 >= x1 {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let sy = sy as usize;
                    let sx0 = (x0 as isize + dx) as usize;
                    let d = &mut dst[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
                    for (a, b) in d.iter_mut().zip(&row[y * w + x0..y * w + x1]) {
                        *a += *b;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn direct(conv: &Conv2d, x: &Tensor) -> Tensor {
        let (n, c, h, w) = x.dims4();
        let k = conv.kernel;
        let p = (k / 2) as isize;
        let co_n = conv.out_channels;
        let mut out = Tensor::zeros(&[n, co_n, h, w]);
        for s in 0..n {
            for co in 0..co_n {
                for y in 0..h {
                    for xx in 0..w {
                        let mut acc = conv.bias.value[co];
                        for ci in 0..c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let sy = y as isize + ky as isize - p;
                                    let sx = xx as isize + kx as isize - p;
                                    if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                        continue;
                                    }
                                    let wv = conv.weight.value[((co * c + ci) * k + ky) * k + kx];
                                    let xv = x.data()
                                        [((s * c + ci) * h + sy as usize) * w + sx as usize];
                                    acc += wv * xv;
                                }
                            }
                        }
                        out.data_mut()[((s * co_n + co) * h + y) * w + xx] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in [1, 3, 5] {
            let mut conv = Conv2d::new("c", 2, 3, k, &mut rng);
            conv.bias.value = vec![0.1, -0.2, 0.3];
            let x = Tensor::new(
                &[2, 2, 5, 4],
                (0..80).map(|v| ((v * 7 % 13) as f32 - 6.0) / 6.0).collect(),
            );
            let a = conv.forward(&x);
            let b = direct(&conv, &x);
            for (u, v) in a.data().iter().zip(b.data()) {
                assert!((u - v).abs() < 1e-5, "k={k}: {u} vs {v}");
            }
        }
    }
}
