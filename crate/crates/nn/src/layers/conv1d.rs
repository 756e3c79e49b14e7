use rand::Rng;

use crate::{gemm, impl_module, Param, Tensor};

/// Temporal convolution over a `(time, channels)` sequence, odd kernel,
/// zero "same" padding. Weight layout `[cout, k, cin]`.
#[derive(Clone, Debug)]
pub struct Conv1d {
    pub weight: Param,
    pub bias: Param,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
}

impl_module!(Conv1d { weight, bias });

pub struct Conv1dCtx {
    cols: Vec<f32>,
    time: usize,
}

impl Conv1d {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Self {
        assert!(kernel % 2 == 1, "kernel must be odd");
        Self {
            weight: Param::kaiming(
                format!("{name}.weight"),
                &[out_channels, kernel, in_channels],
                kernel * in_channels,
                rng,
            ),
            bias: Param::zeros(format!("{name}.bias"), &[out_channels]),
            in_channels,
            out_channels,
            kernel,
        }
    }

    fn unfold(&self, x: &Tensor) -> Vec<f32> {
        let (t, c) = x.dims2();
        let k = self.kernel;
        let pad = k / 2;
        let mut cols = vec![0.0f32; t * k * c];
        for step in 0..t {
            for j in 0..k {
                let src = step as isize + j as isize - pad as isize;
                if src < 0 || src >= t as isize {
                    continue;
                }
                let src = src as usize;
                cols[(step * k + j) * c..(step * k + j + 1) * c]
                    .copy_from_slice(&x.data()[src * c..(src + 1) * c]);
            }
        }
        cols
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        self.forward_train(x).0
    }

    pub fn forward_train(&self, x: &Tensor) -> (Tensor, Conv1dCtx) {
        let (t, c) = x.dims2();
        assert_eq!(c, self.in_channels);
        let cols = self.unfold(x);
        let kdim = self.kernel * c;
        let mut out = Vec::with_capacity(t * self.out_channels);
        for _ in 0..t {
            out.extend_from_slice(&self.bias.value);
        }
        gemm(t, kdim, self.out_channels, &cols, false, &self.weight.value, true, &mut out, 1.0);
        (
            Tensor::new(&[t, self.out_channels], out),
            Conv1dCtx { cols, time: t },
        )
    }

    pub fn backward(&mut self, ctx: Conv1dCtx, dy: &Tensor) -> Tensor {
        let t = ctx.time;
        let (c, k, cout) = (self.in_channels, self.kernel, self.out_channels);
        let kdim = k * c;
        for row in dy.data().chunks(cout) {
            for (b, g) in self.bias.grad.iter_mut().zip(row) {
                *b += *g;
            }
        }
        gemm(cout, t, kdim, dy.data(), true, &ctx.cols, false, &mut self.weight.grad, 1.0);
        let mut dcols = vec![0.0f32; t * kdim];
        gemm(t, cout, kdim, dy.data(), false, &self.weight.value, false, &mut dcols, 0.0);
        let pad = k / 2;
        let mut dx = vec![0.0f32; t * c];
        for step in 0..t {
            for j in 0..k {
                let src = step as isize + j as isize - pad as isize;
                if src < 0 || src >= t as isize {
                    continue;
                }
                let src = src as usize;
                let g = &dcols[(step * k + j) * c..(step * k + j + 1) * c];
                for (a, b) in dx[src * c..(src + 1) * c].iter_mut().zip(g) {
                    *a += *b;
                }
            }
        }
        Tensor::new(&[t, c], dx)
    }
}
