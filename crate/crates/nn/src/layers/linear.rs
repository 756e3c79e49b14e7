use rand::Rng;

use crate::{gemm, impl_module, Param, Tensor};

/// Row-wise affine map on a `(rows, in)` matrix: `y = x·Wᵀ + b`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
    in_features: usize,
    out_features: usize,
}

impl_module!(Linear { weight, bias });

pub struct LinearCtx {
    input: Tensor,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(name: &str, in_features: usize, out_features: usize, rng: &mut R) -> Self {
        Self {
            weight: Param::xavier(
                format!("{name}.weight"),
                &[out_features, in_features],
                in_features,
                out_features,
                rng,
            ),
            bias: Param::zeros(format!("{name}.bias"), &[out_features]),
            in_features,
            out_features,
        }
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let (rows, cin) = x.dims2();
        assert_eq!(cin, self.in_features, "{}: width mismatch", self.weight.name);
        let mut out = Vec::with_capacity(rows * self.out_features);
        for _ in 0..rows {
            out.extend_from_slice(&self.bias.value);
        }
        gemm(
            rows,
            cin,
            self.out_features,
            x.data(),
            false,
            &self.weight.value,
            true,
            &mut out,
            1.0,
        );
        Tensor::new(&[rows, self.out_features], out)
    }

    pub fn forward_train(&self, x: &Tensor) -> (Tensor, LinearCtx) {
        (self.forward(x), LinearCtx { input: x.clone() })
    }

    pub fn backward(&mut self, ctx: LinearCtx, dy: &Tensor) -> Tensor {
        let (rows, cin) = ctx.input.dims2();
        let cout = self.out_features;
        for row in dy.data().chunks(cout) {
            for (b, g) in self.bias.grad.iter_mut().zip(row) {
                *b += *g;
            }
        }
        // dW += dyᵀ · x
        gemm(cout, rows, cin, dy.data(), true, ctx.input.data(), false, &mut self.weight.grad, 1.0);
        let mut dx = vec![0.0f32; rows * cin];
        gemm(rows, cout, cin, dy.data(), false, &self.weight.value, false, &mut dx, 0.0);
        Tensor::new(&[rows, cin], dx)
    }
}
