use crate::{impl_module, Param, Tensor};

const EPS: f64 = 1e-5;

/// Normalizes each row of a `(rows, features)` matrix.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: Param,
    pub beta: Param,
    features: usize,
}

impl_module!(LayerNorm { gamma, beta });

pub struct LayerNormCtx {
    xhat: Vec<f32>,
    inv_std: Vec<f32>,
}

impl LayerNorm {
    pub fn new(name: &str, features: usize) -> Self {
        Self {
            gamma: Param::filled(format!("{name}.gamma"), &[features], 1.0),
            beta: Param::zeros(format!("{name}.beta"), &[features]),
            features,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        self.forward_train(x).0
    }

    pub fn forward_train(&self, x: &Tensor) -> (Tensor, LayerNormCtx) {
        let (rows, f) = x.dims2();
        assert_eq!(f, self.features);
        let mut xhat = vec![0.0f32; rows * f];
        let mut out = vec![0.0f32; rows * f];
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &x.data()[r * f..(r + 1) * f];
            let mean = row.iter().map(|v| *v as f64).sum::<f64>() / f as f64;
            let var = row.iter().map(|v| (*v as f64 - mean).powi(2)).sum::<f64>() / f as f64;
            let istd = 1.0 / (var + EPS).sqrt();
            inv_std.push(istd as f32);
            for i in 0..f {
                let xh = ((row[i] as f64 - mean) * istd) as f32;
                xhat[r * f + i] = xh;
                out[r * f + i] = self.gamma.value[i] * xh + self.beta.value[i];
            }
        }
        (Tensor::new(&[rows, f], out), LayerNormCtx { xhat, inv_std })
    }

    pub fn backward(&mut self, ctx: LayerNormCtx, dy: &Tensor) -> Tensor {
        let (rows, f) = dy.dims2();
        let mut dx = vec![0.0f32; rows * f];
        for r in 0..rows {
            let g = &dy.data()[r * f..(r + 1) * f];
            let xh = &ctx.xhat[r * f..(r + 1) * f];
            let mut mean_d = 0.0f64;
            let mut mean_dx = 0.0f64;
            for i in 0..f {
                self.gamma.grad[i] += g[i] * xh[i];
                self.beta.grad[i] += g[i];
                let d = (g[i] * self.gamma.value[i]) as f64;
                mean_d += d;
                mean_dx += d * xh[i] as f64;
            }
            mean_d /= f as f64;
            mean_dx /= f as f64;
            let istd = ctx.inv_std[r] as f64;
            for i in 0..f {
                let d = (g[i] * self.gamma.value[i]) as f64;
                dx[r * f + i] = (istd * (d - mean_d - xh[i] as f64 * mean_dx)) as f32;
            }
        }
        Tensor::new(&[rows, f], dx)
    }
}
