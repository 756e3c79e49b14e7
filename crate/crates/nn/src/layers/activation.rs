use crate::Tensor;

pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|v| v.max(0.0)).collect();
    Tensor::new(x.shape(), data)
}

/// Gradient of [`relu`] given its *output* (positive iff the input was).
pub fn relu_backward(out: &Tensor, dy: &Tensor) -> Tensor {
    let data = out
        .data()
        .iter()
        .zip(dy.data())
        .map(|(o, g)| if *o > 0.0 { *g } else { 0.0 })
        .collect();
    Tensor::new(dy.shape(), data)
}

pub fn sigmoid(v: f32) -> f32 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(v: f32) -> f32 {
    if v > 20.0 {
        v
    } else {
        v.exp().ln_1p()
    }
}

/// d softplus / dv evaluated at the pre-activation `v`.
pub fn softplus_backward(v: f32) -> f32 {
    sigmoid(v)
}
