use crate::Tensor;

pub struct MaxPoolCtx {
    argmax: Vec<u32>,
    in_shape: (usize, usize, usize, usize),
}

/// 2×2 max pooling with stride 2. Spatial dims must be even.
pub fn max_pool2(x: &Tensor) -> (Tensor, MaxPoolCtx) {
    let (n, c, h, w) = x.dims4();
    assert!(h % 2 == 0 && w % 2 == 0, "max_pool2 needs even spatial dims");
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0f32; n * c * oh * ow];
    let mut argmax = vec![0u32; out.len()];
    for p in 0..n * c {
        let src = &x.data()[p * h * w..(p + 1) * h * w];
        for y in 0..oh {
            for xx in 0..ow {
                let i0 = 2 * y * w + 2 * xx;
                let cands = [i0, i0 + 1, i0 + w, i0 + w + 1];
                let mut best = cands[0];
                for &ci in &cands[1..] {
                    if src[ci] > src[best] {
                        best = ci;
                    }
                }
                let o = p * oh * ow + y * ow + xx;
                out[o] = src[best];
                argmax[o] = best as u32;
            }
        }
    }
    (
        Tensor::new(&[n, c, oh, ow], out),
        MaxPoolCtx {
            argmax,
            in_shape: (n, c, h, w),
        },
    )
}

pub fn max_pool2_backward(ctx: MaxPoolCtx, dy: &Tensor) -> Tensor {
    let (n, c, h, w) = ctx.in_shape;
    let (oh, ow) = (h / 2, w / 2);
    let mut dx = vec![0.0f32; n * c * h * w];
    for p in 0..n * c {
        for o in 0..oh * ow {
            let idx = p * oh * ow + o;
            dx[p * h * w + ctx.argmax[idx] as usize] += dy.data()[idx];
        }
    }
    Tensor::new(&[n, c, h, w], dx)
}
