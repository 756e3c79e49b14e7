use std::fmt;

/// Dense row-major `f32` tensor.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f32>) -> Self {
        let numel: usize = shape.iter().product();
        assert_eq!(
            numel,
            data.len(),
            "shape {shape:?} does not match {} elements",
            data.len()
        );
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self::new(shape, vec![0.0; numel])
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        let numel = shape.iter().product();
        Self::new(shape, vec![value; numel])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn reshape(mut self, shape: &[usize]) -> Self {
        assert_eq!(shape.iter().product::<usize>(), self.data.len());
        self.shape = shape.to_vec();
        self
    }

    /// `(n, c, h, w)` of a rank-4 tensor.
    pub fn dims4(&self) -> (usize, usize, usize, usize) {
        match self.shape[..] {
            [n, c, h, w] => (n, c, h, w),
            _ => panic!("expected rank-4 tensor, got {:?}", self.shape),
        }
    }

    /// `(rows, cols)` of a rank-2 tensor.
    pub fn dims2(&self) -> (usize, usize) {
        match self.shape[..] {
            [r, c] => (r, c),
            _ => panic!("expected rank-2 tensor, got {:?}", self.shape),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn scale(&mut self, factor: f32) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Concatenates two rank-4 tensors along the channel axis.
    pub fn cat_channels(a: &Tensor, b: &Tensor) -> Tensor {
        let (n, ca, h, w) = a.dims4();
        let (nb, cb, hb, wb) = b.dims4();
        assert_eq!((n, h, w), (nb, hb, wb), "cat_channels: mismatched shapes");
        let plane = h * w;
        let mut out = Vec::with_capacity(n * (ca + cb) * plane);
        for s in 0..n {
            out.extend_from_slice(&a.data[s * ca * plane..(s + 1) * ca * plane]);
            out.extend_from_slice(&b.data[s * cb * plane..(s + 1) * cb * plane]);
        }
        Tensor::new(&[n, ca + cb, h, w], out)
    }

    /// Inverse of [`Tensor::cat_channels`]: splits off the first `ca` channels.
    pub fn split_channels(&self, ca: usize) -> (Tensor, Tensor) {
        let (n, c, h, w) = self.dims4();
        assert!(ca <= c);
        let cb = c - ca;
        let plane = h * w;
        let mut a = Vec::with_capacity(n * ca * plane);
        let mut b = Vec::with_capacity(n * cb * plane);
        for s in 0..n {
            let base = s * c * plane;
            a.extend_from_slice(&self.data[base..base + ca * plane]);
            b.extend_from_slice(&self.data[base + ca * plane..base + c * plane]);
        }
        (
            Tensor::new(&[n, ca, h, w], a),
            Tensor::new(&[n, cb, h, w], b),
        )
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("numel", &self.data.len())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cat_then_split_is_identity() {
        let a = Tensor::new(&[2, 1, 2, 2], (0..8).map(|v| v as f32).collect());
        let b = Tensor::new(&[2, 2, 2, 2], (0..16).map(|v| -(v as f32)).collect());
        let cat = Tensor::cat_channels(&a, &b);
        assert_eq!(cat.shape(), &[2, 3, 2, 2]);
        assert_eq!(&cat.data()[4..12], &b.data()[..8]);
        let (a2, b2) = cat.split_channels(1);
        assert_eq!(a2, a);
        assert_eq!(b2, b);
    }
}
