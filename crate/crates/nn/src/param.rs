use rand::Rng;
use rand_distr::{Distribution, Normal};

/// A named trainable array and its accumulated gradient.
#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f32>,
    pub grad: Vec<f32>,
}

impl Param {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Self::filled(name, shape, 0.0)
    }

    pub fn filled(name: impl Into<String>, shape: &[usize], value: f32) -> Self {
        let n: usize = shape.iter().product();
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            value: vec![value; n],
            grad: vec![0.0; n],
        }
    }

    /// He-normal initialization with the given fan-in.
    pub fn kaiming<R: Rng + ?Sized>(
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut R,
    ) -> Self {
        let std = (2.0 / fan_in.max(1) as f64).sqrt();
        Self::normal(name, shape, std, rng)
    }

    /// Glorot-style normal initialization, used for projections feeding a
    /// softmax or sigmoid rather than a rectifier.
    pub fn xavier<R: Rng + ?Sized>(
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        let std = (2.0 / (fan_in + fan_out).max(1) as f64).sqrt();
        Self::normal(name, shape, std, rng)
    }

    fn normal<R: Rng + ?Sized>(
        name: impl Into<String>,
        shape: &[usize],
        std: f64,
        rng: &mut R,
    ) -> Self {
        let dist = Normal::new(0.0, std).expect("finite std");
        let mut p = Self::zeros(name, shape);
        for v in &mut p.value {
            *v = dist.sample(rng) as f32;
        }
        p
    }

    pub fn numel(&self) -> usize {
        self.value.len()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Anything that owns parameters. Visiting order must be stable: optimizers
/// and checkpoints rely on it.
pub trait Module {
    fn visit_params(&self, f: &mut dyn FnMut(&Param));
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.numel());
        n
    }

    fn zero_grad(&mut self) {
        self.visit_params_mut(&mut |p| p.zero_grad());
    }

    /// Global L2 norm of the accumulated gradients.
    fn grad_norm(&self) -> f64 {
        let mut s = 0.0f64;
        self.visit_params(&mut |p| {
            s += p.grad.iter().map(|g| (*g as f64) * (*g as f64)).sum::<f64>();
        });
        s.sqrt()
    }
}

impl Module for Param {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        f(self)
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(self)
    }
}

impl<M: Module> Module for Vec<M> {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        for m in self {
            m.visit_params(f);
        }
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for m in self {
            m.visit_params_mut(f);
        }
    }
}

impl<M: Module> Module for Option<M> {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        if let Some(m) = self {
            m.visit_params(f);
        }
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        if let Some(m) = self {
            m.visit_params_mut(f);
        }
    }
}

/// Implements [`Module`] by visiting the listed fields in order.
#[macro_export]
macro_rules! impl_module {
    ($ty:ty { $($field:ident),* $(,)? }) => {
        impl $crate::Module for $ty {
            fn visit_params(&self, f: &mut dyn FnMut(&$crate::Param)) {
                $( $crate::Module::visit_params(&self.$field, f); )*
            }
            fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut $crate::Param)) {
                $( $crate::Module::visit_params_mut(&mut self.$field, f); )*
            }
        }
    };
}
