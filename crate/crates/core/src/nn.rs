//! Parameterised building blocks shared by the encoders and both denoisers.

use rand::Rng;

use crate::error::Result;
use crate::numerics::{conv3d_down, Conv3dSpec, Graph, ParamId, ParamStore, Tensor, Var};

/// How a weight tensor starts out.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WeightInit {
    Xavier,
    Normal(f64),
    Zero,
}

impl WeightInit {
    fn make<R: Rng>(self, shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
        match self {
            WeightInit::Xavier => Tensor::randn(shape, (2.0 / (fan_in + fan_out) as f64).sqrt(), rng),
            WeightInit::Normal(std) => Tensor::randn(shape, std, rng),
            WeightInit::Zero => Tensor::zeros(shape),
        }
    }
}

/// `y = x W + b`, `W` of shape `[in, out]`.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        dims: (usize, usize),
        bias: bool,
        init: WeightInit,
        rng: &mut R,
    ) -> Result<Self> {
        let (i, o) = dims;
        let w = store.add(format!("{name}.w"), init.make(&[i, o], i, o, rng), true)?;
        let b = if bias {
            Some(store.add(format!("{name}.b"), Tensor::zeros(&[o]), true)?)
        } else {
            None
        };
        Ok(Linear { w, b })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.w);
        let b = self.b.map(|b| g.param(store, b));
        g.linear(x, w, b)
    }
}

/// Downsampling 3D convolution with bias.
#[derive(Clone, Copy, Debug)]
pub struct Conv3d {
    pub w: ParamId,
    pub b: ParamId,
    pub spec: Conv3dSpec,
}

impl Conv3d {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        channels: (usize, usize),
        spec: Conv3dSpec,
        init: WeightInit,
        rng: &mut R,
    ) -> Result<Self> {
        let (ci, co) = channels;
        let taps = spec.taps();
        let shape = [co, ci, spec.kernel[0], spec.kernel[1], spec.kernel[2]];
        let w = store.add(format!("{name}.w"), init.make(&shape, ci * taps, co * taps, rng), true)?;
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[co]), true)?;
        Ok(Conv3d { w, b, spec })
    }

    /// `[c_in, d, h, w] -> [c_out, d', h', w']`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        conv3d_down(g, x, w, Some(b), &self.spec)
    }
}

/// Affine layer norm with unit gain / zero bias at init.
#[derive(Clone, Copy, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        Ok(LayerNorm {
            gain: store.add(format!("{name}.gain"), Tensor::full(&[dim], 1.0), true)?,
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[dim]), true)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let gain = g.param(store, self.gain);
        let bias = g.param(store, self.bias);
        g.layernorm(x, gain, bias, LN_EPS)
    }
}

pub const LN_EPS: f64 = 1e-5;
