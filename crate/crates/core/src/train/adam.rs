use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; `None` disables it.
    pub clip: Option<f64>,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip: Some(1.0),
        }
    }
}

/// Adam with bias correction and no warmup.
///
/// Parameters and both moment buffers are rounded to `f32` after every update so
/// that a checkpoint stores the full optimiser state exactly.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros = |s: &ParamStore| s.iter().map(|(_, p)| Tensor::zeros(p.tensor.shape())).collect::<Vec<_>>();
        Adam {
            config,
            t: 0,
            m: zeros(store),
            v: zeros(store),
        }
    }

    /// Rounds every parameter to `f32`; call once on a fresh model.
    pub fn round_params(store: &mut ParamStore) {
        store.iter_mut().for_each(|p| p.tensor.round_to_f32());
    }

    /// Applies the accumulated gradients and clears them. Returns the pre-clip gradient norm.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<f64> {
        if self.m.len() != store.len() {
            return Err(Error::invalid("optimiser state does not match the parameter table"));
        }
        let norm = store.grad_norm();
        if !norm.is_finite() {
            return Err(Error::NonFinite(format!("gradient norm at update {}", self.t + 1)));
        }
        let c = self.config;
        let scale = match c.clip {
            Some(max) if norm > max => max / norm,
            _ => 1.0,
        };
        self.t += 1;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if !p.trainable {
                continue;
            }
            let (pd, gd) = (p.tensor.data_mut(), p.grad.data());
            for (((x, &g), mi), vi) in pd.iter_mut().zip(gd).zip(m.data_mut()).zip(v.data_mut()) {
                let g = g * scale;
                *mi = (c.beta1 * *mi + (1.0 - c.beta1) * g) as f32 as f64;
                *vi = (c.beta2 * *vi + (1.0 - c.beta2) * g * g) as f32 as f64;
                let upd = c.lr * (*mi / bc1) / ((*vi / bc2).sqrt() + c.eps);
                *x = (*x - upd) as f32 as f64;
            }
        }
        store.zero_grads();
        Ok(norm)
    }
}
