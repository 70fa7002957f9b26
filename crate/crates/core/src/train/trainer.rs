use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adam::{Adam, AdamConfig};
use super::prepare::{H2Example, R2Example};
use super::RunConfig;
use crate::conditioning::{MotionLatent, MOTION_DROPOUT};
use crate::diffusion::{epsilon_mse, Denoising, LatentNorm, NoisedLatent};
use crate::error::{Error, Result};
use crate::h2_dit::{H2Conds, H2Dit, ModelConfig};
use crate::numerics::{Graph, ParamStore, Tensor, Var};
use crate::r2_dit::R2Dit;

/// Which model of the cascade a run trains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    H2,
    R2,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::H2 => "h2",
            Stage::R2 => "r2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "h2" => Ok(Stage::H2),
            "r2" => Ok(Stage::R2),
            _ => Err(Error::config(format!("unknown stage {s}"))),
        }
    }
}

/// A trainable denoiser and the loss of one of its examples.
pub trait Denoiser: Sized {
    type Example;
    const STAGE: Stage;

    fn build(config: ModelConfig) -> Result<Self>;
    fn config(&self) -> &ModelConfig;
    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
    /// Adds the `ε`-MSE of one noise draw at step `t` for `ex` to `g`.
    fn loss(&self, g: &mut Graph, ex: &Self::Example, den: &Denoising, t: usize, rng: &mut ChaCha8Rng) -> Result<Var>;
}

impl Denoiser for H2Dit {
    type Example = H2Example;
    const STAGE: Stage = Stage::H2;

    fn build(config: ModelConfig) -> Result<Self> {
        H2Dit::new(config)
    }

    fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn loss(&self, g: &mut Graph, ex: &H2Example, den: &Denoising, t: usize, rng: &mut ChaCha8Rng) -> Result<Var> {
        let motion = if self.config.flags.use_mt {
            ex.conds.motion.clone().dropout(MOTION_DROPOUT, rng)?
        } else {
            MotionLatent::absent()
        };
        let conds = H2Conds {
            motion,
            ..ex.conds.clone()
        };
        let n = noised_at(den, &ex.z0, t, rng)?;
        let z = g.constant(n.z_t.clone());
        let out = self.forward(g, z, n.t, &conds)?;
        let eps_hat = den.parameterization.eps_graph(g, out, &n.z_t, n.t, &den.schedule)?;
        epsilon_mse(g, eps_hat, &n.eps, None)
    }
}

impl Denoiser for R2Dit {
    type Example = R2Example;
    const STAGE: Stage = Stage::R2;

    fn build(config: ModelConfig) -> Result<Self> {
        R2Dit::new(config)
    }

    fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Noise only inside the mask; outside cells stay clean, as the sampler clamp leaves them.
    fn loss(&self, g: &mut Graph, ex: &R2Example, den: &Denoising, t: usize, rng: &mut ChaCha8Rng) -> Result<Var> {
        let mut n = noised_at(den, &ex.z0, t, rng)?;
        for ((z, &m), &x) in n.z_t.data_mut().iter_mut().zip(&ex.mask).zip(ex.z0.data()) {
            if !m {
                *z = x;
            }
        }
        let z = g.constant(n.z_t.clone());
        let out = self.forward(g, z, n.t, &ex.conds)?;
        let eps_hat = den.parameterization.eps_graph(g, out, &n.z_t, n.t, &den.schedule)?;
        epsilon_mse(g, eps_hat, &n.eps, Some(&ex.mask))
    }
}

fn noised_at(den: &Denoising, z0: &Tensor, t: usize, rng: &mut ChaCha8Rng) -> Result<NoisedLatent> {
    let eps = Tensor::randn(z0.shape(), 1.0, rng);
    let z_t = den.schedule.q_sample(z0, t, &eps)?;
    Ok(NoisedLatent { t, eps, z_t })
}

/// Sequential optimiser loop with per-step seeded randomness.
#[derive(Clone, Debug)]
pub struct Trainer<M: Denoiser> {
    pub model: M,
    pub adam: Adam,
    pub den: Denoising,
    pub run: RunConfig,
    /// Completed optimiser steps.
    pub step: u64,
    pub log: Vec<(u64, f64)>,
}

/// RNG of optimiser step `step`: independent of everything before it, so resuming is exact.
pub fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(step);
    r
}

impl<M: Denoiser> Trainer<M> {
    /// Fresh model from `run.model`, parameters rounded to `f32`.
    pub fn new(run: RunConfig, norm: LatentNorm) -> Result<Self> {
        run.validate()?;
        let mut model = M::build(run.model)?;
        Adam::round_params(model.store_mut());
        let adam = Adam::new(AdamConfig::with_lr(run.lr), model.store());
        let den = Denoising::new(run.model.t_train, run.sampler_config(), run.parameterization, norm)?;
        Ok(Trainer {
            model,
            adam,
            den,
            run,
            step: 0,
            log: Vec::new(),
        })
    }

    /// One optimiser step over `run.batch` random examples; returns the mean loss.
    pub fn train_step(&mut self, examples: &[M::Example]) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::invalid("no training examples"));
        }
        let mut rng = step_rng(self.run.seed, self.step);
        let batch = self.run.batch;
        let mut total = 0.0;
        for _ in 0..batch {
            let ex = &examples[rng.gen_range(0..examples.len())];
            let t = rng.gen_range(0..self.den.schedule.t_train);
            let mut g = Graph::new();
            let loss = self.model.loss(&mut g, ex, &self.den, t, &mut rng)?;
            let value = g.value(loss).data()[0];
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("{} loss at step {}", M::STAGE.name(), self.step + 1)));
            }
            let scaled = g.scale(loss, 1.0 / batch as f64);
            g.backward(scaled)?.accumulate(&g, self.model.store_mut());
            total += value;
        }
        self.adam.step(self.model.store_mut())?;
        self.step += 1;
        let mean = total / batch as f64;
        self.log.push((self.step, mean));
        Ok(mean)
    }

    /// Runs until `self.step == steps`, calling `on_step` after every step.
    pub fn train_until<F>(&mut self, examples: &[M::Example], steps: u64, mut on_step: F) -> Result<()>
    where
        F: FnMut(&Self) -> Result<()>,
    {
        while self.step < steps {
            self.train_step(examples)?;
            on_step(self)?;
        }
        Ok(())
    }

    /// Objective averaged over every example and every `stride`-th step `t`
    /// with fixed noise from `seed`; unlike the logged loss it does not depend
    /// on which steps happened to be drawn.
    pub fn stratified_loss(&self, examples: &[M::Example], stride: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut total, mut n) = (0.0, 0usize);
        for ex in examples {
            for t in (0..self.den.schedule.t_train).step_by(stride.max(1)) {
                let mut g = Graph::new();
                let loss = self.model.loss(&mut g, ex, &self.den, t, &mut rng)?;
                total += g.value(loss).data()[0];
                n += 1;
            }
        }
        Ok(total / n as f64)
    }

    /// Mean logged loss over the last `window` steps.
    pub fn recent_loss(&self, window: usize) -> Option<f64> {
        let n = self.log.len().min(window);
        (n > 0).then(|| self.log[self.log.len() - n..].iter().map(|(_, l)| l).sum::<f64>() / n as f64)
    }
}

/// `step loss` lines.
pub fn format_loss_log(log: &[(u64, f64)]) -> String {
    log.iter().map(|(s, l)| format!("{s} {l:.8e}\n")).collect()
}
