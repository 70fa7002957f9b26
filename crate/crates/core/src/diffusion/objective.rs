use rand::Rng;

use super::Schedule;
use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor, Var};

/// What the raw network output means. The loss is always on `ε`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parameterization {
    /// Output is `ε̂` directly.
    Epsilon,
    /// Output is a clean-latent estimate `x̂0`; `ε̂ = (z_t - √ᾱ x̂0) / √(1-ᾱ)`.
    Sample,
    /// Output is `v̂ = √ᾱ ε - √(1-ᾱ) x0`; `ε̂ = √(1-ᾱ) z_t + √ᾱ v̂`.
    ///
    /// Near `-x0` at high noise and near `ε` at low noise, so neither end
    /// divides by a small coefficient.
    Velocity,
}

impl Parameterization {
    pub fn name(self) -> &'static str {
        match self {
            Parameterization::Epsilon => "eps",
            Parameterization::Sample => "sample",
            Parameterization::Velocity => "v",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "eps" => Ok(Parameterization::Epsilon),
            "sample" => Ok(Parameterization::Sample),
            "v" => Ok(Parameterization::Velocity),
            _ => Err(Error::config(format!("unknown parameterization {s}"))),
        }
    }

    pub fn eps_graph(self, g: &mut Graph, out: Var, z_t: &Tensor, t: usize, s: &Schedule) -> Result<Var> {
        match self {
            Parameterization::Epsilon => Ok(out),
            Parameterization::Sample => {
                let (a, sd) = s.coefficients(t)?;
                let scaled = g.scale(out, -a / sd);
                let z = g.constant(z_t.scale(1.0 / sd));
                g.add(scaled, z)
            }
            Parameterization::Velocity => {
                let (a, sd) = s.coefficients(t)?;
                let scaled = g.scale(out, a);
                let z = g.constant(z_t.scale(sd));
                g.add(scaled, z)
            }
        }
    }

    pub fn eps_tensor(self, out: &Tensor, z_t: &Tensor, t: usize, s: &Schedule) -> Result<Tensor> {
        match self {
            Parameterization::Epsilon => Ok(out.clone()),
            Parameterization::Sample => {
                let (a, sd) = s.coefficients(t)?;
                z_t.zip_map(out, |z, x| (z - a * x) / sd)
            }
            Parameterization::Velocity => {
                let (a, sd) = s.coefficients(t)?;
                z_t.zip_map(out, |z, v| sd * z + a * v)
            }
        }
    }
}

/// One forward-process draw used by a training step.
#[derive(Clone, Debug)]
pub struct NoisedLatent {
    pub t: usize,
    pub eps: Tensor,
    pub z_t: Tensor,
}

/// `t ~ U{0..T-1}`, `ε ~ N(0, I)`, `z_t = q_sample(z0, t, ε)`.
pub fn draw_noised<R: Rng>(s: &Schedule, z0: &Tensor, rng: &mut R) -> Result<NoisedLatent> {
    let t = rng.gen_range(0..s.t_train);
    let eps = Tensor::randn(z0.shape(), 1.0, rng);
    let z_t = s.q_sample(z0, t, &eps)?;
    Ok(NoisedLatent { t, eps, z_t })
}

/// Mean squared error between `ε̂` and `ε`, optionally over the `mask`ed elements only.
pub fn epsilon_mse(g: &mut Graph, eps_hat: Var, eps: &Tensor, mask: Option<&[bool]>) -> Result<Var> {
    if g.shape(eps_hat) != eps.shape() {
        return Err(Error::shape("epsilon loss", g.shape(eps_hat), eps.shape()));
    }
    let target = g.constant(eps.clone());
    let d = g.sub(eps_hat, target)?;
    let sq = g.mul(d, d)?;
    match mask {
        None => Ok(g.mean(sq)),
        Some(m) => {
            if m.len() != eps.len() {
                return Err(Error::shape("loss mask", eps.shape(), &[m.len()]));
            }
            let count = m.iter().filter(|&&b| b).count();
            if count == 0 {
                return Err(Error::invalid("loss mask selects no elements"));
            }
            let w = Tensor::new(eps.shape().to_vec(), m.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())?;
            let w = g.constant(w);
            let masked = g.mul(sq, w)?;
            let total = g.sum(masked);
            Ok(g.scale(total, 1.0 / count as f64))
        }
    }
}

/// Per-channel affine normalisation of latents (last axis).
#[derive(Clone, Debug, PartialEq)]
pub struct LatentNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub const NORM_STD_FLOOR: f64 = 1e-3;

impl LatentNorm {
    pub fn identity(channels: usize) -> Self {
        LatentNorm {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    /// Fits mean and population std per channel over all given latents.
    pub fn fit(latents: &[&Tensor]) -> Result<Self> {
        let c = latents.first().ok_or_else(|| Error::invalid("no latents to fit"))?.cols();
        let mut sum = vec![0.0; c];
        let mut sq = vec![0.0; c];
        let mut n = 0usize;
        for z in latents {
            if z.cols() != c {
                return Err(Error::shape("latent norm", &[c], z.shape()));
            }
            for row in z.data().chunks(c) {
                for k in 0..c {
                    sum[k] += row[k];
                }
                n += 1;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        for z in latents {
            for row in z.data().chunks(c) {
                for k in 0..c {
                    sq[k] += (row[k] - mean[k]).powi(2);
                }
            }
        }
        let std = sq.iter().map(|s| (s / n as f64).sqrt().max(NORM_STD_FLOOR)).collect();
        Ok(LatentNorm { mean, std })
    }

    fn check(&self, z: &Tensor) -> Result<usize> {
        let c = z.cols();
        if c != self.mean.len() {
            return Err(Error::shape("latent norm channels", &[self.mean.len()], z.shape()));
        }
        Ok(c)
    }

    pub fn normalize(&self, z: &Tensor) -> Result<Tensor> {
        let c = self.check(z)?;
        let mut out = z.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v = (*v - self.mean[i % c]) / self.std[i % c];
        }
        Ok(out)
    }

    pub fn denormalize(&self, z: &Tensor) -> Result<Tensor> {
        let c = self.check(z)?;
        let mut out = z.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v = *v * self.std[i % c] + self.mean[i % c];
        }
        Ok(out)
    }
}
