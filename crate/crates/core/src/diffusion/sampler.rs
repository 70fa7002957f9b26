use rand::Rng;

use super::Schedule;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplerKind {
    /// Stochastic DDPM-style steps (η = 1).
    Ancestral,
    /// Zero noise injection (η = 0).
    Deterministic,
}

impl SamplerKind {
    pub fn eta(self) -> f64 {
        match self {
            SamplerKind::Ancestral => 1.0,
            SamplerKind::Deterministic => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Ancestral => "ancestral",
            SamplerKind::Deterministic => "deterministic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ancestral" => Ok(SamplerKind::Ancestral),
            "deterministic" | "ddim" => Ok(SamplerKind::Deterministic),
            _ => Err(Error::config(format!("unknown sampler {s}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    pub steps: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            kind: SamplerKind::Deterministic,
            steps: 20,
        }
    }
}

/// Known-region clamp for inpainting: where `mask` is false the working latent is `known`.
#[derive(Clone, Debug)]
pub struct Clamp<'a> {
    pub mask: &'a [bool],
    pub known: &'a Tensor,
}

impl Clamp<'_> {
    pub fn apply(&self, z: &mut Tensor) -> Result<()> {
        if z.shape() != self.known.shape() || self.mask.len() != z.len() {
            return Err(Error::shape("inpaint clamp", z.shape(), self.known.shape()));
        }
        for ((v, &m), &k) in z.data_mut().iter_mut().zip(self.mask).zip(self.known.data()) {
            if !m {
                *v = k;
            }
        }
        Ok(())
    }
}

/// One generalised DDIM update from step `t` to `prev` (`None` is the clean end, ᾱ = 1).
pub fn ddim_step<R: Rng>(
    schedule: &Schedule,
    z: &Tensor,
    eps: &Tensor,
    t: usize,
    prev: Option<usize>,
    eta: f64,
    rng: &mut R,
) -> Result<Tensor> {
    let ab = schedule.alpha_bar(t)?;
    let ab_prev = match prev {
        Some(p) => schedule.alpha_bar(p)?,
        None => 1.0,
    };
    let (a, s) = (ab.sqrt(), (1.0 - ab).sqrt());
    let x0 = z.zip_map(eps, |zv, e| (zv - s * e) / a)?;
    let sigma = eta * ((1.0 - ab_prev) / (1.0 - ab)).sqrt() * (1.0 - ab / ab_prev).max(0.0).sqrt();
    let dir = (1.0 - ab_prev - sigma * sigma).max(0.0).sqrt();
    let mut out = x0.zip_map(eps, |x, e| ab_prev.sqrt() * x + dir * e)?;
    if sigma > 0.0 {
        let noise = Tensor::randn(z.shape(), 1.0, rng);
        out.add_assign_scaled(&noise, sigma)?;
    }
    Ok(out)
}

/// Runs the reverse process from pure noise.
///
/// `predict_eps(z_t, t)` returns `ε̂`. With a clamp, the start latent and every
/// intermediate latent carry the known values outside the mask; `on_step` sees
/// each latent after clamping.
pub fn sample_loop<R, F>(
    schedule: &Schedule,
    cfg: &SamplerConfig,
    shape: &[usize],
    rng: &mut R,
    mut predict_eps: F,
    clamp: Option<&Clamp>,
    on_step: &mut dyn FnMut(usize, &Tensor),
) -> Result<Tensor>
where
    R: Rng,
    F: FnMut(&Tensor, usize) -> Result<Tensor>,
{
    let steps = schedule.sample_timesteps(cfg.steps)?;
    let mut z = Tensor::randn(shape, 1.0, rng);
    if let Some(c) = clamp {
        c.apply(&mut z)?;
    }
    for (i, &t) in steps.iter().enumerate() {
        let eps = predict_eps(&z, t)?;
        if eps.shape() != z.shape() {
            return Err(Error::shape("predicted noise", z.shape(), eps.shape()));
        }
        let prev = steps.get(i + 1).copied();
        z = ddim_step(schedule, &z, &eps, t, prev, cfg.kind.eta(), rng)?;
        if let Some(c) = clamp {
            c.apply(&mut z)?;
        }
        if !z.all_finite() {
            return Err(Error::NonFinite(format!("sampler latent at step {t}")));
        }
        on_step(t, &z);
    }
    Ok(z)
}
