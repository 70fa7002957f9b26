use rand::Rng;

use super::{sample_loop, Clamp, LatentNorm, Parameterization, SamplerConfig, Schedule};
use crate::error::Result;
use crate::numerics::Tensor;

/// Schedule, sampler and output convention of one trained denoiser.
#[derive(Clone, Debug)]
pub struct Denoising {
    pub schedule: Schedule,
    pub sampler: SamplerConfig,
    pub parameterization: Parameterization,
    pub norm: LatentNorm,
}

impl Denoising {
    pub fn new(t_train: usize, sampler: SamplerConfig, parameterization: Parameterization, norm: LatentNorm) -> Result<Self> {
        Ok(Denoising {
            schedule: Schedule::linear(t_train)?,
            sampler,
            parameterization,
            norm,
        })
    }

    /// Samples in normalised space from raw network outputs `net(z_t, t)`.
    pub fn sample<R, F>(&self, shape: &[usize], rng: &mut R, mut net: F, clamp: Option<&Clamp>) -> Result<Tensor>
    where
        R: Rng,
        F: FnMut(&Tensor, usize) -> Result<Tensor>,
    {
        let (s, p) = (&self.schedule, self.parameterization);
        sample_loop(
            s,
            &self.sampler,
            shape,
            rng,
            |z, t| p.eps_tensor(&net(z, t)?, z, t, s),
            clamp,
            &mut |_, _| {},
        )
    }
}
