//! Noise schedule, objective, samplers and the long-video chain plan.

mod chain;
mod context;
mod objective;
mod sampler;
mod schedule;

pub use chain::ChainPlan;
pub use context::Denoising;
pub use objective::{draw_noised, epsilon_mse, LatentNorm, NoisedLatent, Parameterization, NORM_STD_FLOOR};
pub use sampler::{ddim_step, sample_loop, Clamp, SamplerConfig, SamplerKind};
pub use schedule::{Schedule, BETA_END, BETA_START};

#[cfg(test)]
mod tests;
