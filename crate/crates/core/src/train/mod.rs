//! Optimiser, training loops, run configuration and checkpoints for both stages.

mod adam;
mod checkpoint;
mod config;
mod prepare;
mod trainer;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, ParamRecord};
pub use config::{hex_sha256, RunConfig, DEFAULT_LR};
pub use prepare::{h2_examples, head_conditions, r2_conds, r2_examples, window_starts, Frozen, H2Example, R2Example, ID_EMBEDDER_SEED};
pub use trainer::{format_loss_log, step_rng, Denoiser, Stage, Trainer};

#[cfg(test)]
mod tests;
