//! Audio-driven co-speech video generation: a latent video codec, a two-stage
//! diffusion transformer cascade (holistic stage plus a regional refiner), the
//! conditioning encoders that feed it, and the evaluation metrics.

pub mod numerics;
pub mod nn;
pub mod parallel;

pub mod codec;
pub mod conditioning;
pub mod data;
pub mod diffusion;
pub mod h2_dit;
pub mod metrics;
pub mod pipeline;
pub mod r2_dit;
pub mod train;

pub mod error;

pub use error::{Error, Result};
