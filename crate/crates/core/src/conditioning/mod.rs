//! Conditioning streams: head mask and gate, position/mesh encoders, motion,
//! audio, appearance and identity tokens.

mod audio;
mod encoders;
mod mask;
mod motion;
mod reference;

pub use audio::{AudioFeatures, AudioProjection, AUDIO_DIM, AUDIO_LAYERS};
pub use encoders::{PositionEncoder, PositionFusion, ENCODER_HIDDEN};
pub use mask::{
    build_head_mask, derive_sequential_gate, pool_any, HeadMask, PixelBox, SequentialGate, GATE_THRESHOLD, HEAD_MARGIN,
};
pub use motion::{build_motion_tokens, MotionLatent, MOTION_DROPOUT};
pub use reference::{appearance_latent, extract_appearance_tokens, IdentityEmbedder, ID_DIM};

#[cfg(test)]
mod tests;
