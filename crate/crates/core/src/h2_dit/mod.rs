//! Holistic human DiT: the stage-1, audio-conditioned denoiser.

mod attention;
mod block;
mod model;
pub mod posenc;

pub use attention::{adapter_self_attention, audio_cross_attention, AudioAttentionWeights, SelfAttentionWeights};
pub use block::{Backbone, BackboneSpec, DitLayer, LayerInputs, TimestepEmbedding};
pub use model::{H2Conds, H2Dit};

use crate::codec::{CodecConfig, PatchGeometry};
use crate::conditioning::{AUDIO_DIM, ID_DIM};
use crate::error::{Error, Result};

/// Ablation switches; all on is the full model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Flags {
    pub use_hpe: bool,
    pub use_mt: bool,
    pub use_aa: bool,
    pub use_ia: bool,
    pub use_audio_xattn: bool,
    /// Learned key/value/output projections in the audio cross-attention.
    pub audio_xattn_proj: bool,
}

impl Default for Flags {
    fn default() -> Self {
        Flags {
            use_hpe: true,
            use_mt: true,
            use_aa: true,
            use_ia: true,
            use_audio_xattn: true,
            audio_xattn_proj: false,
        }
    }
}

impl Flags {
    /// Everything off: a plain pre-norm DiT over video and audio tokens.
    pub fn none() -> Self {
        Flags {
            use_hpe: false,
            use_mt: false,
            use_aa: false,
            use_ia: false,
            use_audio_xattn: false,
            audio_xattn_proj: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub codec: CodecConfig,
    /// Patch extents; `patch.embed_dim` is the model width `E`.
    pub patch: PatchGeometry,
    /// Pixel frames per chunk.
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    /// Previous frames `M` fed as motion tokens.
    pub motion_frames: usize,
    pub audio_dim: usize,
    pub t_train: usize,
    pub flags: Flags,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: 2,
            heads: 4,
            codec: CodecConfig::default(),
            patch: PatchGeometry::default(),
            frames: 16,
            height: 32,
            width: 32,
            motion_frames: 4,
            audio_dim: AUDIO_DIM,
            t_train: 100,
            flags: Flags::default(),
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn dim(&self) -> usize {
        self.patch.embed_dim
    }

    pub fn video_dims(&self) -> [usize; 4] {
        [self.frames, self.height, self.width, self.codec.c_img]
    }

    pub fn latent_dims(&self) -> [usize; 4] {
        let c = &self.codec;
        [self.frames / c.r_t, self.height / c.r_s, self.width / c.r_s, c.c_z]
    }

    pub fn motion_latent_dims(&self) -> [usize; 4] {
        let [_, h, w, c] = self.latent_dims();
        [self.motion_frames / self.codec.r_t, h, w, c]
    }

    pub fn video_tokens(&self) -> usize {
        self.patch.token_count(self.latent_dims()).unwrap_or(0)
    }

    pub fn identity_dim(&self) -> usize {
        ID_DIM
    }

    pub fn validate(&self) -> Result<()> {
        let e = self.dim();
        if self.layers == 0 || self.heads == 0 || e % self.heads != 0 {
            return Err(Error::config(format!("{} heads must divide E={e}", self.heads)));
        }
        if e % 8 != 0 {
            return Err(Error::config(format!("E={e} must be a multiple of 8 for the factorised positions")));
        }
        let c = &self.codec;
        if self.frames % c.r_t != 0 || self.height % c.r_s != 0 || self.width % c.r_s != 0 {
            return Err(Error::config("chunk dims must be divisible by the codec strides"));
        }
        if self.motion_frames % (c.r_t * self.patch.p_t) != 0 {
            return Err(Error::config("motion frames must fill whole temporal patches"));
        }
        if self.t_train < 2 {
            return Err(Error::config("t_train must be at least 2"));
        }
        self.patch.validate(self.latent_dims())?;
        if self.motion_frames > 0 {
            self.patch.grid(self.motion_latent_dims())?;
        }
        Ok(())
    }
}
