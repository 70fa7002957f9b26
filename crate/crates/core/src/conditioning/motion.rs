use rand::Rng;

use crate::codec::{patchify, Codec, LatentClip, PatchGeometry, Role, TokenSeq, VideoClip};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MOTION_DROPOUT: f64 = 0.5;

/// Latent of the previous `M` frames; `None` stands for the absent flag.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionLatent(pub Option<LatentClip>);

impl MotionLatent {
    pub fn absent() -> Self {
        MotionLatent(None)
    }

    pub fn is_present(&self) -> bool {
        self.0.is_some()
    }

    /// Encodes exactly `m` previous frames through the video codec path; `m = 0` is absent.
    pub fn build(prev: Option<&VideoClip>, m: usize, codec: &Codec) -> Result<Self> {
        if m == 0 {
            return Ok(MotionLatent(None));
        }
        let prev = prev.ok_or(Error::MissingCondition("previous frames"))?;
        if prev.frames() != m {
            return Err(Error::invalid(format!("expected {m} previous frames, got {}", prev.frames())));
        }
        Ok(MotionLatent(Some(codec.encode(prev)?)))
    }

    /// Whole-sequence dropout: with probability `p` the entire stream becomes absent.
    pub fn dropout<R: Rng>(self, p: f64, rng: &mut R) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("dropout probability {p} outside [0, 1]")));
        }
        let drop = rng.gen::<f64>() < p;
        Ok(if drop { MotionLatent(None) } else { self })
    }
}

/// Motion tokens `T^M` via the shared codec and patch-embedding path.
pub fn build_motion_tokens(
    prev: Option<&VideoClip>,
    m: usize,
    codec: &Codec,
    geom: &PatchGeometry,
    w_embed: &Tensor,
) -> Result<Option<TokenSeq>> {
    match MotionLatent::build(prev, m, codec)?.0 {
        None => Ok(None),
        Some(z) => {
            let mut t = patchify(&z, geom, w_embed)?;
            t.roles.fill(Role::Motion);
            Ok(Some(t))
        }
    }
}
