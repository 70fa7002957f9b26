use crate::codec::{Codec, LatentClip, VideoClip};
use crate::conditioning::{
    appearance_latent, build_head_mask, derive_sequential_gate, HeadMask, IdentityEmbedder, MotionLatent, PixelBox,
    SequentialGate, HEAD_MARGIN,
};
use crate::data::ClipBundle;
use crate::diffusion::LatentNorm;
use crate::error::{Error, Result};
use crate::h2_dit::{H2Conds, ModelConfig};
use crate::numerics::Tensor;
use crate::r2_dit::{build_inpaint_mask, InpaintMask, R2Conds, StructuralPrior};

/// Seed of the frozen identity embedder shared by training, sampling and evaluation.
pub const ID_EMBEDDER_SEED: u64 = 7;

/// Frozen pieces every stage needs to turn pixels into model inputs.
#[derive(Clone, Debug)]
pub struct Frozen {
    pub codec: Codec,
    pub norm: LatentNorm,
    pub embedder: IdentityEmbedder,
}

impl Frozen {
    pub fn new(codec: Codec, norm: LatentNorm) -> Self {
        Frozen {
            codec,
            norm,
            embedder: IdentityEmbedder::new(ID_EMBEDDER_SEED),
        }
    }

    /// Fits the latent normalisation on every bundle clip.
    pub fn fit(cfg: &ModelConfig, bundles: &[ClipBundle]) -> Result<Self> {
        let codec = Codec::new(cfg.codec)?;
        let latents = bundles.iter().map(|b| codec.encode(&b.clip)).collect::<Result<Vec<_>>>()?;
        let norm = LatentNorm::fit(&latents.iter().map(|z| z.tensor()).collect::<Vec<_>>())?;
        Ok(Frozen::new(codec, norm))
    }

    /// Encodes pixels and moves the latent into the model's normalised space.
    pub fn encode(&self, v: &VideoClip) -> Result<LatentClip> {
        let z = self.codec.encode(v)?;
        z.with_tensor(self.norm.normalize(z.tensor())?)
    }

    /// Inverse of [`Frozen::encode`].
    pub fn decode(&self, z: &Tensor) -> Result<VideoClip> {
        let c = self.codec.config();
        self.codec.decode(&LatentClip::new(self.norm.denormalize(z)?, c.r_t, c.r_s)?)
    }

    pub fn denormalize(&self, z: &Tensor) -> Result<LatentClip> {
        let c = self.codec.config();
        LatentClip::new(self.norm.denormalize(z)?, c.r_t, c.r_s)
    }

    /// Normalised appearance latent and identity tokens of a reference frame.
    pub fn reference(&self, reference: &VideoClip, face: &PixelBox) -> Result<(LatentClip, Tensor)> {
        let z = appearance_latent(reference, &self.codec)?;
        let z = z.with_tensor(self.norm.normalize(z.tensor())?)?;
        Ok((z, self.embedder.embed(reference, face)?.tokens))
    }

    /// Normalised motion latent of the `m` frames before a chunk.
    pub fn motion(&self, prev: Option<&VideoClip>, m: usize) -> Result<MotionLatent> {
        match MotionLatent::build(prev, m, &self.codec)?.0 {
            None => Ok(MotionLatent::absent()),
            Some(z) => Ok(MotionLatent(Some(self.encode_latent(z)?))),
        }
    }

    fn encode_latent(&self, z: LatentClip) -> Result<LatentClip> {
        z.with_tensor(self.norm.normalize(z.tensor())?)
    }
}

/// Head mask and sequential gate for per-frame face boxes.
pub fn head_conditions(cfg: &ModelConfig, faces: &[Option<PixelBox>], margin: f64) -> Result<(HeadMask, SequentialGate)> {
    let mask = build_head_mask(faces, cfg.height, cfg.width, margin)?;
    let gate = derive_sequential_gate(&mask, &cfg.patch, cfg.codec.r_t, cfg.codec.r_s)?;
    Ok((mask, gate))
}

/// One chunk-sized training window of the stage-1 model.
#[derive(Clone, Debug)]
pub struct H2Example {
    /// Normalised clean latent.
    pub z0: Tensor,
    pub conds: H2Conds,
}

/// One training window of the refiner.
#[derive(Clone, Debug)]
pub struct R2Example {
    pub z0: Tensor,
    pub conds: R2Conds,
    /// Latent-resolution inpaint mask, `[f, h, w, c]` order.
    pub mask: Vec<bool>,
}

/// Window start frames: every `stride` frames whose motion context is available.
pub fn window_starts(b: &ClipBundle, frames: usize, m: usize, stride: usize) -> Vec<usize> {
    if b.frames() < frames || stride == 0 {
        return Vec::new();
    }
    (0..=b.frames() - frames)
        .step_by(stride)
        .filter(|&s| m == 0 || s >= m || (s == 0 && b.prev.is_some()))
        .collect()
}

fn previous_frames(b: &ClipBundle, start: usize, m: usize) -> Result<Option<VideoClip>> {
    if m == 0 {
        return Ok(None);
    }
    if start >= m {
        return Ok(Some(b.clip.slice_frames(start - m, m)?));
    }
    b.prev.clone().map(Some).ok_or(Error::MissingCondition("previous frames"))
}

fn check_bundle(cfg: &ModelConfig, b: &ClipBundle) -> Result<()> {
    let [_, h, w, c] = b.clip.dims();
    if [h, w, c] != [cfg.height, cfg.width, cfg.codec.c_img] {
        return Err(Error::shape("bundle frame", &[cfg.height, cfg.width, cfg.codec.c_img], &[h, w, c]));
    }
    Ok(())
}

/// Stage-1 windows of every bundle, `stride` frames apart.
pub fn h2_examples(cfg: &ModelConfig, frozen: &Frozen, bundles: &[ClipBundle], stride: usize) -> Result<Vec<H2Example>> {
    let mut out = Vec::new();
    for b in bundles {
        check_bundle(cfg, b)?;
        let (reference, identity) = frozen.reference(&b.reference, &b.meta.reference_face)?;
        for s in window_starts(b, cfg.frames, cfg.motion_frames, stride) {
            let clip = b.clip.slice_frames(s, cfg.frames)?;
            let faces: Vec<Option<PixelBox>> = b.meta.regions[s..s + cfg.frames].iter().map(|r| r.face).collect();
            let (head_mask, gate) = head_conditions(cfg, &faces, HEAD_MARGIN)?;
            let prev = previous_frames(b, s, cfg.motion_frames)?;
            out.push(H2Example {
                z0: frozen.encode(&clip)?.into_tensor(),
                conds: H2Conds {
                    audio: b.audio.slice_steps(s, cfg.frames)?,
                    head_mask,
                    gate,
                    motion: frozen.motion(prev.as_ref(), cfg.motion_frames)?,
                    reference: Some(reference.clone()),
                    identity: Some(identity.clone()),
                },
            });
        }
    }
    if out.is_empty() {
        return Err(Error::invalid("no training windows fit the chunk length"));
    }
    Ok(out)
}

/// Refiner windows; the stage-1 latent is the ground truth itself.
pub fn r2_examples(cfg: &ModelConfig, frozen: &Frozen, bundles: &[ClipBundle], stride: usize) -> Result<Vec<R2Example>> {
    let mut out = Vec::new();
    for b in bundles {
        check_bundle(cfg, b)?;
        let (reference, identity) = frozen.reference(&b.reference, &b.meta.reference_face)?;
        for s in window_starts(b, cfg.frames, 0, stride) {
            let prior = b.priors.slice_frames(s, cfg.frames)?;
            let faces: Vec<Option<PixelBox>> = prior.boxes.iter().map(|r| r.face).collect();
            let (_, gate) = head_conditions(cfg, &faces, HEAD_MARGIN)?;
            let mask = build_inpaint_mask(&prior.boxes, cfg.height, cfg.width, &cfg.codec, &cfg.patch)?;
            if mask.is_empty() {
                continue;
            }
            let z0 = frozen.encode(&b.clip.slice_frames(s, cfg.frames)?)?;
            out.push(R2Example {
                z0: z0.tensor().clone(),
                mask: mask.latent_mask(),
                conds: R2Conds {
                    stage1: z0,
                    prior,
                    mask,
                    gate,
                    reference: Some(reference.clone()),
                    identity: Some(identity.clone()),
                },
            });
        }
    }
    if out.is_empty() {
        return Err(Error::invalid("no refiner windows with a nonempty region mask"));
    }
    Ok(out)
}

/// Refiner conditions around an arbitrary stage-1 latent (normalised).
pub fn r2_conds(
    cfg: &ModelConfig,
    stage1: LatentClip,
    prior: StructuralPrior,
    reference: Option<LatentClip>,
    identity: Option<Tensor>,
) -> Result<R2Conds> {
    let faces: Vec<Option<PixelBox>> = prior.boxes.iter().map(|r| r.face).collect();
    let (_, gate) = head_conditions(cfg, &faces, HEAD_MARGIN)?;
    let mask: InpaintMask = build_inpaint_mask(&prior.boxes, cfg.height, cfg.width, &cfg.codec, &cfg.patch)?;
    Ok(R2Conds {
        stage1,
        prior,
        mask,
        gate,
        reference,
        identity,
    })
}
