use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::generate::{generate_long, Driving, LongVideo, Stage1};
use crate::codec::{LatentClip, VideoClip};
use crate::conditioning::{appearance_latent, PixelBox, HEAD_MARGIN};
use crate::diffusion::{ChainPlan, Denoising};
use crate::error::{Error, Result};
use crate::r2_dit::{build_inpaint_mask, refine_clip, R2Dit, RefineInputs, StructuralPrior};
use crate::train::{head_conditions, Frozen};

/// A trained refiner with its sampling context.
#[derive(Clone, Copy, Debug)]
pub struct Stage2<'a> {
    pub model: &'a R2Dit,
    pub den: &'a Denoising,
    pub frozen: &'a Frozen,
}

/// Refiner seed of a chunk, kept apart from the chunk's stage-1 seed.
fn refine_seed(chunk_seed: u64) -> u64 {
    chunk_seed ^ 0xA5A5_5A5A_0F0F_F0F0
}

/// Refines one raw stage-1 chunk latent window by window; `prior` covers the chunk.
pub fn refine_chunk(
    s: Stage2,
    stage1: &LatentClip,
    prior: &StructuralPrior,
    reference: &VideoClip,
    face: &PixelBox,
    seed: u64,
) -> Result<LatentClip> {
    let cfg = &s.model.config;
    let r_t = cfg.codec.r_t;
    let frames = stage1.frames() * r_t;
    if prior.frames() != frames {
        return Err(Error::invalid(format!("prior has {} frames, chunk has {frames}", prior.frames())));
    }
    if frames % cfg.frames != 0 {
        return Err(Error::config(format!("refiner window {} does not tile a {frames}-frame chunk", cfg.frames)));
    }
    let ref_latent = cfg.flags.use_aa.then(|| appearance_latent(reference, &s.frozen.codec)).transpose()?;
    let identity = if cfg.flags.use_ia {
        Some(s.frozen.embedder.embed(reference, face)?.tokens)
    } else {
        None
    };
    let lf = cfg.frames / r_t;
    let mut parts = Vec::with_capacity(frames / cfg.frames);
    for w in 0..frames / cfg.frames {
        let p = prior.slice_frames(w * cfg.frames, cfg.frames)?;
        let faces: Vec<Option<PixelBox>> = p.boxes.iter().map(|b| b.face).collect();
        let (_, gate) = head_conditions(cfg, &faces, HEAD_MARGIN)?;
        let mask = build_inpaint_mask(&p.boxes, cfg.height, cfg.width, &cfg.codec, &cfg.patch)?;
        let inputs = RefineInputs {
            prior: p,
            mask,
            gate,
            reference: ref_latent.clone(),
            identity: identity.clone(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(w as u64));
        parts.push(refine_clip(s.model, s.den, &stage1.slice_frames(w * lf, lf)?, &inputs, None, &mut rng)?);
    }
    LatentClip::concat_frames(&parts)
}

/// Output of [`cascade_generate`].
#[derive(Clone, Debug)]
pub struct CascadeOutput {
    pub stage1: LongVideo,
    /// Refined raw latents per chunk; `None` when refinement is disabled.
    pub refined: Option<Vec<LatentClip>>,
    /// Final decoded video (stage-1 decode without refinement).
    pub video: VideoClip,
}

/// Stage 1 over the whole audio, then (optionally) refinement of every chunk.
///
/// `priors` are the per-frame structural priors of the full clip; at desk scale
/// they come from the generator rather than a detector run on stage-1 output.
/// Chunks are refined in parallel; each has its own seed, so the result does not
/// depend on scheduling.
pub fn cascade_generate(
    s1: Stage1,
    s2: Option<Stage2>,
    driving: &Driving,
    priors: Option<&StructuralPrior>,
    plan: &ChainPlan,
) -> Result<CascadeOutput> {
    let long = generate_long(s1, driving, plan)?;
    let Some(s2) = s2 else {
        let video = long.video.clone();
        return Ok(CascadeOutput {
            stage1: long,
            refined: None,
            video,
        });
    };
    let priors = priors.ok_or(Error::MissingCondition("structural priors"))?;
    if priors.frames() != plan.total_frames {
        return Err(Error::invalid("priors do not cover the planned frames"));
    }
    let refined = crate::parallel::map_indexed(plan.chunks(), |k| {
        let prior = priors.slice_frames(plan.start(k), plan.chunk_frames)?;
        refine_chunk(s2, &long.latents[k], &prior, &driving.reference, &driving.reference_face, refine_seed(plan.seeds[k]))
    })?;
    let videos = refined.iter().map(|z| s2.frozen.codec.decode(z)).collect::<Result<Vec<_>>>()?;
    let video = VideoClip::concat_frames(&videos.iter().collect::<Vec<_>>())?;
    Ok(CascadeOutput {
        stage1: long,
        refined: Some(refined),
        video,
    })
}
