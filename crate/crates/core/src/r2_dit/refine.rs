use rand::Rng;

use super::{InpaintMask, R2Conds, R2Dit, StructuralPrior};
use crate::codec::LatentClip;
use crate::conditioning::{AudioFeatures, SequentialGate};
use crate::diffusion::{Clamp, Denoising};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Stage-2 inputs besides the stage-1 latent. `reference` is in raw latent space.
#[derive(Clone, Debug)]
pub struct RefineInputs {
    pub prior: StructuralPrior,
    pub mask: InpaintMask,
    pub gate: SequentialGate,
    pub reference: Option<LatentClip>,
    pub identity: Option<Tensor>,
}

/// Clamped inpainting in normalised space: cells where `mask` is false stay at `known`.
pub fn inpaint<R, F>(den: &Denoising, known: &Tensor, mask: &[bool], rng: &mut R, net: F) -> Result<Tensor>
where
    R: Rng,
    F: FnMut(&Tensor, usize) -> Result<Tensor>,
{
    let clamp = Clamp { mask, known };
    den.sample(known.shape(), rng, net, Some(&clamp))
}

/// Re-synthesises the masked region of a raw stage-1 latent.
///
/// Cells outside the mask come back bitwise equal to `stage1`. The refiner is
/// audio-free, so supplying audio is a configuration error.
pub fn refine_clip<R: Rng>(
    model: &R2Dit,
    den: &Denoising,
    stage1: &LatentClip,
    inputs: &RefineInputs,
    audio: Option<&AudioFeatures>,
    rng: &mut R,
) -> Result<LatentClip> {
    if audio.is_some() {
        return Err(Error::config("audio supplied to the audio-free refiner"));
    }
    if inputs.mask.is_empty() {
        return Ok(stage1.clone());
    }
    let known = den.norm.normalize(stage1.tensor())?;
    let reference = match &inputs.reference {
        Some(r) => Some(r.with_tensor(den.norm.normalize(r.tensor())?)?),
        None => None,
    };
    let conds = R2Conds {
        stage1: stage1.with_tensor(known.clone())?,
        prior: inputs.prior.clone(),
        mask: inputs.mask.clone(),
        gate: inputs.gate.clone(),
        reference,
        identity: inputs.identity.clone(),
    };
    let mask = inputs.mask.latent_mask();
    let z = inpaint(den, &known, &mask, rng, |z, t| model.predict(z, t, &conds))?;
    let mut raw = den.norm.denormalize(&z)?;
    Clamp { mask: &mask, known: stage1.tensor() }.apply(&mut raw)?;
    stage1.with_tensor(raw)
}
