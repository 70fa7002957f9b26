use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::{LatentClip, VideoClip};
use crate::conditioning::{AudioFeatures, HeadMask, MotionLatent, PixelBox, SequentialGate};
use crate::diffusion::{ChainPlan, Denoising};
use crate::error::{Error, Result};
use crate::h2_dit::{H2Conds, H2Dit};
use crate::numerics::Tensor;
use crate::train::{head_conditions, Frozen};

/// Margin of the inference head mask, which is built from the reference face box alone.
pub const INFER_HEAD_MARGIN: f64 = 0.25;

/// Reference frame and driving audio of one request.
#[derive(Clone, Debug)]
pub struct Driving {
    pub reference: VideoClip,
    pub reference_face: PixelBox,
    pub audio: AudioFeatures,
}

/// A trained stage-1 model with its sampling context.
#[derive(Clone, Copy, Debug)]
pub struct Stage1<'a> {
    pub model: &'a H2Dit,
    pub den: &'a Denoising,
    pub frozen: &'a Frozen,
}

/// Output of [`generate_long`]: raw chunk latents and the decoded video.
#[derive(Clone, Debug)]
pub struct LongVideo {
    pub plan: ChainPlan,
    pub latents: Vec<LatentClip>,
    pub video: VideoClip,
}

/// Conditions shared by every chunk of one request.
#[derive(Clone, Debug)]
pub struct StaticConds {
    pub head_mask: HeadMask,
    pub gate: SequentialGate,
    pub reference: Option<LatentClip>,
    pub identity: Option<Tensor>,
}

impl StaticConds {
    pub fn new(s: Stage1, driving: &Driving) -> Result<Self> {
        let cfg = &s.model.config;
        let faces = vec![Some(driving.reference_face); cfg.frames];
        let (head_mask, gate) = head_conditions(cfg, &faces, INFER_HEAD_MARGIN)?;
        let (reference, identity) = s.frozen.reference(&driving.reference, &driving.reference_face)?;
        Ok(StaticConds {
            head_mask,
            gate,
            reference: cfg.flags.use_aa.then_some(reference),
            identity: cfg.flags.use_ia.then_some(identity),
        })
    }

    pub fn chunk(&self, audio: AudioFeatures, motion: MotionLatent) -> H2Conds {
        H2Conds {
            audio,
            head_mask: self.head_mask.clone(),
            gate: self.gate.clone(),
            motion,
            reference: self.reference.clone(),
            identity: self.identity.clone(),
        }
    }
}

/// Samples one chunk; returns the normalised latent.
pub fn sample_chunk(s: Stage1, conds: &H2Conds, seed: u64) -> Result<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    s.den.sample(&s.model.config.latent_dims(), &mut rng, |z, t| s.model.predict(z, t, conds), None)
}

/// Chunk-by-chunk generation over the whole driving audio.
///
/// Chunk 1 has no motion tokens; chunk `k > 1` sees the last `M` decoded frames
/// of chunk `k - 1`, re-encoded exactly as in training.
pub fn generate_long(s: Stage1, driving: &Driving, plan: &ChainPlan) -> Result<LongVideo> {
    let cfg = &s.model.config;
    if plan.total_frames != driving.audio.steps() || plan.chunk_frames != cfg.frames {
        return Err(Error::invalid(format!(
            "plan of {}x{} frames does not match {} audio steps and chunk {}",
            plan.chunks(),
            plan.chunk_frames,
            driving.audio.steps(),
            cfg.frames
        )));
    }
    if plan.overlap_m != cfg.motion_frames {
        return Err(Error::config("plan overlap differs from the model's motion frames"));
    }
    let stat = StaticConds::new(s, driving)?;
    let mut latents = Vec::with_capacity(plan.chunks());
    let mut videos: Vec<VideoClip> = Vec::with_capacity(plan.chunks());
    for (k, &seed) in plan.seeds.iter().enumerate() {
        let audio = driving.audio.slice_steps(plan.start(k), plan.chunk_frames)?;
        let motion = match videos.last() {
            Some(prev) if cfg.flags.use_mt && cfg.motion_frames > 0 => {
                let tail = prev.slice_frames(prev.frames() - cfg.motion_frames, cfg.motion_frames)?;
                s.frozen.motion(Some(&tail), cfg.motion_frames)?
            }
            _ => MotionLatent::absent(),
        };
        let z = sample_chunk(s, &stat.chunk(audio, motion), seed)?;
        let raw = s.frozen.denormalize(&z)?;
        videos.push(s.frozen.codec.decode(&raw)?);
        latents.push(raw);
    }
    let video = VideoClip::concat_frames(&videos.iter().collect::<Vec<_>>())?;
    Ok(LongVideo {
        plan: plan.clone(),
        latents,
        video,
    })
}

/// Frame-difference statistics around chunk boundaries.
#[derive(Clone, Debug, PartialEq)]
pub struct SeamStats {
    /// Mean absolute pixel difference across each seam.
    pub seams: Vec<f64>,
    pub seam_mean: f64,
    /// Mean over all consecutive-frame differences inside chunks.
    pub intra_mean: f64,
}

impl SeamStats {
    pub fn ratio(&self) -> f64 {
        self.seam_mean / self.intra_mean
    }

    pub fn to_text(&self) -> String {
        let seams: Vec<String> = self.seams.iter().map(|v| format!("{v:.6}")).collect();
        format!(
            "seams={}\nseam_mean={:.6}\nintra_mean={:.6}\nratio={:.4}\n",
            seams.join(","),
            self.seam_mean,
            self.intra_mean,
            self.ratio()
        )
    }
}

pub fn seam_stats(video: &VideoClip, plan: &ChainPlan) -> Result<SeamStats> {
    if video.frames() != plan.total_frames || plan.chunks() < 2 {
        return Err(Error::invalid("seam statistics need a video of at least two planned chunks"));
    }
    let diffs = video.frame_diffs();
    let seam_idx: Vec<usize> = plan.seams().iter().map(|s| s - 1).collect();
    let seams: Vec<f64> = seam_idx.iter().map(|&i| diffs[i]).collect();
    let intra: Vec<f64> = diffs.iter().enumerate().filter(|(i, _)| !seam_idx.contains(i)).map(|(_, d)| *d).collect();
    Ok(SeamStats {
        seam_mean: seams.iter().sum::<f64>() / seams.len() as f64,
        intra_mean: intra.iter().sum::<f64>() / intra.len() as f64,
        seams,
    })
}
