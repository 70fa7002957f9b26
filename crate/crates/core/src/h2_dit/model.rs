use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::block::{Backbone, BackboneSpec};
use super::posenc::{audio_positions, grid_positions, spatial_positions};
use super::ModelConfig;
use crate::codec::{patchify_graph, scatter_patches, LatentClip};
use crate::conditioning::{AudioFeatures, AudioProjection, HeadMask, MotionLatent, PositionEncoder, PositionFusion, SequentialGate};
use crate::error::{Error, Result};
use crate::nn::{Linear, WeightInit};
use crate::numerics::{Graph, ParamId, ParamStore, Tensor, Var};

/// Everything the stage-1 denoiser reads besides the noisy latent.
///
/// Latents here are already in the model's normalised space.
#[derive(Clone, Debug)]
pub struct H2Conds {
    pub audio: AudioFeatures,
    pub head_mask: HeadMask,
    pub gate: SequentialGate,
    pub motion: MotionLatent,
    pub reference: Option<LatentClip>,
    /// `[16, D_f]` unit-norm identity tokens.
    pub identity: Option<Tensor>,
}

#[derive(Clone, Debug)]
pub struct H2Dit {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub embed: Linear,
    pub hpe: Option<(PositionEncoder, PositionFusion)>,
    pub audio: AudioProjection,
    pub roles: [ParamId; 4],
    pub backbone: Backbone,
    pub unembed: Linear,
    pos_video: Tensor,
    pos_motion: Option<Tensor>,
    pos_ref: Tensor,
}

const ROLE_VIDEO: usize = 0;
const ROLE_MOTION: usize = 1;
const ROLE_AUDIO: usize = 2;
const ROLE_APPEARANCE: usize = 3;

impl H2Dit {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut store = ParamStore::new();
        let e = config.dim();
        let g = config.patch;
        let pd = g.patch_dim(config.codec.c_z);
        let f = config.flags;
        let embed = Linear::new(&mut store, "h2.embed", (pd, e), false, WeightInit::Xavier, &mut rng)?;
        let hpe = if f.use_hpe {
            Some((
                PositionEncoder::new(&mut store, "h2.hpe", 1, &config.codec, &g, &mut rng)?,
                PositionFusion::new(&mut store, "h2.fuse", e, &mut rng)?,
            ))
        } else {
            None
        };
        let audio = AudioProjection::new(&mut store, "h2.audio", config.audio_dim, e, &mut rng)?;
        let mut roles = [ParamId(0); 4];
        for (i, name) in ["video", "motion", "audio", "appearance"].iter().enumerate() {
            roles[i] = store.add(format!("h2.role.{name}"), Tensor::randn(&[e], 0.02, &mut rng), true)?;
        }
        let spec = BackboneSpec {
            layers: config.layers,
            dim: e,
            heads: config.heads,
            t_train: config.t_train,
            appearance: f.use_aa,
            identity_dim: f.use_ia.then(|| config.identity_dim()),
            audio_xattn: f.use_audio_xattn,
            audio_xattn_proj: f.audio_xattn_proj,
        };
        let backbone = Backbone::new(&mut store, "h2", spec, &mut rng)?;
        let unembed = Linear::new(&mut store, "h2.unembed", (e, pd), true, WeightInit::Zero, &mut rng)?;

        let per_token = g.p_t * config.codec.r_t;
        let grid = g.grid(config.latent_dims())?;
        let pos_video = grid_positions(grid, per_token, 0.0, e);
        let pos_motion = if config.motion_frames > 0 {
            let mg = g.grid(config.motion_latent_dims())?;
            Some(grid_positions(mg, per_token, -(config.motion_frames as f64), e))
        } else {
            None
        };
        let pos_ref = spatial_positions(grid[1], grid[2], e);
        Ok(H2Dit {
            config,
            store,
            embed,
            hpe,
            audio,
            roles,
            backbone,
            unembed,
            pos_video,
            pos_motion,
            pos_ref,
        })
    }

    fn tag(&self, g: &mut Graph, store: &ParamStore, x: Var, pos: &Tensor, role: usize) -> Result<Var> {
        let p = g.constant(pos.clone());
        let x = g.add(x, p)?;
        let r = g.param(store, self.roles[role]);
        g.add_row(x, r)
    }

    fn check(&self, z_t: &[usize], c: &H2Conds) -> Result<()> {
        let cfg = &self.config;
        let dims = cfg.latent_dims();
        if z_t != dims {
            return Err(Error::shape("h2 latent", &dims, z_t));
        }
        if c.gate.len() != cfg.video_tokens() {
            return Err(Error::shape("h2 gate", &[cfg.video_tokens()], &[c.gate.len()]));
        }
        if c.audio.steps() != cfg.frames || c.audio.dim() != cfg.audio_dim {
            return Err(Error::shape("h2 audio", &[cfg.frames, cfg.audio_dim], &[c.audio.steps(), c.audio.dim()]));
        }
        if cfg.flags.use_hpe && [c.head_mask.frames, c.head_mask.height, c.head_mask.width] != [cfg.frames, cfg.height, cfg.width] {
            return Err(Error::shape(
                "h2 head mask",
                &[cfg.frames, cfg.height, cfg.width],
                &[c.head_mask.frames, c.head_mask.height, c.head_mask.width],
            ));
        }
        Ok(())
    }

    /// Raw network output for noisy latent `z_t` at step `t`, shaped like the latent.
    ///
    /// Sequence is motion ⊕ video ⊕ audio; only the video slice is unpatchified.
    pub fn forward(&self, g: &mut Graph, z_t: Var, t: usize, c: &H2Conds) -> Result<Var> {
        self.forward_with(g, &self.store, z_t, t, c)
    }

    /// [`H2Dit::forward`] reading parameters from `store` (same layout as `self.store`).
    pub fn forward_with(&self, g: &mut Graph, store: &ParamStore, z_t: Var, t: usize, c: &H2Conds) -> Result<Var> {
        self.check(g.shape(z_t), c)?;
        let cfg = &self.config;
        let geom = cfg.patch;
        let w_embed = g.param(store, self.embed.w);

        let mut video = patchify_graph(g, z_t, &geom, w_embed)?;
        if let Some((hpe, fuse)) = &self.hpe {
            let mask = g.constant(c.head_mask.to_tensor());
            let tp = hpe.forward(g, store, mask)?;
            video = fuse.forward(g, store, tp, video)?;
        }
        let video = self.tag(g, store, video, &self.pos_video, ROLE_VIDEO)?;

        let mut parts = Vec::with_capacity(3);
        let mut gate = Vec::new();
        if cfg.flags.use_mt {
            if let Some(z) = &c.motion.0 {
                if z.dims() != cfg.motion_latent_dims() {
                    return Err(Error::shape("h2 motion latent", &cfg.motion_latent_dims(), &z.dims()));
                }
                let pos = self.pos_motion.as_ref().ok_or_else(|| Error::config("motion tokens with M = 0"))?;
                let zm = g.constant(z.tensor().clone());
                let m = patchify_graph(g, zm, &geom, w_embed)?;
                let m = self.tag(g, store, m, pos, ROLE_MOTION)?;
                gate.extend(std::iter::repeat(0.0).take(g.shape(m)[0]));
                parts.push(m);
            }
        }
        let n_before = gate.len();
        parts.push(video);
        gate.extend_from_slice(&c.gate.0);
        let audio = self.audio.forward(g, store, &c.audio)?;
        let audio = self.tag(g, store, audio, &audio_positions(c.audio.steps(), cfg.dim()), ROLE_AUDIO)?;
        gate.extend(std::iter::repeat(0.0).take(c.audio.steps()));
        parts.push(audio);
        let x = g.concat_rows(&parts)?;
        let n = gate.len();
        let gate = g.constant(Tensor::new(vec![n], gate)?);

        let appearance = if cfg.flags.use_aa {
            let r = c.reference.as_ref().ok_or(Error::MissingCondition("reference latent"))?;
            let rz = g.constant(r.tensor().clone());
            let r = patchify_graph(g, rz, &geom, w_embed)?;
            Some(self.tag(g, store, r, &self.pos_ref, ROLE_APPEARANCE)?)
        } else {
            None
        };
        let identity = if cfg.flags.use_ia {
            let f = c.identity.as_ref().ok_or(Error::MissingCondition("identity tokens"))?;
            Some(g.constant(f.clone()))
        } else {
            None
        };
        let audio_kv = cfg.flags.use_audio_xattn.then_some(audio);

        let y = self.backbone.forward(g, store, x, t, appearance, identity, gate, audio_kv)?;
        let y = g.slice_rows(y, n_before, cfg.video_tokens())?;
        let patches = self.unembed.forward(g, store, y)?;
        scatter_patches(g, patches, &geom, cfg.latent_dims())
    }

    /// Convenience forward on plain tensors.
    pub fn predict(&self, z_t: &Tensor, t: usize, c: &H2Conds) -> Result<Tensor> {
        let mut g = Graph::new();
        let z = g.constant(z_t.clone());
        let y = self.forward(&mut g, z, t, c)?;
        Ok(g.value(y).clone())
    }
}
