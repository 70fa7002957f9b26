use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{InpaintMask, StructuralPrior};
use crate::codec::{patchify_graph, scatter_patches, LatentClip, PatchGeometry};
use crate::conditioning::{PositionEncoder, SequentialGate};
use crate::error::{Error, Result};
use crate::h2_dit::posenc::{grid_positions, spatial_positions};
use crate::h2_dit::{Backbone, BackboneSpec, Flags, ModelConfig};
use crate::nn::{Linear, WeightInit};
use crate::numerics::{Graph, ParamId, ParamStore, Tensor, Var};

/// Conditions of the stage-2 denoiser. Latents are normalised.
#[derive(Clone, Debug)]
pub struct R2Conds {
    /// Stage-1 latent (ground truth during training) that supplies the H² tokens.
    pub stage1: LatentClip,
    pub prior: StructuralPrior,
    pub mask: InpaintMask,
    pub gate: SequentialGate,
    pub reference: Option<LatentClip>,
    pub identity: Option<Tensor>,
}

/// Per-token `Cat^c(masked H² tokens, mesh tokens)` projected to `E`, appended after the noise tokens.
pub fn assemble_refine_input(
    g: &mut Graph,
    store: &ParamStore,
    proj: &Linear,
    h2: Var,
    mesh: Var,
    mask: &[bool],
    noise: Var,
) -> Result<Var> {
    let n = g.shape(noise)[0];
    if g.shape(h2)[0] != n || g.shape(mesh)[0] != n || mask.len() != n {
        return Err(Error::shape("assemble_refine_input", g.shape(h2), &[n, mask.len()]));
    }
    let keep = Tensor::new(vec![n], mask.iter().map(|&m| if m { 0.0 } else { 1.0 }).collect())?;
    let keep = g.constant(keep);
    let h2 = g.mul_col(h2, keep)?;
    let cat = g.concat_cols(&[h2, mesh])?;
    let cond = proj.forward(g, store, cat)?;
    g.concat_rows(&[noise, cond])
}

#[derive(Clone, Debug)]
pub struct R2Dit {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub embed: Linear,
    pub mesh: PositionEncoder,
    pub assemble: Linear,
    /// Noise, conditioning and appearance role embeddings.
    pub roles: [ParamId; 3],
    pub backbone: Backbone,
    pub unembed: Linear,
    pos_video: Tensor,
    pos_ref: Tensor,
}

/// Pixel frames per refiner window.
pub const REFINE_FRAMES: usize = 8;

impl R2Dit {
    /// Refiner flags: adapters kept, audio, motion and head position paths removed.
    pub fn flags() -> Flags {
        Flags {
            use_hpe: false,
            use_mt: false,
            use_audio_xattn: false,
            audio_xattn_proj: false,
            ..Flags::default()
        }
    }

    /// Refiner geometry derived from a stage-1 config: single-cell patches over
    /// [`REFINE_FRAMES`]-frame windows, so the dilated region mask leaves context visible.
    /// Applying it twice changes nothing.
    pub fn config_for(stage1: &ModelConfig) -> ModelConfig {
        ModelConfig {
            frames: REFINE_FRAMES.min(stage1.frames),
            motion_frames: 0,
            patch: PatchGeometry {
                p_t: 1,
                p_h: 1,
                p_w: 1,
                ..stage1.patch
            },
            flags: R2Dit::flags(),
            ..*stage1
        }
    }

    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let f = config.flags;
        if f.use_audio_xattn || f.audio_xattn_proj {
            return Err(Error::config("the refiner has no audio cross-attention"));
        }
        if f.use_mt || f.use_hpe {
            return Err(Error::config("the refiner takes no motion or head-position tokens"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut store = ParamStore::new();
        let e = config.dim();
        let g = config.patch;
        let pd = g.patch_dim(config.codec.c_z);
        let embed = Linear::new(&mut store, "r2.embed", (pd, e), false, WeightInit::Xavier, &mut rng)?;
        let mesh = PositionEncoder::new(&mut store, "r2.mesh", config.codec.c_img, &config.codec, &g, &mut rng)?;
        let assemble = Linear::new(&mut store, "r2.assemble", (2 * e, e), true, WeightInit::Xavier, &mut rng)?;
        let mut roles = [ParamId(0); 3];
        for (i, name) in ["noise", "cond", "appearance"].iter().enumerate() {
            roles[i] = store.add(format!("r2.role.{name}"), Tensor::randn(&[e], 0.02, &mut rng), true)?;
        }
        let spec = BackboneSpec {
            layers: config.layers,
            dim: e,
            heads: config.heads,
            t_train: config.t_train,
            appearance: f.use_aa,
            identity_dim: f.use_ia.then(|| config.identity_dim()),
            audio_xattn: false,
            audio_xattn_proj: false,
        };
        let backbone = Backbone::new(&mut store, "r2", spec, &mut rng)?;
        let unembed = Linear::new(&mut store, "r2.unembed", (e, pd), true, WeightInit::Zero, &mut rng)?;
        let grid = g.grid(config.latent_dims())?;
        let pos_video = grid_positions(grid, g.p_t * config.codec.r_t, 0.0, e);
        let pos_ref = spatial_positions(grid[1], grid[2], e);
        Ok(R2Dit {
            config,
            store,
            embed,
            mesh,
            assemble,
            roles,
            backbone,
            unembed,
            pos_video,
            pos_ref,
        })
    }

    fn check(&self, z_t: &[usize], c: &R2Conds) -> Result<()> {
        let cfg = &self.config;
        let dims = cfg.latent_dims();
        if z_t != dims || c.stage1.dims() != dims {
            return Err(Error::shape("r2 latent", &dims, z_t));
        }
        if c.prior.clip.dims() != cfg.video_dims() {
            return Err(Error::shape("r2 prior", &cfg.video_dims(), &c.prior.clip.dims()));
        }
        let n = cfg.video_tokens();
        if c.gate.len() != n || c.mask.tokens().len() != n {
            return Err(Error::shape("r2 gate/mask", &[n], &[c.gate.len(), c.mask.tokens().len()]));
        }
        Ok(())
    }

    fn tagged(&self, g: &mut Graph, store: &ParamStore, pos: &Tensor, role: usize) -> Result<Var> {
        let p = g.constant(pos.clone());
        let r = g.param(store, self.roles[role]);
        g.add_row(p, r)
    }

    pub fn forward(&self, g: &mut Graph, z_t: Var, t: usize, c: &R2Conds) -> Result<Var> {
        self.forward_with(g, &self.store, z_t, t, c)
    }

    /// Sequence is noise ⊕ conditioning; only the noise slice is unpatchified.
    pub fn forward_with(&self, g: &mut Graph, store: &ParamStore, z_t: Var, t: usize, c: &R2Conds) -> Result<Var> {
        self.check(g.shape(z_t), c)?;
        let cfg = &self.config;
        let geom = cfg.patch;
        let n = cfg.video_tokens();
        let w_embed = g.param(store, self.embed.w);

        let noise = patchify_graph(g, z_t, &geom, w_embed)?;
        let s1 = g.constant(c.stage1.tensor().clone());
        let h2 = patchify_graph(g, s1, &geom, w_embed)?;
        let prior = g.constant(c.prior.clip.to_channels_first());
        let mesh = self.mesh.forward(g, store, prior)?;
        let x = assemble_refine_input(g, store, &self.assemble, h2, mesh, c.mask.tokens(), noise)?;
        let tn = self.tagged(g, store, &self.pos_video, 0)?;
        let tc = self.tagged(g, store, &self.pos_video, 1)?;
        let tags = g.concat_rows(&[tn, tc])?;
        let x = g.add(x, tags)?;

        let mut gate = c.gate.0.clone();
        gate.resize(2 * n, 0.0);
        let gate = g.constant(Tensor::new(vec![2 * n], gate)?);
        let appearance = if cfg.flags.use_aa {
            let r = c.reference.as_ref().ok_or(Error::MissingCondition("reference latent"))?;
            let rz = g.constant(r.tensor().clone());
            let r = patchify_graph(g, rz, &geom, w_embed)?;
            let tag = self.tagged(g, store, &self.pos_ref, 2)?;
            Some(g.add(r, tag)?)
        } else {
            None
        };
        let identity = if cfg.flags.use_ia {
            let f = c.identity.as_ref().ok_or(Error::MissingCondition("identity tokens"))?;
            Some(g.constant(f.clone()))
        } else {
            None
        };
        let y = self.backbone.forward(g, store, x, t, appearance, identity, gate, None)?;
        let y = g.slice_rows(y, 0, n)?;
        let patches = self.unembed.forward(g, store, y)?;
        scatter_patches(g, patches, &geom, cfg.latent_dims())
    }

    pub fn predict(&self, z_t: &Tensor, t: usize, c: &R2Conds) -> Result<Tensor> {
        let mut g = Graph::new();
        let z = g.constant(z_t.clone());
        let y = self.forward(&mut g, z, t, c)?;
        Ok(g.value(y).clone())
    }
}
