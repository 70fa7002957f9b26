use rand::Rng;

use crate::codec::{patch_rows_channels_first, CodecConfig, PatchGeometry};
use crate::error::{Error, Result};
use crate::nn::{Conv3d, Linear, WeightInit};
use crate::numerics::{Conv3dSpec, Graph, ParamStore, Var};

pub const ENCODER_HIDDEN: usize = 8;

/// Conv stack that mirrors the codec strides, then a patch embedding.
///
/// Used both as the head position encoder (1 input channel) and as the mesh
/// encoder (3 input channels).
#[derive(Clone, Copy, Debug)]
pub struct PositionEncoder {
    pub conv1: Conv3d,
    pub conv2: Conv3d,
    pub embed: Linear,
    pub geom: PatchGeometry,
    pub c_in: usize,
}

impl PositionEncoder {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        codec: &CodecConfig,
        geom: &PatchGeometry,
        rng: &mut R,
    ) -> Result<Self> {
        if codec.r_s % 2 != 0 {
            return Err(Error::config(format!("position encoder needs an even spatial stride, got {}", codec.r_s)));
        }
        let s1 = Conv3dSpec::new([codec.r_t, 2, 2], [codec.r_t, 2, 2]);
        let h = codec.r_s / 2;
        let s2 = Conv3dSpec::new([1, h, h], [1, h, h]);
        let conv1 = Conv3d::new(store, &format!("{name}.conv1"), (c_in, ENCODER_HIDDEN), s1, WeightInit::Xavier, rng)?;
        let conv2 = Conv3d::new(store, &format!("{name}.conv2"), (ENCODER_HIDDEN, codec.c_z), s2, WeightInit::Xavier, rng)?;
        let embed = Linear::new(
            store,
            &format!("{name}.embed"),
            (geom.patch_dim(codec.c_z), geom.embed_dim),
            false,
            WeightInit::Xavier,
            rng,
        )?;
        Ok(PositionEncoder {
            conv1,
            conv2,
            embed,
            geom: *geom,
            c_in,
        })
    }

    /// `[c_in, f, H, W]` volume to `[S^v, E]` tokens.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        if g.shape(x).first() != Some(&self.c_in) {
            return Err(Error::shape("position encoder input", g.shape(x), &[self.c_in]));
        }
        let h = self.conv1.forward(g, store, x)?;
        let h = g.silu(h);
        let h = self.conv2.forward(g, store, h)?;
        let rows = patch_rows_channels_first(g, h, &self.geom)?;
        self.embed.forward(g, store, rows)
    }
}

/// `MLP(Cat(T^P, T'))` with a linear skip.
///
/// The skip starts as `[0 | I]` and the MLP output layer at zero, so at init
/// the fused stream equals the noisy video tokens.
#[derive(Clone, Copy, Debug)]
pub struct PositionFusion {
    pub skip: Linear,
    pub hidden: Linear,
    pub out: Linear,
    pub dim: usize,
}

impl PositionFusion {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, dim: usize, rng: &mut R) -> Result<Self> {
        let skip = Linear::new(store, &format!("{name}.skip"), (2 * dim, dim), false, WeightInit::Zero, rng)?;
        let w = &mut store.get_mut(skip.w).tensor;
        for j in 0..dim {
            w.data_mut()[(dim + j) * dim + j] = 1.0;
        }
        let hidden = Linear::new(store, &format!("{name}.hidden"), (2 * dim, 4 * dim), true, WeightInit::Xavier, rng)?;
        let out = Linear::new(store, &format!("{name}.out"), (4 * dim, dim), true, WeightInit::Zero, rng)?;
        Ok(PositionFusion { skip, hidden, out, dim })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, tp: Var, t: Var) -> Result<Var> {
        if g.shape(tp) != g.shape(t) {
            return Err(Error::shape("fuse_position", g.shape(tp), g.shape(t)));
        }
        let cat = g.concat_cols(&[tp, t])?;
        let skip = self.skip.forward(g, store, cat)?;
        let h = self.hidden.forward(g, store, cat)?;
        let h = g.gelu(h);
        let m = self.out.forward(g, store, h)?;
        g.add(skip, m)
    }
}
