use rand::Rng;

use super::attention::{adapter_self_attention, audio_cross_attention, AudioAttentionWeights, SelfAttentionWeights};
use super::posenc::timestep_sinusoid;
use crate::error::Result;
use crate::nn::{Linear, WeightInit, LN_EPS};
use crate::numerics::{Graph, ParamStore, Var};

/// Which optional pathways a backbone carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BackboneSpec {
    pub layers: usize,
    pub dim: usize,
    pub heads: usize,
    pub t_train: usize,
    pub appearance: bool,
    pub identity_dim: Option<usize>,
    pub audio_xattn: bool,
    pub audio_xattn_proj: bool,
}

/// Sinusoid followed by a two-layer SiLU MLP.
#[derive(Clone, Debug)]
pub struct TimestepEmbedding {
    pub l1: Linear,
    pub l2: Linear,
    pub dim: usize,
    pub t_train: usize,
}

impl TimestepEmbedding {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, dim: usize, t_train: usize, rng: &mut R) -> Result<Self> {
        Ok(TimestepEmbedding {
            l1: Linear::new(store, &format!("{name}.l1"), (dim, dim), true, WeightInit::Xavier, rng)?,
            l2: Linear::new(store, &format!("{name}.l2"), (dim, dim), true, WeightInit::Xavier, rng)?,
            dim,
            t_train,
        })
    }

    /// `[1, E]` embedding of step `t`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, t: usize) -> Result<Var> {
        let s = g.constant(timestep_sinusoid(t, self.dim, self.t_train)?);
        let h = self.l1.forward(g, store, s)?;
        let h = g.silu(h);
        self.l2.forward(g, store, h)
    }
}

/// One transformer layer: adaLN, adapter self-attention, gated audio cross-attention, adaLN, MLP.
#[derive(Clone, Debug)]
pub struct DitLayer {
    /// `E -> 6E` shift/scale/gate pairs for the two sub-blocks; zero at init.
    pub modulation: Linear,
    pub attn: SelfAttentionWeights,
    pub audio: Option<AudioAttentionWeights>,
    pub mlp1: Linear,
    pub mlp2: Linear,
}

/// Per-forward inputs shared by every layer.
#[derive(Clone, Copy, Debug)]
pub struct LayerInputs {
    pub appearance: Option<Var>,
    pub identity: Option<Var>,
    /// Length-`N` query gate, 0 outside the video tokens.
    pub gate: Var,
    pub audio: Option<Var>,
    /// `SiLU(t_emb)`, `[1, E]`.
    pub cond: Var,
}

fn modulate(g: &mut Graph, x: Var, shift: Var, scale: Var) -> Result<Var> {
    let n = g.layer_norm(x, LN_EPS)?;
    let s = g.add_scalar(scale, 1.0);
    let n = g.mul_row(n, s)?;
    g.add_row(n, shift)
}

impl DitLayer {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, spec: &BackboneSpec, rng: &mut R) -> Result<Self> {
        let e = spec.dim;
        let modulation = Linear::new(store, &format!("{name}.mod"), (e, 6 * e), true, WeightInit::Zero, rng)?;
        let attn = SelfAttentionWeights::new(store, &format!("{name}.attn"), e, spec.appearance, spec.identity_dim, rng)?;
        let audio = if spec.audio_xattn {
            Some(AudioAttentionWeights::new(store, &format!("{name}.xattn"), e, spec.audio_xattn_proj, rng)?)
        } else {
            None
        };
        let mlp1 = Linear::new(store, &format!("{name}.mlp1"), (e, 4 * e), true, WeightInit::Xavier, rng)?;
        let mlp2 = Linear::new(store, &format!("{name}.mlp2"), (4 * e, e), true, WeightInit::Xavier, rng)?;
        Ok(DitLayer {
            modulation,
            attn,
            audio,
            mlp1,
            mlp2,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, inp: &LayerInputs, heads: usize) -> Result<Var> {
        let e = g.shape(x)[1];
        let m = self.modulation.forward(g, store, inp.cond)?;
        let mut part = Vec::with_capacity(6);
        for i in 0..6 {
            part.push(g.slice_cols(m, i * e, e)?);
        }
        let h = modulate(g, x, part[0], part[1])?;
        let a = adapter_self_attention(g, store, h, inp.appearance, inp.identity, inp.gate, &self.attn, heads)?;
        let a = self.attn.wo.forward(g, store, a)?;
        let gate1 = g.add_scalar(part[2], 1.0);
        let a = g.mul_row(a, gate1)?;
        let mut x = g.add(x, a)?;
        if let Some(w) = &self.audio {
            let audio = inp.audio.ok_or(crate::Error::MissingCondition("audio tokens"))?;
            let q = g.layer_norm(x, LN_EPS)?;
            x = audio_cross_attention(g, store, x, q, audio, inp.gate, w, heads)?;
        }
        let h = modulate(g, x, part[3], part[4])?;
        let h = self.mlp1.forward(g, store, h)?;
        let h = g.gelu(h);
        let h = self.mlp2.forward(g, store, h)?;
        let gate2 = g.add_scalar(part[5], 1.0);
        let h = g.mul_row(h, gate2)?;
        g.add(x, h)
    }
}

/// Timestep embedding, layer stack and final adaptive norm.
#[derive(Clone, Debug)]
pub struct Backbone {
    pub spec: BackboneSpec,
    pub time: TimestepEmbedding,
    pub layers: Vec<DitLayer>,
    /// `E -> 2E` final shift/scale; zero at init.
    pub final_mod: Linear,
}

impl Backbone {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, spec: BackboneSpec, rng: &mut R) -> Result<Self> {
        let time = TimestepEmbedding::new(store, &format!("{name}.time"), spec.dim, spec.t_train, rng)?;
        let layers = (0..spec.layers)
            .map(|i| DitLayer::new(store, &format!("{name}.layers.{i}"), &spec, rng))
            .collect::<Result<Vec<_>>>()?;
        let final_mod = Linear::new(store, &format!("{name}.final_mod"), (spec.dim, 2 * spec.dim), true, WeightInit::Zero, rng)?;
        Ok(Backbone {
            spec,
            time,
            layers,
            final_mod,
        })
    }

    /// Runs the full stack on the sequence `x` and returns the final normalised stream.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        t: usize,
        appearance: Option<Var>,
        identity: Option<Var>,
        gate: Var,
        audio: Option<Var>,
    ) -> Result<Var> {
        let temb = self.time.forward(g, store, t)?;
        let cond = g.silu(temb);
        let inp = LayerInputs {
            appearance,
            identity,
            gate,
            audio,
            cond,
        };
        let mut x = x;
        for layer in &self.layers {
            x = layer.forward(g, store, x, &inp, self.spec.heads)?;
        }
        let m = self.final_mod.forward(g, store, cond)?;
        let shift = g.slice_cols(m, 0, self.spec.dim)?;
        let scale = g.slice_cols(m, self.spec.dim, self.spec.dim)?;
        modulate(g, x, shift, scale)
    }
}
