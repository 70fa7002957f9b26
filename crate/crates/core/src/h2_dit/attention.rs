use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Linear, WeightInit};
use crate::numerics::{Graph, ParamStore, Var};

/// Projections of one self-attention block, including the appearance and identity adapters.
///
/// The adapter value matrices start at zero so a fresh adapter leaves the
/// base attention untouched.
#[derive(Clone, Debug)]
pub struct SelfAttentionWeights {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    /// `(W_k^R, W_v^R)`, `[E, E]` each.
    pub appearance: Option<(Linear, Linear)>,
    /// `(W_k^F, W_v^F)`, `[D_f, E]` each.
    pub identity: Option<(Linear, Linear)>,
}

impl SelfAttentionWeights {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        appearance: bool,
        identity_dim: Option<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        let lin = |store: &mut ParamStore, n: &str, d: (usize, usize), init, rng: &mut R| {
            Linear::new(store, &format!("{name}.{n}"), d, false, init, rng)
        };
        let wq = lin(store, "wq", (dim, dim), WeightInit::Xavier, rng)?;
        let wk = lin(store, "wk", (dim, dim), WeightInit::Xavier, rng)?;
        let wv = lin(store, "wv", (dim, dim), WeightInit::Xavier, rng)?;
        let wo = lin(store, "wo", (dim, dim), WeightInit::Xavier, rng)?;
        let appearance = if appearance {
            Some((
                lin(store, "wk_r", (dim, dim), WeightInit::Xavier, rng)?,
                lin(store, "wv_r", (dim, dim), WeightInit::Zero, rng)?,
            ))
        } else {
            None
        };
        let identity = match identity_dim {
            Some(d) => Some((
                lin(store, "wk_f", (d, dim), WeightInit::Xavier, rng)?,
                lin(store, "wv_f", (d, dim), WeightInit::Zero, rng)?,
            )),
            None => None,
        };
        Ok(SelfAttentionWeights {
            wq,
            wk,
            wv,
            wo,
            appearance,
            identity,
        })
    }
}

/// Adapter self-attention before the output projection.
///
/// `softmax(QKᵀ/√c)V + softmax(Q(RW_k^R)ᵀ/√c)RW_v^R + S̄ ⊙ softmax(Q(FW_k^F)ᵀ/√c)FW_v^F`,
/// with `Q, K, V` projected from `x` and the gate `S̄` (length `N`) scaling
/// each query row of the identity term. An adapter whose weights are absent
/// is skipped; one whose tokens are absent is an error.
pub fn adapter_self_attention(
    g: &mut Graph,
    store: &ParamStore,
    x: Var,
    r: Option<Var>,
    f: Option<Var>,
    gate: Var,
    w: &SelfAttentionWeights,
    heads: usize,
) -> Result<Var> {
    let dim = g.shape(x)[1];
    let scale = 1.0 / ((dim / heads) as f64).sqrt();
    let q = w.wq.forward(g, store, x)?;
    let k = w.wk.forward(g, store, x)?;
    let v = w.wv.forward(g, store, x)?;
    let mut out = g.attention(q, k, v, heads, scale)?;
    if let Some((wk, wv)) = &w.appearance {
        let r = r.ok_or(Error::MissingCondition("appearance tokens"))?;
        let kr = wk.forward(g, store, r)?;
        let vr = wv.forward(g, store, r)?;
        let term = g.attention(q, kr, vr, heads, scale)?;
        out = g.add(out, term)?;
    }
    if let Some((wk, wv)) = &w.identity {
        let f = f.ok_or(Error::MissingCondition("identity tokens"))?;
        let kf = wk.forward(g, store, f)?;
        let vf = wv.forward(g, store, f)?;
        let term = g.attention(q, kf, vf, heads, scale)?;
        let term = g.mul_col(term, gate)?;
        out = g.add(out, term)?;
    }
    Ok(out)
}

/// Query projection for the audio cross-attention, plus optional key/value/output projections.
#[derive(Clone, Debug)]
pub struct AudioAttentionWeights {
    pub wq: Linear,
    pub projections: Option<(Linear, Linear, Linear)>,
}

impl AudioAttentionWeights {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, dim: usize, projections: bool, rng: &mut R) -> Result<Self> {
        let wq = Linear::new(store, &format!("{name}.wq"), (dim, dim), false, WeightInit::Xavier, rng)?;
        let projections = if projections {
            Some((
                Linear::new(store, &format!("{name}.wk"), (dim, dim), false, WeightInit::Xavier, rng)?,
                Linear::new(store, &format!("{name}.wv"), (dim, dim), false, WeightInit::Xavier, rng)?,
                Linear::new(store, &format!("{name}.wo"), (dim, dim), false, WeightInit::Xavier, rng)?,
            ))
        } else {
            None
        };
        Ok(AudioAttentionWeights { wq, projections })
    }
}

/// Audio cross-attention as a gated residual: `x + S̄ ⊙ softmax(Q Aᵀ/√c) A`.
///
/// Queries come from `query_src` (the layer passes the normalised stream).
/// Without projections `A` is both key and value. Rows with gate 0 are
/// returned unchanged.
pub fn audio_cross_attention(
    g: &mut Graph,
    store: &ParamStore,
    x: Var,
    query_src: Var,
    a: Var,
    gate: Var,
    w: &AudioAttentionWeights,
    heads: usize,
) -> Result<Var> {
    let dim = g.shape(x)[1];
    if g.shape(a).len() != 2 || g.shape(a)[1] != dim {
        return Err(Error::shape("audio cross-attention", g.shape(x), g.shape(a)));
    }
    let scale = 1.0 / ((dim / heads) as f64).sqrt();
    let q = w.wq.forward(g, store, query_src)?;
    let attended = match &w.projections {
        None => g.attention(q, a, a, heads, scale)?,
        Some((wk, wv, wo)) => {
            let k = wk.forward(g, store, a)?;
            let v = wv.forward(g, store, a)?;
            let o = g.attention(q, k, v, heads, scale)?;
            wo.forward(g, store, o)?
        }
    };
    let gated = g.mul_col(attended, gate)?;
    g.add(x, gated)
}
