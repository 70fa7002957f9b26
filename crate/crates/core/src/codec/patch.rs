use std::sync::Arc;

use super::LatentClip;
use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor, Var};

/// Upper bound on `S^v * E` accepted by [`PatchGeometry::validate`].
pub const TOKEN_BUDGET: usize = 1 << 20;

/// Which stream a token belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Video,
    Motion,
    Audio,
    Appearance,
    Identity,
    Mesh,
    Noise,
}

/// Token matrix `[S, E]` with one role tag per row.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenSeq {
    pub tokens: Tensor,
    pub roles: Vec<Role>,
}

impl TokenSeq {
    pub fn new(tokens: Tensor, role: Role) -> Result<Self> {
        if tokens.rank() != 2 {
            return Err(Error::shape("token sequence", tokens.shape(), &[0, 0]));
        }
        let roles = vec![role; tokens.shape()[0]];
        Ok(TokenSeq { tokens, roles })
    }

    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.tokens.cols()
    }

    pub fn count(&self, role: Role) -> usize {
        self.roles.iter().filter(|&&r| r == role).count()
    }
}

/// Patch extents over the latent grid plus the embedding width.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchGeometry {
    pub p_t: usize,
    pub p_h: usize,
    pub p_w: usize,
    pub embed_dim: usize,
}

impl Default for PatchGeometry {
    fn default() -> Self {
        PatchGeometry {
            p_t: 1,
            p_h: 2,
            p_w: 2,
            embed_dim: 64,
        }
    }
}

impl PatchGeometry {
    /// Patch grid `(g_t, g_h, g_w)` for a latent of dims `[f, h, w, c]`.
    pub fn grid(&self, latent: [usize; 4]) -> Result<[usize; 3]> {
        let [f, h, w, _] = latent;
        let p = [self.p_t, self.p_h, self.p_w];
        if p.contains(&0) || f % self.p_t != 0 || h % self.p_h != 0 || w % self.p_w != 0 {
            return Err(Error::shape("patch geometry", &latent[..3], &p));
        }
        Ok([f / self.p_t, h / self.p_h, w / self.p_w])
    }

    pub fn token_count(&self, latent: [usize; 4]) -> Result<usize> {
        Ok(self.grid(latent)?.iter().product())
    }

    pub fn patch_dim(&self, channels: usize) -> usize {
        self.p_t * self.p_h * self.p_w * channels
    }

    pub fn validate(&self, latent: [usize; 4]) -> Result<usize> {
        let s = self.token_count(latent)?;
        if s * self.embed_dim > TOKEN_BUDGET {
            return Err(Error::config(format!(
                "{s} tokens x E={} exceeds the token budget {TOKEN_BUDGET}",
                self.embed_dim
            )));
        }
        Ok(s)
    }

    /// Grid coordinates `(t, y, x)` of token `s`; tokens are time-major, then row-major.
    pub fn position(&self, s: usize, grid: [usize; 3]) -> [usize; 3] {
        let [_, gh, gw] = grid;
        [s / (gh * gw), (s / gw) % gh, s % gw]
    }
}

/// Gather index taking a flat `[f, h, w, c]` latent to `[S, patch_dim]` rows.
///
/// Within a patch the order is `(dt, dy, dx, c)`. The index is a permutation,
/// so scattering back is a gather with its inverse.
pub fn patch_index(latent: [usize; 4], g: &PatchGeometry) -> Result<Arc<[usize]>> {
    let [gt, gh, gw] = g.grid(latent)?;
    let [_, h, w, c] = latent;
    let mut idx = Vec::with_capacity(latent.iter().product());
    for t in 0..gt {
        for y in 0..gh {
            for x in 0..gw {
                for dt in 0..g.p_t {
                    for dy in 0..g.p_h {
                        for dx in 0..g.p_w {
                            let (lt, ly, lx) = (t * g.p_t + dt, y * g.p_h + dy, x * g.p_w + dx);
                            let base = ((lt * h + ly) * w + lx) * c;
                            idx.extend(base..base + c);
                        }
                    }
                }
            }
        }
    }
    Ok(idx.into())
}

pub(crate) fn inverse_index(idx: &[usize]) -> Arc<[usize]> {
    let mut inv = vec![0; idx.len()];
    for (i, &j) in idx.iter().enumerate() {
        inv[j] = i;
    }
    inv.into()
}

pub(crate) fn patch_matrix(z: &Tensor, g: &PatchGeometry) -> Result<Tensor> {
    let dims: [usize; 4] = z
        .shape()
        .try_into()
        .map_err(|_| Error::shape("patchify", z.shape(), &[0, 0, 0, 0]))?;
    let idx = patch_index(dims, g)?;
    let data = idx.iter().map(|&i| z.data()[i]).collect();
    Tensor::new(vec![g.token_count(dims)?, g.patch_dim(dims[3])], data)
}

/// Video tokens `patches · W_embed`, with `W_embed` of shape `[patch_dim, E]`.
pub fn patchify(z: &LatentClip, g: &PatchGeometry, w_embed: &Tensor) -> Result<TokenSeq> {
    let patches = patch_matrix(z.tensor(), g)?;
    if w_embed.shape() != [patches.cols(), g.embed_dim] {
        return Err(Error::shape("patch embedding", w_embed.shape(), &[patches.cols(), g.embed_dim]));
    }
    TokenSeq::new(patches.matmul(w_embed)?, Role::Video)
}

/// Inverse of [`patchify`] given `W_unembed` of shape `[E, patch_dim]`.
pub fn unpatchify(
    tokens: &TokenSeq,
    g: &PatchGeometry,
    w_unembed: &Tensor,
    latent: [usize; 4],
    strides: (usize, usize),
) -> Result<LatentClip> {
    if let Some(r) = tokens.roles.iter().find(|&&r| r != Role::Video) {
        return Err(Error::invalid(format!("unpatchify received a {r:?} token")));
    }
    let s = g.token_count(latent)?;
    if tokens.len() != s {
        return Err(Error::shape("unpatchify token count", &[s], &[tokens.len()]));
    }
    let patches = tokens.tokens.matmul(w_unembed)?;
    if patches.cols() != g.patch_dim(latent[3]) {
        return Err(Error::shape("unpatchify patch dim", &[g.patch_dim(latent[3])], &[patches.cols()]));
    }
    let inv = inverse_index(&patch_index(latent, g)?);
    let data = inv.iter().map(|&i| patches.data()[i]).collect();
    LatentClip::new(Tensor::new(latent.to_vec(), data)?, strides.0, strides.1)
}

/// Tape version of [`patchify`]: `z` is a `[f, h, w, c]` latent node, `w_embed` `[patch_dim, E]`.
pub fn patchify_graph(g: &mut Graph, z: Var, geom: &PatchGeometry, w_embed: Var) -> Result<Var> {
    let dims = latent_dims_of(g.shape(z))?;
    let idx = patch_index(dims, geom)?;
    let rows = geom.token_count(dims)?;
    let patches = g.gather(z, idx, &[rows, geom.patch_dim(dims[3])])?;
    g.matmul(patches, w_embed)
}

/// Tape version of [`unpatchify`]: `[S, E]` tokens to a `[f, h, w, c]` latent.
pub fn unpatchify_graph(g: &mut Graph, tokens: Var, geom: &PatchGeometry, w_unembed: Var, latent: [usize; 4]) -> Result<Var> {
    let patches = g.matmul(tokens, w_unembed)?;
    scatter_patches(g, patches, geom, latent)
}

/// Places `[S, patch_dim]` patch rows back into a `[f, h, w, c]` latent.
pub fn scatter_patches(g: &mut Graph, patches: Var, geom: &PatchGeometry, latent: [usize; 4]) -> Result<Var> {
    let inv = inverse_index(&patch_index(latent, geom)?);
    g.gather(patches, inv, &latent)
}

/// Patch tokens of a channels-first `[c, f, h, w]` feature volume, as rows `[S, patch_dim]`.
pub fn patch_rows_channels_first(g: &mut Graph, x: Var, geom: &PatchGeometry) -> Result<Var> {
    let s = g.shape(x).to_vec();
    if s.len() != 4 {
        return Err(Error::shape("channels-first patches", &s, &[0, 0, 0, 0]));
    }
    let (c, f, h, w) = (s[0], s[1], s[2], s[3]);
    let dims = [f, h, w, c];
    let last = patch_index(dims, geom)?;
    // channels-last flat offset -> channels-first flat offset
    let idx: Arc<[usize]> = last
        .iter()
        .map(|&i| {
            let (pos, ch) = (i / c, i % c);
            ch * f * h * w + pos
        })
        .collect();
    g.gather(x, idx, &[geom.token_count(dims)?, geom.patch_dim(c)])
}

fn latent_dims_of(shape: &[usize]) -> Result<[usize; 4]> {
    shape
        .try_into()
        .map_err(|_| Error::shape("latent", shape, &[0, 0, 0, 0]))
}
