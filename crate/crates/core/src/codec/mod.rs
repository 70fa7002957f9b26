//! Fixed blockwise latent codec and patch tokenisation.
//!
//! The codec maps each `r_t x r_s x r_s` pixel block (all colour channels) to
//! `c_z` latent channels with a seeded matrix whose rows are orthonormal. The
//! first rows are the normalised per-channel block-mean vectors, so decoding an
//! encoded clip reproduces every block mean exactly.

mod clip;
mod patch;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use clip::{LatentClip, VideoClip};
pub(crate) use clip::ByteReader;
pub use patch::{
    patch_index, patch_rows_channels_first, patchify, patchify_graph, scatter_patches, unpatchify, unpatchify_graph, PatchGeometry, Role,
    TokenSeq, TOKEN_BUDGET,
};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CodecConfig {
    pub r_t: usize,
    pub r_s: usize,
    pub c_img: usize,
    pub c_z: usize,
    pub seed: u64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            r_t: 2,
            r_s: 4,
            c_img: 3,
            c_z: 8,
            seed: 17,
        }
    }
}

impl CodecConfig {
    pub fn block_len(&self) -> usize {
        self.r_t * self.r_s * self.r_s * self.c_img
    }
}

#[derive(Clone, Debug)]
pub struct Codec {
    config: CodecConfig,
    /// `[c_z, block_len]`, orthonormal rows.
    projection: Tensor,
}

impl Codec {
    pub fn new(config: CodecConfig) -> Result<Self> {
        let projection = build_projection(&config)?;
        Ok(Codec { config, projection })
    }

    /// Codec with a caller-supplied projection; rows must be orthonormal.
    pub fn with_projection(config: CodecConfig, projection: Tensor) -> Result<Self> {
        if projection.shape() != [config.c_z, config.block_len()] {
            return Err(Error::shape("codec projection", projection.shape(), &[config.c_z, config.block_len()]));
        }
        let gram = projection.matmul(&projection.transpose()?)?;
        if gram.max_abs_diff(&Tensor::eye(config.c_z)) > 1e-9 {
            return Err(Error::invalid("codec projection rows are not orthonormal"));
        }
        Ok(Codec { config, projection })
    }

    pub fn config(&self) -> &CodecConfig {
        &self.config
    }

    pub fn projection(&self) -> &Tensor {
        &self.projection
    }

    pub fn latent_dims(&self, video: [usize; 4]) -> Result<[usize; 4]> {
        let c = &self.config;
        let [f, h, w, ch] = video;
        if ch != c.c_img {
            return Err(Error::shape("encode channels", &[c.c_img], &[ch]));
        }
        if f % c.r_t != 0 || h % c.r_s != 0 || w % c.r_s != 0 {
            return Err(Error::invalid(format!(
                "clip dims {video:?} not divisible by strides (r_t={}, r_s={})",
                c.r_t, c.r_s
            )));
        }
        Ok([f / c.r_t, h / c.r_s, w / c.r_s, c.c_z])
    }

    /// Each latent block `t` reads only frames `t*r_t .. (t+1)*r_t`.
    pub fn encode(&self, v: &VideoClip) -> Result<LatentClip> {
        let [fz, hz, wz, _] = self.latent_dims(v.dims())?;
        let c = &self.config;
        let b = c.block_len();
        let mut blocks = vec![0.0; fz * hz * wz * b];
        let mut k = 0;
        for tb in 0..fz {
            for yb in 0..hz {
                for xb in 0..wz {
                    for dt in 0..c.r_t {
                        for dy in 0..c.r_s {
                            for dx in 0..c.r_s {
                                for ch in 0..c.c_img {
                                    blocks[k] = v.get(tb * c.r_t + dt, yb * c.r_s + dy, xb * c.r_s + dx, ch);
                                    k += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
        let blocks = Tensor::new(vec![fz * hz * wz, b], blocks)?;
        let z = blocks.matmul(&self.projection.transpose()?)?;
        LatentClip::new(z.reshape(&[fz, hz, wz, c.c_z])?, c.r_t, c.r_s)
    }

    /// Transpose projection, clamped to `[0, 1]`.
    pub fn decode(&self, z: &LatentClip) -> Result<VideoClip> {
        let c = &self.config;
        let [fz, hz, wz, cz] = z.dims();
        if cz != c.c_z {
            return Err(Error::shape("decode channels", &[c.c_z], &[cz]));
        }
        let flat = z.tensor().clone().reshape(&[fz * hz * wz, cz])?;
        let blocks = flat.matmul(&self.projection)?;
        let (f, h, w) = (fz * c.r_t, hz * c.r_s, wz * c.r_s);
        let mut out = vec![0.0; f * h * w * c.c_img];
        let mut k = 0;
        for tb in 0..fz {
            for yb in 0..hz {
                for xb in 0..wz {
                    for dt in 0..c.r_t {
                        for dy in 0..c.r_s {
                            for dx in 0..c.r_s {
                                for ch in 0..c.c_img {
                                    let (t, y, x) = (tb * c.r_t + dt, yb * c.r_s + dy, xb * c.r_s + dx);
                                    out[((t * h + y) * w + x) * c.c_img + ch] = blocks.data()[k].clamp(0.0, 1.0);
                                    k += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
        VideoClip::new([f, h, w, c.c_img], out)
    }
}

fn build_projection(c: &CodecConfig) -> Result<Tensor> {
    let b = c.block_len();
    if c.r_t == 0 || c.r_s == 0 || c.c_img == 0 {
        return Err(Error::config("codec strides and channels must be positive"));
    }
    if c.c_z < c.c_img || c.c_z > b {
        return Err(Error::config(format!(
            "c_z={} must lie in [c_img={}, block_len={b}]",
            c.c_z, c.c_img
        )));
    }
    let n = (b / c.c_img) as f64;
    let mut rows: Vec<Vec<f64>> = (0..c.c_img)
        .map(|ch| (0..b).map(|i| if i % c.c_img == ch { 1.0 / n.sqrt() } else { 0.0 }).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    while rows.len() < c.c_z {
        let mut v = Tensor::randn(&[b], 1.0, &mut rng).into_data();
        // two passes of classical Gram-Schmidt keep the rows orthonormal to ~1e-16
        for _ in 0..2 {
            for r in &rows {
                let d: f64 = r.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(r).for_each(|(x, a)| *x -= d * a);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        rows.push(v);
    }
    Tensor::new(vec![c.c_z, b], rows.concat())
}

#[cfg(test)]
mod tests;
