use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::PixelBox;
use crate::codec::{patchify, Codec, LatentClip, PatchGeometry, Role, TokenSeq, VideoClip};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Latent of the reference frame, replicated over one temporal codec block.
pub fn appearance_latent(reference: &VideoClip, codec: &Codec) -> Result<LatentClip> {
    if reference.frames() != 1 {
        return Err(Error::invalid(format!(
            "reference must be a single frame, got {}",
            reference.frames()
        )));
    }
    codec.encode(&reference.repeat_frame(0, codec.config().r_t)?)
}

/// Appearance tokens `R`: codec plus patch embedding of the reference frame.
pub fn extract_appearance_tokens(
    reference: &VideoClip,
    codec: &Codec,
    geom: &PatchGeometry,
    w_embed: &Tensor,
) -> Result<TokenSeq> {
    let z = appearance_latent(reference, codec)?;
    let mut t = patchify(&z, geom, w_embed)?;
    t.roles.fill(Role::Appearance);
    Ok(t)
}

pub const ID_CROP: usize = 10;
pub const ID_CHANNELS: usize = 8;
/// Row width of the identity tokens: a 2x2 patch of the 8-channel map.
pub const ID_DIM: usize = 4 * ID_CHANNELS;

/// Frozen face embedder: crop, resample, seeded 3x3 conv with tanh, 2x2 patches, unit rows.
#[derive(Clone, Debug)]
pub struct IdentityEmbedder {
    weight: Tensor,
    bias: Tensor,
}

impl IdentityEmbedder {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        IdentityEmbedder {
            weight: Tensor::randn(&[ID_CHANNELS, 3, 3, 3], (2.0f64 / 27.0).sqrt() * 2.0, &mut rng),
            bias: Tensor::randn(&[ID_CHANNELS], 0.3, &mut rng),
        }
    }

    /// Bilinear resample of the box onto an `ID_CROP x ID_CROP` grid, centred on 0.
    fn crop(frame: &VideoClip, head: &PixelBox) -> Result<Vec<f64>> {
        if head.is_empty() {
            return Err(Error::invalid("identity embedding needs a nonempty head box"));
        }
        head.check_bounds(frame.height(), frame.width())?;
        let mut out = vec![0.0; ID_CROP * ID_CROP * 3];
        let sample = |y: f64, x: f64, c: usize| -> f64 {
            let yf = y.clamp(0.0, (frame.height() - 1) as f64);
            let xf = x.clamp(0.0, (frame.width() - 1) as f64);
            let (y0, x0) = (yf.floor() as usize, xf.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(frame.height() - 1), (x0 + 1).min(frame.width() - 1));
            let (wy, wx) = (yf - y0 as f64, xf - x0 as f64);
            let top = frame.get(0, y0, x0, c) * (1.0 - wx) + frame.get(0, y0, x1, c) * wx;
            let bot = frame.get(0, y1, x0, c) * (1.0 - wx) + frame.get(0, y1, x1, c) * wx;
            top * (1.0 - wy) + bot * wy
        };
        for i in 0..ID_CROP {
            for j in 0..ID_CROP {
                let y = head.y0 as f64 + (i as f64 + 0.5) * head.height() as f64 / ID_CROP as f64 - 0.5;
                let x = head.x0 as f64 + (j as f64 + 0.5) * head.width() as f64 / ID_CROP as f64 - 0.5;
                for c in 0..3 {
                    out[(i * ID_CROP + j) * 3 + c] = sample(y, x, c) - 0.5;
                }
            }
        }
        Ok(out)
    }

    /// Identity tokens `F`, `[16, ID_DIM]` with unit-norm rows.
    pub fn embed(&self, frame: &VideoClip, head: &PixelBox) -> Result<TokenSeq> {
        if frame.frames() != 1 {
            return Err(Error::invalid("identity embedding takes a single frame"));
        }
        let crop = Self::crop(frame, head)?;
        let m = ID_CROP - 2;
        let mut fmap = vec![0.0; m * m * ID_CHANNELS];
        for y in 0..m {
            for x in 0..m {
                for o in 0..ID_CHANNELS {
                    let mut s = self.bias.data()[o];
                    for c in 0..3 {
                        for a in 0..3 {
                            for b in 0..3 {
                                s += self.weight.data()[((o * 3 + c) * 3 + a) * 3 + b] * crop[((y + a) * ID_CROP + x + b) * 3 + c];
                            }
                        }
                    }
                    fmap[(y * m + x) * ID_CHANNELS + o] = s.tanh();
                }
            }
        }
        let side = m / 2;
        let mut rows = Vec::with_capacity(side * side * ID_DIM);
        for py in 0..side {
            for px in 0..side {
                let start = rows.len();
                for dy in 0..2 {
                    for dx in 0..2 {
                        let base = ((2 * py + dy) * m + 2 * px + dx) * ID_CHANNELS;
                        rows.extend_from_slice(&fmap[base..base + ID_CHANNELS]);
                    }
                }
                let row = &mut rows[start..];
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 {
                    return Err(Error::NonFinite("identity token with zero norm".into()));
                }
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
        TokenSeq::new(Tensor::new(vec![side * side, ID_DIM], rows)?, Role::Identity)
    }

    /// Mean of the identity tokens; the per-frame feature used by CosSim and feature-Fréchet.
    pub fn pooled(&self, frame: &VideoClip, head: &PixelBox) -> Result<Vec<f64>> {
        let t = self.embed(frame, head)?;
        let (n, d) = (t.len(), t.dim());
        let mut out = vec![0.0; d];
        for i in 0..n {
            for (o, v) in out.iter_mut().zip(t.tokens.row(i)) {
                *o += v / n as f64;
            }
        }
        Ok(out)
    }
}
