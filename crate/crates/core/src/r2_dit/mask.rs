use crate::codec::{CodecConfig, PatchGeometry};
use crate::conditioning::PixelBox;
use crate::error::{Error, Result};

/// Face and hand boxes of one frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RegionBoxes {
    pub face: Option<PixelBox>,
    pub left_hand: Option<PixelBox>,
    pub right_hand: Option<PixelBox>,
}

impl RegionBoxes {
    pub fn iter(&self) -> impl Iterator<Item = &PixelBox> {
        [&self.face, &self.left_hand, &self.right_hand]
            .into_iter()
            .flatten()
            .filter(|b| !b.is_empty())
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.iter().any(|b| b.contains(x, y))
    }
}

/// Patch-level inpainting mask; `true` marks tokens to re-synthesise.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InpaintMask {
    pub grid: [usize; 3],
    pub patch: PatchGeometry,
    pub latent: [usize; 4],
    tokens: Vec<bool>,
}

impl InpaintMask {
    pub fn from_tokens(latent: [usize; 4], patch: PatchGeometry, tokens: Vec<bool>) -> Result<Self> {
        let grid = patch.grid(latent)?;
        if tokens.len() != grid.iter().product::<usize>() {
            return Err(Error::shape("inpaint mask", &grid, &[tokens.len()]));
        }
        Ok(InpaintMask {
            grid,
            patch,
            latent,
            tokens,
        })
    }

    pub fn empty(latent: [usize; 4], patch: PatchGeometry) -> Result<Self> {
        let n = patch.token_count(latent)?;
        Self::from_tokens(latent, patch, vec![false; n])
    }

    pub fn tokens(&self) -> &[bool] {
        &self.tokens
    }

    pub fn count(&self) -> usize {
        self.tokens.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Expands to one flag per latent element `[f_z, h, w, c_z]`.
    pub fn latent_mask(&self) -> Vec<bool> {
        let [f, h, w, c] = self.latent;
        let g = &self.patch;
        let [_, gh, gw] = self.grid;
        let mut out = Vec::with_capacity(f * h * w * c);
        for t in 0..f {
            for y in 0..h {
                for x in 0..w {
                    let s = ((t / g.p_t) * gh + y / g.p_h) * gw + x / g.p_w;
                    out.extend(std::iter::repeat(self.tokens[s]).take(c));
                }
            }
        }
        out
    }
}

/// Marks every patch any box touches, then grows the marked set by one patch in-plane.
pub fn build_inpaint_mask(
    boxes: &[RegionBoxes],
    height: usize,
    width: usize,
    codec: &CodecConfig,
    patch: &PatchGeometry,
) -> Result<InpaintMask> {
    if boxes.len() % codec.r_t != 0 || height % codec.r_s != 0 || width % codec.r_s != 0 {
        return Err(Error::shape("inpaint mask source", &[boxes.len(), height, width], &[codec.r_t, codec.r_s]));
    }
    let latent = [boxes.len() / codec.r_t, height / codec.r_s, width / codec.r_s, codec.c_z];
    let [gt, gh, gw] = patch.grid(latent)?;
    let (ft, ph, pw) = (patch.p_t * codec.r_t, patch.p_h * codec.r_s, patch.p_w * codec.r_s);
    let mut hit = vec![false; gt * gh * gw];
    for (f, frame) in boxes.iter().enumerate() {
        for b in frame.iter() {
            b.check_bounds(height, width)?;
            let t = f / ft;
            for y in b.y0 / ph..=(b.y1 - 1) / ph {
                for x in b.x0 / pw..=(b.x1 - 1) / pw {
                    hit[(t * gh + y) * gw + x] = true;
                }
            }
        }
    }
    let mut tokens = vec![false; hit.len()];
    for t in 0..gt {
        for y in 0..gh {
            for x in 0..gw {
                if !hit[(t * gh + y) * gw + x] {
                    continue;
                }
                for ny in y.saturating_sub(1)..(y + 2).min(gh) {
                    for nx in x.saturating_sub(1)..(x + 2).min(gw) {
                        tokens[(t * gh + ny) * gw + nx] = true;
                    }
                }
            }
        }
    }
    InpaintMask::from_tokens(latent, *patch, tokens)
}
