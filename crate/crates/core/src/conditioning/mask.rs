use std::fs;
use std::path::Path;

use crate::codec::{ByteReader, PatchGeometry};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

const MASK_MAGIC: &[u8; 4] = b"AMSK";
const MASK_VERSION: u16 = 1;

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PixelBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelBox {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        PixelBox { x0, y0, x1, y1 }
    }

    pub fn is_empty(&self) -> bool {
        self.x1 <= self.x0 || self.y1 <= self.y0
    }

    pub fn width(&self) -> usize {
        self.x1.saturating_sub(self.x0)
    }

    pub fn height(&self) -> usize {
        self.y1.saturating_sub(self.y0)
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn check_bounds(&self, height: usize, width: usize) -> Result<()> {
        if self.x1 > width || self.y1 > height || self.x0 > self.x1 || self.y0 > self.y1 {
            return Err(Error::invalid(format!("box {self:?} outside {width}x{height} frame")));
        }
        Ok(())
    }

    /// Grows each side by `ceil(margin * extent)`, clipped to the frame.
    pub fn dilate(&self, margin: f64, height: usize, width: usize) -> PixelBox {
        let mx = (margin * self.width() as f64).ceil() as usize;
        let my = (margin * self.height() as f64).ceil() as usize;
        PixelBox {
            x0: self.x0.saturating_sub(mx),
            y0: self.y0.saturating_sub(my),
            x1: (self.x1 + mx).min(width),
            y1: (self.y1 + my).min(height),
        }
    }

    /// Smallest box covering both.
    pub fn union(&self, other: &PixelBox) -> PixelBox {
        PixelBox {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }
}

/// Binary volume `[frames, height, width]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeadMask {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    cells: Vec<bool>,
}

pub const HEAD_MARGIN: f64 = 0.1;

impl HeadMask {
    pub fn empty(frames: usize, height: usize, width: usize) -> Self {
        HeadMask {
            frames,
            height,
            width,
            cells: vec![false; frames * height * width],
        }
    }

    pub fn from_cells(frames: usize, height: usize, width: usize, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != frames * height * width {
            return Err(Error::shape("head mask", &[frames, height, width], &[cells.len()]));
        }
        Ok(HeadMask {
            frames,
            height,
            width,
            cells,
        })
    }

    pub fn get(&self, t: usize, y: usize, x: usize) -> bool {
        self.cells[(t * self.height + y) * self.width + x]
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn is_headless(&self) -> bool {
        !self.cells.iter().any(|&c| c)
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// `[1, frames, height, width]` with ones inside the mask.
    pub fn to_tensor(&self) -> Tensor {
        let data = self.cells.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect();
        Tensor::new(vec![1, self.frames, self.height, self.width], data).expect("mask dims")
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MASK_MAGIC);
        buf.extend_from_slice(&MASK_VERSION.to_le_bytes());
        for d in [self.frames, self.height, self.width] {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        let mut bytes = vec![0u8; self.cells.len().div_ceil(8)];
        for (i, &c) in self.cells.iter().enumerate() {
            if c {
                bytes[i / 8] |= 1 << (i % 8);
            }
        }
        buf.extend_from_slice(&bytes);
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<HeadMask> {
        let path = path.as_ref();
        let buf = fs::read(path)?;
        let mut r = ByteReader::new(&buf, path);
        r.magic(MASK_MAGIC)?;
        let version = r.u16()?;
        if version != MASK_VERSION {
            return Err(Error::format(format!("unsupported mask version {version}")));
        }
        let (f, h, w) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        let n = f * h * w;
        let bytes = r.take(n.div_ceil(8))?;
        r.finish()?;
        let cells = (0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect();
        HeadMask::from_cells(f, h, w, cells)
    }
}

/// Union of every per-frame face box, each dilated by `margin`, replicated on all frames.
///
/// Frames without a box contribute nothing; if no frame has one the mask is
/// all zero and the sample counts as headless.
pub fn build_head_mask(boxes: &[Option<PixelBox>], height: usize, width: usize, margin: f64) -> Result<HeadMask> {
    let mut plane = vec![false; height * width];
    for b in boxes.iter().flatten() {
        b.check_bounds(height, width)?;
        let d = b.dilate(margin, height, width);
        for y in d.y0..d.y1 {
            for x in d.x0..d.x1 {
                plane[y * width + x] = true;
            }
        }
    }
    let cells = plane.repeat(boxes.len());
    HeadMask::from_cells(boxes.len(), height, width, cells)
}

/// Per-video-token 0/1 gate aligned with patch order.
#[derive(Clone, Debug, PartialEq)]
pub struct SequentialGate(pub Vec<f64>);

pub const GATE_THRESHOLD: f64 = 0.25;

impl SequentialGate {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn active(&self) -> usize {
        self.0.iter().filter(|&&v| v > 0.0).count()
    }
}

/// Any-pools a pixel mask onto the latent grid `[f/r_t, h/r_s, w/r_s]`.
pub fn pool_any(mask: &HeadMask, r_t: usize, r_s: usize) -> Result<Vec<bool>> {
    if mask.frames % r_t != 0 || mask.height % r_s != 0 || mask.width % r_s != 0 {
        return Err(Error::shape(
            "mask pooling",
            &[mask.frames, mask.height, mask.width],
            &[r_t, r_s, r_s],
        ));
    }
    let (f, h, w) = (mask.frames / r_t, mask.height / r_s, mask.width / r_s);
    let mut out = vec![false; f * h * w];
    for t in 0..mask.frames {
        for y in 0..mask.height {
            for x in 0..mask.width {
                if mask.get(t, y, x) {
                    out[((t / r_t) * h + y / r_s) * w + x / r_s] = true;
                }
            }
        }
    }
    Ok(out)
}

/// Gate is 1 where the fraction of pooled latent cells inside a patch reaches [`GATE_THRESHOLD`].
pub fn derive_sequential_gate(mask: &HeadMask, g: &PatchGeometry, r_t: usize, r_s: usize) -> Result<SequentialGate> {
    let pooled = pool_any(mask, r_t, r_s)?;
    let latent = [mask.frames / r_t, mask.height / r_s, mask.width / r_s, 1];
    let grid = g.grid(latent)?;
    let [_, h, w, _] = latent;
    let per_patch = (g.p_t * g.p_h * g.p_w) as f64;
    let mut gate = Vec::with_capacity(grid.iter().product());
    for s in 0..grid.iter().product() {
        let [t, y, x] = g.position(s, grid);
        let mut hits = 0usize;
        for dt in 0..g.p_t {
            for dy in 0..g.p_h {
                for dx in 0..g.p_w {
                    let (lt, ly, lx) = (t * g.p_t + dt, y * g.p_h + dy, x * g.p_w + dx);
                    hits += pooled[(lt * h + ly) * w + lx] as usize;
                }
            }
        }
        gate.push(if hits as f64 / per_patch >= GATE_THRESHOLD { 1.0 } else { 0.0 });
    }
    Ok(SequentialGate(gate))
}
