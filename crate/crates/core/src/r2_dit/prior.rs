use super::RegionBoxes;
use crate::codec::VideoClip;
use crate::error::{Error, Result};

/// Rendered face/hand structure proxies plus the boxes they live in.
#[derive(Clone, Debug, PartialEq)]
pub struct StructuralPrior {
    pub clip: VideoClip,
    pub boxes: Vec<RegionBoxes>,
}

impl StructuralPrior {
    /// Checks one box set per frame, bounds, and zero pixels outside every box.
    pub fn new(clip: VideoClip, boxes: Vec<RegionBoxes>) -> Result<Self> {
        let [f, h, w, c] = clip.dims();
        if boxes.len() != f {
            return Err(Error::shape("prior boxes", &[f], &[boxes.len()]));
        }
        for (t, frame) in boxes.iter().enumerate() {
            for b in frame.iter() {
                b.check_bounds(h, w)?;
            }
            for y in 0..h {
                for x in 0..w {
                    if frame.contains(x, y) {
                        continue;
                    }
                    if (0..c).any(|k| clip.get(t, y, x, k) != 0.0) {
                        return Err(Error::invalid(format!("prior pixel ({t},{y},{x}) is outside every region box")));
                    }
                }
            }
        }
        Ok(StructuralPrior { clip, boxes })
    }

    pub fn empty(dims: [usize; 4]) -> Result<Self> {
        Self::new(VideoClip::filled(dims, 0.0)?, vec![RegionBoxes::default(); dims[0]])
    }

    pub fn frames(&self) -> usize {
        self.clip.frames()
    }

    pub fn slice_frames(&self, start: usize, len: usize) -> Result<Self> {
        Ok(StructuralPrior {
            clip: self.clip.slice_frames(start, len)?,
            boxes: self.boxes[start..start + len].to_vec(),
        })
    }
}
