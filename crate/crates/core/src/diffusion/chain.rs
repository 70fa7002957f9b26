use crate::error::{Error, Result};

/// Tiling of a long audio stream into contiguous generation chunks.
///
/// Chunk `k > 0` is conditioned on the last `overlap_m` frames of chunk `k-1`;
/// those frames are context only and never emitted twice.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainPlan {
    pub total_frames: usize,
    pub chunk_frames: usize,
    pub overlap_m: usize,
    pub seeds: Vec<u64>,
}

impl ChainPlan {
    pub fn new(total_frames: usize, chunk_frames: usize, overlap_m: usize, seed: u64) -> Result<Self> {
        if chunk_frames == 0 || total_frames == 0 || total_frames % chunk_frames != 0 {
            return Err(Error::invalid(format!(
                "{total_frames} audio frames do not tile into chunks of {chunk_frames}"
            )));
        }
        if overlap_m > chunk_frames {
            return Err(Error::invalid("overlap longer than a chunk"));
        }
        let n = total_frames / chunk_frames;
        let seeds = (0..n as u64)
            .map(|k| seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k.wrapping_mul(0xBF58_476D_1CE4_E5B9)) ^ k)
            .collect();
        Ok(ChainPlan {
            total_frames,
            chunk_frames,
            overlap_m,
            seeds,
        })
    }

    pub fn chunks(&self) -> usize {
        self.seeds.len()
    }

    /// First frame of chunk `k`.
    pub fn start(&self, k: usize) -> usize {
        k * self.chunk_frames
    }

    /// Frame indices where a new chunk begins (the seams), excluding 0.
    pub fn seams(&self) -> Vec<usize> {
        (1..self.chunks()).map(|k| self.start(k)).collect()
    }
}
