use std::path::Path;

use crate::codec::VideoClip;
use crate::error::{Error, Result};

/// Accumulated per-pixel motion scaled to `[0, 255]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionHeatmap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// Sums `|frame deltas|` over all videos, frames and channels, then scales by the maximum.
///
/// The lower end of the scale is pinned at zero so static pixels always map to 0.
pub fn motion_heatmap(videos: &[VideoClip]) -> Result<MotionHeatmap> {
    let first = videos.first().ok_or_else(|| Error::invalid("heatmap needs at least one video"))?;
    let [_, h, w, c] = first.dims();
    let mut acc = vec![0.0; h * w];
    for v in videos {
        let [f, vh, vw, vc] = v.dims();
        if [vh, vw, vc] != [h, w, c] {
            return Err(Error::shape("heatmap", &first.dims(), &v.dims()));
        }
        if f < 2 {
            return Err(Error::invalid("heatmap needs videos of at least 2 frames"));
        }
        for t in 1..f {
            let (a, b) = (v.frame_data(t - 1), v.frame_data(t));
            for p in 0..h * w {
                acc[p] += (0..c).map(|k| (b[p * c + k] - a[p * c + k]).abs()).sum::<f64>();
            }
        }
    }
    let max = acc.iter().cloned().fold(0.0, f64::max);
    let values: Vec<f64> = if max > 0.0 {
        acc.iter().map(|v| v / max * 255.0).collect()
    } else {
        acc
    };
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(MotionHeatmap {
        height: h,
        width: w,
        values,
        mean,
        std,
    })
}

impl MotionHeatmap {
    /// Single-frame grayscale clip with values in `[0, 1]`.
    pub fn to_clip(&self) -> Result<VideoClip> {
        VideoClip::new([1, self.height, self.width, 1], self.values.iter().map(|v| v / 255.0).collect())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_clip()?.write(path)
    }
}
