use crate::codec::VideoClip;
use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - r).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.iter().map(|v| v / s).collect()
}

/// Mean local SSIM of two `h x w` planes (valid windows only).
pub fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize) -> Result<f64> {
    if a.len() != h * w || b.len() != h * w {
        return Err(Error::shape("ssim", &[h, w], &[a.len(), b.len()]));
    }
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid(format!("ssim needs planes of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}")));
    }
    let g = gaussian_window();
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for y in 0..oh {
        for x in 0..ow {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..SSIM_WINDOW {
                for j in 0..SSIM_WINDOW {
                    let k = g[i] * g[j];
                    let (va, vb) = (a[(y + i) * w + x + j], b[(y + i) * w + x + j]);
                    ma += k * va;
                    mb += k * vb;
                    saa += k * va * va;
                    sbb += k * vb * vb;
                    sab += k * va * vb;
                }
            }
            let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            total += ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
        }
    }
    Ok(total / (oh * ow) as f64)
}

/// SSIM averaged over every frame and channel.
pub fn ssim(a: &VideoClip, b: &VideoClip) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::shape("ssim", &a.dims(), &b.dims()));
    }
    let [f, h, w, c] = a.dims();
    let mut total = 0.0;
    for t in 0..f {
        for k in 0..c {
            let plane = |v: &VideoClip| -> Vec<f64> { v.frame_data(t).iter().skip(k).step_by(c).copied().collect() };
            total += ssim_plane(&plane(a), &plane(b), h, w)?;
        }
    }
    Ok(total / (f * c) as f64)
}
