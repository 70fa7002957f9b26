//! Fixed sinusoidal encodings for tokens and diffusion timesteps.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Frequency base for token coordinates; coordinates span tens of units, not thousands.
pub const POS_BASE: f64 = 100.0;
pub const TIME_BASE: f64 = 10_000.0;

/// `[sin(c w_0), ..., sin(c w_{d/2-1}), cos(c w_0), ...]` with `w_k = base^(-2k/d)`.
pub fn sincos(coord: f64, dim: usize, base: f64) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for k in 0..half {
        let w = base.powf(-(2.0 * k as f64) / dim as f64);
        out[k] = (coord * w).sin();
        out[half + k] = (coord * w).cos();
    }
    out
}

/// Factorised encoding: time takes the first half of the width, rows and columns a quarter each.
///
/// `None` for `y`/`x` leaves those quarters at zero (audio tokens).
pub fn factorised(time: f64, y: Option<f64>, x: Option<f64>, dim: usize) -> Vec<f64> {
    let (dt, ds) = (dim / 2, dim / 4);
    let mut out = sincos(time, dt, POS_BASE);
    out.extend(y.map_or(vec![0.0; ds], |y| sincos(y, ds, POS_BASE)));
    out.extend(x.map_or(vec![0.0; ds], |x| sincos(x, ds, POS_BASE)));
    out
}

/// Positions of patch tokens on a `(g_t, g_h, g_w)` grid, time measured in pixel frames.
///
/// `frames_per_token` is `p_t * r_t`; `offset` shifts time (negative for motion tokens).
pub fn grid_positions(grid: [usize; 3], frames_per_token: usize, offset: f64, dim: usize) -> Tensor {
    let [gt, gh, gw] = grid;
    let mut data = Vec::with_capacity(gt * gh * gw * dim);
    let centre = (frames_per_token as f64 - 1.0) / 2.0;
    for t in 0..gt {
        for y in 0..gh {
            for x in 0..gw {
                let time = offset + (t * frames_per_token) as f64 + centre;
                data.extend(factorised(time, Some(y as f64), Some(x as f64), dim));
            }
        }
    }
    Tensor::new(vec![gt * gh * gw, dim], data).expect("grid dims")
}

/// Spatial-only positions for a single-frame token grid (appearance tokens).
pub fn spatial_positions(gh: usize, gw: usize, dim: usize) -> Tensor {
    let mut data = Vec::with_capacity(gh * gw * dim);
    for y in 0..gh {
        for x in 0..gw {
            let mut v = vec![0.0; dim / 2];
            v.extend(sincos(y as f64, dim / 4, POS_BASE));
            v.extend(sincos(x as f64, dim / 4, POS_BASE));
            data.extend(v);
        }
    }
    Tensor::new(vec![gh * gw, dim], data).expect("grid dims")
}

/// Audio step `l` sits at pixel frame `l`.
pub fn audio_positions(steps: usize, dim: usize) -> Tensor {
    let data = (0..steps).flat_map(|l| factorised(l as f64, None, None, dim)).collect();
    Tensor::new(vec![steps, dim], data).expect("audio dims")
}

/// Sinusoidal table row for diffusion step `t`, `0 <= t < t_train`.
pub fn timestep_sinusoid(t: usize, dim: usize, t_train: usize) -> Result<Tensor> {
    if t >= t_train {
        return Err(Error::invalid(format!("timestep {t} outside [0, {t_train})")));
    }
    Tensor::new(vec![1, dim], sincos(t as f64, dim, TIME_BASE))
}
