use std::sync::Arc;

use super::{Graph, Var};
use crate::error::{Error, Result};

/// Kernel and stride extents over (time, height, width), "valid" padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv3dSpec {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
}

impl Conv3dSpec {
    pub fn new(kernel: [usize; 3], stride: [usize; 3]) -> Self {
        Conv3dSpec { kernel, stride }
    }

    /// `floor((in - k) / stride) + 1` per axis.
    pub fn output_dims(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            if self.stride[a] == 0 {
                return Err(Error::invalid("conv3d stride must be at least 1"));
            }
            if self.kernel[a] == 0 || self.kernel[a] > input[a] {
                return Err(Error::shape("conv3d kernel larger than input", &self.kernel, &input));
            }
            out[a] = (input[a] - self.kernel[a]) / self.stride[a] + 1;
        }
        Ok(out)
    }

    pub fn taps(&self) -> usize {
        self.kernel.iter().product()
    }
}

/// im2col gather index for `[c_in, d, h, w]` input; rows are output positions.
pub(crate) fn im2col_index(c_in: usize, input: [usize; 3], spec: &Conv3dSpec) -> Result<(Arc<[usize]>, [usize; 3])> {
    let out = spec.output_dims(input)?;
    let [d, h, w] = input;
    let [kd, kh, kw] = spec.kernel;
    let [sd, sh, sw] = spec.stride;
    let mut idx = Vec::with_capacity(out.iter().product::<usize>() * c_in * spec.taps());
    for od in 0..out[0] {
        for oh in 0..out[1] {
            for ow in 0..out[2] {
                for ci in 0..c_in {
                    for a in 0..kd {
                        for b in 0..kh {
                            for c in 0..kw {
                                let (z, y, x) = (od * sd + a, oh * sh + b, ow * sw + c);
                                idx.push(((ci * d + z) * h + y) * w + x);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((idx.into(), out))
}

/// Strided 3-D convolution of `x: [c_in, d, h, w]` with `weight: [c_out, c_in, kd, kh, kw]`.
///
/// Returns `[c_out, d', h', w']`. Lowered onto the tape as an im2col gather
/// followed by a matrix product, so the gradient comes from those two ops.
pub fn conv3d_down(g: &mut Graph, x: Var, weight: Var, bias: Option<Var>, spec: &Conv3dSpec) -> Result<Var> {
    let xs = g.shape(x).to_vec();
    let ws = g.shape(weight).to_vec();
    if xs.len() != 4 || ws.len() != 5 {
        return Err(Error::shape("conv3d_down", &xs, &ws));
    }
    let (c_in, c_out) = (xs[0], ws[0]);
    if ws[1] != c_in || ws[2..] != spec.kernel {
        return Err(Error::shape("conv3d_down", &xs, &ws));
    }
    let (index, out) = im2col_index(c_in, [xs[1], xs[2], xs[3]], spec)?;
    let positions: usize = out.iter().product();
    let k = c_in * spec.taps();
    let cols = g.gather(x, index, &[positions, k])?;
    let w2 = g.reshape(weight, &[c_out, k])?;
    let wt = g.transpose(w2)?;
    let y = g.matmul(cols, wt)?;
    let mut y = g.transpose(y)?;
    if let Some(b) = bias {
        y = g.add_col(y, b)?;
    }
    g.reshape(y, &[c_out, out[0], out[1], out[2]])
}
