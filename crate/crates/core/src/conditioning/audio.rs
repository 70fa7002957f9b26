use std::fs;
use std::path::Path;

use rand::Rng;

use crate::codec::ByteReader;
use crate::error::{Error, Result};
use crate::nn::{Linear, WeightInit};
use crate::numerics::{Graph, ParamId, ParamStore, Tensor, Var};

pub const AUDIO_LAYERS: usize = 12;
pub const AUDIO_DIM: usize = 32;

const AUDIO_MAGIC: &[u8; 4] = b"AFEA";
const AUDIO_VERSION: u16 = 1;

/// Stacked encoder-layer features `[12, L, D_a]`, one step per video frame.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioFeatures {
    tensor: Tensor,
}

impl AudioFeatures {
    pub fn new(tensor: Tensor) -> Result<Self> {
        if tensor.rank() != 3 || tensor.shape()[1] == 0 || tensor.shape()[2] == 0 {
            return Err(Error::shape("audio features", tensor.shape(), &[AUDIO_LAYERS, 0, 0]));
        }
        if tensor.shape()[0] != AUDIO_LAYERS {
            return Err(Error::invalid(format!(
                "audio features need {AUDIO_LAYERS} layer planes, got {}",
                tensor.shape()[0]
            )));
        }
        if !tensor.all_finite() {
            return Err(Error::NonFinite("audio features".into()));
        }
        Ok(AudioFeatures { tensor })
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn steps(&self) -> usize {
        self.tensor.shape()[1]
    }

    pub fn dim(&self) -> usize {
        self.tensor.shape()[2]
    }

    /// Steps `[start, start + len)` on every layer.
    pub fn slice_steps(&self, start: usize, len: usize) -> Result<AudioFeatures> {
        let (l, d) = (self.steps(), self.dim());
        if len == 0 || start + len > l {
            return Err(Error::invalid(format!("audio range {start}+{len} outside {l} steps")));
        }
        let mut data = Vec::with_capacity(AUDIO_LAYERS * len * d);
        for layer in 0..AUDIO_LAYERS {
            let base = layer * l * d;
            data.extend_from_slice(&self.tensor.data()[base + start * d..base + (start + len) * d]);
        }
        AudioFeatures::new(Tensor::new(vec![AUDIO_LAYERS, len, d], data)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(AUDIO_MAGIC);
        buf.extend_from_slice(&AUDIO_VERSION.to_le_bytes());
        for &d in self.tensor.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in self.tensor.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<AudioFeatures> {
        let path = path.as_ref();
        let buf = fs::read(path)?;
        let mut r = ByteReader::new(&buf, path);
        r.magic(AUDIO_MAGIC)?;
        let version = r.u16()?;
        if version != AUDIO_VERSION {
            return Err(Error::format(format!("unsupported audio feature version {version}")));
        }
        let dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
        let data = r.f32s(dims.iter().product())?;
        r.finish()?;
        AudioFeatures::new(Tensor::new(dims.to_vec(), data)?)
    }
}

/// Softmax-weighted layer mix followed by a linear map `D_a -> E`.
#[derive(Clone, Copy, Debug)]
pub struct AudioProjection {
    pub layer_logits: ParamId,
    pub proj: Linear,
}

impl AudioProjection {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, d_a: usize, dim: usize, rng: &mut R) -> Result<Self> {
        let layer_logits = store.add(format!("{name}.layer_logits"), Tensor::zeros(&[1, AUDIO_LAYERS]), true)?;
        let proj = Linear::new(store, &format!("{name}.proj"), (d_a, dim), true, WeightInit::Xavier, rng)?;
        Ok(AudioProjection { layer_logits, proj })
    }

    /// `[S^a, E]` audio tokens with `S^a = L`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, features: &AudioFeatures) -> Result<Var> {
        let (l, d) = (features.steps(), features.dim());
        let logits = g.param(store, self.layer_logits);
        let weights = g.softmax(logits)?;
        let planes = g.constant(features.tensor().clone().reshape(&[AUDIO_LAYERS, l * d])?);
        let mixed = g.matmul(weights, planes)?;
        let mixed = g.reshape(mixed, &[l, d])?;
        self.proj.forward(g, store, mixed)
    }
}
