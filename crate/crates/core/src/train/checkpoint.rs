use std::fs;
use std::path::Path;

use super::adam::{Adam, AdamConfig};
use super::prepare::Frozen;
use super::trainer::{Denoiser, Stage, Trainer};
use super::RunConfig;
use crate::codec::{ByteReader, Codec};
use crate::diffusion::{Denoising, LatentNorm};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

const CKPT_MAGIC: &[u8; 4] = b"ACKP";
const CKPT_VERSION: u16 = 1;

/// Named parameter with its Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamRecord {
    pub name: String,
    pub value: Tensor,
    pub m: Tensor,
    pub v: Tensor,
}

/// Full training state of one stage: config, normalisation, codec, weights and optimiser.
///
/// Weights and moments are stored as `f32`, which is lossless because the
/// optimiser keeps them on the `f32` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub stage: Stage,
    pub config: RunConfig,
    pub step: u64,
    pub adam_t: u64,
    pub norm: LatentNorm,
    pub projection: Tensor,
    pub params: Vec<ParamRecord>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn string(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        v.iter().for_each(|x| self.0.extend_from_slice(&x.to_le_bytes()));
    }
    fn f32s(&mut self, v: &[f64]) {
        v.iter().for_each(|x| self.0.extend_from_slice(&(*x as f32).to_le_bytes()));
    }
}

fn on_f32_grid(t: &Tensor) -> bool {
    t.data().iter().all(|&x| x == x as f32 as f64)
}

impl Checkpoint {
    pub fn from_trainer<M: Denoiser>(tr: &Trainer<M>, codec: &Codec) -> Result<Self> {
        let params = tr
            .model
            .store()
            .iter()
            .zip(tr.adam.m.iter().zip(&tr.adam.v))
            .map(|((_, p), (m, v))| ParamRecord {
                name: p.name.clone(),
                value: p.tensor.clone(),
                m: m.clone(),
                v: v.clone(),
            })
            .collect::<Vec<_>>();
        if !params.iter().all(|p| on_f32_grid(&p.value) && on_f32_grid(&p.m) && on_f32_grid(&p.v)) {
            return Err(Error::invalid("training state is not on the f32 grid"));
        }
        if codec.config() != &tr.run.model.codec {
            return Err(Error::config("codec does not match the run config"));
        }
        Ok(Checkpoint {
            stage: M::STAGE,
            config: tr.run.clone(),
            step: tr.step,
            adam_t: tr.adam.t,
            norm: tr.den.norm.clone(),
            projection: codec.projection().clone(),
            params,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(CKPT_MAGIC);
        w.0.extend_from_slice(&CKPT_VERSION.to_le_bytes());
        w.string(self.stage.name());
        w.string(&self.config.to_text());
        w.string(&self.config.model_hash());
        w.u64(self.step);
        w.u64(self.adam_t);
        w.u32(self.norm.mean.len());
        w.f64s(&self.norm.mean);
        w.f64s(&self.norm.std);
        let ps = self.projection.shape();
        w.u32(ps[0]);
        w.u32(ps[1]);
        w.f64s(self.projection.data());
        w.u32(self.params.len());
        for p in &self.params {
            w.string(&p.name);
            w.u32(p.value.rank());
            p.value.shape().iter().for_each(|&d| w.u32(d));
            w.f32s(p.value.data());
            w.f32s(p.m.data());
            w.f32s(p.v.data());
        }
        w.0
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let buf = fs::read(path)?;
        let mut r = ByteReader::new(&buf, path);
        r.magic(CKPT_MAGIC)?;
        let version = r.u16()?;
        if version != CKPT_VERSION {
            return Err(Error::format(format!("{}: unsupported checkpoint version {version}", path.display())));
        }
        let stage = Stage::parse(&r.string()?)?;
        let config = RunConfig::parse(&r.string()?)?;
        let hash = r.string()?;
        if hash != config.model_hash() {
            return Err(Error::format(format!("{}: config hash mismatch", path.display())));
        }
        let step = r.u64()?;
        let adam_t = r.u64()?;
        let c = r.u32()? as usize;
        let norm = LatentNorm {
            mean: r.f64s(c)?,
            std: r.f64s(c)?,
        };
        let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
        let projection = Tensor::new(vec![rows, cols], r.f64s(rows * cols)?)?;
        let n = r.u32()? as usize;
        let mut params = Vec::with_capacity(n);
        for _ in 0..n {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len = shape.iter().product();
            let mut t = || -> Result<Tensor> { Tensor::new(shape.clone(), r.f32s(len)?) };
            let (value, m, v) = (t()?, t()?, t()?);
            params.push(ParamRecord { name, value, m, v });
        }
        r.finish()?;
        Ok(Checkpoint {
            stage,
            config,
            step,
            adam_t,
            norm,
            projection,
            params,
        })
    }

    pub fn codec(&self) -> Result<Codec> {
        let codec = Codec::with_projection(self.config.model.codec, self.projection.clone())?;
        if Codec::new(self.config.model.codec)?.projection() != codec.projection() {
            return Err(Error::format("stored codec projection differs from its seed"));
        }
        Ok(codec)
    }

    pub fn frozen(&self) -> Result<Frozen> {
        Ok(Frozen::new(self.codec()?, self.norm.clone()))
    }

    pub fn denoising(&self) -> Result<Denoising> {
        let c = &self.config;
        Denoising::new(c.model.t_train, c.sampler_config(), c.parameterization, self.norm.clone())
    }

    fn check_stage<M: Denoiser>(&self) -> Result<()> {
        if self.stage != M::STAGE {
            return Err(Error::config(format!(
                "checkpoint holds a {} model, expected {}",
                self.stage.name(),
                M::STAGE.name()
            )));
        }
        Ok(())
    }

    /// Rebuilds the model and loads every parameter by name; the tables must match exactly.
    pub fn model<M: Denoiser>(&self) -> Result<M> {
        self.check_stage::<M>()?;
        let mut model = M::build(self.config.model)?;
        let store = model.store_mut();
        if store.len() != self.params.len() {
            return Err(Error::format(format!(
                "checkpoint has {} parameters, model has {}",
                self.params.len(),
                store.len()
            )));
        }
        for rec in &self.params {
            let id = store.id(&rec.name).ok_or_else(|| Error::format(format!("unknown parameter {}", rec.name)))?;
            let p = store.get_mut(id);
            if p.tensor.shape() != rec.value.shape() {
                return Err(Error::shape("checkpoint parameter", p.tensor.shape(), rec.value.shape()));
            }
            p.tensor = rec.value.clone();
        }
        Ok(model)
    }

    /// Restores the trainer exactly as it was when saved (the loss log is not kept).
    pub fn into_trainer<M: Denoiser>(self) -> Result<Trainer<M>> {
        let model: M = self.model()?;
        let order: Vec<&ParamRecord> = model
            .store()
            .names()
            .map(|n| self.params.iter().find(|p| p.name == n).expect("checked by model()"))
            .collect();
        let adam = Adam {
            config: AdamConfig::with_lr(self.config.lr),
            t: self.adam_t,
            m: order.iter().map(|p| p.m.clone()).collect(),
            v: order.iter().map(|p| p.v.clone()).collect(),
        };
        let den = self.denoising()?;
        Ok(Trainer {
            model,
            adam,
            den,
            run: self.config,
            step: self.step,
            log: Vec::new(),
        })
    }
}
