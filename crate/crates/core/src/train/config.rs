use std::collections::BTreeMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::data::parse_key_values;
use crate::diffusion::{ChainPlan, Parameterization, SamplerConfig, SamplerKind};
use crate::error::{Error, Result};
use crate::h2_dit::ModelConfig;

/// Everything that determines a run: model, schedule, chaining, optimiser and paths.
///
/// Serialised as sorted `key=value` lines; `(config, seed)` fixes every output bit.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub t_sample: usize,
    pub sampler: SamplerKind,
    pub parameterization: Parameterization,
    pub lr: f64,
    pub steps: u64,
    pub batch: usize,
    pub checkpoint_every: u64,
    pub seed: u64,
    pub dataset: String,
    pub out: String,
}

pub const DEFAULT_LR: f64 = 5e-5;

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            t_sample: 20,
            sampler: SamplerKind::Deterministic,
            parameterization: Parameterization::Velocity,
            lr: DEFAULT_LR,
            steps: 2000,
            batch: 1,
            checkpoint_every: 500,
            seed: 0,
            dataset: "data".into(),
            out: "run".into(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::config(format!("{key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(Error::config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

impl RunConfig {
    /// Keys that fix the weight layout and the meaning of the network output.
    pub fn model_entries(&self) -> BTreeMap<&'static str, String> {
        let m = &self.model;
        let f = m.flags;
        let mut e = BTreeMap::new();
        e.insert("layers", m.layers.to_string());
        e.insert("heads", m.heads.to_string());
        e.insert("embed_dim", m.patch.embed_dim.to_string());
        e.insert("p_t", m.patch.p_t.to_string());
        e.insert("p_h", m.patch.p_h.to_string());
        e.insert("p_w", m.patch.p_w.to_string());
        e.insert("r_t", m.codec.r_t.to_string());
        e.insert("r_s", m.codec.r_s.to_string());
        e.insert("c_img", m.codec.c_img.to_string());
        e.insert("c_z", m.codec.c_z.to_string());
        e.insert("codec_seed", m.codec.seed.to_string());
        e.insert("chunk_frames", m.frames.to_string());
        e.insert("height", m.height.to_string());
        e.insert("width", m.width.to_string());
        e.insert("overlap_m", m.motion_frames.to_string());
        e.insert("audio_dim", m.audio_dim.to_string());
        e.insert("t_train", m.t_train.to_string());
        e.insert("use_hpe", f.use_hpe.to_string());
        e.insert("use_mt", f.use_mt.to_string());
        e.insert("use_aa", f.use_aa.to_string());
        e.insert("use_ia", f.use_ia.to_string());
        e.insert("use_audio_xattn", f.use_audio_xattn.to_string());
        e.insert("audio_xattn_proj", f.audio_xattn_proj.to_string());
        e.insert("init_seed", m.init_seed.to_string());
        e.insert("parameterization", self.parameterization.name().into());
        e
    }

    pub fn entries(&self) -> BTreeMap<&'static str, String> {
        let mut e = self.model_entries();
        e.insert("t_sample", self.t_sample.to_string());
        e.insert("sampler", self.sampler.name().into());
        e.insert("lr", format!("{:e}", self.lr));
        e.insert("steps", self.steps.to_string());
        e.insert("batch", self.batch.to_string());
        e.insert("checkpoint_every", self.checkpoint_every.to_string());
        e.insert("seed", self.seed.to_string());
        e.insert("dataset", self.dataset.clone());
        e.insert("out", self.out.clone());
        e
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    /// Applies one `key=value` override.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let m = &mut self.model;
        match key {
            "layers" => m.layers = parse_num(key, v)?,
            "heads" => m.heads = parse_num(key, v)?,
            "embed_dim" => m.patch.embed_dim = parse_num(key, v)?,
            "p_t" => m.patch.p_t = parse_num(key, v)?,
            "p_h" => m.patch.p_h = parse_num(key, v)?,
            "p_w" => m.patch.p_w = parse_num(key, v)?,
            "r_t" => m.codec.r_t = parse_num(key, v)?,
            "r_s" => m.codec.r_s = parse_num(key, v)?,
            "c_img" => m.codec.c_img = parse_num(key, v)?,
            "c_z" => m.codec.c_z = parse_num(key, v)?,
            "codec_seed" => m.codec.seed = parse_num(key, v)?,
            "chunk_frames" => m.frames = parse_num(key, v)?,
            "height" => m.height = parse_num(key, v)?,
            "width" => m.width = parse_num(key, v)?,
            "overlap_m" => m.motion_frames = parse_num(key, v)?,
            "audio_dim" => m.audio_dim = parse_num(key, v)?,
            "t_train" => m.t_train = parse_num(key, v)?,
            "use_hpe" => m.flags.use_hpe = parse_bool(key, v)?,
            "use_mt" => m.flags.use_mt = parse_bool(key, v)?,
            "use_aa" => m.flags.use_aa = parse_bool(key, v)?,
            "use_ia" => m.flags.use_ia = parse_bool(key, v)?,
            "use_audio_xattn" => m.flags.use_audio_xattn = parse_bool(key, v)?,
            "audio_xattn_proj" => m.flags.audio_xattn_proj = parse_bool(key, v)?,
            "init_seed" => m.init_seed = parse_num(key, v)?,
            "parameterization" => self.parameterization = Parameterization::parse(v)?,
            "t_sample" => self.t_sample = parse_num(key, v)?,
            "sampler" => self.sampler = SamplerKind::parse(v)?,
            "lr" => self.lr = parse_num(key, v)?,
            "steps" => self.steps = parse_num(key, v)?,
            "batch" => self.batch = parse_num(key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "dataset" => self.dataset = v.to_string(),
            "out" => self.out = v.to_string(),
            _ => return Err(Error::config(format!("unknown config key {key}"))),
        }
        Ok(())
    }

    /// Parses a full or partial config; missing keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        for (k, v) in parse_key_values(text)? {
            c.set(&k, &v)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.t_sample == 0 || self.t_sample > self.model.t_train {
            return Err(Error::config(format!("t_sample {} outside 1..={}", self.t_sample, self.model.t_train)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || self.batch == 0 {
            return Err(Error::config("lr must be positive and batch nonzero"));
        }
        Ok(())
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            kind: self.sampler,
            steps: self.t_sample,
        }
    }

    pub fn chain_plan(&self, total_frames: usize, seed: u64) -> Result<ChainPlan> {
        ChainPlan::new(total_frames, self.model.frames, self.model.motion_frames, seed)
    }

    pub fn hash(&self) -> String {
        hex_sha256(&self.to_text())
    }

    /// Hash over [`RunConfig::model_entries`] only; checkpoints must agree on it.
    pub fn model_hash(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.model_entries() {
            let _ = writeln!(s, "{k}={v}");
        }
        hex_sha256(&s)
    }
}

pub fn hex_sha256(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}
