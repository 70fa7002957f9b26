use std::collections::BTreeMap;

use super::cascade::{cascade_generate, CascadeOutput, Stage2};
use super::eval::{evaluate, EvalPair, MetricRow};
use super::generate::{Driving, Stage1};
use crate::data::ClipBundle;
use crate::error::{Error, Result};
use crate::h2_dit::{Flags, H2Dit};
use crate::r2_dit::R2Dit;
use crate::train::{h2_examples, r2_examples, Frozen, RunConfig, Trainer};

/// The full cascade and its single-component ablations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Variant {
    Full,
    NoRefine,
    NoMt,
    NoHpe,
    NoAa,
    NoIa,
}

impl Variant {
    pub const ABLATIONS: [Variant; 5] = [Variant::NoRefine, Variant::NoMt, Variant::NoHpe, Variant::NoAa, Variant::NoIa];
    pub const ALL: [Variant; 6] = [
        Variant::Full,
        Variant::NoRefine,
        Variant::NoMt,
        Variant::NoHpe,
        Variant::NoAa,
        Variant::NoIa,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoRefine => "w/o R²-DiT",
            Variant::NoMt => "w/o MT",
            Variant::NoHpe => "w/o HPE",
            Variant::NoAa => "w/o AA",
            Variant::NoIa => "w/o IA",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoRefine => "no-r2",
            Variant::NoMt => "no-mt",
            Variant::NoHpe => "no-hpe",
            Variant::NoAa => "no-aa",
            Variant::NoIa => "no-ia",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.key() == s)
            .ok_or_else(|| Error::config(format!("unknown variant {s}")))
    }

    /// Stage-1 flags of this variant, starting from `base`.
    pub fn flags(self, base: Flags) -> Flags {
        let mut f = base;
        match self {
            Variant::Full | Variant::NoRefine => {}
            Variant::NoMt => f.use_mt = false,
            Variant::NoHpe => f.use_hpe = false,
            Variant::NoAa => f.use_aa = false,
            Variant::NoIa => f.use_ia = false,
        }
        f
    }

    pub fn refines(self) -> bool {
        self != Variant::NoRefine
    }
}

/// Runs both stages over every evaluation bundle; bundle `i` uses chain seed `seed + i`.
pub fn generate_eval_set(s1: Stage1, s2: Option<Stage2>, bundles: &[ClipBundle], seed: u64) -> Result<Vec<CascadeOutput>> {
    bundles
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let driving = Driving {
                reference: b.reference.clone(),
                reference_face: b.meta.reference_face,
                audio: b.audio.clone(),
            };
            let plan = crate::diffusion::ChainPlan::new(b.frames(), s1.model.config.frames, s1.model.config.motion_frames, seed.wrapping_add(i as u64))?;
            cascade_generate(s1, s2, &driving, Some(&b.priors), &plan)
        })
        .collect()
}

/// Training and evaluation setup shared by all variants.
#[derive(Clone, Debug)]
pub struct AblationSetup {
    pub h2: RunConfig,
    pub r2: RunConfig,
    pub train: Vec<ClipBundle>,
    pub eval: Vec<ClipBundle>,
    /// Frame stride between training windows.
    pub stride: usize,
    pub sample_seed: u64,
    pub sigma: f64,
}

/// Trains each distinct stage-1 model once, the refiner once, and scores every variant.
///
/// A failing variant is reported in place; the others still run.
pub fn run_ablation(setup: &AblationSetup, variants: &[Variant], log: &mut dyn FnMut(&str)) -> Result<Vec<(Variant, Result<MetricRow>)>> {
    let frozen = Frozen::fit(&setup.h2.model, &setup.train)?;
    let r2 = if variants.iter().any(|v| v.refines()) {
        log(&format!("training refiner for {} steps", setup.r2.steps));
        let ex = r2_examples(&setup.r2.model, &frozen, &setup.train, setup.stride)?;
        let mut tr = Trainer::<R2Dit>::new(setup.r2.clone(), frozen.norm.clone())?;
        tr.train_until(&ex, setup.r2.steps, |_| Ok(()))?;
        Some(tr)
    } else {
        None
    };
    let mut models: BTreeMap<String, Result<Trainer<H2Dit>>> = BTreeMap::new();
    let mut out = Vec::with_capacity(variants.len());
    for &v in variants {
        let mut run = setup.h2.clone();
        run.model.flags = v.flags(setup.h2.model.flags);
        let key = run.model_hash();
        if !models.contains_key(&key) {
            log(&format!("training stage 1 for {} ({} steps)", v.label(), run.steps));
            let trained = (|| {
                let ex = h2_examples(&run.model, &frozen, &setup.train, setup.stride)?;
                let mut tr = Trainer::<H2Dit>::new(run.clone(), frozen.norm.clone())?;
                tr.train_until(&ex, run.steps, |_| Ok(()))?;
                Ok(tr)
            })();
            models.insert(key.clone(), trained);
        }
        let row = match &models[&key] {
            Err(e) => Err(Error::invalid(format!("stage-1 training failed: {e}"))),
            Ok(h2) => (|| {
                let s1 = Stage1 {
                    model: &h2.model,
                    den: &h2.den,
                    frozen: &frozen,
                };
                let s2 = match (&r2, v.refines()) {
                    (Some(r), true) => Some(Stage2 {
                        model: &r.model,
                        den: &r.den,
                        frozen: &frozen,
                    }),
                    _ => None,
                };
                log(&format!("sampling {} clips for {}", setup.eval.len(), v.label()));
                let outs = generate_eval_set(s1, s2, &setup.eval, setup.sample_seed)?;
                let pairs: Vec<EvalPair> = outs
                    .iter()
                    .zip(&setup.eval)
                    .map(|(o, b)| EvalPair {
                        generated: &o.video,
                        truth: &b.clip,
                        meta: &b.meta,
                    })
                    .collect();
                evaluate(&pairs, setup.sigma)
            })(),
        };
        out.push((v, row));
    }
    Ok(out)
}
