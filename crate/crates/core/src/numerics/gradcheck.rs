use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, ParamStore, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Denominator floor of the relative error.
    pub floor: f64,
    /// Checks every entry when `None`, otherwise a seeded sample per tensor.
    pub entries_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            floor: 1e-6,
            entries_per_param: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameter name, flat index, analytic and numeric values of the worst entry.
    pub worst: Option<(String, usize, f64, f64)>,
}

fn evaluate<F>(f: &mut F, store: &ParamStore) -> Result<f64>
where
    F: FnMut(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new();
    let out = f(&mut g, store)?;
    let v = g.value(out).item();
    if !v.is_finite() {
        return Err(Error::NonFinite("grad_check objective".into()));
    }
    Ok(v)
}

/// Compares reverse-mode gradients of a scalar function against central differences.
///
/// `f` builds the scalar on the supplied graph, reading parameters from the
/// supplied store. Relative error is `|a - n| / max(|a|, |n|, floor)`.
pub fn grad_check<F>(store: &mut ParamStore, mut f: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut analytic = store.clone();
    analytic.zero_grads();
    {
        let mut g = Graph::new();
        let out = f(&mut g, store)?;
        if !g.value(out).item().is_finite() {
            return Err(Error::NonFinite("grad_check objective".into()));
        }
        g.backward(out)?.accumulate(&g, &mut analytic);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport::default();
    let ids: Vec<_> = store.iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect();
    for id in ids {
        let n = store.get(id).tensor.len();
        let entries: Vec<usize> = match opts.entries_per_param {
            Some(k) if k < n => sample(&mut rng, n, k).into_vec(),
            _ => (0..n).collect(),
        };
        for i in entries {
            let orig = store.get(id).tensor.data()[i];
            store.get_mut(id).tensor.data_mut()[i] = orig + opts.step;
            let plus = evaluate(&mut f, store);
            store.get_mut(id).tensor.data_mut()[i] = orig - opts.step;
            let minus = evaluate(&mut f, store);
            store.get_mut(id).tensor.data_mut()[i] = orig;
            let numeric = (plus? - minus?) / (2.0 * opts.step);
            let a = analytic.get(id).grad.data()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some((store.get(id).name.clone(), i, a, numeric));
            }
        }
    }
    Ok(report)
}
