use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::{synth_bundles, DatasetSpec, SynthConfig};
use crate::h2_dit::{Flags, H2Dit, ModelConfig};
use crate::numerics::{ParamStore, Tensor};
use crate::r2_dit::R2Dit;

fn small_run(flags: Flags) -> RunConfig {
    let mut run = RunConfig::default();
    run.model = ModelConfig {
        layers: 1,
        frames: 8,
        motion_frames: 4,
        flags,
        ..ModelConfig::default()
    };
    run.lr = 1e-3;
    run.seed = 11;
    run
}

fn bundles(clips: usize) -> Vec<crate::data::ClipBundle> {
    let spec = DatasetSpec {
        clips,
        chunks: 2,
        chunk_frames: 8,
        motion_frames: 4,
        identities: 2,
        seed: 5,
    };
    synth_bundles(&SynthConfig::default(), &spec).unwrap()
}

#[test]
fn default_learning_rate() {
    assert_eq!(RunConfig::default().lr, 5e-5);
    assert_eq!(DEFAULT_LR, 5e-5);
}

#[test]
fn config_text_round_trips() {
    let mut c = small_run(Flags::default());
    c.set("use_ia", "false").unwrap();
    c.set("parameterization", "sample").unwrap();
    c.set("dataset", "/tmp/x y").unwrap();
    let back = RunConfig::parse(&c.to_text()).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.hash(), c.hash());
    assert!(RunConfig::parse("bogus=1").is_err());
    assert!(RunConfig::parse("heads=3").is_err());
    assert!(RunConfig::parse("use_mt=maybe").is_err());
}

#[test]
fn model_hash_ignores_optimiser_keys() {
    let a = RunConfig::default();
    let mut b = a.clone();
    b.lr = 1e-3;
    b.steps = 7;
    assert_eq!(a.model_hash(), b.model_hash());
    assert_ne!(a.hash(), b.hash());
    b.model.layers = 3;
    assert_ne!(a.model_hash(), b.model_hash());
}

/// Textbook Adam on plain vectors, rounding where the optimiser does.
fn adam_oracle(x: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64], t: i32, lr: f64) {
    let norm = g.iter().map(|a| a * a).sum::<f64>().sqrt();
    let s = if norm > 1.0 { 1.0 / norm } else { 1.0 };
    for i in 0..x.len() {
        let gi = g[i] * s;
        m[i] = (0.9 * m[i] + 0.1 * gi) as f32 as f64;
        v[i] = (0.999 * v[i] + 0.001 * gi * gi) as f32 as f64;
        let mh = m[i] / (1.0 - 0.9f64.powi(t));
        let vh = v[i] / (1.0 - 0.999f64.powi(t));
        x[i] = (x[i] - lr * mh / (vh.sqrt() + 1e-8)) as f32 as f64;
    }
}

#[test]
fn adam_matches_textbook_updates() {
    let mut store = ParamStore::new();
    let id = store.add("w", Tensor::new(vec![3], vec![0.5, -1.0, 2.0]).unwrap(), true).unwrap();
    store.add("frozen", Tensor::new(vec![1], vec![3.0]).unwrap(), false).unwrap();
    let mut adam = Adam::new(AdamConfig::with_lr(0.01), &store);
    let (mut x, mut m, mut v) = (vec![0.5, -1.0, 2.0], vec![0.0; 3], vec![0.0; 3]);
    let grads = [[0.1, -0.2, 0.05], [3.0, 4.0, 0.0], [-0.3, 0.0, 0.2]];
    for (k, g) in grads.iter().enumerate() {
        store.get_mut(id).grad = Tensor::new(vec![3], g.to_vec()).unwrap();
        let norm = adam.step(&mut store).unwrap();
        assert!((norm - g.iter().map(|a| a * a).sum::<f64>().sqrt()).abs() < 1e-15);
        adam_oracle(&mut x, &mut m, &mut v, g, k as i32 + 1, 0.01);
        assert_eq!(store.tensor(id).data(), &x[..]);
        assert!(store.get(id).grad.data().iter().all(|&g| g == 0.0));
    }
    assert_eq!(store.by_name("frozen").unwrap().tensor.data(), &[3.0]);
}

#[test]
fn nonfinite_gradient_aborts() {
    let mut store = ParamStore::new();
    let id = store.add("w", Tensor::zeros(&[2]), true).unwrap();
    let mut adam = Adam::new(AdamConfig::with_lr(0.1), &store);
    store.get_mut(id).grad = Tensor::new(vec![2], vec![f64::NAN, 0.0]).unwrap();
    assert!(matches!(adam.step(&mut store), Err(crate::Error::NonFinite(_))));
}

#[test]
fn windows_respect_motion_context() {
    let b = &bundles(1)[0];
    assert_eq!(window_starts(b, 8, 4, 2), vec![0, 4, 6, 8]);
    assert_eq!(window_starts(b, 8, 0, 4), vec![0, 4, 8]);
    let mut no_prev = b.clone();
    no_prev.prev = None;
    assert_eq!(window_starts(&no_prev, 8, 4, 4), vec![4, 8]);
    assert!(window_starts(b, 17, 0, 1).is_empty());
}

#[test]
fn examples_are_normalised_and_complete() {
    let run = small_run(Flags::default());
    let bs = bundles(2);
    let frozen = Frozen::fit(&run.model, &bs).unwrap();
    let ex = h2_examples(&run.model, &frozen, &bs, 4).unwrap();
    assert_eq!(ex.len(), 6);
    let c = run.model.codec.c_z;
    let mut mean = vec![0.0; c];
    let mut n = 0.0;
    for e in ex.iter().filter(|e| e.conds.motion.is_present()) {
        assert_eq!(e.z0.shape(), &run.model.latent_dims());
        assert_eq!(e.conds.motion.0.as_ref().unwrap().dims(), run.model.motion_latent_dims());
        assert_eq!(e.conds.gate.len(), run.model.video_tokens());
        assert!(e.conds.gate.active() > 0);
        for row in e.z0.data().chunks(c) {
            row.iter().enumerate().for_each(|(k, v)| mean[k] += v);
            n += 1.0;
        }
    }
    // windows overlap, so the mean is near but not exactly zero
    assert!(mean.iter().all(|m| (m / n).abs() < 0.5), "{mean:?}");
    // decode(encode) keeps block means, so the pixel round trip is close
    let clip = bs[0].clip.slice_frames(0, 8).unwrap();
    let back = frozen.decode(frozen.encode(&clip).unwrap().tensor()).unwrap();
    assert_eq!(back.dims(), clip.dims());
    let r2cfg = R2Dit::config_for(&run.model);
    let r2 = r2_examples(&r2cfg, &frozen, &bs, 4).unwrap();
    assert!(r2.iter().all(|e| e.mask.iter().any(|&m| m) && e.mask.iter().any(|&m| !m)));
    assert_eq!(r2[0].conds.stage1.tensor(), &r2[0].z0);
}

fn trained<M: Denoiser>(run: &RunConfig, steps: u64, examples: &[M::Example], frozen: &Frozen) -> Trainer<M> {
    let mut tr = Trainer::<M>::new(run.clone(), frozen.norm.clone()).unwrap();
    tr.train_until(examples, steps, |_| Ok(())).unwrap();
    tr
}

fn params(store: &ParamStore) -> Vec<Vec<f64>> {
    store.iter().map(|(_, p)| p.tensor.data().to_vec()).collect()
}

#[test]
fn training_is_seed_deterministic_and_learns() {
    let run = small_run(Flags::default());
    let bs = bundles(1);
    let frozen = Frozen::fit(&run.model, &bs).unwrap();
    let ex = h2_examples(&run.model, &frozen, &bs, 4).unwrap();
    let a = trained::<H2Dit>(&run, 60, &ex, &frozen);
    let b = trained::<H2Dit>(&run, 60, &ex, &frozen);
    assert_eq!(params(a.model.store()), params(b.model.store()));
    assert_eq!(a.log, b.log);
    let first: f64 = a.log[..10].iter().map(|x| x.1).sum::<f64>() / 10.0;
    assert!(a.recent_loss(10).unwrap() < first, "{:?}", a.log);
    let mut other = run.clone();
    other.seed = 12;
    let c = trained::<H2Dit>(&other, 5, &ex, &frozen);
    assert_ne!(c.log[..5], a.log[..5]);
}

#[test]
fn checkpoint_round_trip_and_exact_resume() {
    let run = small_run(Flags::default());
    let bs = bundles(1);
    let frozen = Frozen::fit(&run.model, &bs).unwrap();
    let ex = h2_examples(&run.model, &frozen, &bs, 4).unwrap();
    let mut tr = trained::<H2Dit>(&run, 4, &ex, &frozen);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h2.ckpt");
    let ck = Checkpoint::from_trainer(&tr, &frozen.codec).unwrap();
    ck.write(&path).unwrap();
    let back = Checkpoint::read(&path).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.to_bytes(), std::fs::read(&path).unwrap());

    let next = tr.train_step(&ex).unwrap();
    let mut resumed: Trainer<H2Dit> = back.into_trainer().unwrap();
    assert_eq!(resumed.step, 4);
    let again = resumed.train_step(&ex).unwrap();
    assert_eq!(next.to_bits(), again.to_bits());
    assert_eq!(params(tr.model.store()), params(resumed.model.store()));
    assert!(Checkpoint::read(&path).unwrap().into_trainer::<R2Dit>().is_err());
}

#[test]
fn corrupted_checkpoints_are_rejected() {
    let run = small_run(Flags::default());
    let bs = bundles(1);
    let frozen = Frozen::fit(&run.model, &bs).unwrap();
    let tr = Trainer::<H2Dit>::new(run, frozen.norm.clone()).unwrap();
    let bytes = Checkpoint::from_trainer(&tr, &frozen.codec).unwrap().to_bytes();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad");
    std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
    assert!(Checkpoint::read(&p).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    std::fs::write(&p, &extra).unwrap();
    assert!(Checkpoint::read(&p).is_err());
    let mut magic = bytes;
    magic[0] = b'X';
    std::fs::write(&p, &magic).unwrap();
    assert!(Checkpoint::read(&p).is_err());
}

#[test]
fn without_identity_adapter_no_identity_parameters() {
    let mut flags = Flags::default();
    flags.use_ia = false;
    let run = small_run(flags);
    let bs = bundles(1);
    let frozen = Frozen::fit(&run.model, &bs).unwrap();
    let tr = Trainer::<H2Dit>::new(run, frozen.norm.clone()).unwrap();
    let ck = Checkpoint::from_trainer(&tr, &frozen.codec).unwrap();
    let is_identity = |n: &str| n.contains(".wk_f") || n.contains(".wv_f");
    assert!(!ck.params.iter().any(|p| is_identity(&p.name)));
    let full = Trainer::<H2Dit>::new(small_run(Flags::default()), frozen.norm.clone()).unwrap();
    assert_eq!(full.model.store().names().filter(|n| is_identity(n)).count(), 2);
}

#[test]
fn refiner_trains_and_saves() {
    let mut run = small_run(R2Dit::flags());
    run.model = R2Dit::config_for(&run.model);
    let bs = bundles(1);
    let frozen = Frozen::fit(&run.model, &bs).unwrap();
    let ex = r2_examples(&run.model, &frozen, &bs, 4).unwrap();
    let tr = trained::<R2Dit>(&run, 3, &ex, &frozen);
    assert!(tr.log.iter().all(|(_, l)| l.is_finite()));
    let ck = Checkpoint::from_trainer(&tr, &frozen.codec).unwrap();
    assert_eq!(ck.stage, Stage::R2);
    assert!(ck.params.iter().all(|p| p.name.starts_with("r2.")));
    let m: R2Dit = ck.model().unwrap();
    assert_eq!(params(&m.store), params(tr.model.store()));
}

#[test]
fn step_rngs_are_independent_streams() {
    use rand::Rng;
    let mut a = step_rng(3, 0);
    let mut b = step_rng(3, 1);
    let mut c = ChaCha8Rng::seed_from_u64(3);
    c.set_stream(1);
    let (x, y, z): (u64, u64, u64) = (a.gen(), b.gen(), c.gen());
    assert_ne!(x, y);
    assert_eq!(y, z);
}
