//! Finite-difference check of the full stage-1 denoiser at desk geometry.
//!
//! Every parameter is randomised first so that zero-initialised projections
//! do not hide gradient bugs.

use audcast::data::{synth_bundles, DatasetSpec, SynthConfig};
use audcast::h2_dit::{H2Dit, ModelConfig};
use audcast::numerics::{grad_check, GradCheckOptions, Tensor};
use audcast::train::{h2_examples, Frozen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let cfg = ModelConfig {
        layers: 1,
        ..ModelConfig::default()
    };
    let bundles = synth_bundles(&SynthConfig::default(), &DatasetSpec {
        clips: 1,
        chunks: 1,
        chunk_frames: cfg.frames,
        motion_frames: cfg.motion_frames,
        identities: 1,
        seed: 3,
    })?;
    let frozen = Frozen::fit(&cfg, &bundles)?;
    let ex = h2_examples(&cfg, &frozen, &bundles, 2)?.remove(0);

    let mut model = H2Dit::new(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let ids: Vec<_> = model.store.iter().map(|(id, _)| id).collect();
    for id in ids {
        let t = &mut model.store.get_mut(id).tensor;
        *t = Tensor::randn(t.shape(), 0.2, &mut rng);
    }
    let z = Tensor::randn(&cfg.latent_dims(), 1.0, &mut rng);
    let target = Tensor::randn(&cfg.latent_dims(), 1.0, &mut rng);
    let shell = model.clone();
    let opts = GradCheckOptions {
        // The objective averages 8192 outputs and many gradients are ~1e-6, so a
        // smaller step is dominated by rounding in the loss.
        step: 1e-4,
        entries_per_param: Some(3),
        ..GradCheckOptions::default()
    };
    let report = grad_check(
        &mut model.store,
        |g, store| {
            let zv = g.constant(z.clone());
            let y = shell.forward_with(g, store, zv, 37, &ex.conds)?;
            let tv = g.constant(target.clone());
            let d = g.sub(y, tv)?;
            let sq = g.mul(d, d)?;
            Ok(g.mean(sq))
        },
        &opts,
    )?;
    println!("checked {} entries, max relative error {:.3e}", report.checked, report.max_rel_error);
    if let Some((name, i, a, n)) = report.worst {
        println!("worst: {name}[{i}] analytic {a:.6e} numeric {n:.6e}");
    }
    Ok(())
}
