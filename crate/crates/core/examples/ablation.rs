//! A scaled-down ablation: the full cascade and each single-component removal,
//! trained on the same data and scored on held-out clips.
//!
//! `cargo run --release --example ablation [H2_STEPS] [R2_STEPS]`

use audcast::data::{synth_bundles, DatasetSpec, SynthConfig};
use audcast::metrics::BAS_SIGMA;
use audcast::pipeline::{format_table, run_ablation, AblationSetup, Variant};
use audcast::r2_dit::R2Dit;
use audcast::train::RunConfig;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<u64>());
    let h2_steps = args.next().transpose()?.unwrap_or(600);
    let r2_steps = args.next().transpose()?.unwrap_or(200);
    let spec = DatasetSpec {
        clips: 4,
        chunks: 1,
        chunk_frames: 16,
        motion_frames: 4,
        identities: 2,
        seed: 0,
    };
    let mut h2 = RunConfig::default();
    h2.lr = 1e-3;
    h2.steps = h2_steps;
    let mut r2 = h2.clone();
    r2.model = R2Dit::config_for(&h2.model);
    r2.steps = r2_steps;
    let setup = AblationSetup {
        h2,
        r2,
        train: synth_bundles(&SynthConfig::default(), &spec)?,
        eval: synth_bundles(&SynthConfig::default(), &DatasetSpec { clips: 3, chunks: 2, seed: 50, ..spec })?,
        stride: 2,
        sample_seed: 0,
        sigma: BAS_SIGMA,
    };
    let results = run_ablation(&setup, &Variant::ALL, &mut |m| eprintln!("{m}"))?;
    let mut rows = Vec::new();
    for (v, r) in results {
        match r {
            Ok(row) => rows.push((v.label().to_string(), row)),
            Err(e) => eprintln!("{} failed: {e}", v.label()),
        }
    }
    print!("{}", format_table(&rows));
    Ok(())
}
