//! Chains stage-1 chunks over a 48-frame audio track and compares seam
//! discontinuity with and without motion tokens.
//!
//! `cargo run --release --example long_video [STEPS]`

use audcast::data::{synth_bundles, DatasetSpec, SynthConfig};
use audcast::h2_dit::H2Dit;
use audcast::pipeline::{generate_long, seam_stats, Driving, Stage1};
use audcast::train::{h2_examples, Frozen, RunConfig, Trainer};

fn main() -> anyhow::Result<()> {
    let steps: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1500);
    let spec = DatasetSpec {
        clips: 4,
        chunks: 1,
        chunk_frames: 16,
        motion_frames: 4,
        identities: 2,
        seed: 0,
    };
    let train = synth_bundles(&SynthConfig::default(), &spec)?;
    let long = synth_bundles(&SynthConfig::default(), &DatasetSpec { clips: 1, chunks: 3, seed: 7, ..spec })?.remove(0);
    let driving = Driving {
        reference: long.reference.clone(),
        reference_face: long.meta.reference_face,
        audio: long.audio.clone(),
    };

    for use_mt in [true, false] {
        let mut run = RunConfig::default();
        run.lr = 1e-3;
        run.model.flags.use_mt = use_mt;
        let frozen = Frozen::fit(&run.model, &train)?;
        let examples = h2_examples(&run.model, &frozen, &train, 2)?;
        let mut tr = Trainer::<H2Dit>::new(run.clone(), frozen.norm.clone())?;
        tr.train_until(&examples, steps, |_| Ok(()))?;

        let s1 = Stage1 {
            model: &tr.model,
            den: &tr.den,
            frozen: &frozen,
        };
        let plan = run.chain_plan(long.frames(), 11)?;
        let video = generate_long(s1, &driving, &plan)?;
        let seams = seam_stats(&video.video, &plan)?;
        println!(
            "motion tokens {:5}: {} chunks, seam/intra ratio {:.2}\n{}",
            use_mt,
            plan.chunks(),
            seams.ratio(),
            seams.to_text()
        );
    }
    Ok(())
}
