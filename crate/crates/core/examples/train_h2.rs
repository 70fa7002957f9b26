//! Trains the stage-1 denoiser on two synthetic clips, checkpoints half way and
//! shows that resuming reproduces the uninterrupted run bit for bit.
//!
//! `cargo run --release --example train_h2 [STEPS]`

use audcast::data::{synth_bundles, DatasetSpec, SynthConfig};
use audcast::h2_dit::H2Dit;
use audcast::train::{h2_examples, Checkpoint, Frozen, RunConfig, Trainer};

fn main() -> anyhow::Result<()> {
    let steps: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(400);
    let mut run = RunConfig::default();
    run.lr = 1e-3;
    run.steps = steps;
    let bundles = synth_bundles(&SynthConfig::default(), &DatasetSpec {
        clips: 2,
        chunks: 1,
        chunk_frames: run.model.frames,
        motion_frames: run.model.motion_frames,
        identities: 2,
        seed: 0,
    })?;
    let frozen = Frozen::fit(&run.model, &bundles)?;
    let examples = h2_examples(&run.model, &frozen, &bundles, 2)?;
    println!("{} training windows, config hash {}", examples.len(), run.hash());

    let mut tr = Trainer::<H2Dit>::new(run.clone(), frozen.norm.clone())?;
    tr.train_until(&examples, steps / 2, |_| Ok(()))?;
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("half.ackp");
    Checkpoint::from_trainer(&tr, &frozen.codec)?.write(&path)?;

    tr.train_until(&examples, steps, |t| {
        if t.step % 100 == 0 {
            println!("step {:5} mean loss {:.4}", t.step, t.recent_loss(100).unwrap_or(f64::NAN));
        }
        Ok(())
    })?;

    let mut resumed = Checkpoint::read(&path)?.into_trainer::<H2Dit>()?;
    resumed.train_until(&examples, steps, |_| Ok(()))?;
    let same = Checkpoint::from_trainer(&resumed, &frozen.codec)?.params == Checkpoint::from_trainer(&tr, &frozen.codec)?.params;
    println!("resumed run identical to uninterrupted run: {same}");
    println!("stratified loss {:.4}", tr.stratified_loss(&examples, 5, 0)?);
    Ok(())
}
