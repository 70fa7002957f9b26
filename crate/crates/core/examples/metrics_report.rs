//! The metric suite on ground truth against itself, against a shifted copy,
//! and the accumulated motion heatmap.

use audcast::codec::VideoClip;
use audcast::data::{synth_bundles, DatasetSpec, SynthConfig};
use audcast::metrics::{hand_variance, motion_heatmap, BAS_SIGMA};
use audcast::pipeline::{evaluate, format_table, EvalPair};

fn main() -> anyhow::Result<()> {
    let bundles = synth_bundles(&SynthConfig::default(), &DatasetSpec {
        clips: 6,
        chunks: 2,
        chunk_frames: 16,
        motion_frames: 4,
        identities: 3,
        seed: 2,
    })?;
    // Each clip paired with itself, then with a copy whose frames lag by two.
    let lagged: Vec<VideoClip> = bundles
        .iter()
        .map(|b| {
            let f = b.clip.frames();
            let head = b.clip.repeat_frame(0, 2)?;
            let body = b.clip.slice_frames(0, f - 2)?;
            VideoClip::concat_frames(&[&head, &body])
        })
        .collect::<Result<_, _>>()?;
    let same: Vec<EvalPair> = bundles
        .iter()
        .map(|b| EvalPair {
            generated: &b.clip,
            truth: &b.clip,
            meta: &b.meta,
        })
        .collect();
    let shifted: Vec<EvalPair> = bundles
        .iter()
        .zip(&lagged)
        .map(|(b, l)| EvalPair {
            generated: l,
            truth: &b.clip,
            meta: &b.meta,
        })
        .collect();
    let rows = vec![
        ("ground truth".to_string(), evaluate(&same, BAS_SIGMA)?),
        ("lagged 2 frames".to_string(), evaluate(&shifted, BAS_SIGMA)?),
    ];
    print!("{}", format_table(&rows));

    let still = vec![vec![[0.25, 0.5], [0.75, 0.5]]; 16];
    println!("Hand-V of a static track: {}", hand_variance(&still)?);

    let videos: Vec<VideoClip> = bundles.iter().map(|b| b.clip.clone()).collect();
    let map = motion_heatmap(&videos)?;
    println!("motion heatmap {}x{}: mean {:.3}, std {:.3}", map.height, map.width, map.mean, map.std);
    Ok(())
}
