use std::fmt::Write as _;

use crate::codec::VideoClip;
use crate::conditioning::IdentityEmbedder;
use crate::data::{track_hands, BundleMeta};
use crate::error::{Error, Result};
use crate::metrics::{beat_alignment_score, cosine, frechet_distance, hand_variance, motion_beats, ssim, BeatTrack};
use crate::train::ID_EMBEDDER_SEED;

/// Report columns, in order.
pub const COLUMNS: [&str; 5] = ["SSIM", "feature-Fréchet", "BAS", "Hand-V×10²", "CosSim"];

/// One row of the metric table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricRow {
    pub ssim: f64,
    /// `None` when there are too few frames for a full-rank covariance.
    pub frechet: Option<f64>,
    /// `None` when no clip has an audio beat.
    pub bas: Option<f64>,
    pub hand_v: f64,
    pub cossim: f64,
}

/// A generated clip and the ground truth it is scored against.
#[derive(Clone, Copy, Debug)]
pub struct EvalPair<'a> {
    pub generated: &'a VideoClip,
    pub truth: &'a VideoClip,
    pub meta: &'a BundleMeta,
}

/// Identity features of every frame, cropped at the per-frame ground-truth face box.
pub fn face_features(embedder: &IdentityEmbedder, video: &VideoClip, meta: &BundleMeta) -> Result<Vec<Vec<f64>>> {
    (0..video.frames())
        .map(|t| {
            let face = meta.regions.get(t).and_then(|r| r.face).unwrap_or(meta.reference_face);
            embedder.pooled(&video.frame(t)?, &face)
        })
        .collect()
}

/// Hand tracks of a generated clip via the colour-keyed tracker, in frame-size units.
pub fn generated_hands(video: &VideoClip, meta: &BundleMeta) -> Vec<Vec<[f64; 2]>> {
    let (w, h) = (video.width() as f64, video.height() as f64);
    track_hands(video, meta.skin, &meta.reference_face)
        .into_iter()
        .map(|pts| pts.into_iter().map(|[x, y]| [x / w, y / h]).collect())
        .collect()
}

/// BAS of a clip's motion against its audio beats; `None` without usable beats.
///
/// Beats on the first or last frame are skipped: a speed minimum cannot be
/// detected there.
pub fn clip_bas(video: &VideoClip, audio_beats: &[usize], fps: f64, sigma: f64) -> Result<Option<f64>> {
    let last = video.frames().saturating_sub(1);
    let beats: Vec<usize> = audio_beats.iter().copied().filter(|&b| b > 0 && b < last).collect();
    if beats.is_empty() {
        return Ok(None);
    }
    let audio = BeatTrack::from_frames(&beats, fps)?;
    Ok(Some(beat_alignment_score(&audio, &motion_beats(video, fps)?, sigma)?))
}

/// Metric row over paired clips; every value is a mean over clips except the
/// Fréchet distance, which pools frame features across all clips.
pub fn evaluate(pairs: &[EvalPair], sigma: f64) -> Result<MetricRow> {
    if pairs.is_empty() {
        return Err(Error::invalid("nothing to evaluate"));
    }
    let embedder = IdentityEmbedder::new(ID_EMBEDDER_SEED);
    let per_clip = crate::parallel::map_indexed(pairs.len(), |i| {
        let p = &pairs[i];
        if p.generated.dims() != p.truth.dims() {
            return Err(Error::shape("eval pair", &p.generated.dims(), &p.truth.dims()));
        }
        let fg = face_features(&embedder, p.generated, p.meta)?;
        let ft = face_features(&embedder, p.truth, p.meta)?;
        let cos = fg.iter().zip(&ft).map(|(a, b)| cosine(a, b)).collect::<Result<Vec<_>>>()?;
        Ok((
            ssim(p.generated, p.truth)?,
            clip_bas(p.generated, &p.meta.beats, p.meta.fps, sigma)?,
            hand_variance(&generated_hands(p.generated, p.meta))?,
            cos.iter().sum::<f64>() / cos.len() as f64,
            fg,
            ft,
        ))
    })?;
    let n = per_clip.len() as f64;
    let bas: Vec<f64> = per_clip.iter().filter_map(|c| c.1).collect();
    let (fg, ft): (Vec<Vec<f64>>, Vec<Vec<f64>>) = (
        per_clip.iter().flat_map(|c| c.4.clone()).collect(),
        per_clip.iter().flat_map(|c| c.5.clone()).collect(),
    );
    let dim = fg.first().map_or(0, |f| f.len());
    Ok(MetricRow {
        ssim: per_clip.iter().map(|c| c.0).sum::<f64>() / n,
        frechet: if fg.len() > dim { Some(frechet_distance(&fg, &ft)?) } else { None },
        bas: (!bas.is_empty()).then(|| bas.iter().sum::<f64>() / bas.len() as f64),
        hand_v: per_clip.iter().map(|c| c.2).sum::<f64>() / n,
        cossim: per_clip.iter().map(|c| c.3).sum::<f64>() / n,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

impl MetricRow {
    pub fn cells(&self) -> [String; 5] {
        [
            cell(Some(self.ssim)),
            cell(self.frechet),
            cell(self.bas),
            cell(Some(self.hand_v)),
            cell(Some(self.cossim)),
        ]
    }

    /// `prefix.key=value` lines.
    pub fn key_values(&self, prefix: &str) -> String {
        let keys = ["ssim", "feature_frechet", "bas", "hand_v_x100", "cossim"];
        keys.iter()
            .zip(self.cells())
            .map(|(k, v)| format!("{prefix}{k}={v}\n"))
            .collect()
    }
}

/// Plain-text table with one row per labelled result.
pub fn format_table(rows: &[(String, MetricRow)]) -> String {
    let label_w = rows.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(0).max(7);
    let mut s = format!("{:<label_w$}", "variant");
    for c in COLUMNS {
        let _ = write!(s, " | {c:>15}");
    }
    s.push('\n');
    s.push_str(&"-".repeat(label_w + COLUMNS.len() * 18));
    s.push('\n');
    for (label, row) in rows {
        let _ = write!(s, "{label:<label_w$}");
        for v in row.cells() {
            let _ = write!(s, " | {v:>15}");
        }
        s.push('\n');
    }
    s
}
