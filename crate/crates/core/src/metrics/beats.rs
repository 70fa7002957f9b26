use crate::codec::VideoClip;
use crate::error::{Error, Result};

/// Strictly increasing beat timestamps in seconds.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BeatTrack {
    times: Vec<f64>,
}

impl BeatTrack {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("beat times must be finite, non-negative and strictly increasing"));
        }
        Ok(BeatTrack { times })
    }

    /// Beats at integer frame indices.
    pub fn from_frames(frames: &[usize], fps: f64) -> Result<Self> {
        Self::new(frames.iter().map(|&f| f as f64 / fps).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn shifted(&self, dt: f64) -> Result<Self> {
        Self::new(self.times.iter().map(|t| t + dt).collect())
    }
}

pub const BAS_SIGMA: f64 = 0.1;
/// Minimum spacing between detected motion beats, in frames.
pub const BEAT_MIN_SEPARATION: usize = 2;

/// Mean over audio beats of `exp(-d² / 2σ²)`, `d` the distance to the nearest motion beat.
pub fn beat_alignment_score(audio: &BeatTrack, motion: &BeatTrack, sigma: f64) -> Result<f64> {
    if audio.is_empty() {
        return Err(Error::invalid("BAS needs at least one audio beat"));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("BAS sigma must be positive, got {sigma}")));
    }
    if motion.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = audio
        .times
        .iter()
        .map(|&a| {
            let d = motion.times.iter().map(|&m| (a - m).abs()).fold(f64::INFINITY, f64::min);
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .sum();
    Ok(total / audio.len() as f64)
}

/// Interior local minima of a speed signal, at least [`BEAT_MIN_SEPARATION`] apart.
///
/// A minimum must be strictly below its left neighbour and not above its right
/// one, so flat signals yield nothing. On conflicts the earlier minimum wins.
pub fn speed_minima(speed: &[f64]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for t in 1..speed.len().saturating_sub(1) {
        if speed[t] < speed[t - 1] && speed[t] <= speed[t + 1] {
            if out.last().map_or(true, |&p| t - p >= BEAT_MIN_SEPARATION) {
                out.push(t);
            }
        }
    }
    out
}

/// Per-frame speed: mean absolute central difference `|V[t+1] - V[t-1]| / 2`.
///
/// Entry `t` covers frame `t`; the first and last frames use one-sided differences.
pub fn frame_speed(video: &VideoClip) -> Result<Vec<f64>> {
    let f = video.frames();
    if f < 3 {
        return Err(Error::invalid(format!("motion beats need at least 3 frames, got {f}")));
    }
    let n = video.frame_len() as f64;
    let diff = |a: usize, b: usize| {
        video
            .frame_data(a)
            .iter()
            .zip(video.frame_data(b))
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            / n
    };
    Ok((0..f)
        .map(|t| match t {
            0 => diff(1, 0),
            t if t == f - 1 => diff(t, t - 1),
            t => diff(t + 1, t - 1) / 2.0,
        })
        .collect())
}

/// Kinematic beats of a video: local minima of its frame speed.
pub fn motion_beats(video: &VideoClip, fps: f64) -> Result<BeatTrack> {
    BeatTrack::from_frames(&speed_minima(&frame_speed(video)?), fps)
}

/// Kinematic beats of landmark tracks `[frame][point] = (x, y)`.
pub fn landmark_beats(tracks: &[Vec<[f64; 2]>], fps: f64) -> Result<BeatTrack> {
    let f = tracks.len();
    if f < 3 {
        return Err(Error::invalid(format!("motion beats need at least 3 frames, got {f}")));
    }
    let step = |a: &[[f64; 2]], b: &[[f64; 2]]| -> f64 {
        a.iter().zip(b).map(|(p, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()).sum()
    };
    let speed: Vec<f64> = (0..f)
        .map(|t| match t {
            0 => step(&tracks[1], &tracks[0]),
            t if t == f - 1 => step(&tracks[t], &tracks[t - 1]),
            t => step(&tracks[t + 1], &tracks[t - 1]) / 2.0,
        })
        .collect();
    BeatTrack::from_frames(&speed_minima(&speed), fps)
}
