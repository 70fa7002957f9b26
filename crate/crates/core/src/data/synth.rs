use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::VideoClip;
use crate::conditioning::{AudioFeatures, PixelBox, AUDIO_DIM, AUDIO_LAYERS};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::r2_dit::{RegionBoxes, StructuralPrior};

/// Geometry and timing of the procedural speaker.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthConfig {
    pub fps: f64,
    pub height: usize,
    pub width: usize,
    /// Inclusive range of frames between consecutive beats.
    pub beat_interval: (usize, usize),
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            fps: 8.0,
            height: 32,
            width: 32,
            beat_interval: (5, 8),
        }
    }
}

/// Colours and head shape of one synthetic speaker.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Identity {
    pub id: u64,
    pub skin: [f64; 3],
    pub hair: [f64; 3],
    pub shirt: [f64; 3],
    pub background: [f64; 3],
    pub head_radius: [f64; 2],
}

impl Identity {
    pub fn new(id: u64) -> Self {
        let mut r = ChaCha8Rng::seed_from_u64(id ^ 0x1d_5eed);
        let tone = r.gen_range(0.35..0.9);
        let skin = [tone, tone * r.gen_range(0.7..0.85), tone * r.gen_range(0.5..0.7)];
        let h = r.gen_range(0.05..0.35);
        let hair = [h, h * r.gen_range(0.6..1.0), h * r.gen_range(0.3..0.9)];
        let shirt = [r.gen_range(0.1..0.9), r.gen_range(0.1..0.9), r.gen_range(0.1..0.9)];
        let b = r.gen_range(0.75..0.95);
        let background = [b, b * r.gen_range(0.9..1.0), b * r.gen_range(0.85..1.0)];
        Identity {
            id,
            skin,
            hair,
            shirt,
            background,
            head_radius: [r.gen_range(4.2..5.4), r.gen_range(5.2..6.4)],
        }
    }
}

/// A continuous generated performance with all ground truth.
#[derive(Clone, Debug)]
pub struct Session {
    pub identity: Identity,
    pub video: VideoClip,
    pub audio: AudioFeatures,
    /// Beat frames inside `[0, frames)`.
    pub beats: Vec<usize>,
    pub regions: Vec<RegionBoxes>,
    /// Per frame: left-hand points then right-hand points.
    pub hands: Vec<Vec<[f64; 2]>>,
    pub priors: StructuralPrior,
    /// Neutral single frame of the same speaker.
    pub reference: VideoClip,
    pub reference_face: PixelBox,
}

impl Session {
    pub fn frames(&self) -> usize {
        self.video.frames()
    }

    pub fn face_boxes(&self) -> Vec<Option<PixelBox>> {
        self.regions.iter().map(|r| r.face).collect()
    }
}

pub const HAND_POINTS: usize = 3;
const HAND_RADIUS: f64 = 2.2;
const AUDIO_MIX_SEED: u64 = 0xa0d1_0f3a;
const BASE_AUDIO: usize = 12;

/// Rest and raised key poses for the left hand; the right hand mirrors them.
const LEFT_POSES: [[f64; 2]; 2] = [[8.5, 26.0], [6.0, 17.5]];
const NOD: f64 = 1.6;
const ARC: f64 = 2.0;

/// Beat timeline with a virtual beat before frame 0 and after the end.
#[derive(Clone, Debug)]
struct Timeline {
    beats: Vec<f64>,
    parity0: usize,
    jitter: Vec<[f64; 4]>,
}

impl Timeline {
    fn new(cfg: &SynthConfig, frames: usize, r: &mut ChaCha8Rng) -> Self {
        let (lo, hi) = cfg.beat_interval;
        let mut t = -(r.gen_range(1..=hi) as i64);
        let mut beats = vec![t as f64];
        while t < frames as i64 + hi as i64 {
            t += r.gen_range(lo..=hi) as i64;
            beats.push(t as f64);
        }
        let jitter = beats
            .iter()
            .map(|_| [r.gen_range(-1.5..1.5), r.gen_range(-1.2..1.2), r.gen_range(-1.5..1.5), r.gen_range(-1.2..1.2)])
            .collect();
        Timeline {
            beats,
            parity0: r.gen_range(0..2),
            jitter,
        }
    }

    /// Segment index `k` and phase `s ∈ [0, 1)` at time `t`.
    fn segment(&self, t: f64) -> (usize, f64) {
        let k = self.beats.iter().rposition(|&b| b <= t).unwrap_or(0).min(self.beats.len() - 2);
        let (a, b) = (self.beats[k], self.beats[k + 1]);
        (k, ((t - a) / (b - a)).clamp(0.0, 1.0))
    }

    fn parity(&self, k: usize) -> usize {
        (k + self.parity0) % 2
    }

    fn key_pose(&self, k: usize) -> ([f64; 2], [f64; 2], f64) {
        let p = self.parity(k);
        let j = self.jitter[k];
        let l = [LEFT_POSES[p][0] + j[0], LEFT_POSES[p][1] + j[1]];
        let r = [31.0 - LEFT_POSES[p][0] + j[2], LEFT_POSES[p][1] + j[3]];
        (l, r, p as f64 * NOD)
    }

    /// Hand centres and head nod at `t`; all velocities vanish at beats.
    fn pose(&self, t: f64) -> ([f64; 2], [f64; 2], f64) {
        let (k, s) = self.segment(t);
        let e = (1.0 - (PI * s).cos()) / 2.0;
        let lift = ARC * (PI * s).sin().powi(2);
        let (l0, r0, n0) = self.key_pose(k);
        let (l1, r1, n1) = self.key_pose(k + 1);
        let lerp = |a: f64, b: f64| a + (b - a) * e;
        (
            [lerp(l0[0], l1[0]), lerp(l0[1], l1[1]) - lift],
            [lerp(r0[0], r1[0]), lerp(r0[1], r1[1]) - lift],
            lerp(n0, n1),
        )
    }

    /// Mouth opening, peaking on each beat.
    fn mouth(&self, t: f64) -> f64 {
        let d = self.beats.iter().map(|b| (t - b).abs()).fold(f64::INFINITY, f64::min);
        (-d * d / 2.0).exp()
    }
}

/// Slow side-to-side sway that audio does not determine.
#[derive(Clone, Copy, Debug)]
struct Sway {
    amp: [f64; 2],
    period: [f64; 2],
    phase: [f64; 2],
}

impl Sway {
    fn new(r: &mut ChaCha8Rng) -> Self {
        Sway {
            amp: [r.gen_range(1.2..2.2), r.gen_range(0.4..1.0)],
            period: [r.gen_range(36.0..60.0), r.gen_range(20.0..32.0)],
            phase: [r.gen_range(0.0..2.0 * PI), r.gen_range(0.0..2.0 * PI)],
        }
    }

    fn at(&self, t: f64) -> f64 {
        (0..2).map(|i| self.amp[i] * (2.0 * PI * t / self.period[i] + self.phase[i]).sin()).sum()
    }
}

/// Anti-aliased coverage of an axis-aligned ellipse at pixel `(x, y)`.
fn ellipse(x: usize, y: usize, c: [f64; 2], r: [f64; 2]) -> f64 {
    let (px, py) = (x as f64 + 0.5 - c[0], y as f64 + 0.5 - c[1]);
    let d = ((px / r[0]).powi(2) + (py / r[1]).powi(2)).sqrt();
    ((1.0 - d) * r[0].min(r[1]) + 0.5).clamp(0.0, 1.0)
}

fn rect(x: usize, y: usize, c: [f64; 2], half: [f64; 2]) -> f64 {
    let (px, py) = ((x as f64 + 0.5 - c[0]).abs(), (y as f64 + 0.5 - c[1]).abs());
    let cov = |d: f64, h: f64| (h - d + 0.5).clamp(0.0, 1.0);
    cov(px, half[0]) * cov(py, half[1])
}

fn blend(px: &mut [f64; 3], color: [f64; 3], alpha: f64) {
    for k in 0..3 {
        px[k] += (color[k] - px[k]) * alpha;
    }
}

/// Pixel box covering `[c - r, c + r]`, clipped to the frame.
fn bbox(c: [f64; 2], r: [f64; 2], h: usize, w: usize) -> PixelBox {
    let lo = |v: f64| v.floor().max(0.0) as usize;
    let hi = |v: f64, n: usize| (v.ceil().max(0.0) as usize).min(n);
    PixelBox::new(
        lo(c[0] - r[0]).min(w),
        lo(c[1] - r[1]).min(h),
        hi(c[0] + r[0], w),
        hi(c[1] + r[1], h),
    )
}

struct Frame {
    pixels: Vec<f64>,
    prior: Vec<f64>,
    regions: RegionBoxes,
    hands: Vec<[f64; 2]>,
}

fn render(cfg: &SynthConfig, id: &Identity, sway: f64, left: [f64; 2], right: [f64; 2], nod: f64, mouth: f64) -> Frame {
    let (h, w) = (cfg.height, cfg.width);
    let cx = w as f64 / 2.0 + sway;
    let head = [cx, 11.0 + nod];
    let hr = id.head_radius;
    let (left, right) = ([left[0] + sway, left[1]], [right[0] + sway, right[1]]);
    let dark = [0.08, 0.06, 0.06];
    let lips = [0.55, 0.12, 0.15];
    let mut pixels = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            let mut px = id.background;
            blend(&mut px, id.shirt, rect(x, y, [cx, 27.5], [7.5, 6.5]));
            blend(&mut px, id.skin, rect(x, y, [cx, 18.5], [1.5, 1.5]));
            let face = ellipse(x, y, head, hr);
            blend(&mut px, id.skin, face);
            let hair = ellipse(x, y, [head[0], head[1] - hr[1] * 0.55], [hr[0] * 1.05, hr[1] * 0.55]);
            blend(&mut px, id.hair, hair * face.max(0.6));
            blend(&mut px, dark, ellipse(x, y, [head[0] - 1.8, head[1] - 0.5], [0.7, 0.7]));
            blend(&mut px, dark, ellipse(x, y, [head[0] + 1.8, head[1] - 0.5], [0.7, 0.7]));
            blend(&mut px, lips, rect(x, y, [head[0], head[1] + 2.8], [1.8, 0.3 + 0.9 * mouth]));
            for hand in [left, right] {
                blend(&mut px, id.skin.map(|v| v * 0.92), ellipse(x, y, hand, [HAND_RADIUS; 2]));
            }
            pixels.extend_from_slice(&px);
        }
    }

    let regions = RegionBoxes {
        face: Some(bbox(head, hr, h, w)),
        left_hand: Some(bbox(left, [HAND_RADIUS + 1.0; 2], h, w)),
        right_hand: Some(bbox(right, [HAND_RADIUS + 1.0; 2], h, w)),
    };
    // structural proxies: face contour and mouth in red, phalange strokes in green (left) and blue (right)
    let mut prior = vec![0.0; h * w * 3];
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) * 3;
            if regions.face.unwrap().contains(x, y) {
                let outer = ellipse(x, y, head, hr);
                let inner = ellipse(x, y, head, [hr[0] - 1.0, hr[1] - 1.0]);
                let mouth_mark = rect(x, y, [head[0], head[1] + 2.8], [1.8, 0.3 + 0.9 * mouth]);
                prior[i] = (outer - inner).max(mouth_mark);
            }
            for (k, (hand, b)) in [(left, regions.left_hand), (right, regions.right_hand)].into_iter().enumerate() {
                if b.unwrap().contains(x, y) {
                    let palm = ellipse(x, y, hand, [1.2, 1.2]);
                    let fingers = (0..3)
                        .map(|f| rect(x, y, [hand[0] - 1.0 + f as f64, hand[1] - 2.2], [0.3, 0.9]))
                        .fold(0.0, f64::max);
                    prior[i + 1 + k] = palm.max(fingers);
                }
            }
        }
    }
    let hands = [left, right]
        .iter()
        .flat_map(|c| [*c, [c[0] - 1.0, c[1] - 2.2], [c[0] + 1.0, c[1] - 2.2]])
        .collect();
    Frame {
        pixels,
        prior,
        regions,
        hands,
    }
}

fn round_f32(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = *x as f32 as f64);
}

/// Stub for a layered speech feature extractor: beat, phase and content channels,
/// mixed by fixed per-layer matrices.
fn audio_features(timeline: &Timeline, frames: usize, r: &mut ChaCha8Rng) -> Result<AudioFeatures> {
    let mut base = vec![0.0; frames * BASE_AUDIO];
    let mut content = [0.0f64; 6];
    for l in 0..frames {
        let t = l as f64;
        let (k, s) = timeline.segment(t);
        let row = &mut base[l * BASE_AUDIO..(l + 1) * BASE_AUDIO];
        row[0] = if timeline.beats.contains(&t) { 1.0 } else { 0.0 };
        row[1] = timeline.mouth(t);
        row[2] = (PI * s).cos();
        row[3] = (PI * s).sin();
        row[4] = if timeline.parity(k) == 0 { 1.0 } else { -1.0 };
        row[5] = s;
        for (c, v) in content.iter_mut().enumerate() {
            *v = 0.7 * *v + 0.3 * r.gen_range(-1.0..1.0);
            row[6 + c] = *v;
        }
    }
    let mut mix = ChaCha8Rng::seed_from_u64(AUDIO_MIX_SEED);
    let mut data = Vec::with_capacity(AUDIO_LAYERS * frames * AUDIO_DIM);
    for layer in 0..AUDIO_LAYERS {
        let m = Tensor::randn(&[BASE_AUDIO, AUDIO_DIM], 1.0 / (BASE_AUDIO as f64).sqrt(), &mut mix);
        let noise = 0.02 * (layer as f64 + 1.0);
        for l in 0..frames {
            for j in 0..AUDIO_DIM {
                let v: f64 = (0..BASE_AUDIO).map(|i| base[l * BASE_AUDIO + i] * m.at2(i, j)).sum();
                data.push(v + noise * r.gen_range(-1.0..1.0));
            }
        }
    }
    round_f32(&mut data);
    AudioFeatures::new(Tensor::new(vec![AUDIO_LAYERS, frames, AUDIO_DIM], data)?)
}

/// Renders `frames` frames of speaker `identity` driven by a seeded beat track.
pub fn generate_session(cfg: &SynthConfig, identity: &Identity, seed: u64, frames: usize) -> Result<Session> {
    if frames == 0 || cfg.height < 24 || cfg.width < 24 || cfg.beat_interval.0 < 3 || cfg.beat_interval.0 > cfg.beat_interval.1 {
        return Err(Error::config("synthetic session needs frames > 0, at least 24x24 pixels and beat spacing >= 3"));
    }
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let timeline = Timeline::new(cfg, frames, &mut r);
    let sway = Sway::new(&mut r);
    let (h, w) = (cfg.height, cfg.width);
    let mut video = Vec::with_capacity(frames * h * w * 3);
    let mut prior = Vec::with_capacity(frames * h * w * 3);
    let mut regions = Vec::with_capacity(frames);
    let mut hands = Vec::with_capacity(frames);
    for f in 0..frames {
        let t = f as f64;
        let (l, rt, nod) = timeline.pose(t);
        let fr = render(cfg, identity, sway.at(t), l, rt, nod, timeline.mouth(t));
        video.extend(fr.pixels);
        prior.extend(fr.prior);
        regions.push(fr.regions);
        hands.push(fr.hands);
    }
    round_f32(&mut video);
    round_f32(&mut prior);
    let rest = [LEFT_POSES[0], [31.0 - LEFT_POSES[0][0], LEFT_POSES[0][1]]];
    let mut neutral = render(cfg, identity, 0.0, rest[0], rest[1], 0.0, 0.0);
    round_f32(&mut neutral.pixels);
    let audio = audio_features(&timeline, frames, &mut r)?;
    let beats = timeline
        .beats
        .iter()
        .filter(|&&b| b >= 0.0 && b < frames as f64)
        .map(|&b| b as usize)
        .collect();
    Ok(Session {
        identity: *identity,
        video: VideoClip::new([frames, h, w, 3], video)?,
        audio,
        beats,
        priors: StructuralPrior::new(VideoClip::new([frames, h, w, 3], prior)?, regions.clone())?,
        regions,
        hands,
        reference: VideoClip::new([1, h, w, 3], neutral.pixels)?,
        reference_face: neutral.regions.face.unwrap(),
    })
}
