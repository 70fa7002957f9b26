use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{generate_session, Identity, Session, SynthConfig};
use crate::codec::VideoClip;
use crate::conditioning::{build_head_mask, AudioFeatures, HeadMask, PixelBox, HEAD_MARGIN};
use crate::error::{Error, Result};
use crate::r2_dit::{RegionBoxes, StructuralPrior};

/// Ground truth that travels with a bundle as `key=value` text.
#[derive(Clone, Debug, PartialEq)]
pub struct BundleMeta {
    pub fps: f64,
    pub identity: u64,
    pub session_seed: u64,
    /// First frame of the clip inside its session.
    pub start: usize,
    pub skin: [f64; 3],
    /// Beat frames relative to the clip start.
    pub beats: Vec<usize>,
    pub regions: Vec<RegionBoxes>,
    pub hands: Vec<Vec<[f64; 2]>>,
    pub reference_face: PixelBox,
}

/// One training/evaluation sample.
#[derive(Clone, Debug)]
pub struct ClipBundle {
    pub clip: VideoClip,
    /// The `M` frames before the clip; absent at a session start.
    pub prev: Option<VideoClip>,
    pub reference: VideoClip,
    pub audio: AudioFeatures,
    pub head_mask: HeadMask,
    pub priors: StructuralPrior,
    pub meta: BundleMeta,
}

pub const BUNDLE_FILES: [&str; 7] = ["clip.aclp", "prev.aclp", "ref.aclp", "audio.feat", "head.mask", "priors.aclp", "meta"];

impl ClipBundle {
    /// Cuts `[start, start + len)` out of a session with `m` context frames before it.
    pub fn from_session(s: &Session, session_seed: u64, fps: f64, start: usize, len: usize, m: usize) -> Result<Self> {
        if start + len > s.frames() || len == 0 {
            return Err(Error::invalid(format!("clip {start}+{len} outside a {}-frame session", s.frames())));
        }
        let regions = s.regions[start..start + len].to_vec();
        let faces: Vec<Option<PixelBox>> = regions.iter().map(|r| r.face).collect();
        let [_, h, w, _] = s.video.dims();
        Ok(ClipBundle {
            clip: s.video.slice_frames(start, len)?,
            prev: if m > 0 && start >= m { Some(s.video.slice_frames(start - m, m)?) } else { None },
            reference: s.reference.clone(),
            audio: s.audio.slice_steps(start, len)?,
            head_mask: build_head_mask(&faces, h, w, HEAD_MARGIN)?,
            priors: s.priors.slice_frames(start, len)?,
            meta: BundleMeta {
                fps,
                identity: s.identity.id,
                session_seed,
                start,
                skin: s.identity.skin,
                beats: s.beats.iter().filter(|&&b| b >= start && b < start + len).map(|b| b - start).collect(),
                regions,
                hands: s.hands[start..start + len].to_vec(),
                reference_face: s.reference_face,
            },
        })
    }

    pub fn frames(&self) -> usize {
        self.clip.frames()
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        self.clip.write(dir.join("clip.aclp"))?;
        let prev = match &self.prev {
            Some(p) => p.clone(),
            None => VideoClip::filled([0, self.clip.height(), self.clip.width(), self.clip.channels()], 0.0)?,
        };
        prev.write(dir.join("prev.aclp"))?;
        self.reference.write(dir.join("ref.aclp"))?;
        self.audio.write(dir.join("audio.feat"))?;
        self.head_mask.write(dir.join("head.mask"))?;
        self.priors.clip.write(dir.join("priors.aclp"))?;
        fs::write(dir.join("meta"), self.meta.to_text())?;
        Ok(())
    }

    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta = BundleMeta::parse(&fs::read_to_string(dir.join("meta"))?)?;
        let prev = VideoClip::read(dir.join("prev.aclp"))?;
        Ok(ClipBundle {
            clip: VideoClip::read(dir.join("clip.aclp"))?,
            prev: (prev.frames() > 0).then_some(prev),
            reference: VideoClip::read(dir.join("ref.aclp"))?,
            audio: AudioFeatures::read(dir.join("audio.feat"))?,
            head_mask: HeadMask::read(dir.join("head.mask"))?,
            priors: StructuralPrior::new(VideoClip::read(dir.join("priors.aclp"))?, meta.regions.clone())?,
            meta,
        })
    }
}

fn fmt_box(b: &Option<PixelBox>) -> String {
    match b {
        Some(b) => format!("{},{},{},{}", b.x0, b.y0, b.x1, b.y1),
        None => "-".into(),
    }
}

fn parse_box(s: &str) -> Result<Option<PixelBox>> {
    if s == "-" {
        return Ok(None);
    }
    let v = parse_list::<usize>(s, ',')?;
    match v[..] {
        [x0, y0, x1, y1] => Ok(Some(PixelBox::new(x0, y0, x1, y1))),
        _ => Err(Error::format(format!("bad box {s:?}"))),
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, sep: char) -> Result<Vec<T>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(sep)
        .map(|p| p.trim().parse::<T>().map_err(|_| Error::format(format!("bad value {p:?}"))))
        .collect()
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (k, v) = line.split_once('=').ok_or_else(|| Error::format(format!("expected key=value, got {line:?}")))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

impl BundleMeta {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "fps={}", self.fps);
        let _ = writeln!(s, "frames={}", self.regions.len());
        let _ = writeln!(s, "identity={}", self.identity);
        let _ = writeln!(s, "session_seed={}", self.session_seed);
        let _ = writeln!(s, "start={}", self.start);
        let _ = writeln!(s, "skin={},{},{}", self.skin[0], self.skin[1], self.skin[2]);
        let beats: Vec<String> = self.beats.iter().map(|b| b.to_string()).collect();
        let _ = writeln!(s, "beats={}", beats.join(","));
        let _ = writeln!(s, "reference_face={}", fmt_box(&Some(self.reference_face)));
        for (t, r) in self.regions.iter().enumerate() {
            let _ = writeln!(s, "face.{t}={}", fmt_box(&r.face));
            let _ = writeln!(s, "left.{t}={}", fmt_box(&r.left_hand));
            let _ = writeln!(s, "right.{t}={}", fmt_box(&r.right_hand));
        }
        for (t, pts) in self.hands.iter().enumerate() {
            let p: Vec<String> = pts.iter().map(|p| format!("{},{}", p[0], p[1])).collect();
            let _ = writeln!(s, "hands.{t}={}", p.join(";"));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = parse_key_values(text)?;
        let get = |k: &str| kv.get(k).ok_or_else(|| Error::format(format!("meta is missing {k}")));
        let num = |k: &str| -> Result<u64> { get(k)?.parse().map_err(|_| Error::format(format!("bad {k}"))) };
        let frames = num("frames")? as usize;
        let skin = parse_list::<f64>(get("skin")?, ',')?;
        if skin.len() != 3 {
            return Err(Error::format("skin needs three values"));
        }
        let mut regions = Vec::with_capacity(frames);
        let mut hands = Vec::with_capacity(frames);
        for t in 0..frames {
            regions.push(RegionBoxes {
                face: parse_box(get(&format!("face.{t}"))?)?,
                left_hand: parse_box(get(&format!("left.{t}"))?)?,
                right_hand: parse_box(get(&format!("right.{t}"))?)?,
            });
            let pts = get(&format!("hands.{t}"))?
                .split(';')
                .map(|p| match parse_list::<f64>(p, ',')?[..] {
                    [x, y] => Ok([x, y]),
                    _ => Err(Error::format(format!("bad hand point {p:?}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            hands.push(pts);
        }
        Ok(BundleMeta {
            fps: get("fps")?.parse().map_err(|_| Error::format("bad fps"))?,
            identity: num("identity")?,
            session_seed: num("session_seed")?,
            start: num("start")? as usize,
            skin: [skin[0], skin[1], skin[2]],
            beats: parse_list(get("beats")?, ',')?,
            regions,
            hands,
            reference_face: parse_box(get("reference_face")?)?.ok_or_else(|| Error::format("reference_face is empty"))?,
        })
    }
}

/// Seeds of the `i`-th clip of a dataset.
pub fn clip_seeds(seed: u64, i: usize, identities: usize) -> (u64, u64) {
    let identity = (i % identities.max(1)) as u64 + seed.wrapping_mul(1000);
    let session = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64 * 7919 + 1);
    (identity, session)
}

/// Options for [`synth_dataset`].
#[derive(Clone, Copy, Debug)]
pub struct DatasetSpec {
    pub clips: usize,
    /// Chunks per clip; every clip is `chunks * chunk_frames` long.
    pub chunks: usize,
    pub chunk_frames: usize,
    pub motion_frames: usize,
    /// Distinct speakers cycled over the clips.
    pub identities: usize,
    pub seed: u64,
}

/// Generates one bundle per clip; each clip starts `motion_frames` into its session.
pub fn synth_bundles(cfg: &SynthConfig, spec: &DatasetSpec) -> Result<Vec<ClipBundle>> {
    synth_split(cfg, spec, spec.seed)
}

/// Same speakers as `spec`, new sessions drawn from `split_seed`.
///
/// `split_seed == spec.seed` reproduces [`synth_bundles`]; any other value gives
/// held-out clips of the training speakers.
pub fn synth_split(cfg: &SynthConfig, spec: &DatasetSpec, split_seed: u64) -> Result<Vec<ClipBundle>> {
    let len = spec.chunks * spec.chunk_frames;
    let make = |i: usize| {
        let (id, _) = clip_seeds(spec.seed, i, spec.identities);
        let (_, seed) = clip_seeds(split_seed, i, spec.identities);
        let s = generate_session(cfg, &Identity::new(id), seed, spec.motion_frames + len)?;
        ClipBundle::from_session(&s, seed, cfg.fps, spec.motion_frames, len, spec.motion_frames)
    };
    crate::parallel::map_indexed(spec.clips, make)
}

/// Writes `clip_NNNN/` bundle directories under `out`.
pub fn write_dataset(out: impl AsRef<Path>, bundles: &[ClipBundle]) -> Result<Vec<PathBuf>> {
    let out = out.as_ref();
    fs::create_dir_all(out)?;
    let mut dirs = Vec::with_capacity(bundles.len());
    for (i, b) in bundles.iter().enumerate() {
        let d = out.join(format!("clip_{i:04}"));
        b.write(&d)?;
        dirs.push(d);
    }
    Ok(dirs)
}

/// Every `clip_*` bundle directory under `dir`, in name order.
pub fn list_bundles(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir.as_ref())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.file_name().map_or(false, |n| n.to_string_lossy().starts_with("clip_")))
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::invalid(format!("no clip_* bundles under {}", dir.as_ref().display())));
    }
    Ok(dirs)
}

/// Reads every bundle of [`list_bundles`].
pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Vec<ClipBundle>> {
    list_bundles(dir)?.iter().map(ClipBundle::read).collect()
}
