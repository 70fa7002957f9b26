use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::codec::{patchify, Codec, CodecConfig, LatentClip, PatchGeometry, Role, VideoClip};
use crate::numerics::{Graph, ParamStore, Tensor};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// The three video geometries exercised at desk scale: `[f, H, W]`.
const GEOMETRIES: [[usize; 3]; 3] = [[16, 32, 32], [8, 16, 16], [16, 32, 48]];

#[test]
fn head_mask_without_boxes_is_headless() {
    let m = build_head_mask(&[None, None], 8, 8, HEAD_MARGIN).unwrap();
    assert!(m.is_headless());
    assert_eq!(m.frames, 2);
}

#[test]
fn static_box_gives_dilated_box_on_every_frame() {
    let b = PixelBox::new(10, 4, 20, 14);
    let m = build_head_mask(&[Some(b); 3], 32, 32, HEAD_MARGIN).unwrap();
    let d = PixelBox::new(9, 3, 21, 15);
    for t in 0..3 {
        for y in 0..32 {
            for x in 0..32 {
                assert_eq!(m.get(t, y, x), d.contains(x, y));
            }
        }
    }
}

#[test]
fn moving_boxes_match_rasterizer() {
    let boxes = [Some(PixelBox::new(2, 3, 9, 11)), None, Some(PixelBox::new(20, 17, 31, 30))];
    let m = build_head_mask(&boxes, 32, 32, 0.2).unwrap();
    // rasterize each dilated box with float edges, pixel centres tested
    let inside = |b: &PixelBox, x: usize, y: usize| {
        let (mx, my) = ((0.2 * b.width() as f64).ceil(), (0.2 * b.height() as f64).ceil());
        let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
        cx > b.x0 as f64 - mx && cx < b.x1 as f64 + mx && cy > b.y0 as f64 - my && cy < b.y1 as f64 + my
    };
    for t in 0..3 {
        for y in 0..32 {
            for x in 0..32 {
                let want = boxes.iter().flatten().any(|b| inside(b, x, y));
                assert_eq!(m.get(t, y, x), want, "({t},{y},{x})");
            }
        }
    }
    assert!(build_head_mask(&[Some(PixelBox::new(0, 0, 33, 4))], 32, 32, 0.1).is_err());
}

#[test]
fn head_mask_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("head.mask");
    let m = build_head_mask(&[Some(PixelBox::new(1, 2, 5, 7)); 3], 9, 11, 0.1).unwrap();
    m.write(&p).unwrap();
    assert_eq!(HeadMask::read(&p).unwrap(), m);
    assert_eq!(std::fs::read(&p).unwrap().len(), 4 + 2 + 12 + (3 * 9 * 11usize).div_ceil(8));
}

fn encoder(c_in: usize, seed: u64) -> (ParamStore, PositionEncoder) {
    let mut store = ParamStore::new();
    let enc = PositionEncoder::new(
        &mut store,
        "hpe",
        c_in,
        &CodecConfig::default(),
        &PatchGeometry::default(),
        &mut rng(seed),
    )
    .unwrap();
    (store, enc)
}

fn run_encoder(store: &ParamStore, enc: &PositionEncoder, x: Tensor) -> Tensor {
    let mut g = Graph::new();
    let xv = g.constant(x);
    let y = enc.forward(&mut g, store, xv).unwrap();
    g.value(y).clone()
}

#[test]
fn zero_mask_encodes_to_zero_tokens() {
    let (store, enc) = encoder(1, 1);
    let t = run_encoder(&store, &enc, Tensor::zeros(&[1, 16, 32, 32]));
    assert_eq!(t.shape(), &[128, 64]);
    assert_eq!(t.max_abs(), 0.0);
}

#[test]
fn full_mask_encodes_to_uniform_tokens() {
    let (store, enc) = encoder(1, 2);
    let t = run_encoder(&store, &enc, Tensor::full(&[1, 16, 32, 32], 1.0));
    assert!(t.max_abs() > 0.0);
    for i in 1..t.rows() {
        for j in 0..t.cols() {
            assert!((t.at2(i, j) - t.at2(0, j)).abs() < 1e-9);
        }
    }
}

#[test]
fn position_encoder_shape_contract_on_all_geometries() {
    let (store, enc) = encoder(1, 3);
    let mut r = rng(4);
    for [f, h, w] in GEOMETRIES {
        let t = run_encoder(&store, &enc, Tensor::uniform(&[1, f, h, w], 0.0, 1.0, &mut r).map(f64::round));
        let sv = (f / 2) * (h / 8) * (w / 8);
        assert_eq!(t.shape(), &[sv, 64]);
    }
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[3, 16, 32, 32]));
    assert!(enc.forward(&mut g, &store, x).is_err());
}

fn fusion(seed: u64) -> (ParamStore, PositionFusion) {
    let mut store = ParamStore::new();
    let f = PositionFusion::new(&mut store, "fuse", 6, &mut rng(seed)).unwrap();
    (store, f)
}

fn run_fusion(store: &ParamStore, f: &PositionFusion, tp: &Tensor, t: &Tensor) -> Tensor {
    let mut g = Graph::new();
    let (a, b) = (g.constant(tp.clone()), g.constant(t.clone()));
    let y = f.forward(&mut g, store, a, b).unwrap();
    g.value(y).clone()
}

#[test]
fn fusion_starts_as_right_half_projection() {
    let (store, f) = fusion(5);
    let mut r = rng(6);
    let tp = Tensor::randn(&[4, 6], 1.0, &mut r);
    let t = Tensor::randn(&[4, 6], 1.0, &mut r);
    assert!(run_fusion(&store, &f, &tp, &t).max_abs_diff(&t) < 1e-15);
}

#[test]
fn fusion_with_zero_left_half_ignores_position_tokens() {
    let (mut store, f) = fusion(7);
    let mut r = rng(8);
    for id in [f.out.w, f.hidden.w, f.skip.w] {
        let w = &mut store.get_mut(id).tensor;
        *w = Tensor::randn(w.shape(), 0.5, &mut r);
    }
    for id in [f.hidden.w, f.skip.w] {
        let w = &mut store.get_mut(id).tensor;
        let cols = w.cols();
        w.data_mut()[..6 * cols].fill(0.0);
    }
    let t = Tensor::randn(&[3, 6], 1.0, &mut r);
    let a = run_fusion(&store, &f, &Tensor::zeros(&[3, 6]), &t);
    let b = run_fusion(&store, &f, &Tensor::randn(&[3, 6], 1.0, &mut r), &t);
    assert_eq!(a, b);
}

#[test]
fn fusion_matches_per_token_oracle() {
    let (mut store, f) = fusion(9);
    let mut r = rng(10);
    let ids: Vec<_> = store.iter().map(|(i, _)| i).collect();
    for id in ids {
        let t = &mut store.get_mut(id).tensor;
        *t = Tensor::randn(t.shape(), 0.4, &mut r);
    }
    let tp = Tensor::randn(&[3, 6], 1.0, &mut r);
    let t = Tensor::randn(&[3, 6], 1.0, &mut r);
    let got = run_fusion(&store, &f, &tp, &t);
    let (ws, w1, b1, w2, b2) = (
        store.tensor(f.skip.w),
        store.tensor(f.hidden.w),
        store.tensor(f.hidden.b.unwrap()),
        store.tensor(f.out.w),
        store.tensor(f.out.b.unwrap()),
    );
    let gelu = |x: f64| 0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh());
    for i in 0..3 {
        let cat: Vec<f64> = tp.row(i).iter().chain(t.row(i)).copied().collect();
        let hidden: Vec<f64> = (0..24).map(|k| gelu(b1.data()[k] + (0..12).map(|j| cat[j] * w1.at2(j, k)).sum::<f64>())).collect();
        for o in 0..6 {
            let skip: f64 = (0..12).map(|j| cat[j] * ws.at2(j, o)).sum();
            let mlp: f64 = b2.data()[o] + (0..24).map(|k| hidden[k] * w2.at2(k, o)).sum::<f64>();
            assert!((got.at2(i, o) - skip - mlp).abs() < 1e-12);
        }
    }
    let mut g = Graph::new();
    let (a, b) = (g.constant(Tensor::zeros(&[2, 6])), g.constant(Tensor::zeros(&[3, 6])));
    assert!(f.forward(&mut g, &store, a, b).is_err());
}

#[test]
fn gate_extremes() {
    let g = PatchGeometry::default();
    let zero = HeadMask::empty(16, 32, 32);
    assert_eq!(derive_sequential_gate(&zero, &g, 2, 4).unwrap().active(), 0);
    let full = build_head_mask(&[Some(PixelBox::new(0, 0, 32, 32)); 16], 32, 32, 0.0).unwrap();
    let gate = derive_sequential_gate(&full, &g, 2, 4).unwrap();
    assert_eq!(gate.len(), 128);
    assert_eq!(gate.active(), 128);
}

/// Overlap fraction of patch `s`, computed pixel-block by pixel-block.
fn overlap_oracle(mask: &HeadMask, s: usize) -> f64 {
    // latent grid 8x8 per latent frame, patch 2x2 cells, cell = 2 frames x 4x4 pixels
    let (t, py, px) = (s / 16, (s / 4) % 4, s % 4);
    let mut hits = 0;
    for cy in 0..2 {
        for cx in 0..2 {
            let mut any = false;
            for dt in 0..2 {
                for y in 0..4 {
                    for x in 0..4 {
                        any |= mask.get(2 * t + dt, (2 * py + cy) * 4 + y, (2 * px + cx) * 4 + x);
                    }
                }
            }
            hits += any as usize;
        }
    }
    hits as f64 / 4.0
}

#[test]
fn box_covering_one_patch_gates_only_that_token() {
    let g = PatchGeometry::default();
    let m = build_head_mask(&[Some(PixelBox::new(8, 16, 16, 24)); 16], 32, 32, 0.0).unwrap();
    let gate = derive_sequential_gate(&m, &g, 2, 4).unwrap();
    for s in 0..128 {
        let want = if s % 16 == 2 * 4 + 1 { 1.0 } else { 0.0 };
        assert_eq!(gate.0[s], want, "token {s}");
        assert_eq!(overlap_oracle(&m, s), want);
    }
}

#[test]
fn gate_agrees_with_overlap_threshold_exhaustively() {
    let g = PatchGeometry::default();
    let mut r = rng(11);
    for _ in 0..40 {
        let boxes: Vec<_> = (0..16)
            .map(|_| {
                let x0 = r.gen_range(0..30);
                let y0 = r.gen_range(0..30);
                Some(PixelBox::new(x0, y0, r.gen_range(x0 + 1..=32), r.gen_range(y0 + 1..=32)))
            })
            .collect();
        let m = build_head_mask(&boxes, 32, 32, HEAD_MARGIN).unwrap();
        let gate = derive_sequential_gate(&m, &g, 2, 4).unwrap();
        for s in 0..128 {
            let frac = overlap_oracle(&m, s);
            assert_eq!(gate.0[s] == 1.0, frac >= GATE_THRESHOLD);
        }
    }
}

fn random_clip(dims: [usize; 4], seed: u64) -> VideoClip {
    let mut r = rng(seed);
    VideoClip::new(dims, (0..dims.iter().product::<usize>()).map(|_| r.gen()).collect()).unwrap()
}

fn embed_matrix(seed: u64) -> Tensor {
    Tensor::randn(&[32, 64], 0.2, &mut rng(seed))
}

#[test]
fn motion_tokens_absent_when_m_is_zero() {
    let codec = Codec::new(CodecConfig::default()).unwrap();
    let t = build_motion_tokens(None, 0, &codec, &PatchGeometry::default(), &embed_matrix(1)).unwrap();
    assert!(t.is_none());
    assert!(build_motion_tokens(None, 4, &codec, &PatchGeometry::default(), &embed_matrix(1)).is_err());
}

#[test]
fn motion_tokens_share_the_video_path() {
    let codec = Codec::new(CodecConfig::default()).unwrap();
    let g = PatchGeometry::default();
    let w = embed_matrix(2);
    let clip = random_clip([16, 32, 32, 3], 3);
    let video = patchify(&codec.encode(&clip).unwrap(), &g, &w).unwrap();
    let prev = clip.slice_frames(0, 4).unwrap();
    let motion = build_motion_tokens(Some(&prev), 4, &codec, &g, &w).unwrap().unwrap();
    assert_eq!(motion.count(Role::Motion), 32);
    assert_eq!(motion.tokens, video.tokens.slice_rows(0, 32).unwrap());
    assert!(build_motion_tokens(Some(&prev), 2, &codec, &g, &w).is_err());
}

#[test]
fn motion_token_counts_on_all_geometries() {
    let codec = Codec::new(CodecConfig::default()).unwrap();
    let g = PatchGeometry::default();
    for [_, h, w] in GEOMETRIES {
        for m in [2usize, 4, 6] {
            let prev = VideoClip::filled([m, h, w, 3], 0.3).unwrap();
            let t = build_motion_tokens(Some(&prev), m, &codec, &g, &embed_matrix(0)).unwrap().unwrap();
            assert_eq!(t.len(), (m / 2) * (h / 8) * (w / 8));
        }
    }
}

#[test]
fn motion_dropout_rates() {
    let z = LatentClip::new(Tensor::zeros(&[1, 1, 1, 1]), 1, 1).unwrap();
    let present = MotionLatent(Some(z));
    let mut r = rng(12);
    assert_eq!(present.clone().dropout(0.0, &mut r).unwrap(), present);
    assert!(!present.clone().dropout(1.0, &mut r).unwrap().is_present());
    assert!(present.clone().dropout(1.5, &mut r).is_err());
    let mut r = rng(13);
    let drops = (0..10_000).filter(|_| !present.clone().dropout(MOTION_DROPOUT, &mut r).unwrap().is_present()).count();
    let freq = drops as f64 / 10_000.0;
    assert!((0.48..=0.52).contains(&freq), "{freq}");
    // same seed, same decisions
    let a: Vec<bool> = {
        let mut r = rng(14);
        (0..50).map(|_| present.clone().dropout(0.5, &mut r).unwrap().is_present()).collect()
    };
    let b: Vec<bool> = {
        let mut r = rng(14);
        (0..50).map(|_| present.clone().dropout(0.5, &mut r).unwrap().is_present()).collect()
    };
    assert_eq!(a, b);
}

fn projection(seed: u64) -> (ParamStore, AudioProjection) {
    let mut store = ParamStore::new();
    let p = AudioProjection::new(&mut store, "audio", AUDIO_DIM, 16, &mut rng(seed)).unwrap();
    (store, p)
}

fn run_projection(store: &ParamStore, p: &AudioProjection, f: &AudioFeatures) -> Tensor {
    let mut g = Graph::new();
    let y = p.forward(&mut g, store, f).unwrap();
    g.value(y).clone()
}

#[test]
fn audio_requires_twelve_layers() {
    assert!(AudioFeatures::new(Tensor::zeros(&[11, 4, AUDIO_DIM])).is_err());
    assert!(AudioFeatures::new(Tensor::zeros(&[12, 4, AUDIO_DIM])).is_ok());
}

#[test]
fn identical_layers_reduce_to_single_layer_projection() {
    let (store, p) = projection(15);
    let plane = Tensor::randn(&[5, AUDIO_DIM], 1.0, &mut rng(16));
    let feats = AudioFeatures::new(Tensor::new(vec![12, 5, AUDIO_DIM], plane.data().repeat(12)).unwrap()).unwrap();
    let got = run_projection(&store, &p, &feats);
    let mut want = plane.matmul(store.tensor(p.proj.w)).unwrap();
    for i in 0..5 {
        for j in 0..16 {
            want.data_mut()[i * 16 + j] += store.tensor(p.proj.b.unwrap()).data()[j];
        }
    }
    assert!(got.max_abs_diff(&want) < 1e-12);
}

#[test]
fn audio_projection_matches_weighted_sum_oracle() {
    let (mut store, p) = projection(17);
    let mut r = rng(18);
    store.get_mut(p.layer_logits).tensor = Tensor::randn(&[1, 12], 1.0, &mut r);
    let feats = AudioFeatures::new(Tensor::randn(&[12, 4, AUDIO_DIM], 1.0, &mut r)).unwrap();
    let got = run_projection(&store, &p, &feats);
    let logits = store.tensor(p.layer_logits).data().to_vec();
    let z: f64 = logits.iter().map(|v| v.exp()).sum();
    let w = store.tensor(p.proj.w);
    for l in 0..4 {
        let mut mixed = [0.0; AUDIO_DIM];
        for (k, m) in mixed.iter_mut().enumerate() {
            for layer in 0..12 {
                *m += logits[layer].exp() / z * feats.tensor().data()[(layer * 4 + l) * AUDIO_DIM + k];
            }
        }
        for e in 0..16 {
            let want: f64 = (0..AUDIO_DIM).map(|k| mixed[k] * w.at2(k, e)).sum();
            assert!((got.at2(l, e) - want).abs() < 1e-12);
        }
    }
}

#[test]
fn audio_features_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("audio.feat");
    let f = AudioFeatures::new(Tensor::randn(&[12, 3, AUDIO_DIM], 1.0, &mut rng(19)).map(|v| v as f32 as f64)).unwrap();
    f.write(&p).unwrap();
    assert_eq!(AudioFeatures::read(&p).unwrap(), f);
    assert_eq!(&std::fs::read(&p).unwrap()[..4], b"AFEA");
}

#[test]
fn appearance_tokens() {
    let codec = Codec::new(CodecConfig::default()).unwrap();
    let g = PatchGeometry::default();
    let w = embed_matrix(20);
    let zero = VideoClip::filled([1, 32, 32, 3], 0.0).unwrap();
    let r = extract_appearance_tokens(&zero, &codec, &g, &w).unwrap();
    assert_eq!(r.tokens.max_abs(), 0.0);
    assert_eq!(r.len(), 16);
    assert_eq!(r.count(Role::Appearance), 16);

    // a clip whose first temporal block is a held frame
    let first = random_clip([1, 32, 32, 3], 21);
    let rest = random_clip([14, 32, 32, 3], 22);
    let clip = VideoClip::concat_frames(&[&first, &first, &rest]).unwrap();
    let video = patchify(&codec.encode(&clip).unwrap(), &g, &w).unwrap();
    let r = extract_appearance_tokens(&clip.frame(0).unwrap(), &codec, &g, &w).unwrap();
    assert_eq!(r.tokens, video.tokens.slice_rows(0, 16).unwrap());
    assert!(extract_appearance_tokens(&clip, &codec, &g, &w).is_err());
    for [_, h, wd] in GEOMETRIES {
        let f = VideoClip::filled([1, h, wd, 3], 0.2).unwrap();
        assert_eq!(extract_appearance_tokens(&f, &codec, &g, &w).unwrap().len(), (h / 8) * (wd / 8));
    }
}

#[test]
fn identity_tokens_are_deterministic_unit_rows() {
    let e = IdentityEmbedder::new(5);
    let frame = random_clip([1, 32, 32, 3], 23);
    let head = PixelBox::new(10, 2, 22, 14);
    let a = e.embed(&frame, &head).unwrap();
    let b = IdentityEmbedder::new(5).embed(&frame, &head).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.tokens.shape(), &[16, ID_DIM]);
    for i in 0..16 {
        let n: f64 = a.tokens.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-9);
    }
    assert!(e.embed(&frame, &PixelBox::new(3, 3, 3, 9)).is_err());
}

proptest! {
    #[test]
    fn audio_projection_is_shift_equivariant(seed in 0u64..200, k in 1usize..4) {
        let (store, p) = projection(seed);
        let mut r = rng(seed + 1);
        let feats = AudioFeatures::new(Tensor::randn(&[12, 8, AUDIO_DIM], 1.0, &mut r)).unwrap();
        let full = run_projection(&store, &p, &feats);
        let shifted = run_projection(&store, &p, &feats.slice_steps(k, 8 - k).unwrap());
        prop_assert!(shifted.max_abs_diff(&full.slice_rows(k, 8 - k).unwrap()) < 1e-12);
    }
}
