use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random_clip(dims: [usize; 4], seed: u64) -> VideoClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..dims.iter().product::<usize>()).map(|_| rng.gen::<f64>()).collect();
    VideoClip::new(dims, data).unwrap()
}

fn small_config() -> CodecConfig {
    CodecConfig {
        r_t: 2,
        r_s: 2,
        c_img: 3,
        c_z: 5,
        seed: 3,
    }
}

#[test]
fn projection_rows_are_orthonormal_and_start_with_channel_means() {
    let codec = Codec::new(CodecConfig::default()).unwrap();
    let p = codec.projection();
    let gram = p.matmul(&p.transpose().unwrap()).unwrap();
    assert!(gram.max_abs_diff(&Tensor::eye(8)) < 1e-12);
    let n = 2.0 * 4.0 * 4.0;
    for i in 0..96 {
        let want = if i % 3 == 0 { 1.0 / f64::sqrt(n) } else { 0.0 };
        assert_eq!(p.at2(0, i), want);
    }
}

#[test]
fn constant_clip_round_trips_exactly() {
    let codec = Codec::new(CodecConfig::default()).unwrap();
    let v = VideoClip::filled([16, 32, 32, 3], 0.5).unwrap();
    let z = codec.encode(&v).unwrap();
    assert_eq!(z.dims(), [8, 8, 8, 8]);
    for cell in z.data().chunks(8) {
        assert!((cell[0] - z.data()[0]).abs() < 1e-12);
    }
    let back = codec.decode(&z).unwrap();
    for (a, b) in back.data().iter().zip(v.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn identity_configuration_copies_pixels() {
    let cfg = CodecConfig {
        r_t: 1,
        r_s: 1,
        c_img: 3,
        c_z: 3,
        seed: 0,
    };
    let codec = Codec::new(cfg).unwrap();
    assert_eq!(codec.projection(), &Tensor::eye(3));
    let v = random_clip([2, 4, 4, 3], 1);
    let z = codec.encode(&v).unwrap();
    assert_eq!(z.data(), v.data());
    assert_eq!(codec.decode(&z).unwrap(), v);
}

/// Decode(encode(v)) against an explicit per-block `P^T P v` computed with loops.
#[test]
fn round_trip_matches_blockwise_projection_oracle() {
    let cfg = small_config();
    let codec = Codec::new(cfg).unwrap();
    let v = random_clip([4, 6, 4, 3], 2);
    let out = codec.decode(&codec.encode(&v).unwrap()).unwrap();
    let p = codec.projection();
    let b = cfg.block_len();
    for tb in 0..2 {
        for yb in 0..3 {
            for xb in 0..2 {
                let mut block = vec![0.0; b];
                let mut coords = Vec::new();
                for dt in 0..2 {
                    for dy in 0..2 {
                        for dx in 0..2 {
                            for c in 0..3 {
                                let at = (tb * 2 + dt, yb * 2 + dy, xb * 2 + dx, c);
                                block[coords.len()] = v.get(at.0, at.1, at.2, at.3);
                                coords.push(at);
                            }
                        }
                    }
                }
                for (i, at) in coords.iter().enumerate() {
                    let mut s = 0.0;
                    for k in 0..cfg.c_z {
                        let mut zk = 0.0;
                        for j in 0..b {
                            zk += p.at2(k, j) * block[j];
                        }
                        s += p.at2(k, i) * zk;
                    }
                    let got = out.get(at.0, at.1, at.2, at.3);
                    assert!((got - s.clamp(0.0, 1.0)).abs() < 1e-10);
                }
            }
        }
    }
}

#[test]
fn decode_preserves_block_means() {
    let cfg = small_config();
    let codec = Codec::new(cfg).unwrap();
    // values kept away from the clamp bounds by a mild contrast
    let v = random_clip([2, 2, 2, 3], 5);
    let squeezed = VideoClip::new(v.dims(), v.data().iter().map(|x| 0.45 + 0.1 * x).collect()).unwrap();
    let out = codec.decode(&codec.encode(&squeezed).unwrap()).unwrap();
    for c in 0..3 {
        let mean = |clip: &VideoClip| clip.data().iter().skip(c).step_by(3).sum::<f64>() / 8.0;
        assert!((mean(&out) - mean(&squeezed)).abs() < 1e-12);
    }
}

#[test]
fn codec_rejects_indivisible_and_mismatched_inputs() {
    let codec = Codec::new(CodecConfig::default()).unwrap();
    assert!(codec.encode(&VideoClip::filled([3, 32, 32, 3], 0.1).unwrap()).is_err());
    assert!(codec.encode(&VideoClip::filled([2, 30, 32, 3], 0.1).unwrap()).is_err());
    let wrong = LatentClip::new(Tensor::zeros(&[1, 1, 1, 4]), 2, 4).unwrap();
    assert!(matches!(codec.decode(&wrong), Err(Error::Shape { .. })));
    assert!(Codec::with_projection(small_config(), Tensor::zeros(&[5, 24])).is_err());
}

#[test]
fn encode_is_temporally_causal() {
    let codec = Codec::new(CodecConfig::default()).unwrap();
    let v = random_clip([8, 8, 8, 3], 6);
    let z = codec.encode(&v).unwrap();
    for t in 0..8 {
        let mut data = v.data().to_vec();
        for x in &mut data[t * 192..(t + 1) * 192] {
            *x = 1.0 - *x;
        }
        let zp = codec.encode(&VideoClip::new(v.dims(), data).unwrap()).unwrap();
        let block = t / 2;
        let n = 2 * 2 * 8;
        assert_eq!(z.data()[..block * n], zp.data()[..block * n]);
        assert_ne!(z.data()[block * n..(block + 1) * n], zp.data()[block * n..(block + 1) * n]);
    }
}

#[test]
fn patchify_token_count() {
    let g = PatchGeometry::default();
    let z = LatentClip::new(Tensor::zeros(&[2, 4, 4, 8]), 2, 4).unwrap();
    let t = patchify(&z, &g, &Tensor::zeros(&[32, 64])).unwrap();
    assert_eq!(t.len(), 8);
    assert_eq!(t.count(Role::Video), 8);
    assert_eq!(g.validate([8, 8, 8, 8]).unwrap(), 128);
}

#[test]
fn identity_embedding_yields_flattened_patch() {
    let g = PatchGeometry {
        p_t: 1,
        p_h: 2,
        p_w: 2,
        embed_dim: 8,
    };
    let z = Tensor::new(vec![1, 2, 2, 2], (0..8).map(f64::from).collect()).unwrap();
    let z = LatentClip::new(z, 1, 1).unwrap();
    let t = patchify(&z, &g, &Tensor::eye(8)).unwrap();
    assert_eq!(t.tokens.data(), &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
}

#[test]
fn impulse_lands_on_documented_token() {
    let g = PatchGeometry::default();
    let dims = [4, 6, 8, 2];
    let grid = g.grid(dims).unwrap();
    let pd = g.patch_dim(2);
    for (t, y, x, c) in [(0, 0, 0, 0), (3, 5, 7, 1), (1, 2, 5, 0), (2, 3, 1, 1)] {
        let mut z = Tensor::zeros(&dims);
        z.data_mut()[((t * 6 + y) * 8 + x) * 2 + c] = 1.0;
        let tok = patchify(&LatentClip::new(z, 1, 1).unwrap(), &PatchGeometry { embed_dim: pd, ..g }, &Tensor::eye(pd)).unwrap();
        let s = (t * 3 + y / 2) * 4 + x / 2;
        let within = ((y % 2) * 2 + x % 2) * 2 + c;
        let hot: Vec<usize> = (0..tok.tokens.len()).filter(|&i| tok.tokens.data()[i] != 0.0).collect();
        assert_eq!(hot, vec![s * pd + within]);
        assert_eq!(g.position(s, grid), [t, y / 2, x / 2]);
    }
}

#[test]
fn unpatchify_rejects_foreign_roles_and_counts() {
    let g = PatchGeometry {
        embed_dim: 4,
        ..PatchGeometry::default()
    };
    let mut toks = TokenSeq::new(Tensor::zeros(&[4, 4]), Role::Video).unwrap();
    assert!(unpatchify(&toks, &g, &Tensor::eye(4), [1, 4, 4, 1], (1, 1)).is_ok());
    assert!(unpatchify(&toks, &g, &Tensor::eye(4), [2, 4, 4, 1], (1, 1)).is_err());
    toks.roles[1] = Role::Audio;
    assert!(unpatchify(&toks, &g, &Tensor::eye(4), [1, 4, 4, 1], (1, 1)).is_err());
}

#[test]
fn clip_file_round_trip_and_bad_magic() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.aclp");
    let v = random_clip([2, 4, 4, 3], 9);
    v.write(&path).unwrap();
    let back = VideoClip::read(&path).unwrap();
    for (a, b) in back.data().iter().zip(v.data()) {
        assert_eq!(*a, *b as f32 as f64);
    }
    back.write(&path).unwrap();
    assert_eq!(VideoClip::read(&path).unwrap(), back);
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], b"ACLP");
    assert_eq!(bytes.len(), 4 + 2 + 16 + 4 * 96);
    std::fs::write(&path, b"XXXX").unwrap();
    assert!(matches!(VideoClip::read(&path), Err(Error::Format(_))));
}

/// Full 12x12 codec basis: one mean row plus eleven seeded Gram-Schmidt rows.
fn orthonormal(seed: u64) -> Tensor {
    let cfg = CodecConfig {
        r_t: 3,
        r_s: 2,
        c_img: 1,
        c_z: 12,
        seed,
    };
    Codec::new(cfg).unwrap().projection().clone()
}

proptest! {
    #[test]
    fn patchify_round_trip_is_exact(seed in 0u64..500, gt in 1usize..3, gh in 1usize..3, gw in 1usize..3) {
        let g = PatchGeometry { p_t: 1, p_h: 2, p_w: 2, embed_dim: 12 };
        let dims = [gt, 2 * gh, 2 * gw, 3];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = LatentClip::new(Tensor::randn(&dims, 1.0, &mut rng), 1, 1).unwrap();
        let q = orthonormal(seed);
        let toks = patchify(&z, &g, &q).unwrap();
        let back = unpatchify(&toks, &g, &q.transpose().unwrap(), dims, (1, 1)).unwrap();
        prop_assert!(back.tensor().max_abs_diff(z.tensor()) < 1e-10);
    }
}
