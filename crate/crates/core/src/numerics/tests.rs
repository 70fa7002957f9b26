use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn naive_matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, k, m) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = Tensor::zeros(&[n, m]);
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for p in 0..k {
                s += a.at2(i, p) * b.at2(p, j);
            }
            out.data_mut()[i * m + j] = s;
        }
    }
    out
}

#[test]
fn matmul_identity_and_permutation() {
    let i3 = Tensor::eye(3);
    assert_eq!(i3.matmul(&i3).unwrap(), i3);
    let a = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
    let p = Tensor::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
    let want = Tensor::from_rows(&[&[2.0, 1.0], &[4.0, 3.0]]).unwrap();
    assert_eq!(a.matmul(&p).unwrap(), want);
}

#[test]
fn matmul_matches_triple_loop() {
    let mut r = rng(1);
    let a = Tensor::randn(&[4, 5], 1.0, &mut r);
    let b = Tensor::randn(&[5, 3], 1.0, &mut r);
    assert!(a.matmul(&b).unwrap().max_abs_diff(&naive_matmul(&a, &b)) < 1e-12);
}

#[test]
fn matmul_shape_error_names_both_shapes() {
    let a = Tensor::zeros(&[2, 3]);
    let b = Tensor::zeros(&[2, 3]);
    let msg = a.matmul(&b).unwrap_err().to_string();
    assert!(msg.contains("[2, 3]"), "{msg}");
}

#[test]
fn softmax_cases() {
    let s = Tensor::new(vec![3], vec![0.0; 3]).unwrap().softmax_rows().unwrap();
    for v in s.data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
    let s = Tensor::new(vec![2], vec![1000.0, 0.0]).unwrap().softmax_rows().unwrap();
    assert!(s.all_finite());
    assert!((s.data()[0] - 1.0).abs() < 1e-15 && s.data()[1] < 1e-300);
    assert!(Tensor::zeros(&[2, 0]).softmax_rows().is_err());
}

#[test]
fn softmax_matches_direct_formula() {
    let mut r = rng(2);
    let x = Tensor::randn(&[3, 4], 2.0, &mut r);
    let s = x.softmax_rows().unwrap();
    for i in 0..3 {
        // direct exp/sum on the raw row; magnitudes are small enough not to overflow
        let row = x.row(i);
        let z: f64 = row.iter().map(|v| v.exp()).sum();
        for j in 0..4 {
            assert!((s.at2(i, j) - row[j].exp() / z).abs() < 1e-14);
        }
        assert!((s.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn layernorm_cases() {
    let gain = Tensor::full(&[4], 1.0);
    let bias = Tensor::zeros(&[4]);
    let c = Tensor::full(&[1, 4], 3.5).layernorm(&gain, &bias, 1e-5).unwrap();
    assert!(c.max_abs() == 0.0);

    let g2 = Tensor::full(&[2], 1.0);
    let b2 = Tensor::zeros(&[2]);
    let x = Tensor::new(vec![1, 2], vec![1.0, -1.0]).unwrap();
    let y = x.layernorm(&g2, &b2, 1e-5).unwrap();
    // variance 1, so only eps perturbs the result
    assert!(y.max_abs_diff(&x) < 1e-5);

    let mut r = rng(3);
    let x = Tensor::randn(&[1, 8], 1.0, &mut r);
    let gain = Tensor::randn(&[8], 1.0, &mut r);
    let bias = Tensor::randn(&[8], 1.0, &mut r);
    let y = x.layernorm(&gain, &bias, 1e-5).unwrap();
    let mean = x.data().iter().sum::<f64>() / 8.0;
    let var = x.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
    for j in 0..8 {
        let want = (x.data()[j] - mean) / (var + 1e-5).sqrt() * gain.data()[j] + bias.data()[j];
        assert!((y.data()[j] - want).abs() < 1e-12);
    }
    assert!(Tensor::zeros(&[1, 0]).layernorm(&Tensor::zeros(&[0]), &Tensor::zeros(&[0]), 1e-5).is_err());
}

#[test]
fn graph_layernorm_matches_tensor_layernorm() {
    let mut r = rng(4);
    let x = Tensor::randn(&[3, 8], 1.0, &mut r);
    let gain = Tensor::randn(&[8], 1.0, &mut r);
    let bias = Tensor::randn(&[8], 1.0, &mut r);
    let mut g = Graph::new();
    let (xv, gv, bv) = (g.constant(x.clone()), g.constant(gain.clone()), g.constant(bias.clone()));
    let y = g.layernorm(xv, gv, bv, 1e-5).unwrap();
    assert!(g.value(y).max_abs_diff(&x.layernorm(&gain, &bias, 1e-5).unwrap()) < 1e-12);
}

fn naive_conv(x: &Tensor, w: &Tensor, stride: [usize; 3]) -> Tensor {
    let xs = x.shape();
    let ws = w.shape();
    let (c_in, d, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
    let (c_out, kd, kh, kw) = (ws[0], ws[2], ws[3], ws[4]);
    let od = (d - kd) / stride[0] + 1;
    let oh = (h - kh) / stride[1] + 1;
    let ow = (wd - kw) / stride[2] + 1;
    let mut out = Tensor::zeros(&[c_out, od, oh, ow]);
    for co in 0..c_out {
        for z in 0..od {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut s = 0.0;
                    for ci in 0..c_in {
                        for a in 0..kd {
                            for b in 0..kh {
                                for c in 0..kw {
                                    let xi = ((ci * d + z * stride[0] + a) * h + y * stride[1] + b) * wd
                                        + xx * stride[2]
                                        + c;
                                    let wi = (((co * c_in + ci) * kd + a) * kh + b) * kw + c;
                                    s += x.data()[xi] * w.data()[wi];
                                }
                            }
                        }
                    }
                    out.data_mut()[((co * od + z) * oh + y) * ow + xx] = s;
                }
            }
        }
    }
    out
}

fn run_conv(x: &Tensor, w: &Tensor, spec: &Conv3dSpec) -> Tensor {
    let mut g = Graph::new();
    let (xv, wv) = (g.constant(x.clone()), g.constant(w.clone()));
    let y = conv3d_down(&mut g, xv, wv, None, spec).unwrap();
    g.value(y).clone()
}

#[test]
fn conv_sum_and_impulse() {
    let x = Tensor::new(vec![1, 2, 2, 2], (1..=8).map(f64::from).collect()).unwrap();
    let w = Tensor::full(&[1, 1, 2, 2, 2], 1.0);
    let y = run_conv(&x, &w, &Conv3dSpec::new([2, 2, 2], [2, 2, 2]));
    assert_eq!(y.shape(), &[1, 1, 1, 1]);
    assert_eq!(y.item(), 36.0);

    let mut r = rng(5);
    let w = Tensor::randn(&[1, 1, 2, 2, 2], 1.0, &mut r);
    let mut delta = Tensor::zeros(&[1, 2, 2, 2]);
    delta.data_mut()[0] = 1.0;
    let y = run_conv(&delta, &w, &Conv3dSpec::new([2, 2, 2], [1, 1, 1]));
    assert_eq!(y.item(), w.data()[0]);
}

#[test]
fn conv_matches_nested_loops() {
    let mut r = rng(6);
    let x = Tensor::randn(&[2, 5, 6, 7], 1.0, &mut r);
    let w = Tensor::randn(&[3, 2, 2, 3, 2], 1.0, &mut r);
    let spec = Conv3dSpec::new([2, 3, 2], [2, 1, 3]);
    assert!(run_conv(&x, &w, &spec).max_abs_diff(&naive_conv(&x, &w, spec.stride)) < 1e-12);
}

#[test]
fn conv_rejects_oversized_kernel() {
    let spec = Conv3dSpec::new([3, 1, 1], [1, 1, 1]);
    assert!(spec.output_dims([2, 4, 4]).is_err());
    assert!(Conv3dSpec::new([1, 1, 1], [0, 1, 1]).output_dims([2, 2, 2]).is_err());
}

#[test]
fn grad_check_quadratic() {
    let mut r = rng(7);
    let mut store = ParamStore::new();
    let id = store.add("x", Tensor::randn(&[5], 1.0, &mut r), true).unwrap();
    let report = grad_check(
        &mut store,
        |g, s| {
            let x = g.param(s, id);
            let sq = g.mul(x, x)?;
            Ok(g.sum(sq))
        },
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-7, "{report:?}");
    assert_eq!(report.checked, 5);
}

#[test]
fn grad_check_rejects_non_finite() {
    let mut store = ParamStore::new();
    let id = store.add("x", Tensor::full(&[1], 0.0), true).unwrap();
    let res = grad_check(
        &mut store,
        |g, s| {
            let x = g.param(s, id);
            Ok(g.scale(x, f64::NAN))
        },
        &GradCheckOptions::default(),
    );
    assert!(matches!(res, Err(crate::Error::NonFinite(_))));
}

/// Every registered op, chained into one scalar, against finite differences.
#[test]
fn every_op_matches_finite_differences() {
    let mut r = rng(8);
    let mut store = ParamStore::new();
    let a = store.add("a", Tensor::randn(&[3, 4], 0.7, &mut r), true).unwrap();
    let b = store.add("b", Tensor::randn(&[4, 4], 0.7, &mut r), true).unwrap();
    let row = store.add("row", Tensor::randn(&[4], 0.7, &mut r), true).unwrap();
    let col = store.add("col", Tensor::randn(&[3], 0.7, &mut r), true).unwrap();
    let cx = store.add("cx", Tensor::randn(&[1, 2, 3, 3], 0.7, &mut r), true).unwrap();
    let cw = store.add("cw", Tensor::randn(&[2, 1, 2, 2, 2], 0.7, &mut r), true).unwrap();
    let cb = store.add("cb", Tensor::randn(&[2], 0.7, &mut r), true).unwrap();
    let kv = store.add("kv", Tensor::randn(&[5, 4], 0.7, &mut r), true).unwrap();
    let index: std::sync::Arc<[usize]> = vec![3, 0, 0, 7, 11, 2].into();
    let report = grad_check(
        &mut store,
        |g, s| {
            let (a, b, row, col) = (g.param(s, a), g.param(s, b), g.param(s, row), g.param(s, col));
            let m = g.matmul(a, b)?;
            let m = g.add_row(m, row)?;
            let m = g.mul_row(m, row)?;
            let m = g.add_col(m, col)?;
            let m = g.mul_col(m, col)?;
            let ln = g.layer_norm(m, 1e-5)?;
            let ge = g.gelu(ln);
            let si = g.silu(ge);
            let th = g.tanh(si);
            let sm = g.softmax(th)?;
            let t = g.transpose(sm)?;
            let t = g.reshape(t, &[2, 6])?;
            let ga = g.gather(t, index.clone(), &[2, 3])?;
            let c1 = g.slice_cols(ga, 1, 2)?;
            let r1 = g.slice_rows(ga, 1, 1)?;
            let stacked = g.concat_rows(&[ga, r1])?;
            let wide = g.concat_cols(&[ga, c1])?;
            let c1sq = g.mul(c1, c1)?;
            let diff = g.sub(c1, c1sq)?;
            let p1 = g.sum(stacked);
            let p2 = g.mean(wide);
            let p3 = g.sum(diff);
            let p12 = g.add(p1, p2)?;
            let cc = g.mul(p12, p3)?;
            let kvv = g.param(s, kv);
            let att = g.attention(a, kvv, kvv, 2, 0.5)?;
            let att2 = g.scale(att, 1.3);
            let att2 = g.add_scalar(att2, 0.2);
            let aw = g.mul(att2, att2)?;
            let (cx, cw, cb) = (g.param(s, cx), g.param(s, cw), g.param(s, cb));
            let conv = conv3d_down(g, cx, cw, Some(cb), &Conv3dSpec::new([2, 2, 2], [1, 1, 1]))?;
            let conv = g.tanh(conv);
            let s1 = g.sum(cc);
            let s2 = g.mean(aw);
            let s3 = g.mean(conv);
            let s12 = g.add(s1, s2)?;
            let s13 = g.sub(s12, s3)?;
            let d = g.mul(s13, s13)?;
            Ok(d)
        },
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-5, "{report:?}");
}

#[test]
fn gradients_accumulate_additively() {
    let mut store = ParamStore::new();
    let id = store.add("w", Tensor::full(&[2], 1.5), true).unwrap();
    for _ in 0..2 {
        let mut g = Graph::new();
        let w = g.param(&store, id);
        let s = g.sum(w);
        let grads = g.backward(s).unwrap();
        grads.accumulate(&g, &mut store);
    }
    assert_eq!(store.get(id).grad.data(), &[2.0, 2.0]);
    store.zero_grads();
    assert_eq!(store.get(id).grad.data(), &[0.0, 0.0]);
}

#[test]
fn frozen_parameters_get_no_gradient() {
    let mut store = ParamStore::new();
    let id = store.add("w", Tensor::full(&[2], 1.5), false).unwrap();
    let mut g = Graph::new();
    let w = g.param(&store, id);
    let s = g.sum(w);
    g.backward(s).unwrap().accumulate(&g, &mut store);
    assert_eq!(store.get(id).grad.data(), &[0.0, 0.0]);
    assert!(store.add("w", Tensor::zeros(&[1]), true).is_err());
}

fn small_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |d| Tensor::new(vec![rows, cols], d).unwrap())
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one_and_shift_invariant(x in small_matrix(3, 5), c in -50.0f64..50.0) {
        let s = x.softmax_rows().unwrap();
        for i in 0..3 {
            prop_assert!((s.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let shifted = x.map(|v| v + c).softmax_rows().unwrap();
        prop_assert!(s.max_abs_diff(&shifted) < 1e-12);
    }

    #[test]
    fn matmul_is_associative(a in small_matrix(3, 4), b in small_matrix(4, 2), c in small_matrix(2, 3)) {
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right) < 1e-10);
    }

    #[test]
    fn attention_gradient_matches_finite_differences(seed in 0u64..1000) {
        let mut r = rng(seed);
        let mut store = ParamStore::new();
        let q = store.add("q", Tensor::randn(&[3, 4], 1.0, &mut r), true).unwrap();
        let k = store.add("k", Tensor::randn(&[2, 4], 1.0, &mut r), true).unwrap();
        let v = store.add("v", Tensor::randn(&[2, 6], 1.0, &mut r), true).unwrap();
        let w = Tensor::randn(&[3, 6], 1.0, &mut r);
        let report = grad_check(&mut store, |g, s| {
            let (q, k, v) = (g.param(s, q), g.param(s, k), g.param(s, v));
            let a = g.attention(q, k, v, 2, 0.5)?;
            let wv = g.constant(w.clone());
            let p = g.mul(a, wv)?;
            Ok(g.sum(p))
        }, &GradCheckOptions::default()).unwrap();
        prop_assert!(report.max_rel_error < 1e-5, "{:?}", report);
    }
}
