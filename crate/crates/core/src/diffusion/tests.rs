use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::numerics::{Graph, Tensor};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn schedule_endpoints() {
    let s = Schedule::linear(1000).unwrap();
    assert!((s.betas[0] - 1e-4).abs() < 1e-18);
    assert!((s.betas[999] - 2e-2).abs() < 1e-15);
    assert_eq!(s.alpha_bars[0], 1.0 - s.betas[0]);
    let d = Schedule::linear(100).unwrap();
    assert!((d.betas[0] - 1e-3).abs() < 1e-15);
    assert!(d.alpha_bars[99] < 1e-4);
    assert!(Schedule::linear(1).is_err());
    assert!(Schedule::linear(10).is_err());
}

#[test]
fn alpha_bar_limit_and_zero_noise() {
    let s = Schedule::linear(1000).unwrap();
    let mut r = rng(1);
    let z0 = Tensor::randn(&[16], 1.0, &mut r);
    let eps = Tensor::randn(&[16], 1.0, &mut r);
    let near = s.q_sample(&z0, 0, &eps).unwrap();
    assert!(near.max_abs_diff(&z0) < 0.05);
    let far = s.q_sample(&z0, 500, &eps).unwrap();
    assert!(far.max_abs_diff(&z0) > near.max_abs_diff(&z0));
    let (a, _) = s.coefficients(37).unwrap();
    let clean = s.q_sample(&z0, 37, &Tensor::zeros(&[16])).unwrap();
    assert_eq!(clean, z0.scale(a));
    assert!(s.q_sample(&z0, 1000, &eps).is_err());
}

#[test]
fn q_sample_moments_match_closed_form() {
    let s = Schedule::linear(100).unwrap();
    let z0 = Tensor::new(vec![3], vec![1.5, -0.8, 0.4]).unwrap();
    let t = 20;
    let (a, sd) = s.coefficients(t).unwrap();
    let mut r = rng(2);
    let n = 100_000;
    let mut sum = [0.0; 3];
    let mut sq = [0.0; 3];
    for _ in 0..n {
        let eps = Tensor::randn(&[3], 1.0, &mut r);
        let z = s.q_sample(&z0, t, &eps).unwrap();
        for k in 0..3 {
            sum[k] += z.data()[k];
            sq[k] += z.data()[k] * z.data()[k];
        }
    }
    for k in 0..3 {
        let mean = sum[k] / n as f64;
        let var = sq[k] / n as f64 - mean * mean;
        let want_mean = a * z0.data()[k];
        assert!((mean - want_mean).abs() / want_mean.abs() < 0.01, "mean {mean} vs {want_mean}");
        assert!((var - sd * sd).abs() / (sd * sd) < 0.01, "var {var} vs {}", sd * sd);
    }
}

#[test]
fn oracle_and_zero_models_give_expected_losses() {
    let s = Schedule::linear(100).unwrap();
    let mut r = rng(3);
    let z0 = Tensor::randn(&[2, 4, 4, 8], 1.0, &mut r);
    let n = draw_noised(&s, &z0, &mut r).unwrap();
    let mut g = Graph::new();
    let cheat = g.constant(n.eps.clone());
    let loss = epsilon_mse(&mut g, cheat, &n.eps, None).unwrap();
    assert_eq!(g.value(loss).item(), 0.0);

    // the sample-parameterised oracle outputs x0 instead
    let mut g = Graph::new();
    let out = g.constant(z0.clone());
    let eps_hat = Parameterization::Sample.eps_graph(&mut g, out, &n.z_t, n.t, &s).unwrap();
    let loss = epsilon_mse(&mut g, eps_hat, &n.eps, None).unwrap();
    assert!(g.value(loss).item() < 1e-20);

    let mut total = 0.0;
    let draws = 10_000;
    let z0 = Tensor::randn(&[8], 1.0, &mut r);
    for _ in 0..draws {
        let n = draw_noised(&s, &z0, &mut r).unwrap();
        let mut g = Graph::new();
        let zero = g.constant(Tensor::zeros(&[8]));
        let loss = epsilon_mse(&mut g, zero, &n.eps, None).unwrap();
        total += g.value(loss).item();
    }
    let mean = total / draws as f64;
    assert!((mean - 1.0).abs() < 0.02, "{mean}");
}

#[test]
fn masked_loss_ignores_unmasked_elements() {
    let eps = Tensor::new(vec![4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let mut g = Graph::new();
    let pred = g.variable(Tensor::new(vec![4], vec![1.0, 0.0, 3.0, 100.0]).unwrap());
    let loss = epsilon_mse(&mut g, pred, &eps, Some(&[true, true, false, false])).unwrap();
    assert_eq!(g.value(loss).item(), 2.0);
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads.get(pred).unwrap().data(), &[0.0, -2.0, 0.0, 0.0]);
    let mut g = Graph::new();
    let pred = g.constant(Tensor::zeros(&[4]));
    assert!(epsilon_mse(&mut g, pred, &eps, Some(&[false; 4])).is_err());
}

fn oracle_eps<'a>(s: &'a Schedule, z0: &Tensor) -> impl FnMut(&Tensor, usize) -> crate::Result<Tensor> + 'a {
    let z0 = z0.clone();
    move |z: &Tensor, t: usize| {
        let (a, sd) = s.coefficients(t)?;
        z.zip_map(&z0, |zt, x| (zt - a * x) / sd)
    }
}

#[test]
fn deterministic_sampler_inverts_exact_noise_oracle() {
    let s = Schedule::linear(100).unwrap();
    let z0 = Tensor::randn(&[2, 4, 4, 8], 1.0, &mut rng(4));
    for steps in [1, 5, 20, 100] {
        let cfg = SamplerConfig {
            kind: SamplerKind::Deterministic,
            steps,
        };
        let out = sample_loop(&s, &cfg, z0.shape(), &mut rng(5), oracle_eps(&s, &z0), None, &mut |_, _| {}).unwrap();
        assert!(out.max_abs_diff(&z0) < 1e-6, "steps {steps}");
    }
}

#[test]
fn samplers_are_seed_deterministic() {
    let s = Schedule::linear(100).unwrap();
    let model = |z: &Tensor, t: usize| Ok(z.scale(0.3 + t as f64 * 1e-3));
    for kind in [SamplerKind::Deterministic, SamplerKind::Ancestral] {
        let cfg = SamplerConfig { kind, steps: 10 };
        let a = sample_loop(&s, &cfg, &[3, 5], &mut rng(6), model, None, &mut |_, _| {}).unwrap();
        let b = sample_loop(&s, &cfg, &[3, 5], &mut rng(6), model, None, &mut |_, _| {}).unwrap();
        let c = sample_loop(&s, &cfg, &[3, 5], &mut rng(7), model, None, &mut |_, _| {}).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}

#[test]
fn single_step_schedule_matches_closed_form() {
    let s = Schedule::linear(100).unwrap();
    assert_eq!(s.sample_timesteps(1).unwrap(), vec![99]);
    assert_eq!(s.sample_timesteps(20).unwrap()[..3], [99, 94, 89]);
    assert_eq!(*s.sample_timesteps(20).unwrap().last().unwrap(), 4);
    let cfg = SamplerConfig {
        kind: SamplerKind::Deterministic,
        steps: 1,
    };
    let model = |z: &Tensor, _t: usize| Ok(z.scale(0.5));
    let out = sample_loop(&s, &cfg, &[6], &mut rng(8), model, None, &mut |_, _| {}).unwrap();
    let z_t = Tensor::randn(&[6], 1.0, &mut rng(8));
    // posterior mean at ᾱ = 1: x0 = (z - √(1-ᾱ) ε̂) / √ᾱ
    let ab = s.alpha_bars[99];
    let want = z_t.map(|z| (z - (1.0 - ab).sqrt() * 0.5 * z) / ab.sqrt());
    assert!(out.max_abs_diff(&want) < 1e-12);
}

#[test]
fn clamp_holds_known_cells_at_every_step() {
    let s = Schedule::linear(100).unwrap();
    let mut r = rng(9);
    let known = Tensor::randn(&[4, 4], 1.0, &mut r);
    let mask: Vec<bool> = (0..16).map(|i| i % 3 == 0).collect();
    let clamp = Clamp {
        mask: &mask,
        known: &known,
    };
    let cfg = SamplerConfig {
        kind: SamplerKind::Ancestral,
        steps: 10,
    };
    let mut steps = 0;
    let model = |z: &Tensor, _t: usize| Ok(z.scale(0.7));
    let out = sample_loop(&s, &cfg, &[4, 4], &mut r, model, Some(&clamp), &mut |_, z| {
        steps += 1;
        for i in 0..16 {
            if !mask[i] {
                assert_eq!(z.data()[i], known.data()[i]);
            }
        }
    })
    .unwrap();
    assert_eq!(steps, 10);
    let empty = vec![false; 16];
    let all_known = Clamp {
        mask: &empty,
        known: &known,
    };
    let out2 = sample_loop(&s, &cfg, &[4, 4], &mut r, model, Some(&all_known), &mut |_, _| {}).unwrap();
    assert_eq!(out2, known);
    assert_ne!(out, known);
}

#[test]
fn latent_norm_round_trip() {
    let mut r = rng(10);
    let a = Tensor::randn(&[5, 3], 2.0, &mut r).map(|v| v + 4.0);
    let n = LatentNorm::fit(&[&a]).unwrap();
    let z = n.normalize(&a).unwrap();
    let back = LatentNorm::fit(&[&z]).unwrap();
    for k in 0..3 {
        assert!(back.mean[k].abs() < 1e-12);
        assert!((back.std[k] - 1.0).abs() < 1e-12);
    }
    assert!(n.denormalize(&z).unwrap().max_abs_diff(&a) < 1e-12);
    assert!(n.normalize(&Tensor::zeros(&[2, 4])).is_err());
}

#[test]
fn chain_plan_tiles_audio() {
    let p = ChainPlan::new(48, 16, 4, 7).unwrap();
    assert_eq!(p.chunks(), 3);
    assert_eq!(p.seams(), vec![16, 32]);
    assert_eq!(p.start(2), 32);
    assert_eq!(p.seeds.len(), 3);
    assert_ne!(p.seeds[0], p.seeds[1]);
    assert_eq!(p, ChainPlan::new(48, 16, 4, 7).unwrap());
    assert!(ChainPlan::new(40, 16, 4, 7).is_err());
}

#[test]
fn parameterizations_agree_on_exact_targets() {
    let s = Schedule::linear(100).unwrap();
    let mut r = rng(11);
    let z0 = Tensor::randn(&[10], 1.0, &mut r);
    let n = draw_noised(&s, &z0, &mut r).unwrap();
    let from_sample = Parameterization::Sample.eps_tensor(&z0, &n.z_t, n.t, &s).unwrap();
    assert!(from_sample.max_abs_diff(&n.eps) < 1e-9);
    assert_eq!(Parameterization::Epsilon.eps_tensor(&n.eps, &n.z_t, n.t, &s).unwrap(), n.eps);
    assert_eq!(Parameterization::parse("sample").unwrap(), Parameterization::Sample);

    // v = √ᾱ ε - √(1-ᾱ) x0, written out from the cumulative product of the betas.
    let ab: f64 = s.betas[..=n.t].iter().map(|b| 1.0 - b).product();
    let v = n.eps.zip_map(&z0, |e, x| ab.sqrt() * e - (1.0 - ab).sqrt() * x).unwrap();
    let from_v = Parameterization::Velocity.eps_tensor(&v, &n.z_t, n.t, &s).unwrap();
    assert!(from_v.max_abs_diff(&n.eps) < 1e-12);
    assert_eq!(Parameterization::parse("v").unwrap(), Parameterization::Velocity);
    assert!(Parameterization::parse("x").is_err());
}

#[test]
fn graph_and_tensor_parameterizations_match() {
    let s = Schedule::linear(100).unwrap();
    let mut r = rng(12);
    let out = Tensor::randn(&[6], 1.0, &mut r);
    let z = Tensor::randn(&[6], 1.0, &mut r);
    for p in [Parameterization::Epsilon, Parameterization::Sample, Parameterization::Velocity] {
        for t in [0, 40, 99] {
            let mut g = Graph::new();
            let o = g.constant(out.clone());
            let e = p.eps_graph(&mut g, o, &z, t, &s).unwrap();
            assert!(g.value(e).max_abs_diff(&p.eps_tensor(&out, &z, t, &s).unwrap()) < 1e-12);
        }
    }
}

proptest! {
    #[test]
    fn schedule_is_monotone_with_unit_coefficients(t_train in 20usize..1200) {
        let s = Schedule::linear(t_train).unwrap();
        prop_assert!(s.alpha_bars[0] <= 1.0 && s.alpha_bars[0] > 0.0);
        for t in 1..t_train {
            prop_assert!(s.alpha_bars[t] < s.alpha_bars[t - 1]);
            prop_assert!(s.alpha_bars[t] > 0.0);
        }
        for t in (0..t_train).step_by(7) {
            let (a, sd) = s.coefficients(t).unwrap();
            prop_assert!((a * a + sd * sd - 1.0).abs() < 1e-15);
        }
    }
}
