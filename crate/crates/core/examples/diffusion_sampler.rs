//! Forward-process moments and a deterministic reverse pass driven by an
//! oracle that knows the clean latent.

use audcast::diffusion::{sample_loop, SamplerConfig, Schedule};
use audcast::numerics::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let s = Schedule::linear(100)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    let t = 60;
    let z0 = Tensor::full(&[100_000], 1.5);
    let eps = Tensor::randn(&[100_000], 1.0, &mut rng);
    let zt = s.q_sample(&z0, t, &eps)?;
    let n = zt.len() as f64;
    let mean = zt.data().iter().sum::<f64>() / n;
    let var = zt.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let ab = s.alpha_bar(t)?;
    println!("q_sample t={t}: mean {mean:.4} (closed form {:.4}), var {var:.4} (closed form {:.4})", ab.sqrt() * 1.5, 1.0 - ab);

    let clean = Tensor::randn(&[4, 4, 4, 8], 1.0, &mut rng);
    let oracle = |z: &Tensor, t: usize| {
        let (a, sd) = s.coefficients(t)?;
        z.zip_map(&clean, |zv, x| (zv - a * x) / sd)
    };
    let out = sample_loop(&s, &SamplerConfig::default(), clean.shape(), &mut rng, oracle, None, &mut |_, _| {})?;
    println!("deterministic sampler with exact noise oracle: max error {:.2e}", out.max_abs_diff(&clean));
    Ok(())
}
