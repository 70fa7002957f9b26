use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const BETA_START: f64 = 1e-4;
pub const BETA_END: f64 = 2e-2;

/// Linear-β DDPM schedule.
///
/// The β range is given for 1000 steps; shorter schedules scale it by
/// `1000 / t_train` so the final step still reaches (near) pure noise.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub t_train: usize,
    pub betas: Vec<f64>,
    pub alpha_bars: Vec<f64>,
}

impl Schedule {
    pub fn linear(t_train: usize) -> Result<Self> {
        if t_train < 2 {
            return Err(Error::config("t_train must be at least 2"));
        }
        let k = (1000.0 / t_train as f64).max(1.0);
        let (b0, b1) = (BETA_START * k, BETA_END * k);
        if b1 >= 1.0 {
            return Err(Error::config(format!("t_train={t_train} is too short for the β range")));
        }
        let betas: Vec<f64> = (0..t_train)
            .map(|i| b0 + (b1 - b0) * i as f64 / (t_train - 1) as f64)
            .collect();
        let mut alpha_bars = Vec::with_capacity(t_train);
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        Ok(Schedule {
            t_train,
            betas,
            alpha_bars,
        })
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.alpha_bars
            .get(t)
            .copied()
            .ok_or_else(|| Error::invalid(format!("timestep {t} outside [0, {})", self.t_train)))
    }

    /// `(√ᾱ_t, √(1 - ᾱ_t))`.
    pub fn coefficients(&self, t: usize) -> Result<(f64, f64)> {
        let ab = self.alpha_bar(t)?;
        Ok((ab.sqrt(), (1.0 - ab).sqrt()))
    }

    /// `√ᾱ_t z0 + √(1 - ᾱ_t) ε`.
    pub fn q_sample(&self, z0: &Tensor, t: usize, eps: &Tensor) -> Result<Tensor> {
        let (a, s) = self.coefficients(t)?;
        z0.zip_map(eps, |z, e| a * z + s * e)
    }

    /// Evenly spaced descending steps ending near 0: `T-1, T-1-T/n, ...`.
    pub fn sample_timesteps(&self, steps: usize) -> Result<Vec<usize>> {
        if steps == 0 || steps > self.t_train {
            return Err(Error::config(format!("sample steps {steps} outside [1, {}]", self.t_train)));
        }
        let t = self.t_train as f64;
        Ok((0..steps)
            .map(|i| ((t * (steps - i) as f64 / steps as f64).round() as usize).saturating_sub(1))
            .collect())
    }
}
