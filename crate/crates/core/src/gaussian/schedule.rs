use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Result};

/// Linear-beta discretization of the variance-preserving forward process.
///
/// Steps are 1-based: `beta(1)` is the first noising step and `alpha_bar(0) == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    beta_min: f64,
    beta_max: f64,
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

/// Serializable parameters of a [`NoiseSchedule`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleParams {
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self { steps: 1000, beta_min: 1e-4, beta_max: 0.02 }
    }
}

impl NoiseSchedule {
    pub fn linear(steps: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        if steps == 0 {
            return Err(invalid("schedule needs at least one step"));
        }
        if !(beta_min > 0.0 && beta_max < 1.0 && beta_min <= beta_max) {
            return Err(invalid(format!(
                "need 0 < beta_min <= beta_max < 1, got {beta_min} and {beta_max}"
            )));
        }
        let betas: Vec<f64> = (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_min
                } else {
                    beta_min + (beta_max - beta_min) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
        let mut alpha_bars = Vec::with_capacity(steps + 1);
        alpha_bars.push(1.0);
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        Ok(Self { beta_min, beta_max, betas, alpha_bars })
    }

    pub fn from_params(p: ScheduleParams) -> Result<Self> {
        Self::linear(p.steps, p.beta_min, p.beta_max)
    }

    pub fn params(&self) -> ScheduleParams {
        ScheduleParams { steps: self.steps(), beta_min: self.beta_min, beta_max: self.beta_max }
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.betas[t - 1]
    }

    /// Product of `alpha(s)` for `s <= t`; `alpha_bar(0) == 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    /// Signal scale `sqrt(alpha_bar(t))`.
    pub fn mu(&self, t: usize) -> f64 {
        self.alpha_bars[t].sqrt()
    }

    /// Noise scale `sqrt(1 - alpha_bar(t))`.
    pub fn sigma(&self, t: usize) -> f64 {
        (1.0 - self.alpha_bars[t]).sqrt()
    }

    /// Product of single-step alphas over `(from, to]`.
    pub fn alpha_span(&self, from: usize, to: usize) -> f64 {
        self.betas[from..to].iter().map(|b| 1.0 - b).product()
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(invalid(format!("step {t} outside 1..={}", self.steps())));
        }
        Ok(())
    }

    /// Steps visited by a reverse pass with the given stride, ascending.
    pub fn visited_steps(&self, stride: usize) -> Result<Vec<usize>> {
        if stride == 0 || self.steps() % stride != 0 {
            return Err(invalid(format!(
                "stride {stride} must be positive and divide {} steps",
                self.steps()
            )));
        }
        Ok((1..=self.steps() / stride).map(|i| i * stride).collect())
    }
}

/// Noises a clean response to step `t`, returning `(y_t, eps)`.
pub fn forward_noise<R: Rng + ?Sized>(
    y0: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let eps: Vec<f64> = (0..y0.len()).map(|_| rng.sample(StandardNormal)).collect();
    let yt = forward_noise_with(y0, t, schedule, &eps)?;
    Ok((yt, eps))
}

/// Deterministic forward noising with caller-supplied noise.
pub fn forward_noise_with(
    y0: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
    eps: &[f64],
) -> Result<Vec<f64>> {
    schedule.check_step(t)?;
    if eps.len() != y0.len() {
        return Err(mismatch(format!("noise length {} vs response {}", eps.len(), y0.len())));
    }
    let (mu, sigma) = (schedule.mu(t), schedule.sigma(t));
    Ok(y0.iter().zip(eps).map(|(y, e)| mu * y + sigma * e).collect())
}
