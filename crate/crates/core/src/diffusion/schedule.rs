use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Reverse-step noise scale choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceKind {
    /// `σ_t² = β_t`, with the final step noise-free.
    #[default]
    Beta,
    /// `σ_t² = β̃_t = (1 − ᾱ_{t−1}) / (1 − ᾱ_t) · β_t` (zero at `t = 1`).
    PosteriorTilde,
}

/// Diffusion-time tables indexed by step `t ∈ [1, T]`.
///
/// `ᾱ_0 = 1` is implicit. A respaced schedule keeps the invariant
/// `ᾱ_t = ᾱ_{t−1} · α_t` by defining `α_t` as the ratio of consecutive
/// retained `ᾱ` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    sigma: Vec<f64>,
    /// Step of the underlying training schedule each entry came from.
    source_steps: Vec<usize>,
    variance: VarianceKind,
}

pub const DEFAULT_TRAIN_STEPS: usize = 1000;
pub const DEFAULT_SAMPLE_STEPS: usize = 50;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;

/// Linear β ramp from `beta_start` to `beta_end` over `steps` steps.
pub fn build_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<Schedule> {
    if steps == 0 {
        return Err(Error::invalid("schedule needs at least one step"));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::invalid(format!(
            "beta bounds must satisfy 0 < start <= end < 1, got ({beta_start}, {beta_end})"
        )));
    }
    let mut alpha_bar = Vec::with_capacity(steps);
    let mut acc = 1.0;
    for t in 0..steps {
        let beta = if steps == 1 {
            beta_start
        } else {
            beta_start + (beta_end - beta_start) * t as f64 / (steps - 1) as f64
        };
        acc *= 1.0 - beta;
        alpha_bar.push(acc);
    }
    Schedule::from_alpha_bar_with(alpha_bar, (1..=steps).collect(), VarianceKind::default())
}

impl Schedule {
    /// The standard 1000-step linear schedule respaced to 50 sampling steps.
    pub fn sampling_default() -> Self {
        build_schedule(DEFAULT_TRAIN_STEPS, DEFAULT_BETA_START, DEFAULT_BETA_END)
            .and_then(|s| s.respaced(DEFAULT_SAMPLE_STEPS))
            .expect("default schedule parameters are valid")
    }

    /// Build from an explicit `ᾱ` table (`ᾱ_1 … ᾱ_T`), which must lie in
    /// `[0, 1]` and be non-increasing.
    pub fn from_alpha_bar(alpha_bar: Vec<f64>) -> Result<Self> {
        let steps = (1..=alpha_bar.len()).collect();
        Self::from_alpha_bar_with(alpha_bar, steps, VarianceKind::default())
    }

    fn from_alpha_bar_with(alpha_bar: Vec<f64>, source_steps: Vec<usize>, variance: VarianceKind) -> Result<Self> {
        if alpha_bar.is_empty() {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        let mut prev = 1.0;
        let mut alpha = Vec::with_capacity(alpha_bar.len());
        for (i, &ab) in alpha_bar.iter().enumerate() {
            if !(0.0..=1.0).contains(&ab) || ab > prev {
                return Err(Error::invalid(format!(
                    "alpha_bar must be non-increasing within [0, 1]; entry {} is {ab}",
                    i + 1
                )));
            }
            alpha.push(if prev > 0.0 { ab / prev } else { 0.0 });
            prev = ab;
        }
        let mut s = Self {
            alpha,
            alpha_bar,
            sigma: Vec::new(),
            source_steps,
            variance,
        };
        s.sigma = s.compute_sigma();
        Ok(s)
    }

    fn compute_sigma(&self) -> Vec<f64> {
        (1..=self.steps())
            .map(|t| {
                if t == 1 {
                    return 0.0;
                }
                let beta = 1.0 - self.alpha(t);
                match self.variance {
                    VarianceKind::Beta => beta.max(0.0).sqrt(),
                    VarianceKind::PosteriorTilde => {
                        let denom = 1.0 - self.alpha_bar(t);
                        if denom <= 0.0 {
                            0.0
                        } else {
                            ((1.0 - self.alpha_bar(t - 1)) / denom * beta).max(0.0).sqrt()
                        }
                    }
                }
            })
            .collect()
    }

    pub fn with_variance(mut self, variance: VarianceKind) -> Self {
        self.variance = variance;
        self.sigma = self.compute_sigma();
        self
    }

    /// Keep `steps` evenly strided entries (`t_k = round(k·T/steps)`).
    pub fn respaced(&self, steps: usize) -> Result<Self> {
        let total = self.steps();
        if steps == 0 || steps > total {
            return Err(Error::invalid(format!("cannot respace {total} steps to {steps}")));
        }
        let picks: Vec<usize> = (1..=steps)
            .map(|k| ((k * total) as f64 / steps as f64).round() as usize)
            .collect();
        let alpha_bar = picks.iter().map(|&t| self.alpha_bar(t)).collect();
        let source = picks.iter().map(|&t| self.source_steps[t - 1]).collect();
        Self::from_alpha_bar_with(alpha_bar, source, self.variance)
    }

    pub fn steps(&self) -> usize {
        self.alpha_bar.len()
    }

    pub fn variance(&self) -> VarianceKind {
        self.variance
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    /// `ᾱ_t`, with `ᾱ_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigma[t - 1]
    }

    pub fn source_step(&self, t: usize) -> usize {
        self.source_steps[t - 1]
    }

    pub(crate) fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            Err(Error::invalid(format!("step {t} outside [1, {}]", self.steps())))
        } else {
            Ok(())
        }
    }
}

/// `z_t = sqrt(ᾱ_t)·z0 + sqrt(1 − ᾱ_t)·ε`.
pub fn forward_noise(z0: &Tensor, t: usize, eps: &Tensor, sched: &Schedule) -> Result<Tensor> {
    sched.check_step(t)?;
    let ab = sched.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    z0.zip_map(eps, |z, e| a * z + b * e)
}

/// Noise-free approximation `(z_t − sqrt(1 − ᾱ_t)·ε̂) / sqrt(ᾱ_t)`.
pub fn project_noise_free(z_t: &Tensor, eps_hat: &Tensor, t: usize, sched: &Schedule) -> Result<Tensor> {
    sched.check_step(t)?;
    let ab = sched.alpha_bar(t);
    if ab <= 0.0 {
        return Err(Error::SingularSchedule { step: t });
    }
    if ab == 1.0 {
        z_t.ensure_same_dims(eps_hat, "project_noise_free")?;
        return Ok(z_t.clone());
    }
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    z_t.zip_map(eps_hat, |z, e| (z - b * e) / a)
}

/// One ancestral step:
/// `z_{t−1} = (z_t − (1 − α_t)/sqrt(1 − ᾱ_t)·ε̂) / sqrt(α_t) + σ_t·noise`.
pub fn reverse_step(z_t: &Tensor, eps_hat: &Tensor, t: usize, sched: &Schedule, noise: &Tensor) -> Result<Tensor> {
    sched.check_step(t)?;
    z_t.ensure_same_dims(noise, "reverse_step")?;
    let alpha = sched.alpha(t);
    if alpha <= 0.0 {
        return Err(Error::SingularSchedule { step: t });
    }
    let ab = sched.alpha_bar(t);
    let coef = if ab < 1.0 {
        (1.0 - alpha) / (1.0 - ab).sqrt()
    } else {
        0.0
    };
    let inv = 1.0 / alpha.sqrt();
    let sigma = sched.sigma(t);
    let mean = z_t.zip_map(eps_hat, |z, e| (z - coef * e) * inv)?;
    if sigma == 0.0 {
        return Ok(mean);
    }
    mean.zip_map(noise, |m, n| m + sigma * n)
}
