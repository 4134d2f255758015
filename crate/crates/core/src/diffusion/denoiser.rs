use serde::{Deserialize, Serialize};

use super::schedule::Schedule;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A noise predictor `ε̂ = f(z_t, t, context)`.
///
/// Implementations must return a tensor shaped like `z_t` and be
/// deterministic in their inputs. The denoising path receives `[x]` as
/// context; the guiding path receives `[x, aligned_neighbour]`.
pub trait Denoiser: Send + Sync {
    fn predict(&self, z_t: &Tensor, t: usize, sched: &Schedule, context: &[&Tensor]) -> Result<Tensor>;
}

impl<F> Denoiser for F
where
    F: Fn(&Tensor, usize, &Schedule, &[&Tensor]) -> Result<Tensor> + Send + Sync,
{
    fn predict(&self, z_t: &Tensor, t: usize, sched: &Schedule, context: &[&Tensor]) -> Result<Tensor> {
        self(z_t, t, sched, context)
    }
}

/// Factorized Gaussian data distribution `N(μ0, σ0²)` per element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrior {
    pub mu0: f64,
    pub sigma0: f64,
}

impl GaussianPrior {
    pub fn new(mu0: f64, sigma0: f64) -> Result<Self> {
        if !(sigma0 >= 0.0) || !mu0.is_finite() || !sigma0.is_finite() {
            return Err(Error::invalid("prior needs finite mu0 and sigma0 >= 0"));
        }
        Ok(Self { mu0, sigma0 })
    }
}

/// Posterior mean `E[z0 | z_t]` under `N(μ, σ0²)`.
#[inline]
pub(crate) fn posterior_mean(z: f64, mu: f64, sigma0: f64, alpha_bar: f64) -> f64 {
    if alpha_bar >= 1.0 {
        return z;
    }
    let var0 = sigma0 * sigma0;
    let denom = alpha_bar * var0 + 1.0 - alpha_bar;
    if denom <= 0.0 {
        return mu;
    }
    (alpha_bar.sqrt() * var0 * z + (1.0 - alpha_bar) * mu) / denom
}

/// `ε̂` consistent with a clean estimate; zero where `ᾱ_t = 1`.
#[inline]
fn eps_from_clean(z: f64, clean: f64, alpha_bar: f64) -> f64 {
    if alpha_bar >= 1.0 {
        0.0
    } else {
        (z - alpha_bar.sqrt() * clean) / (1.0 - alpha_bar).sqrt()
    }
}

/// Exact MMSE noise predictor for a fixed Gaussian prior.
#[derive(Debug, Clone, Copy)]
pub struct GaussianOracle {
    pub prior: GaussianPrior,
}

impl GaussianOracle {
    pub fn clean_estimate(&self, z_t: &Tensor, t: usize, sched: &Schedule) -> Result<Tensor> {
        sched.check_step(t)?;
        let ab = sched.alpha_bar(t);
        let GaussianPrior { mu0, sigma0 } = self.prior;
        Ok(z_t.map(|z| posterior_mean(z, mu0, sigma0, ab)))
    }
}

impl Denoiser for GaussianOracle {
    fn predict(&self, z_t: &Tensor, t: usize, sched: &Schedule, _context: &[&Tensor]) -> Result<Tensor> {
        let ab = sched.alpha_bar(t);
        let clean = self.clean_estimate(z_t, t, sched)?;
        z_t.zip_map(&clean, |z, c| eps_from_clean(z, c, ab))
    }
}

pub fn gaussian_oracle_denoiser(prior: GaussianPrior) -> GaussianOracle {
    GaussianOracle { prior }
}

/// Gaussian oracle whose prior mean is the conditioning frame `context[0]`,
/// i.e. `z0 ~ N(x, σ0²)` elementwise.
#[derive(Debug, Clone, Copy)]
pub struct ConditionalGaussianOracle {
    pub sigma0: f64,
}

impl ConditionalGaussianOracle {
    pub fn clean_estimate(&self, z_t: &Tensor, t: usize, sched: &Schedule, x: &Tensor) -> Result<Tensor> {
        sched.check_step(t)?;
        let ab = sched.alpha_bar(t);
        z_t.zip_map(x, |z, mu| posterior_mean(z, mu, self.sigma0, ab))
    }
}

fn context_frame<'a>(context: &[&'a Tensor], idx: usize, who: &str) -> Result<&'a Tensor> {
    context
        .get(idx)
        .copied()
        .ok_or_else(|| Error::invalid(format!("{who} expects at least {} context tensors", idx + 1)))
}

impl Denoiser for ConditionalGaussianOracle {
    fn predict(&self, z_t: &Tensor, t: usize, sched: &Schedule, context: &[&Tensor]) -> Result<Tensor> {
        let x = context_frame(context, 0, "conditional oracle")?;
        let ab = sched.alpha_bar(t);
        let clean = self.clean_estimate(z_t, t, sched, x)?;
        z_t.zip_map(&clean, |z, c| eps_from_clean(z, c, ab))
    }
}

/// Where the guidance correction is added.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceSpace {
    /// Added to the denoised `z_{t−1}`.
    #[default]
    Output,
    /// Added to `ε̂` before the reverse update.
    Epsilon,
}

/// Guiding predictor that pulls the current clean estimate toward the
/// aligned neighbour `context[1]`.
///
/// In output space it emits `sqrt(ᾱ_{t−1})·(aligned − ẑ0)`, the shift of
/// `z_{t−1}` that moves its clean component onto the neighbour. In ε space it
/// emits the equivalent noise offset `−sqrt(ᾱ_t / (1 − ᾱ_t))·(aligned − ẑ0)`.
#[derive(Debug, Clone, Copy)]
pub struct AlignedCorrection {
    pub sigma0: f64,
    pub space: GuidanceSpace,
}

impl Denoiser for AlignedCorrection {
    fn predict(&self, z_t: &Tensor, t: usize, sched: &Schedule, context: &[&Tensor]) -> Result<Tensor> {
        let x = context_frame(context, 0, "aligned correction")?;
        let aligned = context_frame(context, 1, "aligned correction")?;
        let own = ConditionalGaussianOracle { sigma0: self.sigma0 }.clean_estimate(z_t, t, sched, x)?;
        let k = match self.space {
            GuidanceSpace::Output => sched.alpha_bar(t - 1).sqrt(),
            GuidanceSpace::Epsilon => {
                let ab = sched.alpha_bar(t);
                if ab >= 1.0 {
                    0.0
                } else {
                    -(ab / (1.0 - ab)).sqrt()
                }
            }
        };
        aligned.zip_map(&own, |a, o| k * (a - o))
    }
}

/// Per-channel affine map applied to the guiding output before it is added.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceCombiner {
    pub scale: Vec<f64>,
    pub bias: Vec<f64>,
}

impl GuidanceCombiner {
    /// All-zero scale and bias: the combiner contributes nothing.
    pub fn zero_init(channels: usize) -> Self {
        Self {
            scale: vec![0.0; channels],
            bias: vec![0.0; channels],
        }
    }

    pub fn uniform(channels: usize, scale: f64) -> Self {
        Self {
            scale: vec![scale; channels],
            bias: vec![0.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }

    pub fn is_zero(&self) -> bool {
        self.scale.iter().chain(&self.bias).all(|&v| v == 0.0)
    }

    pub fn apply(&self, g: &Tensor) -> Result<Tensor> {
        let (c, h, w) = g.dims();
        if c != self.scale.len() || c != self.bias.len() {
            return Err(Error::invalid(format!(
                "combiner has {} channels, input has {c}",
                self.scale.len()
            )));
        }
        let n = h * w;
        let data: Vec<f64> = g
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| self.scale[i / n] * v + self.bias[i / n])
            .collect();
        Tensor::new(c, h, w, data)
    }
}
