//! Inter- and intra-variable correlation metrics and temporal consistency.
//!
//! SSIM, PSNR and cross-entropy compare adjacent variables; the element
//! standard deviation measures spread within one variable. Cross-entropy and
//! σ are mapped through `F(x) = 1 / (1 + x)` so that larger is more
//! correlated for every reported metric.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{estimate_flow, FlowConfig};
use crate::plane;
use crate::tensor::Tensor;

/// PSNR returned for identical inputs.
pub const PSNR_CAP_DB: f64 = 100.0;
pub const DEFAULT_BINS: usize = 256;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const SSIM_RANGE: f64 = 1.0;

pub fn psnr(a: &Tensor, b: &Tensor, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::invalid("PSNR peak must be positive"));
    }
    let mse = a.mse(b)?;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB))
}

/// Mean local SSIM with an 11×11 Gaussian window (σ = 1.5), evaluated where
/// the window fits inside the image, averaged over channels.
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    a.ensure_same_dims(b, "ssim")?;
    let (c, h, w) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    let k = plane::gaussian_kernel(SSIM_SIGMA, SSIM_WINDOW / 2);
    let c1 = (SSIM_K1 * SSIM_RANGE).powi(2);
    let c2 = (SSIM_K2 * SSIM_RANGE).powi(2);
    let mut total = 0.0;
    for ch in 0..c {
        let x = a.channel(ch);
        let y = b.channel(ch);
        let filt = |p: &[f64]| plane::separable_valid(p, w, h, &k).0;
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();
        let (mx, my) = (filt(x), filt(y));
        let (sxx, syy, sxy) = (filt(&xx), filt(&yy), filt(&xy));
        let n = mx.len();
        let sum: f64 = (0..n)
            .map(|i| {
                let (ux, uy) = (mx[i], my[i]);
                let vx = sxx[i] - ux * ux;
                let vy = syy[i] - uy * uy;
                let cov = sxy[i] - ux * uy;
                ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
            })
            .sum();
        total += sum / n as f64;
    }
    Ok(total / c as f64)
}

/// Laplace-smoothed histograms of both tensors over their joint range.
pub(crate) fn joint_histograms(a: &Tensor, b: &Tensor, bins: usize) -> (Vec<f64>, Vec<f64>) {
    let lo = a.min().min(b.min());
    let hi = a.max().max(b.max());
    let span = hi - lo;
    let hist = |t: &Tensor| {
        let mut counts = vec![1.0; bins];
        for &v in t.data() {
            let idx = if span > 0.0 {
                (((v - lo) / span) * bins as f64).floor() as usize
            } else {
                0
            };
            counts[idx.min(bins - 1)] += 1.0;
        }
        let total = (t.len() + bins) as f64;
        counts.into_iter().map(|c| c / total).collect::<Vec<_>>()
    };
    (hist(a), hist(b))
}

/// Cross-entropy `H(p, q) = −Σ pᵢ log₂ qᵢ` in bits, where `p` and `q` are the
/// smoothed histograms of `a` and `b`.
pub fn cross_entropy(a: &Tensor, b: &Tensor, bins: usize) -> Result<f64> {
    if bins < 2 {
        return Err(Error::invalid("cross-entropy needs at least two bins"));
    }
    let (p, q) = joint_histograms(a, b, bins);
    Ok(-p.iter().zip(&q).map(|(pi, qi)| pi * qi.log2()).sum::<f64>())
}

/// Population standard deviation of all elements.
pub fn sigma_intra(a: &Tensor) -> f64 {
    // shifted by the first element so constant inputs give exactly zero
    let d = a.data();
    let n = d.len() as f64;
    let mean = d.iter().map(|v| v - d[0]).sum::<f64>() / n;
    let var = d.iter().map(|v| (v - d[0] - mean).powi(2)).sum::<f64>() / n;
    var.sqrt()
}

pub fn f_transform(x: f64) -> f64 {
    1.0 / (1.0 + x)
}

/// Which spread the σ term measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMode {
    /// σ of each variable on its own.
    #[default]
    PerVariable,
    /// σ of the difference between adjacent variables.
    AdjacentDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    #[default]
    Pixel,
    Feature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub domain: Domain,
    pub sigma_mode: SigmaMode,
    pub bins: usize,
    pub pair_count: usize,
    pub mean_ssim: f64,
    pub mean_psnr_db: f64,
    pub mean_f_h: f64,
    pub mean_f_sigma: f64,
}

/// Adjacent-pair correlation summary of a sequence.
pub fn correlation_profile(seq: &[Tensor], bins: usize) -> Result<CorrelationReport> {
    correlation_profile_with(seq, bins, SigmaMode::PerVariable, Domain::Pixel)
}

pub fn correlation_profile_with(
    seq: &[Tensor],
    bins: usize,
    sigma_mode: SigmaMode,
    domain: Domain,
) -> Result<CorrelationReport> {
    if seq.len() < 2 {
        return Err(Error::invalid("correlation profile needs at least two variables"));
    }
    for t in &seq[1..] {
        seq[0].ensure_same_dims(t, "correlation_profile")?;
    }
    let pairs = seq.len() - 1;
    let (mut s, mut p, mut fh) = (0.0, 0.0, 0.0);
    for pair in seq.windows(2) {
        s += ssim(&pair[0], &pair[1])?;
        p += psnr(&pair[0], &pair[1], 1.0)?;
        fh += f_transform(cross_entropy(&pair[0], &pair[1], bins)?);
    }
    let f_sigma = match sigma_mode {
        SigmaMode::PerVariable => seq.iter().map(|t| f_transform(sigma_intra(t))).sum::<f64>() / seq.len() as f64,
        SigmaMode::AdjacentDifference => {
            let mut acc = 0.0;
            for pair in seq.windows(2) {
                acc += f_transform(sigma_intra(&pair[1].sub(&pair[0])?));
            }
            acc / pairs as f64
        }
    };
    Ok(CorrelationReport {
        domain,
        sigma_mode,
        bins,
        pair_count: pairs,
        mean_ssim: s / pairs as f64,
        mean_psnr_db: p / pairs as f64,
        mean_f_h: fh / pairs as f64,
        mean_f_sigma: f_sigma,
    })
}

/// Smoothed stand-in for latent features: Gaussian low-pass of each frame.
pub fn feature_proxy(seq: &[Tensor], sigma: f64) -> Vec<Tensor> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let k = plane::gaussian_kernel(sigma, radius);
    seq.iter()
        .map(|t| {
            let (c, h, w) = t.dims();
            let data = t
                .planes()
                .flat_map(|p| plane::separable_replicate(p, w, h, &k, &k))
                .collect();
            Tensor::from_parts(c, h, w, data)
        })
        .collect()
}

/// Temporal flow discrepancy: mean `|Δu| + |Δv|` between the flows of
/// consecutive output frames and of consecutive reference frames.
pub fn tof(output_seq: &[Tensor], reference_seq: &[Tensor], cfg: &FlowConfig) -> Result<f64> {
    if output_seq.len() != reference_seq.len() {
        return Err(Error::invalid(format!(
            "sequence lengths differ: {} vs {}",
            output_seq.len(),
            reference_seq.len()
        )));
    }
    if output_seq.len() < 2 {
        return Err(Error::invalid("tOF needs at least two frames"));
    }
    for (o, r) in output_seq.iter().zip(reference_seq) {
        o.ensure_same_dims(r, "tof")?;
        o.ensure_same_dims(&output_seq[0], "tof")?;
    }
    let mut acc = 0.0;
    for (o, r) in output_seq.windows(2).zip(reference_seq.windows(2)) {
        let fo = estimate_flow(&o[0], &o[1], cfg)?;
        let fr = estimate_flow(&r[0], &r[1], cfg)?;
        acc += fo.mean_l1_diff(&fr)?;
    }
    Ok(acc / (output_seq.len() - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> Tensor {
        Tensor::from_fn(1, h, w, |_, y, x| ((x * 3 + y * 5) % 17) as f64 / 16.0).unwrap()
    }

    #[test]
    fn psnr_closed_forms() {
        let a = ramp(12, 12).scale(0.5);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), PSNR_CAP_DB);
        let b = a.map(|v| v + 0.1);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-9);
        assert!(psnr(&a, &b, 0.0).is_err());
        assert!(psnr(&a, &ramp(12, 13), 1.0).is_err());
    }

    #[test]
    fn ssim_identity_and_size_check() {
        let a = ramp(16, 16);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!(ssim(&ramp(10, 16), &ramp(10, 16)).is_err());
    }

    #[test]
    fn uniform_histogram_entropy_is_eight_bits() {
        let t = Tensor::from_fn(1, 16, 32, |_, y, x| (y * 32 + x) as f64 % 256.0).unwrap();
        let h = cross_entropy(&t, &t, 256).unwrap();
        assert!((h - 8.0).abs() < 1e-12);
        assert!(cross_entropy(&t, &t, 1).is_err());
    }

    #[test]
    fn constant_inputs_give_finite_entropy() {
        let t = Tensor::filled(1, 4, 4, 0.2).unwrap();
        let h = cross_entropy(&t, &t, 256).unwrap();
        assert!(h.is_finite() && h > 0.0);
    }

    #[test]
    fn sigma_closed_forms() {
        let c = Tensor::filled(1, 3, 3, 0.4).unwrap();
        assert_eq!(sigma_intra(&c), 0.0);
        assert_eq!(f_transform(sigma_intra(&c)), 1.0);
        let two = Tensor::from_fn(1, 2, 2, |_, y, _| y as f64).unwrap();
        assert!((sigma_intra(&two) - 0.5).abs() < 1e-15);
        assert!((f_transform(0.5) - 1.0 / 1.5).abs() < 1e-15);
    }

    #[test]
    fn profile_needs_two_frames() {
        assert!(correlation_profile(&[ramp(12, 12)], 256).is_err());
        let seq = vec![ramp(12, 12); 3];
        let r = correlation_profile(&seq, 256).unwrap();
        assert_eq!(r.pair_count, 2);
        assert!((r.mean_ssim - 1.0).abs() < 1e-12);
        assert_eq!(r.mean_psnr_db, PSNR_CAP_DB);
        let d = correlation_profile_with(&seq, 256, SigmaMode::AdjacentDifference, Domain::Feature).unwrap();
        assert_eq!(d.mean_f_sigma, 1.0);
    }

    #[test]
    fn tof_argument_errors() {
        let cfg = FlowConfig::default();
        let a = vec![ramp(16, 16)];
        assert!(tof(&a, &a, &cfg).is_err());
        let two = vec![ramp(16, 16); 2];
        assert!(tof(&two, &a, &cfg).is_err());
    }
}
