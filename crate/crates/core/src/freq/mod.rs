//! High-frequency measurement: edge strength, FFT high-pass energy and the
//! alignment-arm comparison reports built on them.

mod edge;
mod spectrum;

pub use edge::{edge_strength, CannyParams, EdgeOperator};
pub use spectrum::{dc_energy, highpass_strength};

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::tensor::Tensor;
use crate::warp::{ogwm_align, warp_direct, BorderPolicy};

/// Default high-pass radius in centered-frequency bins.
pub const DEFAULT_HIGHPASS_RADIUS: f64 = 30.0;

/// Mean metrics for one alignment arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ArmMetrics {
    /// Keyed by operator name.
    pub edge_strength: BTreeMap<String, f64>,
    pub highpass_strength: f64,
}

/// Percent loss of an arm relative to the unwarped original.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ArmReduction {
    pub edge_strength: BTreeMap<String, f64>,
    pub highpass_strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reductions {
    pub warp_direct: ArmReduction,
    pub ogwm_align: ArmReduction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFrequency {
    pub step: usize,
    pub original: ArmMetrics,
    pub warp_direct: ArmMetrics,
    pub ogwm_align: ArmMetrics,
}

/// Edge and high-pass strength of the three alignment arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyReport {
    pub scale: usize,
    pub radius: f64,
    pub operators: Vec<String>,
    pub pair_count: usize,
    /// What the measured tensors are (e.g. pixel frames standing in for latents).
    pub domain: String,
    pub original: ArmMetrics,
    pub warp_direct: ArmMetrics,
    pub ogwm_align: ArmMetrics,
    /// `100 · (original − arm) / original`; 0 when the original is 0.
    pub reduction_percent: Reductions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_series: Option<Vec<StepFrequency>>,
}

impl FrequencyReport {
    /// Edge-strength reduction (percent) of `arm` for operator `op`.
    pub fn edge_reduction(&self, arm: Arm, op: &str) -> Option<f64> {
        let r = match arm {
            Arm::WarpDirect => &self.reduction_percent.warp_direct,
            Arm::OgwmAlign => &self.reduction_percent.ogwm_align,
            Arm::Original => return Some(0.0),
        };
        r.edge_strength.get(op).copied()
    }

    /// Mean edge reduction of an arm across all operators in the report.
    pub fn mean_edge_reduction(&self, arm: Arm) -> f64 {
        let vals: Vec<f64> = self
            .operators
            .iter()
            .filter_map(|op| self.edge_reduction(arm, op))
            .collect();
        vals.iter().sum::<f64>() / vals.len().max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Original,
    WarpDirect,
    OgwmAlign,
}

fn measure(t: &Tensor, ops: &[EdgeOperator], radius: f64) -> Result<ArmMetrics> {
    let mut edge = BTreeMap::new();
    for op in ops {
        edge.insert(op.name().to_string(), edge_strength(t, op)?);
    }
    Ok(ArmMetrics {
        edge_strength: edge,
        highpass_strength: highpass_strength(t, radius),
    })
}

fn average(items: &[ArmMetrics]) -> ArmMetrics {
    let n = items.len() as f64;
    let mut out = ArmMetrics::default();
    for m in items {
        for (k, v) in &m.edge_strength {
            *out.edge_strength.entry(k.clone()).or_insert(0.0) += v / n;
        }
        out.highpass_strength += m.highpass_strength / n;
    }
    out
}

fn percent_loss(original: f64, arm: f64) -> f64 {
    if original > 0.0 {
        100.0 * (original - arm) / original
    } else {
        0.0
    }
}

fn reduction(original: &ArmMetrics, arm: &ArmMetrics) -> ArmReduction {
    ArmReduction {
        edge_strength: original
            .edge_strength
            .iter()
            .map(|(k, &o)| {
                (
                    k.clone(),
                    percent_loss(o, arm.edge_strength.get(k).copied().unwrap_or(0.0)),
                )
            })
            .collect(),
        highpass_strength: percent_loss(original.highpass_strength, arm.highpass_strength),
    }
}

/// The three arms for one source tensor and its high-resolution flow.
fn arms_for_pair(
    src: &Tensor,
    flow_hr: &FlowField,
    s: usize,
    ops: &[EdgeOperator],
    radius: f64,
) -> Result<[ArmMetrics; 3]> {
    let flow_lr = flow_hr.downscale(s)?;
    let direct = warp_direct(src, &flow_lr)?;
    let aligned = ogwm_align(src, flow_hr, s, BorderPolicy::Clamp)?;
    Ok([
        measure(src, ops, radius)?,
        measure(&direct, ops, radius)?,
        measure(&aligned, ops, radius)?,
    ])
}

fn check_inputs(frames: &[Tensor], flows: &[FlowField], s: usize, ops: &[EdgeOperator]) -> Result<()> {
    if frames.len() < 2 {
        return Err(Error::invalid("frequency analysis needs at least two frames"));
    }
    if flows.len() != frames.len() - 1 {
        return Err(Error::invalid(format!(
            "expected {} flows for {} frames, got {}",
            frames.len() - 1,
            frames.len(),
            flows.len()
        )));
    }
    if s == 0 {
        return Err(Error::invalid("rescaling factor must be positive"));
    }
    if ops.is_empty() {
        return Err(Error::invalid("at least one edge operator is required"));
    }
    let dims = frames[0].dims();
    for (i, f) in frames.iter().enumerate() {
        if f.dims() != dims {
            return Err(Error::invalid(format!(
                "frame {i} has dims {:?}, expected {dims:?}",
                f.dims()
            )));
        }
    }
    for (i, fl) in flows.iter().enumerate() {
        if fl.height() != dims.1 * s || fl.width() != dims.2 * s {
            return Err(Error::invalid(format!(
                "flow {i} is {}x{}, expected {}x{} at factor {s}",
                fl.height(),
                fl.width(),
                dims.1 * s,
                dims.2 * s
            )));
        }
    }
    Ok(())
}

/// Compare unwarped, directly warped and rescaling-aligned tensors.
///
/// `flows[i]` is the high-resolution (`s×`) backward flow that carries
/// `frames[i]` onto `frames[i + 1]`. The direct arm uses that flow
/// subsampled to the native grid with displacements divided by `s`, so both
/// arms share one motion estimate. All metrics are taken at native
/// resolution.
pub fn observation2_report(
    frames: &[Tensor],
    flows: &[FlowField],
    s: usize,
    ops: &[EdgeOperator],
    radius: f64,
) -> Result<FrequencyReport> {
    check_inputs(frames, flows, s, ops)?;
    let per_pair: Vec<[ArmMetrics; 3]> = frames[..frames.len() - 1]
        .par_iter()
        .zip(flows.par_iter())
        .map(|(src, flow)| arms_for_pair(src, flow, s, ops, radius))
        .collect::<Result<_>>()?;
    let collect_arm = |k: usize| average(&per_pair.iter().map(|a| a[k].clone()).collect::<Vec<_>>());
    let original = collect_arm(0);
    let direct = collect_arm(1);
    let aligned = collect_arm(2);
    Ok(FrequencyReport {
        scale: s,
        radius,
        operators: ops.iter().map(|o| o.name().to_string()).collect(),
        pair_count: per_pair.len(),
        domain: "pixel".to_string(),
        reduction_percent: Reductions {
            warp_direct: reduction(&original, &direct),
            ogwm_align: reduction(&original, &aligned),
        },
        original,
        warp_direct: direct,
        ogwm_align: aligned,
        step_series: None,
    })
}

/// One report per rescaling factor; `flows_per_s[j]` must be estimated at
/// factor `s_values[j]`.
pub fn rescaling_sweep(
    frames: &[Tensor],
    flows_per_s: &[Vec<FlowField>],
    s_values: &[usize],
    ops: &[EdgeOperator],
    radius: f64,
) -> Result<Vec<FrequencyReport>> {
    if s_values.is_empty() {
        return Err(Error::invalid("rescaling sweep needs at least one factor"));
    }
    if flows_per_s.len() != s_values.len() {
        return Err(Error::invalid(format!(
            "{} flow sets for {} rescaling factors",
            flows_per_s.len(),
            s_values.len()
        )));
    }
    s_values
        .iter()
        .zip(flows_per_s)
        .map(|(&s, flows)| observation2_report(frames, flows, s, ops, radius))
        .collect()
}

/// Arm metrics at each diffusion step. `steps` holds `(t, tensors at t)`
/// with one tensor per frame, all sharing the same flows.
pub fn step_series(
    steps: &[(usize, Vec<Tensor>)],
    flows: &[FlowField],
    s: usize,
    ops: &[EdgeOperator],
    radius: f64,
) -> Result<Vec<StepFrequency>> {
    steps
        .iter()
        .map(|(t, tensors)| {
            let r = observation2_report(tensors, flows, s, ops, radius)?;
            Ok(StepFrequency {
                step: *t,
                original: r.original,
                warp_direct: r.warp_direct,
                ogwm_align: r.ogwm_align,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frames() -> Vec<Tensor> {
        (0..3)
            .map(|k| {
                Tensor::from_fn(1, 16, 16, |_, y, x| {
                    (((x + k) as f64 * 0.9).sin() * (y as f64 * 0.7).cos() + 1.0) / 2.0
                })
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn zero_flow_gives_identical_arms() {
        let f = frames();
        let flows = vec![FlowField::zeros(32, 32).unwrap(); 2];
        let r = observation2_report(&f, &flows, 2, &EdgeOperator::all(), 4.0).unwrap();
        assert_eq!(r.original, r.warp_direct);
        assert_eq!(r.original, r.ogwm_align);
        for v in r.reduction_percent.warp_direct.edge_strength.values() {
            assert_eq!(*v, 0.0);
        }
        assert_eq!(r.reduction_percent.ogwm_align.highpass_strength, 0.0);
        assert_eq!(r.pair_count, 2);
    }

    #[test]
    fn scale_one_makes_arms_coincide() {
        let f = frames();
        let flows = vec![FlowField::uniform(16, 16, 0.4, -0.3).unwrap(); 2];
        let r = &rescaling_sweep(&f, &[flows], &[1], &EdgeOperator::all(), 4.0).unwrap()[0];
        assert_eq!(r.warp_direct, r.ogwm_align);
    }

    #[test]
    fn input_validation() {
        let f = frames();
        let ops = EdgeOperator::all();
        assert!(observation2_report(&f[..1], &[], 1, &ops, 4.0).is_err());
        assert!(observation2_report(&f, &[FlowField::zeros(16, 16).unwrap()], 1, &ops, 4.0).is_err());
        let wrong = vec![FlowField::zeros(16, 16).unwrap(); 2];
        assert!(observation2_report(&f, &wrong, 2, &ops, 4.0).is_err());
        assert!(rescaling_sweep(&f, &[], &[], &ops, 4.0).is_err());
    }

    #[test]
    fn percent_loss_handles_zero_original() {
        assert_eq!(percent_loss(0.0, 1.0), 0.0);
        assert_eq!(percent_loss(2.0, 1.0), 50.0);
    }
}
