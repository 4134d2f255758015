use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::denoiser::{Denoiser, GuidanceCombiner, GuidanceSpace};
use super::guidance::guided_update;
use super::schedule::{project_noise_free, reverse_step, Schedule};
use crate::corr::tof;
use crate::error::{Error, Result};
use crate::flow::{prescaled_flow, FlowConfig, FlowField};
use crate::tensor::Tensor;
use crate::warp::{ogwm_align, BorderPolicy};

/// Which neighbour guides a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Previous frame guides the current one.
    Forward,
    /// Next frame guides the current one.
    Backward,
}

/// Slot order within each pair of consecutive steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairOrder {
    #[default]
    ForwardFirst,
    BackwardFirst,
}

impl PairOrder {
    /// Direction of the `k`-th executed step (0 is the noisiest).
    pub fn direction(self, k: usize) -> Direction {
        match (self, k.is_multiple_of(2)) {
            (PairOrder::ForwardFirst, true) | (PairOrder::BackwardFirst, false) => Direction::Forward,
            _ => Direction::Backward,
        }
    }
}

impl FromStr for PairOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "forward-first" | "forward_first" | "forward" => Ok(PairOrder::ForwardFirst),
            "backward-first" | "backward_first" | "backward" => Ok(PairOrder::BackwardFirst),
            other => Err(Error::invalid(format!("unknown pair order {other:?}"))),
        }
    }
}

impl fmt::Display for PairOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PairOrder::ForwardFirst => "forward_first",
            PairOrder::BackwardFirst => "backward_first",
        })
    }
}

/// Everything besides the networks that a sequence run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SequenceSettings {
    /// Rescaling factor for flow estimation and alignment.
    pub scale: usize,
    pub flow: FlowConfig,
    pub seed: u64,
    pub order: PairOrder,
    pub space: GuidanceSpace,
    /// Also run the chain with a zero combiner on identical noise.
    pub baseline: bool,
    /// Steps whose noise-free estimates are kept for later analysis.
    pub snapshot_steps: Vec<usize>,
}

impl Default for SequenceSettings {
    fn default() -> Self {
        Self {
            scale: 4,
            flow: FlowConfig::default(),
            seed: 0,
            order: PairOrder::default(),
            space: GuidanceSpace::default(),
            baseline: true,
            snapshot_steps: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub direction: Direction,
    /// Frames that actually had a neighbour in `direction`.
    pub guided_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameStats {
    pub index: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// MSE to the conditioning frame.
    pub mse: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mse_unguided: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Summary of one guided sequence run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceRunReport {
    pub steps: usize,
    pub frame_count: usize,
    pub guidance_enabled: bool,
    pub settings: SequenceSettings,
    pub directions: Vec<StepLog>,
    pub forward_count: usize,
    pub backward_count: usize,
    pub frames: Vec<FrameStats>,
    /// Temporal flow discrepancy of the outputs against the conditioning
    /// frames; absent for single-frame runs.
    pub tof_guided: Option<f64>,
    pub tof_unguided: Option<f64>,
    /// Wall-clock per stage. Not serialized so reports stay reproducible.
    #[serde(skip)]
    pub timings: Vec<StageTiming>,
}

/// Noise-free estimates of every frame at a retained step.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub estimates: Vec<Tensor>,
}

struct ChainOutput {
    finals: Vec<Tensor>,
    log: Vec<StepLog>,
    snapshots: Vec<Snapshot>,
}

fn normal_tensor(rng: &mut ChaCha8Rng, dims: (usize, usize, usize)) -> Tensor {
    let (c, h, w) = dims;
    let data: Vec<f64> = (0..c * h * w).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::from_parts(c, h, w, data)
}

/// One independent stream per frame, all derived from `seed`.
fn frame_rngs(seed: u64, n: usize) -> Vec<ChaCha8Rng> {
    (0..n)
        .map(|i| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(i as u64);
            r
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn run_chain(
    frames: &[Tensor],
    fwd: &[Option<FlowField>],
    bwd: &[Option<FlowField>],
    sched: &Schedule,
    du: &dyn Denoiser,
    gu: &dyn Denoiser,
    comb: &GuidanceCombiner,
    settings: &SequenceSettings,
) -> Result<ChainOutput> {
    let n = frames.len();
    let steps = sched.steps();
    let dims = frames[0].dims();
    let mut rngs = frame_rngs(settings.seed, n);
    let mut z: Vec<Tensor> = rngs.iter_mut().map(|r| normal_tensor(r, dims)).collect();
    let mut log = Vec::with_capacity(steps);
    let mut snapshots = Vec::new();

    for k in 0..steps {
        let t = steps - k;
        let direction = settings.order.direction(k);
        // barrier: every frame's estimate at t is fixed before any update
        let eps: Vec<Tensor> = z
            .par_iter()
            .zip(frames.par_iter())
            .map(|(zi, xi)| du.predict(zi, t, sched, &[xi]))
            .collect::<Result<_>>()?;
        let est: Vec<Tensor> = z
            .par_iter()
            .zip(eps.par_iter())
            .map(|(zi, ei)| project_noise_free(zi, ei, t, sched))
            .collect::<Result<_>>()?;
        if settings.snapshot_steps.contains(&t) {
            snapshots.push(Snapshot {
                step: t,
                estimates: est.clone(),
            });
        }
        let noise: Vec<Tensor> = rngs.iter_mut().map(|r| normal_tensor(r, dims)).collect();
        let guided_frames = (0..n)
            .filter(|&i| match direction {
                Direction::Forward => fwd[i].is_some(),
                Direction::Backward => bwd[i].is_some(),
            })
            .count();
        z = (0..n)
            .into_par_iter()
            .map(|i| {
                let guide = match direction {
                    Direction::Forward => fwd[i].as_ref().map(|f| (i - 1, f)),
                    Direction::Backward => bwd[i].as_ref().map(|f| (i + 1, f)),
                };
                match guide {
                    Some((j, flow)) => {
                        let aligned = ogwm_align(&est[j], flow, settings.scale, BorderPolicy::Clamp)?;
                        guided_update(
                            &z[i],
                            &eps[i],
                            &frames[i],
                            &aligned,
                            gu,
                            comb,
                            settings.space,
                            t,
                            sched,
                            &noise[i],
                        )
                    }
                    None => reverse_step(&z[i], &eps[i], t, sched, &noise[i]),
                }
            })
            .collect::<Result<_>>()?;
        log.push(StepLog {
            step: t,
            direction,
            guided_frames,
        });
    }
    Ok(ChainOutput {
        finals: z,
        log,
        snapshots,
    })
}

fn frame_stats(index: usize, out: &Tensor, x: &Tensor, unguided: Option<&Tensor>) -> Result<FrameStats> {
    let mean = out.mean();
    let var = out.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / out.len() as f64;
    Ok(FrameStats {
        index,
        mean,
        std: var.sqrt(),
        min: out.min(),
        max: out.max(),
        mse: out.mse(x)?,
        mse_unguided: unguided.map(|u| u.mse(x)).transpose()?,
    })
}

/// Result of [`run_guided_sequence`].
#[derive(Debug, Clone)]
pub struct SequenceRun {
    pub outputs: Vec<Tensor>,
    /// Baseline outputs from the zero-combiner chain, when requested.
    pub unguided: Option<Vec<Tensor>>,
    pub report: GuidanceRunReport,
    pub snapshots: Vec<Snapshot>,
    /// `forward_flows[i]` aligns frame `i − 1` onto frame `i`.
    pub forward_flows: Vec<Option<FlowField>>,
}

/// Run the reverse chain for every frame with alternating forward and
/// backward guidance.
///
/// `frames` are the conditioning tensors and double as the temporal
/// reference for tOF. Flows are estimated once from the conditioning frames
/// at factor `settings.scale`. Frames without a neighbour in the active
/// direction take an unguided step. Noise is drawn per frame from
/// independent streams of `settings.seed`, so a baseline run with a zero
/// combiner sees exactly the same noise.
pub fn run_guided_sequence(
    frames: &[Tensor],
    sched: &Schedule,
    du: &dyn Denoiser,
    gu: &dyn Denoiser,
    comb: &GuidanceCombiner,
    settings: &SequenceSettings,
) -> Result<SequenceRun> {
    if frames.is_empty() {
        return Err(Error::invalid("guided sequence needs at least one frame"));
    }
    if settings.scale == 0 {
        return Err(Error::invalid("rescaling factor must be positive"));
    }
    settings.flow.validate()?;
    for (i, f) in frames.iter().enumerate() {
        if f.dims() != frames[0].dims() {
            return Err(Error::invalid(format!(
                "frame {i} has dims {:?}, expected {:?}",
                f.dims(),
                frames[0].dims()
            )));
        }
    }
    if comb.channels() != frames[0].channels() {
        return Err(Error::invalid(format!(
            "combiner has {} channels, frames have {}",
            comb.channels(),
            frames[0].channels()
        )));
    }
    let n = frames.len();
    let mut timings = Vec::new();

    let clock = Instant::now();
    let guided = !comb.is_zero();
    let (fwd, bwd) = if guided {
        let flow =
            |r: usize, t: usize| prescaled_flow(&frames[r], &frames[t], settings.scale, &settings.flow).map(Some);
        let fwd: Vec<Option<FlowField>> = (0..n)
            .into_par_iter()
            .map(|i| if i > 0 { flow(i - 1, i) } else { Ok(None) })
            .collect::<Result<_>>()?;
        let bwd: Vec<Option<FlowField>> = (0..n)
            .into_par_iter()
            .map(|i| if i + 1 < n { flow(i + 1, i) } else { Ok(None) })
            .collect::<Result<_>>()?;
        (fwd, bwd)
    } else {
        (vec![None; n], vec![None; n])
    };
    timings.push(StageTiming {
        stage: "flow".into(),
        seconds: clock.elapsed().as_secs_f64(),
    });

    let clock = Instant::now();
    let main = run_chain(frames, &fwd, &bwd, sched, du, gu, comb, settings)?;
    timings.push(StageTiming {
        stage: "guided_chain".into(),
        seconds: clock.elapsed().as_secs_f64(),
    });

    let unguided = if settings.baseline {
        let clock = Instant::now();
        let zero = GuidanceCombiner::zero_init(comb.channels());
        let none = vec![None; n];
        let base = run_chain(frames, &none, &none, sched, du, gu, &zero, settings)?;
        timings.push(StageTiming {
            stage: "baseline_chain".into(),
            seconds: clock.elapsed().as_secs_f64(),
        });
        Some(base.finals)
    } else {
        None
    };

    let clock = Instant::now();
    let (tof_guided, tof_unguided) = if n >= 2 {
        let g = tof(&main.finals, frames, &settings.flow)?;
        let u = unguided.as_ref().map(|u| tof(u, frames, &settings.flow)).transpose()?;
        (Some(g), u)
    } else {
        (None, None)
    };
    timings.push(StageTiming {
        stage: "tof".into(),
        seconds: clock.elapsed().as_secs_f64(),
    });

    let stats = (0..n)
        .map(|i| frame_stats(i, &main.finals[i], &frames[i], unguided.as_ref().map(|u| &u[i])))
        .collect::<Result<Vec<_>>>()?;
    let forward_count = main.log.iter().filter(|l| l.direction == Direction::Forward).count();
    let report = GuidanceRunReport {
        steps: sched.steps(),
        frame_count: n,
        guidance_enabled: guided,
        settings: settings.clone(),
        forward_count,
        backward_count: main.log.len() - forward_count,
        directions: main.log,
        frames: stats,
        tof_guided,
        tof_unguided,
        timings,
    };
    Ok(SequenceRun {
        outputs: main.finals,
        unguided,
        report,
        snapshots: main.snapshots,
        forward_flows: fwd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::denoiser::{AlignedCorrection, ConditionalGaussianOracle};
    use crate::diffusion::schedule::build_schedule;

    fn oracles() -> (ConditionalGaussianOracle, AlignedCorrection) {
        (
            ConditionalGaussianOracle { sigma0: 0.1 },
            AlignedCorrection {
                sigma0: 0.1,
                space: GuidanceSpace::Output,
            },
        )
    }

    fn settings() -> SequenceSettings {
        SequenceSettings {
            scale: 1,
            seed: 5,
            ..Default::default()
        }
    }

    #[test]
    fn pair_order_alternates() {
        let f = PairOrder::ForwardFirst;
        assert_eq!(f.direction(0), Direction::Forward);
        assert_eq!(f.direction(1), Direction::Backward);
        assert_eq!(PairOrder::BackwardFirst.direction(0), Direction::Backward);
        assert_eq!("backward-first".parse::<PairOrder>().unwrap(), PairOrder::BackwardFirst);
        assert!("sideways".parse::<PairOrder>().is_err());
    }

    #[test]
    fn two_steps_give_one_forward_then_one_backward() {
        let sched = build_schedule(2, 1e-3, 0.02).unwrap();
        let frames = vec![Tensor::filled(1, 16, 16, 0.5).unwrap(); 3];
        let (du, gu) = oracles();
        let run = run_guided_sequence(
            &frames,
            &sched,
            &du,
            &gu,
            &GuidanceCombiner::uniform(1, 0.5),
            &settings(),
        )
        .unwrap();
        let dirs: Vec<_> = run.report.directions.iter().map(|l| (l.step, l.direction)).collect();
        assert_eq!(dirs, vec![(2, Direction::Forward), (1, Direction::Backward)]);
        assert_eq!(run.report.directions[0].guided_frames, 2);
    }

    #[test]
    fn single_frame_matches_unguided_chain() {
        let sched = build_schedule(10, 1e-3, 0.05).unwrap();
        let x = Tensor::from_fn(1, 8, 8, |_, y, x| (x + y) as f64 / 16.0).unwrap();
        let (du, gu) = oracles();
        let run = run_guided_sequence(
            std::slice::from_ref(&x),
            &sched,
            &du,
            &gu,
            &GuidanceCombiner::uniform(1, 0.8),
            &settings(),
        )
        .unwrap();
        let base = run.unguided.unwrap();
        assert_eq!(run.outputs, base);
        assert!(run.report.tof_guided.is_none());
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let sched = build_schedule(4, 1e-3, 0.02).unwrap();
        let (du, gu) = oracles();
        assert!(run_guided_sequence(&[], &sched, &du, &gu, &GuidanceCombiner::zero_init(1), &settings()).is_err());
    }

    #[test]
    fn snapshots_are_kept_for_requested_steps() {
        let sched = build_schedule(6, 1e-3, 0.05).unwrap();
        let frames = vec![Tensor::filled(1, 12, 12, 0.2).unwrap(); 2];
        let (du, gu) = oracles();
        let s = SequenceSettings {
            snapshot_steps: vec![6, 3],
            ..settings()
        };
        let run = run_guided_sequence(&frames, &sched, &du, &gu, &GuidanceCombiner::zero_init(1), &s).unwrap();
        let got: Vec<usize> = run.snapshots.iter().map(|s| s.step).collect();
        assert_eq!(got, vec![6, 3]);
        assert_eq!(run.snapshots[0].estimates.len(), 2);
    }
}
