//! Reverse diffusion with per-step guidance from aligned neighbouring frames.

mod denoiser;
mod guidance;
mod schedule;
mod sequence;

pub use denoiser::{
    gaussian_oracle_denoiser, AlignedCorrection, ConditionalGaussianOracle, Denoiser, GaussianOracle, GaussianPrior,
    GuidanceCombiner, GuidanceSpace,
};
pub use guidance::guided_step;
pub use schedule::{
    build_schedule, forward_noise, project_noise_free, reverse_step, Schedule, VarianceKind, DEFAULT_BETA_END,
    DEFAULT_BETA_START, DEFAULT_SAMPLE_STEPS, DEFAULT_TRAIN_STEPS,
};
pub use sequence::{
    run_guided_sequence, Direction, FrameStats, GuidanceRunReport, PairOrder, SequenceRun, SequenceSettings, Snapshot,
    StageTiming, StepLog,
};
