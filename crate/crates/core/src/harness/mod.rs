//! Experiment configuration, synthetic sequences and report emission.

mod config;
mod experiment;
pub mod synthetic;

pub use crate::diffusion::GuidanceRunReport;
pub use config::{ExperimentConfig, ExperimentKind, GuidanceConfig, ScheduleConfig};
pub use experiment::{
    adjacent_flows, load_frames, load_tensor, run_experiment, run_flow, run_warp, save_tensor, ExperimentReport,
    ExperimentResult, RunOutput, SyntheticManifest, WarpMode, FRAME_EXTENSIONS,
};
pub use synthetic::{generate_synthetic_sequence, rotation_flow, textured_frame, SyntheticKind, SyntheticSpec};
