use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::synthetic::SyntheticSpec;
use crate::corr::{Domain, SigmaMode, DEFAULT_BINS};
use crate::diffusion::{
    GuidanceSpace, PairOrder, VarianceKind, DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_SAMPLE_STEPS,
    DEFAULT_TRAIN_STEPS,
};
use crate::error::{Error, Result};
use crate::flow::FlowConfig;
use crate::freq::{EdgeOperator, DEFAULT_HIGHPASS_RADIUS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    AnalyzeCorrelation,
    #[default]
    AnalyzeFrequency,
    RescalingSweep,
    SimulateGuidance,
    GenSynthetic,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::AnalyzeCorrelation => "analyze-correlation",
            Self::AnalyzeFrequency => "analyze-frequency",
            Self::RescalingSweep => "rescaling-sweep",
            Self::SimulateGuidance => "simulate-guidance",
            Self::GenSynthetic => "gen-synthetic",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Self::AnalyzeCorrelation,
            Self::AnalyzeFrequency,
            Self::RescalingSweep,
            Self::SimulateGuidance,
            Self::GenSynthetic,
        ]
        .into_iter()
        .find(|k| k.as_str() == s.replace('_', "-"))
        .ok_or_else(|| Error::invalid(format!("unknown experiment {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub train_steps: usize,
    pub sample_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub variance: VarianceKind,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            train_steps: DEFAULT_TRAIN_STEPS,
            sample_steps: DEFAULT_SAMPLE_STEPS,
            beta_start: DEFAULT_BETA_START,
            beta_end: DEFAULT_BETA_END,
            variance: VarianceKind::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuidanceConfig {
    pub enabled: bool,
    /// Uniform combiner gain; 0 reproduces the unguided chain.
    pub strength: f64,
    /// Spread of the conditional oracle prior around each frame.
    pub sigma0: f64,
    pub space: GuidanceSpace,
    pub order: PairOrder,
    /// Steps at which noise-free estimates feed a per-step frequency series.
    pub snapshot_steps: Vec<usize>,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            strength: 0.5,
            sigma0: 0.1,
            space: GuidanceSpace::default(),
            order: PairOrder::default(),
            snapshot_steps: Vec::new(),
        }
    }
}

/// Full description of one run, loadable from TOML.
///
/// Frames are read from `input` in lexicographic filename order, so
/// numbered files need zero padding (`frame_0009.png` before
/// `frame_0010.png`). When `input` is absent, `synthetic` generates them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub input: Option<PathBuf>,
    pub synthetic: SyntheticSpec,
    /// Report path (JSON); a CSV mirror is written next to it. For
    /// `gen-synthetic` this is the output directory.
    pub out: PathBuf,
    pub seed: u64,
    pub threads: Option<usize>,
    pub scale: usize,
    pub scales: Vec<usize>,
    pub flow: FlowConfig,
    pub operators: Vec<EdgeOperator>,
    pub radius: f64,
    pub bins: usize,
    pub sigma_mode: SigmaMode,
    pub domain: Domain,
    /// Smoothing used for the feature-domain proxy.
    pub feature_sigma: f64,
    pub schedule: ScheduleConfig,
    pub guidance: GuidanceConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::default(),
            input: None,
            synthetic: SyntheticSpec::default(),
            out: PathBuf::from("report.json"),
            seed: 0,
            threads: None,
            scale: 4,
            scales: vec![1, 2, 4],
            flow: FlowConfig::default(),
            operators: EdgeOperator::all(),
            radius: DEFAULT_HIGHPASS_RADIUS,
            bins: DEFAULT_BINS,
            sigma_mode: SigmaMode::default(),
            domain: Domain::default(),
            feature_sigma: 2.0,
            schedule: ScheduleConfig::default(),
            guidance: GuidanceConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(dir) = &self.input {
            if !dir.exists() {
                return Err(Error::NotFound(dir.clone()));
            }
        } else {
            self.synthetic.validate()?;
        }
        if self.scale == 0 || self.scales.contains(&0) {
            return Err(Error::invalid("rescaling factors must be positive"));
        }
        if self.experiment == ExperimentKind::RescalingSweep && self.scales.is_empty() {
            return Err(Error::invalid("rescaling sweep needs at least one factor"));
        }
        if self.operators.is_empty() {
            return Err(Error::invalid("at least one edge operator is required"));
        }
        if !self.radius.is_finite() || self.radius < 0.0 {
            return Err(Error::invalid("high-pass radius must be finite and non-negative"));
        }
        if self.bins < 2 {
            return Err(Error::invalid("histogram needs at least two bins"));
        }
        if !(self.feature_sigma > 0.0) {
            return Err(Error::invalid("feature_sigma must be positive"));
        }
        if self.threads == Some(0) {
            return Err(Error::invalid("threads must be at least 1"));
        }
        if !(self.guidance.sigma0 >= 0.0) || !self.guidance.strength.is_finite() {
            return Err(Error::invalid(
                "guidance sigma0 must be non-negative and strength finite",
            ));
        }
        self.flow.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            "experiment = \"rescaling-sweep\"\nseed = 9\nscales = [1, 2]\n[flow]\niterations = 3\n",
        )
        .unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::RescalingSweep);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.scales, vec![1, 2]);
        assert_eq!(cfg.flow.iterations, 3);
        assert_eq!(cfg.flow.window_radius, 10);
    }

    #[test]
    fn unknown_values_are_config_errors() {
        assert!(matches!(
            ExperimentConfig::from_toml_str("experiment = \"bake\""),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn validation_catches_missing_input() {
        let cfg = ExperimentConfig {
            input: Some(PathBuf::from("/definitely/not/here")),
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::NotFound(_))));
        let cfg = ExperimentConfig {
            bins: 1,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn experiment_names_parse() {
        assert_eq!(
            "simulate-guidance".parse::<ExperimentKind>().unwrap(),
            ExperimentKind::SimulateGuidance
        );
        assert_eq!(
            "analyze_correlation".parse::<ExperimentKind>().unwrap(),
            ExperimentKind::AnalyzeCorrelation
        );
    }
}
