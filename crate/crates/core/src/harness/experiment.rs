use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind};
use super::synthetic::generate_synthetic_sequence;
use crate::corr::{correlation_profile_with, feature_proxy, CorrelationReport, Domain};
use crate::diffusion::{
    build_schedule, run_guided_sequence, AlignedCorrection, ConditionalGaussianOracle, GuidanceCombiner,
    GuidanceRunReport, Schedule, SequenceSettings,
};
use crate::error::{Error, Result};
use crate::flow::{prescaled_flow, read_flo, write_flo, FlowConfig, FlowField};
use crate::freq::{observation2_report, rescaling_sweep, step_series, ArmMetrics, FrequencyReport};
use crate::tensor::{load_image, load_raw, save_image, save_raw, Tensor};
use crate::warp::{backward_warp_bilinear, ogwm_align, warp_direct, BorderPolicy};

/// File extensions recognised as frames.
pub const FRAME_EXTENSIONS: [&str; 5] = ["png", "ppm", "pgm", "pnm", "wdt"];

/// Read a tensor from an image file, or from the raw container for `.wdt`.
pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    match extension(path).as_deref() {
        Some("wdt") => load_raw(path),
        _ => load_image(path),
    }
}

/// Write a tensor as an image, or to the raw container for `.wdt`.
pub fn save_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match extension(path).as_deref() {
        Some("wdt") => save_raw(t, path),
        _ => save_image(t, path),
    }
}

fn extension(p: &Path) -> Option<String> {
    p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase())
}

/// Load every frame in `dir`, ordered by filename.
pub fn load_frames(dir: impl AsRef<Path>) -> Result<(Vec<String>, Vec<Tensor>)> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let known = extension(&path).is_some_and(|e| FRAME_EXTENSIONS.contains(&e.as_str()));
        if path.is_file() && known {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    if names.is_empty() {
        return Err(Error::NoFrames(dir.to_path_buf()));
    }
    names.sort();
    let frames: Vec<Tensor> = names
        .par_iter()
        .map(|n| load_tensor(dir.join(n)))
        .collect::<Result<_>>()?;
    for (n, f) in names.iter().zip(&frames) {
        if f.dims() != frames[0].dims() {
            return Err(Error::invalid(format!(
                "{n} has dims {:?}, first frame has {:?}",
                f.dims(),
                frames[0].dims()
            )));
        }
    }
    Ok((names, frames))
}

/// HR flows `flows[i]` carrying `frames[i]` onto `frames[i + 1]`.
pub fn adjacent_flows(frames: &[Tensor], s: usize, cfg: &FlowConfig) -> Result<Vec<FlowField>> {
    frames
        .par_windows(2)
        .map(|w| prescaled_flow(&w[0], &w[1], s, cfg))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticManifest {
    pub frames: Vec<String>,
    /// Ground-truth flow file per adjacent pair.
    pub flows: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentResult {
    Correlation(CorrelationReport),
    Frequency(FrequencyReport),
    Sweep(Vec<FrequencyReport>),
    Guidance(GuidanceRunReport),
    Synthetic(SyntheticManifest),
}

/// Everything written to the JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: ExperimentKind,
    pub seed: u64,
    /// Resolved configuration the run used.
    pub config: ExperimentConfig,
    /// Frame file names in processing order, or `synthetic:<kind>`.
    pub source: Vec<String>,
    pub result: ExperimentResult,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Paths written by a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub report: ExperimentReport,
    pub json_path: PathBuf,
    pub csv_path: Option<PathBuf>,
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

fn schedule_from(cfg: &ExperimentConfig) -> Result<Schedule> {
    let sc = &cfg.schedule;
    let base = build_schedule(sc.train_steps, sc.beta_start, sc.beta_end)?.with_variance(sc.variance);
    if sc.sample_steps == sc.train_steps {
        Ok(base)
    } else {
        base.respaced(sc.sample_steps)
    }
}

fn sequence_settings(cfg: &ExperimentConfig) -> SequenceSettings {
    SequenceSettings {
        scale: cfg.scale,
        flow: cfg.flow,
        seed: cfg.seed,
        order: cfg.guidance.order,
        space: cfg.guidance.space,
        baseline: true,
        snapshot_steps: cfg.guidance.snapshot_steps.clone(),
    }
}

fn combiner(cfg: &ExperimentConfig, channels: usize) -> GuidanceCombiner {
    if cfg.guidance.enabled {
        GuidanceCombiner::uniform(channels, cfg.guidance.strength)
    } else {
        GuidanceCombiner::zero_init(channels)
    }
}

fn oracles(cfg: &ExperimentConfig) -> (ConditionalGaussianOracle, AlignedCorrection) {
    (
        ConditionalGaussianOracle {
            sigma0: cfg.guidance.sigma0,
        },
        AlignedCorrection {
            sigma0: cfg.guidance.sigma0,
            space: cfg.guidance.space,
        },
    )
}

fn frequency(cfg: &ExperimentConfig, frames: &[Tensor]) -> Result<FrequencyReport> {
    let flows = stage("flow", adjacent_flows(frames, cfg.scale, &cfg.flow))?;
    let mut report = stage(
        "frequency",
        observation2_report(frames, &flows, cfg.scale, &cfg.operators, cfg.radius),
    )?;
    if !cfg.guidance.snapshot_steps.is_empty() {
        let sched = stage("schedule", schedule_from(cfg))?;
        let (du, gu) = oracles(cfg);
        let settings = SequenceSettings {
            baseline: false,
            ..sequence_settings(cfg)
        };
        let zero = GuidanceCombiner::zero_init(frames[0].channels());
        let run = stage(
            "diffusion",
            run_guided_sequence(frames, &sched, &du, &gu, &zero, &settings),
        )?;
        let steps: Vec<(usize, Vec<Tensor>)> = run.snapshots.into_iter().map(|s| (s.step, s.estimates)).collect();
        report.step_series = Some(stage(
            "frequency",
            step_series(&steps, &flows, cfg.scale, &cfg.operators, cfg.radius),
        )?);
    }
    Ok(report)
}

fn sweep(cfg: &ExperimentConfig, frames: &[Tensor]) -> Result<Vec<FrequencyReport>> {
    let flows = cfg
        .scales
        .iter()
        .map(|&s| adjacent_flows(frames, s, &cfg.flow))
        .collect::<Result<Vec<_>>>();
    let flows = stage("flow", flows)?;
    stage(
        "frequency",
        rescaling_sweep(frames, &flows, &cfg.scales, &cfg.operators, cfg.radius),
    )
}

fn correlation(cfg: &ExperimentConfig, frames: &[Tensor]) -> Result<CorrelationReport> {
    let seq = match cfg.domain {
        Domain::Pixel => frames.to_vec(),
        Domain::Feature => feature_proxy(frames, cfg.feature_sigma),
    };
    stage(
        "correlation",
        correlation_profile_with(&seq, cfg.bins, cfg.sigma_mode, cfg.domain),
    )
}

fn guidance(cfg: &ExperimentConfig, frames: &[Tensor]) -> Result<GuidanceRunReport> {
    let sched = stage("schedule", schedule_from(cfg))?;
    let (du, gu) = oracles(cfg);
    let comb = combiner(cfg, frames[0].channels());
    let run = stage(
        "diffusion",
        run_guided_sequence(frames, &sched, &du, &gu, &comb, &sequence_settings(cfg)),
    )?;
    Ok(run.report)
}

fn gen_synthetic(cfg: &ExperimentConfig, frames: &[Tensor], dir: &Path) -> Result<SyntheticManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ext = if matches!(frames[0].channels(), 1 | 3) {
        "png"
    } else {
        "wdt"
    };
    let mut manifest = SyntheticManifest {
        frames: Vec::new(),
        flows: Vec::new(),
    };
    for (i, f) in frames.iter().enumerate() {
        let name = format!("frame_{i:04}.{ext}");
        save_tensor(f, dir.join(&name))?;
        manifest.frames.push(name);
    }
    if cfg.input.is_none() {
        let gt = cfg.synthetic.ground_truth_flow()?;
        for i in 0..frames.len() - 1 {
            let name = format!("flow_{i:04}.flo");
            write_flo(&gt, dir.join(&name))?;
            manifest.flows.push(name);
        }
    }
    Ok(manifest)
}

fn frequency_rows(w: &mut csv::Writer<fs::File>, r: &FrequencyReport) -> Result<()> {
    let arms: [(&str, &ArmMetrics, Option<&crate::freq::ArmReduction>); 3] = [
        ("original", &r.original, None),
        ("warp_direct", &r.warp_direct, Some(&r.reduction_percent.warp_direct)),
        ("ogwm_align", &r.ogwm_align, Some(&r.reduction_percent.ogwm_align)),
    ];
    for (arm, m, red) in arms {
        for (op, v) in &m.edge_strength {
            let rp = red
                .and_then(|x| x.edge_strength.get(op))
                .map(|v| v.to_string())
                .unwrap_or_default();
            w.write_record([r.scale.to_string(), arm.into(), format!("edge_{op}"), v.to_string(), rp])?;
        }
        let rp = red.map(|x| x.highpass_strength.to_string()).unwrap_or_default();
        w.write_record([
            r.scale.to_string(),
            arm.into(),
            "highpass".into(),
            m.highpass_strength.to_string(),
            rp,
        ])?;
    }
    Ok(())
}

fn write_csv(path: &Path, result: &ExperimentResult) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    match result {
        ExperimentResult::Frequency(r) => {
            w.write_record(["scale", "arm", "metric", "value", "reduction_percent"])?;
            frequency_rows(&mut w, r)?;
        }
        ExperimentResult::Sweep(rs) => {
            w.write_record(["scale", "arm", "metric", "value", "reduction_percent"])?;
            for r in rs {
                frequency_rows(&mut w, r)?;
            }
        }
        ExperimentResult::Correlation(r) => {
            w.write_record(["metric", "value"])?;
            for (k, v) in [
                ("mean_ssim", r.mean_ssim),
                ("mean_psnr_db", r.mean_psnr_db),
                ("mean_f_h", r.mean_f_h),
                ("mean_f_sigma", r.mean_f_sigma),
            ] {
                w.write_record([k.to_string(), v.to_string()])?;
            }
        }
        ExperimentResult::Guidance(r) => {
            w.write_record(["frame", "mean", "std", "min", "max", "mse", "mse_unguided"])?;
            for f in &r.frames {
                w.write_record([
                    f.index.to_string(),
                    f.mean.to_string(),
                    f.std.to_string(),
                    f.min.to_string(),
                    f.max.to_string(),
                    f.mse.to_string(),
                    f.mse_unguided.map(|v| v.to_string()).unwrap_or_default(),
                ])?;
            }
        }
        ExperimentResult::Synthetic(m) => {
            w.write_record(["index", "frame", "flow"])?;
            for (i, name) in m.frames.iter().enumerate() {
                let flow = m.flows.get(i).cloned().unwrap_or_default();
                w.write_record([i.to_string(), name.clone(), flow])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn execute(cfg: &ExperimentConfig) -> Result<RunOutput> {
    stage("config", cfg.validate())?;
    let (source, frames) = match &cfg.input {
        Some(dir) => stage("load", load_frames(dir))?,
        None => {
            let spec = super::synthetic::SyntheticSpec {
                seed: cfg.seed,
                ..cfg.synthetic.clone()
            };
            let frames = stage("synthesize", generate_synthetic_sequence(&spec))?;
            (vec![format!("synthetic:{}", spec.kind)], frames)
        }
    };
    let result = match cfg.experiment {
        ExperimentKind::AnalyzeCorrelation => ExperimentResult::Correlation(correlation(cfg, &frames)?),
        ExperimentKind::AnalyzeFrequency => ExperimentResult::Frequency(frequency(cfg, &frames)?),
        ExperimentKind::RescalingSweep => ExperimentResult::Sweep(sweep(cfg, &frames)?),
        ExperimentKind::SimulateGuidance => ExperimentResult::Guidance(guidance(cfg, &frames)?),
        ExperimentKind::GenSynthetic => {
            ExperimentResult::Synthetic(stage("write", gen_synthetic(cfg, &frames, &cfg.out))?)
        }
    };
    let report = ExperimentReport {
        experiment: cfg.experiment,
        seed: cfg.seed,
        config: cfg.clone(),
        source,
        result,
    };
    let json_path = if cfg.experiment == ExperimentKind::GenSynthetic {
        cfg.out.join("manifest.json")
    } else {
        cfg.out.clone()
    };
    let csv_path = json_path.with_extension("csv");
    stage("write", write_text(&json_path, &report.to_json()?))?;
    stage("write", write_csv(&csv_path, &report.result))?;
    Ok(RunOutput {
        report,
        json_path,
        csv_path: Some(csv_path),
    })
}

/// Run one configured experiment and write its JSON report and CSV mirror.
///
/// Errors carry the stage that raised them. The synthetic generator, when
/// used, is seeded from `cfg.seed`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    match cfg.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid(e.to_string()))?;
            pool.install(|| execute(cfg))
        }
        None => execute(cfg),
    }
}

/// Estimate the flow from `reference` to `target` at factor `s` and write
/// it as a `.flo` file.
pub fn run_flow(reference: &Path, target: &Path, s: usize, cfg: &FlowConfig, out: &Path) -> Result<FlowField> {
    let r = stage("load", load_tensor(reference))?;
    let t = stage("load", load_tensor(target))?;
    let flow = stage("flow", prescaled_flow(&r, &t, s, cfg))?;
    stage("write", write_flo(&flow, out))?;
    Ok(flow)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarpMode {
    /// Bilinear warp with a flow on the source grid.
    Direct,
    /// Upscale, warp with a high-resolution flow, downscale.
    Ogwm,
}

impl std::str::FromStr for WarpMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Self::Direct),
            "ogwm" => Ok(Self::Ogwm),
            other => Err(Error::invalid(format!("unknown warp mode {other:?}"))),
        }
    }
}

/// Warp `src` with a `.flo` flow and save the result.
pub fn run_warp(src: &Path, flow: &Path, mode: WarpMode, s: usize, border: BorderPolicy, out: &Path) -> Result<Tensor> {
    let t = stage("load", load_tensor(src))?;
    let f = stage("load", read_flo(flow))?;
    let warped = stage(
        "warp",
        match mode {
            WarpMode::Direct if border == BorderPolicy::Clamp => warp_direct(&t, &f),
            WarpMode::Direct => backward_warp_bilinear(&t, &f, border),
            WarpMode::Ogwm => ogwm_align(&t, &f, s, border),
        },
    )?;
    stage("write", save_tensor(&warped, out))?;
    Ok(warped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synthetic::{SyntheticKind, SyntheticSpec};

    fn cfg(kind: ExperimentKind, out: PathBuf) -> ExperimentConfig {
        ExperimentConfig {
            experiment: kind,
            out,
            scale: 2,
            scales: vec![1, 2],
            synthetic: SyntheticSpec {
                kind: SyntheticKind::Translate,
                frames: 3,
                height: 32,
                width: 32,
                shift: (1.0, 0.5),
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn empty_directory_reports_no_frames() {
        let dir = tempfile::tempdir().unwrap();
        let c = ExperimentConfig {
            input: Some(dir.path().to_path_buf()),
            ..cfg(ExperimentKind::AnalyzeFrequency, dir.path().join("r.json"))
        };
        let err = run_experiment(&c).unwrap_err();
        assert!(matches!(err.root(), Error::NoFrames(_)));
        assert!(err.to_string().contains("no frames found"));
        assert!(err.to_string().starts_with("[load]"));
    }

    #[test]
    fn frames_are_sorted_by_name() {
        let dir = tempfile::tempdir().unwrap();
        for (name, v) in [("b_02.png", 0.2), ("a_10.png", 0.6), ("b_01.pgm", 0.4)] {
            save_image(&Tensor::filled(1, 4, 4, v).unwrap(), dir.path().join(name)).unwrap();
        }
        fs::write(dir.path().join("notes.txt"), "skip me").unwrap();
        let (names, frames) = load_frames(dir.path()).unwrap();
        assert_eq!(names, vec!["a_10.png", "b_01.pgm", "b_02.png"]);
        assert!((frames[1].get(0, 0, 0) - 0.4).abs() < 0.003);
    }

    #[test]
    fn reports_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for kind in [
            ExperimentKind::AnalyzeCorrelation,
            ExperimentKind::AnalyzeFrequency,
            ExperimentKind::RescalingSweep,
        ] {
            let out = run_experiment(&cfg(kind, dir.path().join(format!("{kind}.json")))).unwrap();
            let text = fs::read_to_string(&out.json_path).unwrap();
            assert_eq!(ExperimentReport::from_json(&text).unwrap(), out.report);
            assert!(out.csv_path.unwrap().exists());
        }
    }

    #[test]
    fn synthetic_output_writes_frames_and_flows() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment(&cfg(ExperimentKind::GenSynthetic, dir.path().join("seq"))).unwrap();
        let ExperimentResult::Synthetic(m) = &out.report.result else {
            panic!("wrong result kind")
        };
        assert_eq!(m.frames.len(), 3);
        assert_eq!(m.flows.len(), 2);
        let f = read_flo(dir.path().join("seq").join(&m.flows[0])).unwrap();
        assert_eq!(f.at(5, 5), (1.0, 0.5));
        let (names, _) = load_frames(dir.path().join("seq")).unwrap();
        assert_eq!(names.len(), 3);
    }
}
