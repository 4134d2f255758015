use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vsrkit::corr::{Domain, SigmaMode};
use vsrkit::flow::{EstimatorKind, FlowConfig};
use vsrkit::freq::EdgeOperator;
use vsrkit::harness::{
    run_experiment, run_flow, run_warp, ExperimentConfig, ExperimentKind, ExperimentResult, SyntheticKind, WarpMode,
};
use vsrkit::warp::BorderPolicy;

#[derive(Parser)]
#[command(
    name = "vsrkit",
    version,
    about = "Flow-guided alignment and diffusion guidance experiments"
)]
struct Cli {
    /// Seed for every stochastic stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output path: report JSON, .flo file, image, or directory, by command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML file providing defaults; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct FrameSource {
    /// Directory of frames, read in filename order.
    #[arg(long, visible_alias = "input")]
    frames: Option<PathBuf>,
}

#[derive(Args)]
struct FlowArgs {
    #[arg(long, value_enum)]
    estimator: Option<Estimator>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    window_radius: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Estimator {
    Lk,
    Farneback,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum Border {
    Clamp,
    Zero,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Direct,
    Ogwm,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Translate,
    Rotate,
    TexturedNoise,
}

#[derive(Subcommand)]
enum Command {
    /// Adjacent-frame SSIM, PSNR, entropy and spread.
    AnalyzeCorrelation {
        #[command(flatten)]
        src: FrameSource,
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long, value_parser = ["per-variable", "adjacent-difference"])]
        sigma_mode: Option<String>,
        #[arg(long, value_parser = ["pixel", "feature"])]
        domain: Option<String>,
    },
    /// Edge and high-pass loss of direct versus rescaled alignment.
    AnalyzeFrequency {
        #[command(flatten)]
        src: FrameSource,
        #[arg(long)]
        scale: Option<usize>,
        /// Comma-separated list, e.g. `canny,sobel`.
        #[arg(long)]
        operators: Option<String>,
        #[arg(long)]
        radius: Option<f64>,
        /// Also record estimates at these diffusion steps (comma-separated).
        #[arg(long, value_delimiter = ',')]
        steps_series: Option<Vec<usize>>,
        #[command(flatten)]
        flow: FlowArgs,
    },
    /// Frequency report for several rescaling factors.
    RescalingSweep {
        #[command(flatten)]
        src: FrameSource,
        #[arg(long, value_delimiter = ',')]
        scales: Option<Vec<usize>>,
        #[arg(long)]
        operators: Option<String>,
        #[arg(long)]
        radius: Option<f64>,
        #[command(flatten)]
        flow: FlowArgs,
    },
    /// Run the guided reverse chain over a sequence.
    SimulateGuidance {
        #[command(flatten)]
        src: FrameSource,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        scale: Option<usize>,
        #[arg(long, value_enum)]
        guidance: Option<OnOff>,
        #[arg(long)]
        strength: Option<f64>,
        #[arg(long)]
        sigma0: Option<f64>,
        /// Add the correction to the noise prediction instead of the output.
        #[arg(long)]
        epsilon_space: bool,
        #[arg(long)]
        backward_first: bool,
        #[command(flatten)]
        flow: FlowArgs,
    },
    /// Estimate flow between two images and write a .flo file.
    Flow {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value_t = 1)]
        scale: usize,
        #[command(flatten)]
        flow: FlowArgs,
    },
    /// Warp an image with a .flo file.
    Warp {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        flow: PathBuf,
        #[arg(long, value_enum, default_value = "direct")]
        mode: Mode,
        #[arg(long, default_value_t = 1)]
        scale: usize,
        #[arg(long, value_enum, default_value = "clamp")]
        border: Border,
    },
    /// Write a synthetic sequence with known motion.
    GenSynthetic {
        #[arg(long, value_enum)]
        kind: Option<Kind>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        channels: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
        #[arg(long)]
        width: Option<usize>,
        /// Per-frame shift `dx,dy`.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        shift: Option<Vec<f64>>,
        #[arg(long)]
        angle: Option<f64>,
        #[arg(long)]
        noise: Option<f64>,
    },
}

fn apply_flow_args(cfg: &mut FlowConfig, a: &FlowArgs) {
    if let Some(e) = a.estimator {
        cfg.estimator = match e {
            Estimator::Lk => EstimatorKind::LucasKanadePyramidal,
            Estimator::Farneback => EstimatorKind::FarnebackPolynomial,
        };
    }
    if let Some(v) = a.levels {
        cfg.pyramid_levels = v;
    }
    if let Some(v) = a.iterations {
        cfg.iterations = v;
    }
    if let Some(v) = a.window_radius {
        cfg.window_radius = v;
    }
}

fn apply_frequency_args(
    cfg: &mut ExperimentConfig,
    operators: &Option<String>,
    radius: Option<f64>,
) -> vsrkit::Result<()> {
    if let Some(ops) = operators {
        cfg.operators = EdgeOperator::parse_list(ops)?;
    }
    if let Some(r) = radius {
        cfg.radius = r;
    }
    Ok(())
}

fn base_config(cli: &Cli) -> vsrkit::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> vsrkit::Result<String> {
    let mut cfg = base_config(&cli)?;
    let set_frames = |cfg: &mut ExperimentConfig, src: &FrameSource| {
        if let Some(dir) = &src.frames {
            cfg.input = Some(dir.clone());
        }
    };
    let out = |default: &str| cli.out.clone().unwrap_or_else(|| PathBuf::from(default));
    match &cli.command {
        Command::AnalyzeCorrelation {
            src,
            bins,
            sigma_mode,
            domain,
        } => {
            cfg.experiment = ExperimentKind::AnalyzeCorrelation;
            set_frames(&mut cfg, src);
            if let Some(b) = bins {
                cfg.bins = *b;
            }
            match sigma_mode.as_deref() {
                Some("adjacent-difference") => cfg.sigma_mode = SigmaMode::AdjacentDifference,
                Some(_) => cfg.sigma_mode = SigmaMode::PerVariable,
                None => {}
            }
            match domain.as_deref() {
                Some("feature") => cfg.domain = Domain::Feature,
                Some(_) => cfg.domain = Domain::Pixel,
                None => {}
            }
        }
        Command::AnalyzeFrequency {
            src,
            scale,
            operators,
            radius,
            steps_series,
            flow,
        } => {
            cfg.experiment = ExperimentKind::AnalyzeFrequency;
            set_frames(&mut cfg, src);
            if let Some(s) = scale {
                cfg.scale = *s;
            }
            if let Some(steps) = steps_series {
                cfg.guidance.snapshot_steps = steps.clone();
            }
            apply_frequency_args(&mut cfg, operators, *radius)?;
            apply_flow_args(&mut cfg.flow, flow);
        }
        Command::RescalingSweep {
            src,
            scales,
            operators,
            radius,
            flow,
        } => {
            cfg.experiment = ExperimentKind::RescalingSweep;
            set_frames(&mut cfg, src);
            if let Some(s) = scales {
                cfg.scales = s.clone();
            }
            apply_frequency_args(&mut cfg, operators, *radius)?;
            apply_flow_args(&mut cfg.flow, flow);
        }
        Command::SimulateGuidance {
            src,
            steps,
            scale,
            guidance,
            strength,
            sigma0,
            epsilon_space,
            backward_first,
            flow,
        } => {
            cfg.experiment = ExperimentKind::SimulateGuidance;
            set_frames(&mut cfg, src);
            if let Some(n) = steps {
                cfg.schedule.sample_steps = *n;
            }
            if let Some(s) = scale {
                cfg.scale = *s;
            }
            if let Some(g) = guidance {
                cfg.guidance.enabled = matches!(g, OnOff::On);
            }
            if let Some(k) = strength {
                cfg.guidance.strength = *k;
            }
            if let Some(s) = sigma0 {
                cfg.guidance.sigma0 = *s;
            }
            if *epsilon_space {
                cfg.guidance.space = vsrkit::diffusion::GuidanceSpace::Epsilon;
            }
            if *backward_first {
                cfg.guidance.order = vsrkit::diffusion::PairOrder::BackwardFirst;
            }
            apply_flow_args(&mut cfg.flow, flow);
        }
        Command::Flow {
            reference,
            target,
            scale,
            flow,
        } => {
            apply_flow_args(&mut cfg.flow, flow);
            let path = out("flow.flo");
            let f = run_flow(reference, target, *scale, &cfg.flow, &path)?;
            let (u, v) = f.mean();
            return Ok(format!(
                "wrote {} ({}x{}, mean flow {u:.4}, {v:.4})",
                path.display(),
                f.width(),
                f.height()
            ));
        }
        Command::Warp {
            src,
            flow,
            mode,
            scale,
            border,
        } => {
            let path = out("warped.png");
            let mode = match mode {
                Mode::Direct => WarpMode::Direct,
                Mode::Ogwm => WarpMode::Ogwm,
            };
            let border = match border {
                Border::Clamp => BorderPolicy::Clamp,
                Border::Zero => BorderPolicy::Zero,
            };
            run_warp(src, flow, mode, *scale, border, &path)?;
            return Ok(format!("wrote {}", path.display()));
        }
        Command::GenSynthetic {
            kind,
            frames,
            channels,
            height,
            width,
            shift,
            angle,
            noise,
        } => {
            cfg.experiment = ExperimentKind::GenSynthetic;
            cfg.input = None;
            let s = &mut cfg.synthetic;
            if let Some(k) = kind {
                s.kind = match k {
                    Kind::Translate => SyntheticKind::Translate,
                    Kind::Rotate => SyntheticKind::Rotate,
                    Kind::TexturedNoise => SyntheticKind::TexturedNoise,
                };
            }
            if let Some(v) = frames {
                s.frames = *v;
            }
            if let Some(v) = channels {
                s.channels = *v;
            }
            if let Some(v) = height {
                s.height = *v;
            }
            if let Some(v) = width {
                s.width = *v;
            }
            if let Some(v) = shift {
                let [dx, dy] = v[..] else {
                    return Err(vsrkit::Error::InvalidArgument("--shift takes two values: dx,dy".into()));
                };
                s.shift = (dx, dy);
            }
            if let Some(v) = angle {
                s.angle_deg = *v;
            }
            if let Some(v) = noise {
                s.noise_std = *v;
            }
            cfg.out = out("synthetic");
            let r = run_experiment(&cfg)?;
            return Ok(format!("wrote {}", r.json_path.display()));
        }
    }
    if let Some(p) = &cli.out {
        cfg.out = p.clone();
    }
    let r = run_experiment(&cfg)?;
    if let ExperimentResult::Guidance(g) = &r.report.result {
        for t in &g.timings {
            eprintln!("{:>16} {:.3}s", t.stage, t.seconds);
        }
    }
    let mut msg = format!("wrote {}", r.json_path.display());
    if let Some(csv) = r.csv_path {
        msg.push_str(&format!(" and {}", csv.display()));
    }
    Ok(msg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
