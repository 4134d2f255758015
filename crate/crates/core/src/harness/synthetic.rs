use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::tensor::Tensor;
use crate::warp::{backward_warp_bilinear, BorderPolicy};

const COMPONENTS: usize = 10;
const MIN_PERIOD: f64 = 8.0;
const MAX_PERIOD: f64 = 32.0;

#[derive(Debug, Clone, Copy)]
struct Wave {
    fx: f64,
    fy: f64,
    phase: f64,
    amp: f64,
}

fn waves(seed: u64, channels: usize) -> Vec<Vec<Wave>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..channels)
        .map(|_| {
            (0..COMPONENTS)
                .map(|_| {
                    let period = rng.random_range(MIN_PERIOD..MAX_PERIOD);
                    let theta = rng.random_range(0.0..PI);
                    let f = 1.0 / period;
                    Wave {
                        fx: f * theta.cos(),
                        fy: f * theta.sin(),
                        phase: rng.random_range(0.0..2.0 * PI),
                        amp: rng.random_range(0.5..1.0),
                    }
                })
                .collect()
        })
        .collect()
}

fn eval(ws: &[Wave], x: f64, y: f64) -> f64 {
    let norm: f64 = ws.iter().map(|w| w.amp).sum();
    let s: f64 = ws
        .iter()
        .map(|w| w.amp * (2.0 * PI * (w.fx * x + w.fy * y) + w.phase).sin())
        .sum();
    0.5 + 0.5 * s / norm
}

/// Smooth band-limited texture in `[0, 1]`, sampled at `(x + dx, y + dy)`.
///
/// Frames drawn with offsets `d` and `0` are related by the backward flow
/// `d`: `frame_d(p) = frame_0(p + d)`.
pub fn textured_frame(channels: usize, height: usize, width: usize, seed: u64, dx: f64, dy: f64) -> Result<Tensor> {
    let ws = waves(seed, channels.max(1));
    Tensor::from_fn(channels, height, width, |c, y, x| {
        eval(&ws[c], x as f64 + dx, y as f64 + dy)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Frame `i` is frame 0 shifted by `i·shift`, clamped at the border.
    #[default]
    Translate,
    /// Texture rotated about the image centre by `i·angle_deg`.
    Rotate,
    /// One static texture plus fresh Gaussian noise per frame.
    TexturedNoise,
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "translate" => Ok(Self::Translate),
            "rotate" => Ok(Self::Rotate),
            "textured_noise" | "noise" => Ok(Self::TexturedNoise),
            other => Err(Error::invalid(format!("unknown synthetic kind {other:?}"))),
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Translate => "translate",
            Self::Rotate => "rotate",
            Self::TexturedNoise => "textured_noise",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Per-frame displacement `(dx, dy)` for `translate`.
    pub shift: (f64, f64),
    /// Per-frame rotation for `rotate`, in degrees.
    pub angle_deg: f64,
    /// Noise standard deviation for `textured_noise`.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            kind: SyntheticKind::Translate,
            frames: 5,
            channels: 1,
            height: 64,
            width: 64,
            shift: (1.0, 0.0),
            angle_deg: 2.0,
            noise_std: 0.05,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 {
            return Err(Error::invalid("synthetic sequence needs at least two frames"));
        }
        if self.channels == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::invalid("synthetic frame dimensions must be positive"));
        }
        let (dx, dy) = self.shift;
        if !dx.is_finite() || !dy.is_finite() || !self.angle_deg.is_finite() {
            return Err(Error::invalid("motion parameters must be finite"));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::invalid("noise_std must be finite and non-negative"));
        }
        if self.kind == SyntheticKind::Translate {
            let span = (self.frames - 1) as f64;
            if (dx * span).abs() >= self.width as f64 || (dy * span).abs() >= self.height as f64 {
                return Err(Error::invalid(format!(
                    "total shift ({}, {}) leaves the {}x{} frame",
                    dx * span,
                    dy * span,
                    self.width,
                    self.height
                )));
            }
        }
        Ok(())
    }

    /// Ground-truth backward flow carrying frame `i` onto frame `i + 1`.
    pub fn ground_truth_flow(&self) -> Result<FlowField> {
        match self.kind {
            SyntheticKind::Translate => FlowField::uniform(self.height, self.width, self.shift.0, self.shift.1),
            SyntheticKind::Rotate => rotation_flow(self.height, self.width, self.angle_deg),
            SyntheticKind::TexturedNoise => FlowField::zeros(self.height, self.width),
        }
    }
}

fn centre(h: usize, w: usize) -> (f64, f64) {
    ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0)
}

/// Backward flow between two frames of a texture rotating by `angle_deg`
/// about the image centre: `u(p) = R(p − c) − (p − c)`.
pub fn rotation_flow(height: usize, width: usize, angle_deg: f64) -> Result<FlowField> {
    let (cx, cy) = centre(height, width);
    let (s, c) = angle_deg.to_radians().sin_cos();
    FlowField::from_fn(height, width, |y, x| {
        let (px, py) = (x as f64 - cx, y as f64 - cy);
        (c * px - s * py - px, s * px + c * py - py)
    })
}

fn rotated_frame(spec: &SyntheticSpec, ws: &[Vec<Wave>], i: usize) -> Result<Tensor> {
    let (cx, cy) = centre(spec.height, spec.width);
    let (s, c) = (spec.angle_deg * i as f64).to_radians().sin_cos();
    Tensor::from_fn(spec.channels, spec.height, spec.width, |ch, y, x| {
        let (px, py) = (x as f64 - cx, y as f64 - cy);
        eval(&ws[ch], c * px - s * py + cx, s * px + c * py + cy)
    })
}

/// Deterministic synthetic sequence with known motion.
pub fn generate_synthetic_sequence(spec: &SyntheticSpec) -> Result<Vec<Tensor>> {
    spec.validate()?;
    let base = textured_frame(spec.channels, spec.height, spec.width, spec.seed, 0.0, 0.0)?;
    match spec.kind {
        SyntheticKind::Translate => (0..spec.frames)
            .map(|i| {
                let k = i as f64;
                let flow = FlowField::uniform(spec.height, spec.width, k * spec.shift.0, k * spec.shift.1)?;
                backward_warp_bilinear(&base, &flow, BorderPolicy::Clamp)
            })
            .collect(),
        SyntheticKind::Rotate => {
            let ws = waves(spec.seed, spec.channels);
            (0..spec.frames).map(|i| rotated_frame(spec, &ws, i)).collect()
        }
        SyntheticKind::TexturedNoise => {
            let normal = Normal::new(0.0, spec.noise_std).map_err(|e| Error::invalid(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(1);
            (0..spec.frames)
                .map(|_| {
                    let data = base.data().iter().map(|v| v + normal.sample(&mut rng)).collect();
                    Tensor::new(spec.channels, spec.height, spec.width, data)
                })
                .collect()
        }
    }
}
