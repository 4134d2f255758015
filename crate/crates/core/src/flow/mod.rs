//! Dense optical flow between adjacent frames.
//!
//! Flow is stored in the backward convention: the vector `(u, v)` at target
//! pixel `(x, y)` points at the location `(x + u, y + v)` in the reference
//! frame that the target pixel was sampled from. Backward-warping the
//! reference with the field therefore reproduces the target.

mod estimate;
mod flo;

pub use estimate::{estimate_flow, prescaled_flow};
pub use flo::{read_flo, write_flo, FLO_MAGIC};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    height: usize,
    width: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl FlowField {
    pub fn new(height: usize, width: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("flow dimensions must be positive"));
        }
        let n = height * width;
        if u.len() != n || v.len() != n {
            return Err(Error::invalid(format!(
                "flow component lengths {}/{} do not match {height}x{width}",
                u.len(),
                v.len()
            )));
        }
        let bad_u = u.iter().any(|x| !x.is_finite() || x.abs() >= width as f64);
        let bad_v = v.iter().any(|x| !x.is_finite() || x.abs() >= height as f64);
        if bad_u || bad_v {
            return Err(Error::invalid(
                "flow displacements must be finite and smaller than the frame",
            ));
        }
        Ok(Self { height, width, u, v })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![0.0; height * width], vec![0.0; height * width])
    }

    /// Constant displacement everywhere.
    pub fn uniform(height: usize, width: usize, u: f64, v: f64) -> Result<Self> {
        Self::new(height, width, vec![u; height * width], vec![v; height * width])
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> (f64, f64)) -> Result<Self> {
        let mut u = Vec::with_capacity(height * width);
        let mut v = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                let (a, b) = f(y, x);
                u.push(a);
                v.push(b);
            }
        }
        Self::new(height, width, u, v)
    }

    /// Clamp displacements into the valid range instead of rejecting them.
    pub(crate) fn from_estimate(height: usize, width: usize, mut u: Vec<f64>, mut v: Vec<f64>) -> Self {
        let lim_u = width as f64 - 1.0;
        let lim_v = height as f64 - 1.0;
        for x in &mut u {
            *x = if x.is_finite() { x.clamp(-lim_u, lim_u) } else { 0.0 };
        }
        for x in &mut v {
            *x = if x.is_finite() { x.clamp(-lim_v, lim_v) } else { 0.0 };
        }
        Self { height, width, u, v }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    /// `(u, v)` at pixel `(y, x)`.
    #[inline]
    pub fn at(&self, y: usize, x: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    pub fn mean(&self) -> (f64, f64) {
        let n = self.u.len() as f64;
        (self.u.iter().sum::<f64>() / n, self.v.iter().sum::<f64>() / n)
    }

    fn ensure_same_dims(&self, other: &FlowField) -> Result<()> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::invalid(format!(
                "flow dimension mismatch {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }

    /// Mean endpoint error against another field.
    pub fn epe(&self, other: &FlowField) -> Result<f64> {
        self.ensure_same_dims(other)?;
        Ok(self.epe_region(other, 0))
    }

    /// Mean endpoint error ignoring a `margin`-pixel border.
    pub fn epe_region(&self, other: &FlowField, margin: usize) -> f64 {
        let mut acc = 0.0;
        let mut count = 0usize;
        for y in margin..self.height.saturating_sub(margin) {
            for x in margin..self.width.saturating_sub(margin) {
                let i = y * self.width + x;
                let du = self.u[i] - other.u[i];
                let dv = self.v[i] - other.v[i];
                acc += (du * du + dv * dv).sqrt();
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            acc / count as f64
        }
    }

    /// Mean of `|Δu| + |Δv|` against another field.
    pub fn mean_l1_diff(&self, other: &FlowField) -> Result<f64> {
        self.ensure_same_dims(other)?;
        let s: f64 = self
            .u
            .iter()
            .zip(&other.u)
            .zip(self.v.iter().zip(&other.v))
            .map(|((a, b), (c, d))| (a - b).abs() + (c - d).abs())
            .sum();
        Ok(s / self.u.len() as f64)
    }

    /// Nearest (top-left phase) subsampling by `s` with displacements
    /// divided by `s`: the same motion expressed on the coarse grid.
    pub fn downscale(&self, s: usize) -> Result<FlowField> {
        if s == 0 {
            return Err(Error::invalid("rescaling factor must be positive"));
        }
        if !self.height.is_multiple_of(s) || !self.width.is_multiple_of(s) {
            return Err(Error::invalid(format!(
                "{}x{} flow is not divisible by {s}",
                self.height, self.width
            )));
        }
        if s == 1 {
            return Ok(self.clone());
        }
        let (h, w) = (self.height / s, self.width / s);
        let k = s as f64;
        let mut u = Vec::with_capacity(h * w);
        let mut v = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let (a, b) = self.at(y * s, x * s);
                u.push(a / k);
                v.push(b / k);
            }
        }
        Ok(Self::from_estimate(h, w, u, v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    #[default]
    LucasKanadePyramidal,
    FarnebackPolynomial,
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lucas_kanade_pyramidal" | "lk" => Ok(Self::LucasKanadePyramidal),
            "farneback_polynomial" | "farneback" => Ok(Self::FarnebackPolynomial),
            other => Err(Error::invalid(format!("unknown flow estimator '{other}'"))),
        }
    }
}

/// Dense estimator settings. Defaults: pyramidal Lucas-Kanade, 3 levels,
/// 21×21 window, 5 iterations per level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowConfig {
    pub pyramid_levels: usize,
    pub iterations: usize,
    pub window_radius: usize,
    pub estimator: EstimatorKind,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            pyramid_levels: 3,
            iterations: 5,
            window_radius: 10,
            estimator: EstimatorKind::LucasKanadePyramidal,
        }
    }
}

impl FlowConfig {
    pub fn farneback() -> Self {
        Self {
            estimator: EstimatorKind::FarnebackPolynomial,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pyramid_levels == 0 {
            return Err(Error::invalid("pyramid_levels must be at least 1"));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be at least 1"));
        }
        if self.window_radius == 0 {
            return Err(Error::invalid("window_radius must be at least 1"));
        }
        Ok(())
    }
}
