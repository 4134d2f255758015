//! Planar real-valued `C×H×W` tensors.
//!
//! Frames, latent features and every derived variant (noisy, projected,
//! rescaled, warped) share this one type. Data is stored row-major per
//! channel, channels back to back, in `f64`.

mod io;
mod resample;

pub use io::{load_image, load_raw, save_image, save_raw, RAW_MAGIC};
pub use resample::{downscale_nearest, upscale_bicubic, upscale_nearest, BICUBIC_A};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

/// ITU-R BT.601 luma weights.
pub const LUMA_601: [f64; 3] = [0.299, 0.587, 0.114];

impl Tensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "tensor dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        let len = channels
            .checked_mul(height)
            .and_then(|n| n.checked_mul(width))
            .ok_or(Error::DimensionOverflow {
                channels: channels as u64,
                height: height as u64,
                width: width as u64,
            })?;
        if data.len() != len {
            return Err(Error::invalid(format!(
                "data length {} does not match {channels}x{height}x{width}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at index {pos}")));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Result<Self> {
        let len = channels.saturating_mul(height).saturating_mul(width);
        Self::new(channels, height, width, vec![value; len])
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Result<Self> {
        Self::filled(channels, height, width, 0.0)
    }

    /// Build from a function of `(channel, y, x)`.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels.saturating_mul(height).saturating_mul(width));
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(channels, height, width, data)
    }

    /// Constructor for internal results that are finite by construction.
    pub(crate) fn from_parts(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), channels * height * width);
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(channels, height, width)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn planes(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.plane_len())
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Extract a single channel as its own tensor.
    pub fn channel_tensor(&self, c: usize) -> Result<Tensor> {
        if c >= self.channels {
            return Err(Error::invalid(format!(
                "channel {c} out of range for {} channels",
                self.channels
            )));
        }
        Ok(Tensor::from_parts(1, self.height, self.width, self.channel(c).to_vec()))
    }

    /// Stack tensors along the channel axis.
    pub fn concat(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("cannot concatenate zero tensors"))?;
        let (h, w) = (first.height, first.width);
        let mut data = Vec::new();
        let mut channels = 0;
        for p in parts {
            if p.height != h || p.width != w {
                return Err(Error::invalid(format!(
                    "spatial mismatch in concat: {}x{} vs {h}x{w}",
                    p.height, p.width
                )));
            }
            channels += p.channels;
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor::from_parts(channels, h, w, data))
    }

    /// Split into `parts` equal channel groups (inverse of `concat`).
    pub fn split_channels(&self, parts: usize) -> Result<Vec<Tensor>> {
        if parts == 0 || !self.channels.is_multiple_of(parts) {
            return Err(Error::invalid(format!(
                "cannot split {} channels into {parts} groups",
                self.channels
            )));
        }
        let per = self.channels / parts;
        let n = per * self.plane_len();
        Ok(self
            .data
            .chunks_exact(n)
            .map(|chunk| Tensor::from_parts(per, self.height, self.width, chunk.to_vec()))
            .collect())
    }

    /// Single-channel luminance. RGB uses BT.601 weights, one channel is
    /// returned as is, anything else is the channel mean.
    pub fn luminance(&self) -> Tensor {
        let n = self.plane_len();
        let data = match self.channels {
            1 => self.data.clone(),
            3 => (0..n)
                .map(|i| {
                    LUMA_601[0] * self.data[i] + LUMA_601[1] * self.data[n + i] + LUMA_601[2] * self.data[2 * n + i]
                })
                .collect(),
            c => (0..n)
                .map(|i| (0..c).map(|k| self.data[k * n + i]).sum::<f64>() / c as f64)
                .collect(),
        };
        Tensor::from_parts(1, self.height, self.width, data)
    }

    pub fn same_dims(&self, other: &Tensor) -> bool {
        self.dims() == other.dims()
    }

    pub(crate) fn ensure_same_dims(&self, other: &Tensor, what: &str) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "{what}: dimension mismatch {:?} vs {:?}",
                self.dims(),
                other.dims()
            )))
        }
    }

    /// Elementwise map. The closure must keep values finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        let data: Vec<f64> = self.data.iter().map(|&v| f(v)).collect();
        Tensor::from_parts(self.channels, self.height, self.width, data)
    }

    /// Elementwise binary op on equal-shaped tensors.
    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.ensure_same_dims(other, "zip_map")?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Tensor::from_parts(self.channels, self.height, self.width, data))
    }

    pub fn scale(&self, k: f64) -> Tensor {
        self.map(|v| v * k)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Mean squared difference against an equal-shaped tensor.
    pub fn mse(&self, other: &Tensor) -> Result<f64> {
        self.ensure_same_dims(other, "mse")?;
        let sq: f64 = self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(sq / self.data.len() as f64)
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        self.ensure_same_dims(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Tensor {
        self.map(|v| v.clamp(lo, hi))
    }
}
