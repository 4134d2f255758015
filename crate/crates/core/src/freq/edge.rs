use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plane;
use crate::tensor::Tensor;

const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
const SOBEL_Y: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];
const LAPLACIAN: [[f64; 3]; 3] = [[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]];

/// Canny settings. Thresholds apply to the gradient magnitude divided by
/// its per-image maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CannyParams {
    pub sigma: f64,
    pub low: f64,
    pub high: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self {
            sigma: 1.4,
            low: 0.1,
            high: 0.2,
        }
    }
}

impl CannyParams {
    pub fn new(sigma: f64, low: f64, high: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::invalid("canny sigma must be positive"));
        }
        if !(0.0 < low && low < high) {
            return Err(Error::invalid(format!(
                "canny thresholds must satisfy 0 < low < high, got ({low}, {high})"
            )));
        }
        Ok(Self { sigma, low, high })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EdgeOperator {
    Canny(CannyParams),
    Sobel,
    Laplacian,
}

impl EdgeOperator {
    pub fn canny() -> Self {
        EdgeOperator::Canny(CannyParams::default())
    }

    pub fn all() -> Vec<EdgeOperator> {
        vec![Self::canny(), Self::Sobel, Self::Laplacian]
    }

    pub fn name(&self) -> &'static str {
        match self {
            EdgeOperator::Canny(_) => "canny",
            EdgeOperator::Sobel => "sobel",
            EdgeOperator::Laplacian => "laplacian",
        }
    }

    /// Parse a comma-separated operator list such as `canny,sobel`.
    pub fn parse_list(s: &str) -> Result<Vec<EdgeOperator>> {
        let ops: Vec<EdgeOperator> = s
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(str::parse)
            .collect::<Result<_>>()?;
        if ops.is_empty() {
            return Err(Error::invalid("operator list is empty"));
        }
        Ok(ops)
    }
}

impl fmt::Display for EdgeOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EdgeOperator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canny" => Ok(Self::canny()),
            "sobel" => Ok(Self::Sobel),
            "laplacian" => Ok(Self::Laplacian),
            other => Err(Error::invalid(format!("unknown edge operator '{other}'"))),
        }
    }
}

/// Scalar edge strength, averaged over channels.
///
/// Sobel: mean gradient magnitude. Laplacian: mean absolute response.
/// Canny: fraction of pixels marked as edges after hysteresis. All use
/// replicated borders.
pub fn edge_strength(t: &Tensor, op: &EdgeOperator) -> Result<f64> {
    let (c, h, w) = t.dims();
    if h < 3 || w < 3 {
        return Err(Error::invalid(format!(
            "edge operators need at least 3x3 pixels, got {h}x{w}"
        )));
    }
    if let EdgeOperator::Canny(p) = op {
        CannyParams::new(p.sigma, p.low, p.high)?;
    }
    let total: f64 = t
        .planes()
        .map(|p| match op {
            EdgeOperator::Sobel => mean(&sobel_magnitude(p, w, h)),
            EdgeOperator::Laplacian => {
                let r = plane::conv3x3_replicate(p, w, h, &LAPLACIAN);
                r.iter().map(|v| v.abs()).sum::<f64>() / r.len() as f64
            }
            EdgeOperator::Canny(params) => {
                let edges = canny_edges(p, w, h, params);
                edges.iter().filter(|&&e| e).count() as f64 / edges.len() as f64
            }
        })
        .sum();
    Ok(total / c as f64)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sobel_magnitude(p: &[f64], w: usize, h: usize) -> Vec<f64> {
    let gx = plane::conv3x3_replicate(p, w, h, &SOBEL_X);
    let gy = plane::conv3x3_replicate(p, w, h, &SOBEL_Y);
    gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect()
}

/// Binary Canny edge map of one plane.
pub(crate) fn canny_edges(p: &[f64], w: usize, h: usize, params: &CannyParams) -> Vec<bool> {
    let radius = (3.0 * params.sigma).ceil() as usize;
    let k = plane::gaussian_kernel(params.sigma, radius);
    let smooth = plane::separable_replicate(p, w, h, &k, &k);
    let gx = plane::conv3x3_replicate(&smooth, w, h, &SOBEL_X);
    let gy = plane::conv3x3_replicate(&smooth, w, h, &SOBEL_Y);
    let mut mag: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let peak = mag.iter().copied().fold(0.0, f64::max);
    // blur of a constant still leaves rounding noise around 1e-16
    if peak < 1e-9 {
        return vec![false; w * h];
    }
    for m in &mut mag {
        *m /= peak;
    }

    let at = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };
    let mut thin = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let m = mag[i];
            if m == 0.0 {
                continue;
            }
            // gradient direction quantized to 0°, 45°, 90°, 135°
            let angle = gy[i].atan2(gx[i]).to_degrees().rem_euclid(180.0);
            let (dx, dy) = if !(22.5..157.5).contains(&angle) {
                (1, 0)
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (0, 1)
            } else {
                (-1, 1)
            };
            let (xi, yi) = (x as isize, y as isize);
            if m >= at(xi + dx, yi + dy) && m >= at(xi - dx, yi - dy) {
                thin[i] = m;
            }
        }
    }

    let mut edge = vec![false; w * h];
    let mut queue = VecDeque::new();
    for (i, &m) in thin.iter().enumerate() {
        if m >= params.high {
            edge[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !edge[j] && thin[j] >= params.low {
                    edge[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    edge
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(h: usize, w: usize) -> Tensor {
        Tensor::from_fn(1, h, w, |_, _, x| if x < w / 2 { 0.0 } else { 1.0 }).unwrap()
    }

    #[test]
    fn constant_has_no_edges() {
        let t = Tensor::filled(2, 12, 12, 0.3).unwrap();
        for op in EdgeOperator::all() {
            assert_eq!(edge_strength(&t, &op).unwrap(), 0.0, "{op}");
        }
    }

    #[test]
    fn sobel_vertical_step_closed_form() {
        let (h, w) = (10, 16);
        let got = edge_strength(&step(h, w), &EdgeOperator::Sobel).unwrap();
        // two boundary columns respond with 1 + 2 + 1 = 4 on every row
        let expect = 4.0 * (2 * h) as f64 / (h * w) as f64;
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn laplacian_vertical_step_closed_form() {
        let (h, w) = (6, 10);
        let got = edge_strength(&step(h, w), &EdgeOperator::Laplacian).unwrap();
        let expect = 2.0 * h as f64 / (h * w) as f64;
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn canny_marks_a_thin_line_on_a_step() {
        let (h, w) = (20, 20);
        let edges = canny_edges(step(h, w).data(), w, h, &CannyParams::default());
        for y in 0..h {
            let row: Vec<usize> = (0..w).filter(|&x| edges[y * w + x]).collect();
            assert!(!row.is_empty() && row.len() <= 2, "row {y}: {row:?}");
            assert!(row.iter().all(|&x| x == w / 2 - 1 || x == w / 2));
        }
    }

    #[test]
    fn too_small_and_bad_params_error() {
        let t = Tensor::zeros(1, 2, 5).unwrap();
        assert!(edge_strength(&t, &EdgeOperator::Sobel).is_err());
        assert!(CannyParams::new(1.0, 0.3, 0.2).is_err());
        assert!(CannyParams::new(1.0, 0.0, 0.2).is_err());
        let bad = EdgeOperator::Canny(CannyParams {
            sigma: 1.0,
            low: 0.5,
            high: 0.1,
        });
        assert!(edge_strength(&Tensor::zeros(1, 5, 5).unwrap(), &bad).is_err());
    }

    #[test]
    fn operator_list_parsing() {
        let ops = EdgeOperator::parse_list("canny, sobel,laplacian").unwrap();
        assert_eq!(ops.len(), 3);
        assert_eq!(ops[0].name(), "canny");
        assert!(EdgeOperator::parse_list("roberts").is_err());
        assert!(EdgeOperator::parse_list("").is_err());
    }
}
