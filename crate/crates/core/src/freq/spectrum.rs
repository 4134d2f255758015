use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::tensor::Tensor;

/// Unnormalized 2-D DFT of one plane, row-major output.
pub(crate) fn fft2(p: &[f64], w: usize, h: usize) -> Vec<Complex<f64>> {
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = planner.plan_fft_forward(w);
    let col_fft = planner.plan_fft_forward(h);
    let mut buf: Vec<Complex<f64>> = p.iter().map(|&v| Complex::new(v, 0.0)).collect();
    for row in buf.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = buf[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            buf[y * w + x] = col[y];
        }
    }
    buf
}

/// Distance of DFT bin `k` from DC along one axis of length `n`, after
/// centering the spectrum.
#[inline]
pub(crate) fn centered_offset(k: usize, n: usize) -> f64 {
    let c = (k + n / 2) % n;
    c as f64 - (n / 2) as f64
}

/// Spectral energy beyond `radius` (Euclidean distance from DC in the
/// centered spectrum), averaged over channels.
///
/// Energy is `Σ|X|² / N²` for an `N`-pixel plane, so with `radius = 0` the
/// value plus the DC term equals the mean squared pixel value. Radii past the
/// corner frequency give 0; negative radii are treated as 0.
pub fn highpass_strength(t: &Tensor, radius: f64) -> f64 {
    let (c, h, w) = t.dims();
    let radius = radius.max(0.0);
    let n2 = ((h * w) as f64).powi(2);
    let mask: Vec<bool> = (0..h)
        .flat_map(|ky| {
            let dy = centered_offset(ky, h);
            (0..w).map(move |kx| {
                let dx = centered_offset(kx, w);
                (dx * dx + dy * dy).sqrt() > radius
            })
        })
        .collect();
    let total: f64 = t
        .planes()
        .map(|p| {
            fft2(p, w, h)
                .iter()
                .zip(&mask)
                .filter(|(_, &keep)| keep)
                .map(|(z, _)| z.norm_sqr())
                .sum::<f64>()
                / n2
        })
        .sum();
    total / c as f64
}

/// DC energy `|X₀|² / N²`, averaged over channels; the complement of
/// [`highpass_strength`] at radius 0.
pub fn dc_energy(t: &Tensor) -> f64 {
    let total: f64 = t
        .planes()
        .map(|p| (p.iter().sum::<f64>() / p.len() as f64).powi(2))
        .sum();
    total / t.channels() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_has_no_high_frequency() {
        let t = Tensor::filled(1, 16, 16, 0.7).unwrap();
        assert!(highpass_strength(&t, 1.0).abs() < 1e-20);
        assert!(highpass_strength(&t, 0.0).abs() < 1e-20);
    }

    #[test]
    fn nyquist_checkerboard_sits_at_the_corner() {
        let t = Tensor::from_fn(1, 64, 64, |_, y, x| ((x + y) % 2) as f64).unwrap();
        // energy is split between DC (mean 0.5) and the corner bin at distance 45.25
        let hp = highpass_strength(&t, 30.0);
        let total_minus_dc = t.data().iter().map(|v| v * v).sum::<f64>() / 4096.0 - dc_energy(&t);
        assert!((hp - total_minus_dc).abs() < 1e-6);
        assert!((hp - 0.25).abs() < 1e-9);
        assert!(highpass_strength(&t, 45.3).abs() < 1e-12);
    }

    #[test]
    fn centered_offsets() {
        assert_eq!(centered_offset(0, 8), 0.0);
        assert_eq!(centered_offset(3, 8), 3.0);
        assert_eq!(centered_offset(4, 8), -4.0);
        assert_eq!(centered_offset(7, 8), -1.0);
        assert_eq!(centered_offset(2, 5), 2.0);
        assert_eq!(centered_offset(3, 5), -2.0);
    }

    #[test]
    fn non_increasing_in_radius() {
        let t = Tensor::from_fn(2, 20, 24, |c, y, x| ((c * 13 + y * 7 + x * x) % 11) as f64 / 10.0).unwrap();
        let mut prev = f64::INFINITY;
        for r in 0..40 {
            let v = highpass_strength(&t, r as f64 * 0.5);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }
}
