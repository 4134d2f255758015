//! Single-channel helpers shared by the flow, warp, edge and metric code.
//!
//! A plane is a row-major `&[f64]` with explicit width and height.

/// Bilinear sample with coordinates clamped to the pixel-center grid.
#[inline]
pub(crate) fn sample_clamp(p: &[f64], w: usize, h: usize, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let top = p[y0 * w + x0] * (1.0 - fx) + p[y0 * w + x1] * fx;
    let bot = p[y1 * w + x0] * (1.0 - fx) + p[y1 * w + x1] * fx;
    top * (1.0 - fy) + bot * fy
}

/// Bilinear sample where taps outside the image read as zero.
#[inline]
pub(crate) fn sample_zero(p: &[f64], w: usize, h: usize, x: f64, y: f64) -> f64 {
    let x0f = x.floor();
    let y0f = y.floor();
    let fx = x - x0f;
    let fy = y - y0f;
    let tap = |xi: f64, yi: f64| -> f64 {
        if xi < 0.0 || yi < 0.0 || xi >= w as f64 || yi >= h as f64 {
            0.0
        } else {
            p[yi as usize * w + xi as usize]
        }
    };
    let top = tap(x0f, y0f) * (1.0 - fx) + tap(x0f + 1.0, y0f) * fx;
    let bot = tap(x0f, y0f + 1.0) * (1.0 - fx) + tap(x0f + 1.0, y0f + 1.0) * fx;
    top * (1.0 - fy) + bot * fy
}

/// Normalized 1-D Gaussian of the given radius.
pub(crate) fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable correlation with replicated borders; output has input size.
pub(crate) fn separable_replicate(p: &[f64], w: usize, h: usize, kx: &[f64], ky: &[f64]) -> Vec<f64> {
    let rx = (kx.len() / 2) as isize;
    let ry = (ky.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &p[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &wt) in kx.iter().enumerate() {
                let xi = (x as isize + k as isize - rx).clamp(0, w as isize - 1) as usize;
                acc += wt * row[xi];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (k, &wt) in ky.iter().enumerate() {
            let yi = (y as isize + k as isize - ry).clamp(0, h as isize - 1) as usize;
            let src = &tmp[yi * w..(yi + 1) * w];
            let dst = &mut out[y * w..(y + 1) * w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += wt * s;
            }
        }
    }
    out
}

/// Separable correlation evaluated only where the kernel fits ("valid" mode).
/// Returns `(data, out_w, out_h)`.
pub(crate) fn separable_valid(p: &[f64], w: usize, h: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = k.len();
    let ow = w + 1 - n;
    let oh = h + 1 - n;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = &p[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = k.iter().zip(&row[x..x + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for (j, &wt) in k.iter().enumerate() {
            let src = &tmp[(y + j) * ow..(y + j + 1) * ow];
            for (d, s) in out[y * ow..(y + 1) * ow].iter_mut().zip(src) {
                *d += wt * s;
            }
        }
    }
    (out, ow, oh)
}

/// Sum over the `(2r+1)²` window centred at each pixel, clipped to the image.
pub(crate) fn box_sum(p: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let iw = w + 1;
    let mut integral = vec![0.0; iw * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += p[y * w + x];
            integral[(y + 1) * iw + x + 1] = integral[y * iw + x + 1] + row;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let y0 = y.saturating_sub(r);
        let y1 = (y + r + 1).min(h);
        for x in 0..w {
            let x0 = x.saturating_sub(r);
            let x1 = (x + r + 1).min(w);
            out[y * w + x] =
                integral[y1 * iw + x1] - integral[y0 * iw + x1] - integral[y1 * iw + x0] + integral[y0 * iw + x0];
        }
    }
    out
}

/// Central-difference gradients with replicated borders.
pub(crate) fn central_gradients(p: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        let yu = y.saturating_sub(1);
        let yd = (y + 1).min(h - 1);
        for x in 0..w {
            let xl = x.saturating_sub(1);
            let xr = (x + 1).min(w - 1);
            gx[y * w + x] = 0.5 * (p[y * w + xr] - p[y * w + xl]);
            gy[y * w + x] = 0.5 * (p[yd * w + x] - p[yu * w + x]);
        }
    }
    (gx, gy)
}

/// 3×3 correlation with replicated borders.
pub(crate) fn conv3x3_replicate(p: &[f64], w: usize, h: usize, k: &[[f64; 3]; 3]) -> Vec<f64> {
    // zero-sum kernels are applied to differences from the centre pixel so
    // flat regions give exactly zero
    let zero_sum = k.iter().flatten().sum::<f64>() == 0.0;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let centre = if zero_sum { p[y * w + x] } else { 0.0 };
            let mut acc = 0.0;
            for (j, krow) in k.iter().enumerate() {
                let yi = (y as isize + j as isize - 1).clamp(0, h as isize - 1) as usize;
                for (i, &kv) in krow.iter().enumerate() {
                    let xi = (x as isize + i as isize - 1).clamp(0, w as isize - 1) as usize;
                    acc += kv * (p[yi * w + xi] - centre);
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_sum_matches_brute_force() {
        let (w, h) = (7, 5);
        let p: Vec<f64> = (0..w * h).map(|i| ((i * 37) % 11) as f64).collect();
        let b = box_sum(&p, w, h, 2);
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for yy in y.saturating_sub(2)..(y + 3).min(h) {
                    for xx in x.saturating_sub(2)..(x + 3).min(w) {
                        s += p[yy * w + xx];
                    }
                }
                assert!((b[y * w + x] - s).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn clamp_and_zero_sampling_agree_inside() {
        let p = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(sample_clamp(&p, 2, 2, 0.5, 0.5), 2.5);
        assert_eq!(sample_zero(&p, 2, 2, 0.5, 0.5), 2.5);
        assert_eq!(sample_clamp(&p, 2, 2, 5.0, -3.0), 2.0);
        assert_eq!(sample_zero(&p, 2, 2, 5.0, -3.0), 0.0);
        assert_eq!(sample_zero(&p, 2, 2, 1.5, 0.0), 1.0);
    }

    #[test]
    fn gaussian_kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel(1.5, 5);
        assert_eq!(k.len(), 11);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..5 {
            assert_eq!(k[i], k[10 - i]);
        }
    }
}
