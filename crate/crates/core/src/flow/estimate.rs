use super::{EstimatorKind, FlowConfig, FlowField};
use crate::error::Result;
use crate::plane;
use crate::tensor::{upscale_nearest, Tensor};

/// Coarsest pyramid level keeps at least this many pixels per side.
const MIN_LEVEL_SIDE: usize = 8;
/// Tikhonov damping per window pixel; keeps flat regions at zero update.
const DAMPING_PER_PIXEL: f64 = 1e-4;
/// Largest per-iteration update, in pixels of the current level.
const MAX_STEP: f64 = 2.0;

const FARNEBACK_POLY_RADIUS: usize = 2;
const FARNEBACK_POLY_SIGMA: f64 = 1.1;

struct Level {
    data: Vec<f64>,
    w: usize,
    h: usize,
}

const BINOMIAL5: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

fn pyramid(base: Vec<f64>, w: usize, h: usize, levels: usize) -> Vec<Level> {
    const K: [f64; 5] = BINOMIAL5;
    let mut out = vec![Level { data: base, w, h }];
    while out.len() < levels {
        let prev = out.last().unwrap();
        let (nw, nh) = (prev.w.div_ceil(2), prev.h.div_ceil(2));
        if nw < MIN_LEVEL_SIDE || nh < MIN_LEVEL_SIDE {
            break;
        }
        let blurred = plane::separable_replicate(&prev.data, prev.w, prev.h, &K, &K);
        let mut data = Vec::with_capacity(nw * nh);
        for y in 0..nh {
            for x in 0..nw {
                data.push(blurred[2 * y * prev.w + 2 * x]);
            }
        }
        out.push(Level { data, w: nw, h: nh });
    }
    out
}

/// Move a coarse-level flow onto the next finer grid (coarse pixel `i`
/// sits on fine pixel `2i`).
fn upsample_flow(u: &[f64], cw: usize, ch: usize, fw: usize, fh: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(fw * fh);
    for y in 0..fh {
        for x in 0..fw {
            out.push(2.0 * plane::sample_clamp(u, cw, ch, x as f64 / 2.0, y as f64 / 2.0));
        }
    }
    out
}

#[inline]
fn solve2(a11: f64, a12: f64, a22: f64, b1: f64, b2: f64) -> (f64, f64) {
    let det = a11 * a22 - a12 * a12;
    if det.abs() < 1e-18 || !det.is_finite() {
        return (0.0, 0.0);
    }
    let x = (a22 * b1 - a12 * b2) / det;
    let y = (a11 * b2 - a12 * b1) / det;
    (x.clamp(-MAX_STEP, MAX_STEP), y.clamp(-MAX_STEP, MAX_STEP))
}

fn window_pixels(r: usize) -> f64 {
    ((2 * r + 1) * (2 * r + 1)) as f64
}

/// Iterative dense Lucas-Kanade on one level.
///
/// Each pixel's residual is linearised around its own flow, then every
/// window is re-solved for a single displacement:
/// `(A + λI)·Δu_i = Σ_j ∇_j (e_j + ∇_jᵀ u_j) − A u_i`. Solving for the
/// absolute flow instead of summing per-pixel increments keeps neighbouring
/// estimates from drifting apart.
fn refine_lk(refl: &Level, tgt: &Level, u: &mut [f64], v: &mut [f64], cfg: &FlowConfig) {
    let (w, h) = (refl.w, refl.h);
    // pre-smoothing suppresses the pull of blocky (nearest-upscaled) inputs
    // toward whole-block displacements
    let smooth = |l: &Level| Level {
        data: plane::separable_replicate(&l.data, w, h, &BINOMIAL5, &BINOMIAL5),
        w,
        h,
    };
    let (refl, tgt) = (&smooth(refl), &smooth(tgt));
    let (gxr, gyr) = plane::central_gradients(&refl.data, w, h);
    let (gxt, gyt) = plane::central_gradients(&tgt.data, w, h);
    let lambda = DAMPING_PER_PIXEL * window_pixels(cfg.window_radius);
    let n = w * h;
    let mut prods = vec![vec![0.0; n]; 5];
    for _ in 0..cfg.iterations {
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let sx = x as f64 + u[i];
                let sy = y as f64 + v[i];
                let warped = plane::sample_clamp(&refl.data, w, h, sx, sy);
                let ix = 0.5 * (gxt[i] + plane::sample_clamp(&gxr, w, h, sx, sy));
                let iy = 0.5 * (gyt[i] + plane::sample_clamp(&gyr, w, h, sx, sy));
                let e = tgt.data[i] - warped + ix * u[i] + iy * v[i];
                prods[0][i] = ix * ix;
                prods[1][i] = ix * iy;
                prods[2][i] = iy * iy;
                prods[3][i] = ix * e;
                prods[4][i] = iy * e;
            }
        }
        let sums: Vec<Vec<f64>> = prods
            .iter()
            .map(|p| plane::box_sum(p, w, h, cfg.window_radius))
            .collect();
        for i in 0..n {
            let (a11, a12, a22) = (sums[0][i], sums[1][i], sums[2][i]);
            let (du, dv) = solve2(
                a11 + lambda,
                a12,
                a22 + lambda,
                sums[3][i] - a11 * u[i] - a12 * v[i],
                sums[4][i] - a12 * u[i] - a22 * v[i],
            );
            u[i] += du;
            v[i] += dv;
        }
    }
}

/// Polynomial expansion filters for basis `[1, x, y, x², y², xy]` under a
/// Gaussian applicability; returns one `(2n+1)²` kernel per coefficient.
fn poly_filters(n: usize, sigma: f64) -> Vec<Vec<f64>> {
    let r = n as isize;
    let offsets: Vec<(f64, f64)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx as f64, dy as f64)))
        .collect();
    let basis = |dx: f64, dy: f64| [1.0, dx, dy, dx * dx, dy * dy, dx * dy];
    let weight = |dx: f64, dy: f64| (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
    let mut g = [[0.0; 6]; 6];
    for &(dx, dy) in &offsets {
        let b = basis(dx, dy);
        let wt = weight(dx, dy);
        for i in 0..6 {
            for j in 0..6 {
                g[i][j] += wt * b[i] * b[j];
            }
        }
    }
    let ginv = invert6(g);
    let mut filters: Vec<Vec<f64>> = (0..6).map(|_| Vec::with_capacity(offsets.len())).collect();
    for &(dx, dy) in &offsets {
        let b = basis(dx, dy);
        let wt = weight(dx, dy);
        for (k, f) in filters.iter_mut().enumerate() {
            let coef: f64 = (0..6).map(|j| ginv[k][j] * b[j]).sum();
            f.push(coef * wt);
        }
    }
    filters
}

fn invert6(m: [[f64; 6]; 6]) -> [[f64; 6]; 6] {
    let mut a = m;
    let mut inv = [[0.0; 6]; 6];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..6 {
        let pivot = (col..6)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col];
        for j in 0..6 {
            a[col][j] /= p;
            inv[col][j] /= p;
        }
        for row in 0..6 {
            if row != col {
                let f = a[row][col];
                for j in 0..6 {
                    a[row][j] -= f * a[col][j];
                    inv[row][j] -= f * inv[col][j];
                }
            }
        }
    }
    inv
}

/// Per-pixel `(A11, A12, A22, b1, b2)` planes of the local quadratic fit.
fn poly_expand(level: &Level, filters: &[Vec<f64>]) -> [Vec<f64>; 5] {
    let (w, h) = (level.w, level.h);
    let r = FARNEBACK_POLY_RADIUS as isize;
    let side = 2 * r + 1;
    let mut coef: [Vec<f64>; 6] = std::array::from_fn(|_| vec![0.0; w * h]);
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 6];
            for (o, (dy, dx)) in (-r..=r).flat_map(|dy| (-r..=r).map(move |dx| (dy, dx))).enumerate() {
                let yi = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                let xi = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                let pv = level.data[yi * w + xi];
                for k in 0..6 {
                    acc[k] += filters[k][o] * pv;
                }
            }
            debug_assert_eq!(filters[0].len(), (side * side) as usize);
            for k in 0..6 {
                coef[k][y * w + x] = acc[k];
            }
        }
    }
    let [_, b1, b2, axx, ayy, axy] = coef;
    let a12 = axy.into_iter().map(|v| 0.5 * v).collect();
    [axx, a12, ayy, b1, b2]
}

/// Iterative displacement estimation from polynomial expansions.
fn refine_farneback(refl: &Level, tgt: &Level, u: &mut [f64], v: &mut [f64], cfg: &FlowConfig) {
    let (w, h) = (refl.w, refl.h);
    let filters = poly_filters(FARNEBACK_POLY_RADIUS, FARNEBACK_POLY_SIGMA);
    let pr = poly_expand(refl, &filters);
    let pt = poly_expand(tgt, &filters);
    let lambda = DAMPING_PER_PIXEL * window_pixels(cfg.window_radius);
    let n = w * h;
    let mut prods = vec![vec![0.0; n]; 5];
    for _ in 0..cfg.iterations {
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let sx = x as f64 + u[i];
                let sy = y as f64 + v[i];
                let s = |p: &[f64]| plane::sample_clamp(p, w, h, sx, sy);
                let a11 = 0.5 * (pt[0][i] + s(&pr[0]));
                let a12 = 0.5 * (pt[1][i] + s(&pr[1]));
                let a22 = 0.5 * (pt[2][i] + s(&pr[2]));
                let db1 = 0.5 * (pt[3][i] - s(&pr[3]));
                let db2 = 0.5 * (pt[4][i] - s(&pr[4]));
                prods[0][i] = a11 * a11 + a12 * a12;
                prods[1][i] = a11 * a12 + a12 * a22;
                prods[2][i] = a12 * a12 + a22 * a22;
                prods[3][i] = a11 * db1 + a12 * db2;
                prods[4][i] = a12 * db1 + a22 * db2;
            }
        }
        let sums: Vec<Vec<f64>> = prods
            .iter()
            .map(|p| plane::box_sum(p, w, h, cfg.window_radius))
            .collect();
        // A is a second-derivative scale, so damp with its square
        let damp = lambda * 1e-2;
        for i in 0..n {
            let (du, dv) = solve2(sums[0][i] + damp, sums[1][i], sums[2][i] + damp, sums[3][i], sums[4][i]);
            u[i] += du;
            v[i] += dv;
        }
    }
}

/// Dense backward flow from `target` toward `reference`:
/// `target(x, y) ≈ reference(x + u, y + v)`.
///
/// Multi-channel inputs are reduced to luminance first. Constant images have
/// no gradient information and yield a zero field.
pub fn estimate_flow(reference: &Tensor, target: &Tensor, cfg: &FlowConfig) -> Result<FlowField> {
    cfg.validate()?;
    reference.ensure_same_dims(target, "estimate_flow")?;
    let (_, h, w) = reference.dims();
    let r = pyramid(reference.luminance().into_data(), w, h, cfg.pyramid_levels);
    let t = pyramid(target.luminance().into_data(), w, h, cfg.pyramid_levels);

    let top = r.len() - 1;
    let mut u = vec![0.0; r[top].w * r[top].h];
    let mut v = u.clone();
    for lvl in (0..=top).rev() {
        if lvl < top {
            let (cw, ch) = (r[lvl + 1].w, r[lvl + 1].h);
            u = upsample_flow(&u, cw, ch, r[lvl].w, r[lvl].h);
            v = upsample_flow(&v, cw, ch, r[lvl].w, r[lvl].h);
        }
        match cfg.estimator {
            EstimatorKind::LucasKanadePyramidal => refine_lk(&r[lvl], &t[lvl], &mut u, &mut v, cfg),
            EstimatorKind::FarnebackPolynomial => refine_farneback(&r[lvl], &t[lvl], &mut u, &mut v, cfg),
        }
    }
    Ok(FlowField::from_estimate(h, w, u, v))
}

/// Estimate flow between frames first upscaled by `s` (nearest).
///
/// The result lives on the `sH×sW` grid with displacements in
/// high-resolution pixels; it is never divided back down.
pub fn prescaled_flow(reference: &Tensor, target: &Tensor, s: usize, cfg: &FlowConfig) -> Result<FlowField> {
    reference.ensure_same_dims(target, "prescaled_flow")?;
    if s == 1 {
        return estimate_flow(reference, target, cfg);
    }
    let r = upscale_nearest(reference, s)?;
    let t = upscale_nearest(target, s)?;
    estimate_flow(&r, &t, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synthetic::textured_frame;

    fn shifted(dx: f64, dy: f64) -> (Tensor, Tensor) {
        let reference = textured_frame(1, 96, 96, 7, 0.0, 0.0).unwrap();
        let target = textured_frame(1, 96, 96, 7, dx, dy).unwrap();
        (reference, target)
    }

    #[test]
    fn constant_images_give_zero_flow() {
        let a = Tensor::filled(1, 32, 32, 0.5).unwrap();
        let f = estimate_flow(&a, &a, &FlowConfig::default()).unwrap();
        assert!(f.u().iter().chain(f.v()).all(|&x| x == 0.0));
        let f = estimate_flow(&a, &a, &FlowConfig::farneback()).unwrap();
        assert!(f.u().iter().chain(f.v()).all(|&x| x == 0.0));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = Tensor::zeros(1, 16, 16).unwrap();
        let b = Tensor::zeros(1, 16, 17).unwrap();
        assert!(estimate_flow(&a, &b, &FlowConfig::default()).is_err());
    }

    #[test]
    fn lk_recovers_subpixel_translation() {
        let (r, t) = shifted(1.5, -0.75);
        let f = estimate_flow(&r, &t, &FlowConfig::default()).unwrap();
        let truth = FlowField::uniform(96, 96, 1.5, -0.75).unwrap();
        assert!(f.epe_region(&truth, 8) < 0.05, "epe {}", f.epe_region(&truth, 8));
    }

    #[test]
    fn farneback_recovers_translation() {
        let (r, t) = shifted(2.0, 1.0);
        let f = estimate_flow(&r, &t, &FlowConfig::farneback()).unwrap();
        let truth = FlowField::uniform(96, 96, 2.0, 1.0).unwrap();
        let epe = f.epe_region(&truth, 8);
        assert!(epe < 0.25, "epe {epe}");
    }

    #[test]
    fn estimation_is_deterministic() {
        let (r, t) = shifted(0.6, 0.3);
        let a = estimate_flow(&r, &t, &FlowConfig::default()).unwrap();
        let b = estimate_flow(&r, &t, &FlowConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn poly_filters_reproduce_quadratics() {
        let f = poly_filters(FARNEBACK_POLY_RADIUS, FARNEBACK_POLY_SIGMA);
        // f(x, y) = 0.3 + 0.2x - 0.1y + 0.05x² + 0.02y² - 0.04xy
        let r = FARNEBACK_POLY_RADIUS as isize;
        let vals: Vec<f64> = (-r..=r)
            .flat_map(|dy| (-r..=r).map(move |dx| (dx as f64, dy as f64)))
            .map(|(x, y)| 0.3 + 0.2 * x - 0.1 * y + 0.05 * x * x + 0.02 * y * y - 0.04 * x * y)
            .collect();
        let expect = [0.3, 0.2, -0.1, 0.05, 0.02, -0.04];
        for k in 0..6 {
            let got: f64 = f[k].iter().zip(&vals).map(|(a, b)| a * b).sum();
            assert!((got - expect[k]).abs() < 1e-10, "coef {k}: {got}");
        }
    }
}
