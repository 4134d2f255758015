use super::Tensor;
use crate::error::{Error, Result};

/// Cubic convolution kernel parameter.
pub const BICUBIC_A: f64 = -0.5;

fn check_factor(s: usize) -> Result<()> {
    if s == 0 {
        Err(Error::invalid("rescaling factor must be positive"))
    } else {
        Ok(())
    }
}

/// Replicate every pixel into an `s×s` block.
pub fn upscale_nearest(t: &Tensor, s: usize) -> Result<Tensor> {
    check_factor(s)?;
    if s == 1 {
        return Ok(t.clone());
    }
    let (c, h, w) = t.dims();
    let (oh, ow) = (h * s, w * s);
    let mut data = Vec::with_capacity(c * oh * ow);
    for plane in t.planes() {
        for y in 0..oh {
            let row = &plane[(y / s) * w..(y / s + 1) * w];
            for &v in row {
                data.extend(std::iter::repeat_n(v, s));
            }
        }
    }
    Ok(Tensor::from_parts(c, oh, ow, data))
}

/// Keep the top-left pixel of every `s×s` block.
///
/// Paired with [`upscale_nearest`] this is an exact inverse.
pub fn downscale_nearest(t: &Tensor, s: usize) -> Result<Tensor> {
    check_factor(s)?;
    let (c, h, w) = t.dims();
    if h % s != 0 || w % s != 0 {
        return Err(Error::invalid(format!(
            "{h}x{w} is not divisible by rescaling factor {s}"
        )));
    }
    if s == 1 {
        return Ok(t.clone());
    }
    let (oh, ow) = (h / s, w / s);
    let mut data = Vec::with_capacity(c * oh * ow);
    for plane in t.planes() {
        for y in 0..oh {
            let row = &plane[y * s * w..(y * s + 1) * w];
            data.extend(row.iter().step_by(s).copied());
        }
    }
    Ok(Tensor::from_parts(c, oh, ow, data))
}

#[inline]
pub(crate) fn cubic_weight(x: f64) -> f64 {
    let a = BICUBIC_A;
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Taps and weights for one output coordinate, half-pixel aligned.
fn cubic_taps(len: usize, s: usize) -> Vec<([usize; 4], [f64; 4])> {
    let last = len as isize - 1;
    (0..len * s)
        .map(|o| {
            let src = (o as f64 + 0.5) / s as f64 - 0.5;
            let base = src.floor();
            let frac = src - base;
            let mut idx = [0usize; 4];
            let mut wts = [0.0; 4];
            for k in 0..4 {
                let off = k as isize - 1;
                idx[k] = (base as isize + off).clamp(0, last) as usize;
                wts[k] = cubic_weight(frac - off as f64);
            }
            (idx, wts)
        })
        .collect()
}

/// Separable cubic convolution upscaling with clamped borders.
pub fn upscale_bicubic(t: &Tensor, s: usize) -> Result<Tensor> {
    check_factor(s)?;
    if s == 1 {
        return Ok(t.clone());
    }
    let (c, h, w) = t.dims();
    let (oh, ow) = (h * s, w * s);
    let xt = cubic_taps(w, s);
    let yt = cubic_taps(h, s);
    let mut data = Vec::with_capacity(c * oh * ow);
    let mut tmp = vec![0.0; h * ow];
    for plane in t.planes() {
        for y in 0..h {
            let row = &plane[y * w..(y + 1) * w];
            for (x, (idx, wts)) in xt.iter().enumerate() {
                tmp[y * ow + x] = (0..4).map(|k| wts[k] * row[idx[k]]).sum();
            }
        }
        for (idx, wts) in &yt {
            for x in 0..ow {
                data.push((0..4).map(|k| wts[k] * tmp[idx[k] * ow + x]).sum());
            }
        }
    }
    Ok(Tensor::from_parts(c, oh, ow, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn checker() -> Tensor {
        Tensor::new(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap()
    }

    #[test]
    fn nearest_block_replication() {
        let up = upscale_nearest(&checker(), 2).unwrap();
        assert_eq!(
            up.data(),
            &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 3.0, 3.0, 4.0, 4.0]
        );
    }

    #[test]
    fn zero_factor_is_rejected() {
        assert!(upscale_nearest(&checker(), 0).is_err());
        assert!(downscale_nearest(&checker(), 0).is_err());
        assert!(upscale_bicubic(&checker(), 0).is_err());
    }

    #[test]
    fn factor_one_is_identity() {
        let t = checker();
        assert_eq!(upscale_nearest(&t, 1).unwrap(), t);
        assert_eq!(downscale_nearest(&t, 1).unwrap(), t);
        assert_eq!(upscale_bicubic(&t, 1).unwrap(), t);
    }

    #[test]
    fn downscale_requires_divisible_dims() {
        let t = Tensor::zeros(1, 3, 4).unwrap();
        assert!(downscale_nearest(&t, 2).is_err());
    }

    #[test]
    fn downscale_matches_naive_loop() {
        let t = Tensor::from_fn(1, 8, 8, |_, y, x| ((y * 31 + x * 17) % 13) as f64 / 13.0).unwrap();
        let d = downscale_nearest(&t, 2).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(d.get(0, i, j), t.get(0, 2 * i, 2 * j));
            }
        }
    }

    #[test]
    fn cubic_kernel_interpolates_and_partitions_unity() {
        assert_eq!(cubic_weight(0.0), 1.0);
        assert_eq!(cubic_weight(1.0), 0.0);
        assert_eq!(cubic_weight(2.0), 0.0);
        for i in 0..10 {
            let f = i as f64 / 10.0;
            let s: f64 = (-1..3).map(|k| cubic_weight(f - k as f64)).sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn bicubic_keeps_constants() {
        let t = Tensor::filled(2, 5, 7, 0.37).unwrap();
        let up = upscale_bicubic(&t, 3).unwrap();
        assert_eq!(up.dims(), (2, 15, 21));
        assert!(up.data().iter().all(|v| (v - 0.37).abs() < 1e-12));
    }

    #[test]
    fn bicubic_reproduces_linear_ramp_in_interior() {
        let t = Tensor::from_fn(1, 1, 8, |_, _, x| 0.1 * x as f64 + 0.2).unwrap();
        let up = upscale_bicubic(&t, 2).unwrap();
        // output column o samples source coordinate (o + 0.5)/2 - 0.5
        for o in 4..12 {
            let src = (o as f64 + 0.5) / 2.0 - 0.5;
            let expect = 0.1 * src + 0.2;
            assert!((up.get(0, 0, o) - expect).abs() < 1e-6, "column {o}");
        }
    }

    proptest! {
        #[test]
        fn nearest_up_down_is_identity(
            c in 1usize..3, h in 1usize..6, w in 1usize..6, s in 1usize..5, seed in any::<u64>()
        ) {
            let t = Tensor::from_fn(c, h, w, |k, y, x| {
                let v = seed.wrapping_mul(6364136223846793005).wrapping_add((k * 97 + y * 13 + x) as u64);
                (v >> 11) as f64 / (1u64 << 53) as f64
            }).unwrap();
            let back = downscale_nearest(&upscale_nearest(&t, s).unwrap(), s).unwrap();
            prop_assert_eq!(back, t);
        }

        #[test]
        fn rescaling_is_channel_independent(s in 1usize..4, seed in any::<u32>()) {
            let t = Tensor::from_fn(2, 4, 5, |k, y, x| (((seed as usize + k * 7 + y * 5 + x * 3) % 11) as f64) / 11.0).unwrap();
            let up = upscale_bicubic(&t, s).unwrap();
            let c0 = upscale_bicubic(&t.channel_tensor(0).unwrap(), s).unwrap();
            let c1 = upscale_bicubic(&t.channel_tensor(1).unwrap(), s).unwrap();
            prop_assert_eq!(up, Tensor::concat(&[&c0, &c1]).unwrap());
        }
    }
}
