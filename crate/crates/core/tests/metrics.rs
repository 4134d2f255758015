use std::path::Path;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vsrkit::corr::{correlation_profile, cross_entropy, f_transform, psnr, ssim, tof};
use vsrkit::freq::{
    dc_energy, edge_strength, highpass_strength, observation2_report, Arm, EdgeOperator, DEFAULT_HIGHPASS_RADIUS,
};
use vsrkit::harness::{adjacent_flows, load_frames};
use vsrkit::tensor::upscale_nearest;
use vsrkit::{FlowConfig, Tensor};

fn random(seed: u64, c: usize, h: usize, w: usize) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::new(c, h, w, (0..c * h * w).map(|_| rng.random::<f64>()).collect()).unwrap()
}

fn natural() -> Vec<Tensor> {
    load_frames(Path::new(env!("CARGO_MANIFEST_DIR")).join("data/natural"))
        .unwrap()
        .1
}

/// Windowed SSIM evaluated one window at a time with explicit 2-D weights.
fn brute_ssim(a: &Tensor, b: &Tensor) -> f64 {
    let (c, h, w) = a.dims();
    let r = 5usize;
    let g: Vec<f64> = (0..=2 * r).map(|i| (-((i as f64 - 5.0).powi(2)) / 4.5).exp()).collect();
    let norm: f64 = g.iter().sum::<f64>().powi(2);
    let (c1, c2) = (1e-4, 9e-4);
    let mut total = 0.0;
    for ch in 0..c {
        let mut acc = 0.0;
        let mut count = 0.0;
        for y in r..h - r {
            for x in r..w - r {
                let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in 0..=2 * r {
                    for dx in 0..=2 * r {
                        let wt = g[dy] * g[dx] / norm;
                        let p = a.get(ch, y + dy - r, x + dx - r);
                        let q = b.get(ch, y + dy - r, x + dx - r);
                        mx += wt * p;
                        my += wt * q;
                        sxx += wt * p * p;
                        syy += wt * q * q;
                        sxy += wt * p * q;
                    }
                }
                let (vx, vy, cv) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
                acc += (2.0 * mx * my + c1) * (2.0 * cv + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1.0;
            }
        }
        total += acc / count;
    }
    total / c as f64
}

fn smoothed_entropy(a: &Tensor, lo: f64, hi: f64, bins: usize) -> f64 {
    let mut counts = vec![1.0; bins];
    for &v in a.data() {
        let k = if hi > lo {
            (((v - lo) / (hi - lo)) * bins as f64) as usize
        } else {
            0
        };
        counts[k.min(bins - 1)] += 1.0;
    }
    let total: f64 = counts.iter().sum();
    counts.iter().map(|c| -(c / total) * (c / total).log2()).sum()
}

#[test]
fn ssim_matches_window_by_window_evaluation() {
    for seed in 0..4 {
        let a = random(seed, 2, 19, 23);
        let b = a
            .map(|v| 0.7 * v + 0.1)
            .add(&random(seed + 100, 2, 19, 23).scale(0.2))
            .unwrap();
        assert!((ssim(&a, &b).unwrap() - brute_ssim(&a, &b)).abs() < 1e-10);
    }
}

#[test]
fn f_transform_is_decreasing_from_one() {
    assert_eq!(f_transform(0.0), 1.0);
    let xs: Vec<f64> = (0..100).map(|i| i as f64 * 0.37).collect();
    assert!(xs.windows(2).all(|w| f_transform(w[1]) < f_transform(w[0])));
    assert!(xs.iter().all(|&x| f_transform(x) > 0.0 && f_transform(x) <= 1.0));
}

#[test]
fn correlation_profile_counts_pairs_and_stays_bounded() {
    let frames = natural();
    let r = correlation_profile(&frames[..4], 256).unwrap();
    assert_eq!(r.pair_count, 3);
    assert!(r.mean_ssim >= -1.0 && r.mean_ssim <= 1.0);
    for f in [r.mean_f_h, r.mean_f_sigma] {
        assert!(f > 0.0 && f <= 1.0);
    }
}

#[test]
fn tof_is_zero_for_identical_sequences() {
    let frames = natural();
    let seq = &frames[..3];
    let cfg = FlowConfig::default();
    assert_eq!(tof(seq, seq, &cfg).unwrap(), 0.0);
    let rev: Vec<Tensor> = seq.iter().rev().cloned().collect();
    assert!(tof(seq, &rev, &cfg).unwrap() > 0.0);
}

#[test]
fn every_operator_ranks_direct_warping_as_the_larger_loss() {
    let frames = natural();
    let flows = adjacent_flows(&frames, 4, &FlowConfig::default()).unwrap();
    let ops = EdgeOperator::all();
    let r = observation2_report(&frames, &flows, 4, &ops, DEFAULT_HIGHPASS_RADIUS).unwrap();
    for op in &ops {
        let direct = r.edge_reduction(Arm::WarpDirect, op.name()).unwrap();
        let aligned = r.edge_reduction(Arm::OgwmAlign, op.name()).unwrap();
        assert!(direct > aligned, "{}: {direct} vs {aligned}", op.name());
        assert!(direct.is_finite() && aligned.is_finite());
    }
}

#[test]
fn edge_strength_depends_on_resolution() {
    let f = natural()[0].clone();
    let up = upscale_nearest(&f, 2).unwrap();
    for op in EdgeOperator::all() {
        assert_ne!(
            edge_strength(&f, &op).unwrap(),
            edge_strength(&up, &op).unwrap(),
            "{}",
            op.name()
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn parseval_holds(seed in any::<u64>(), c in 1usize..4, h in 1usize..24, w in 1usize..24) {
        let t = random(seed, c, h, w).map(|v| 4.0 * v - 1.0);
        let mean_sq = t.data().iter().map(|v| v * v).sum::<f64>() / t.len() as f64;
        let total = highpass_strength(&t, 0.0) + dc_energy(&t);
        prop_assert!((total - mean_sq).abs() <= 1e-6 * mean_sq.max(1e-12));
    }

    #[test]
    fn highpass_is_non_increasing_in_radius(seed in any::<u64>(), r0 in 0.0f64..20.0, dr in 0.0f64..10.0) {
        let t = random(seed, 1, 20, 17);
        prop_assert!(highpass_strength(&t, r0 + dr) <= highpass_strength(&t, r0) + 1e-15);
    }

    #[test]
    fn psnr_falls_as_offset_grows(seed in any::<u64>(), a in 0.001f64..0.5, extra in 0.001f64..0.5) {
        let t = random(seed, 1, 8, 8);
        let near = psnr(&t, &t.map(|v| v + a), 1.0).unwrap();
        let far = psnr(&t, &t.map(|v| v - a - extra), 1.0).unwrap();
        prop_assert!(far < near);
        prop_assert!((near - 10.0 * (1.0 / (a * a)).log10()).abs() < 1e-9);
    }

    #[test]
    fn ssim_is_bounded_and_one_only_on_identity(seed in any::<u64>(), amp in 0.0f64..1.0) {
        let a = random(seed, 1, 14, 14);
        let b = random(seed ^ 0xff, 1, 14, 14).map(|v| v * amp);
        let s = ssim(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
        prop_assert!(s < 1.0 - 1e-12);
        prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn cross_entropy_dominates_entropy(seed in any::<u64>(), bins in 2usize..64, skew in 0.2f64..5.0) {
        let a = random(seed, 1, 9, 9).map(|v| v.powf(skew));
        let b = random(seed.wrapping_mul(3), 1, 9, 9);
        let (lo, hi) = (a.min().min(b.min()), a.max().max(b.max()));
        prop_assert!(cross_entropy(&a, &b, bins).unwrap() >= smoothed_entropy(&a, lo, hi, bins) - 1e-12);
    }
}
