mod common;

use nalgebra::Vector3;
use planepatch::geometry::{DepthMap, Image, PoseSE3};
use planepatch::losses::{
    evaluate, photometric_loss, smoothness_loss, ssim_patch, LossConfig, PatchSample, C1, C2,
    DEFAULT_ALPHA, DEFAULT_LAMBDA1, DEFAULT_WINDOW,
};
use planepatch::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{block_image, default_gt_bundle, oracle_scene};

/// Single-channel SSIM straight from the definition with population moments.
fn ssim_oracle(a: &[f64; 9], b: &[f64; 9]) -> f64 {
    let mean = |v: &[f64; 9]| v.iter().sum::<f64>() / 9.0;
    let (ma, mb) = (mean(a), mean(b));
    let va = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / 9.0;
    let vb = b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / 9.0;
    let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / 9.0;
    ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2))
}

fn patch() -> impl Strategy<Value = [f64; 9]> {
    prop::array::uniform9(0.0..1.0f64)
}

/// Edge-aware smoothness of `d / mean(d)` evaluated directly.
fn smoothness_oracle(depth: &DepthMap, img: &Image) -> f64 {
    let (w, h) = (depth.width(), depth.height());
    let lum = img.luminance();
    let mean = depth.data().iter().sum::<f64>() / (w * h) as f64;
    let n = |x: usize, y: usize| depth.get(x, y) / mean;
    let i = |x: usize, y: usize| lum.get(x, y, 0);
    let mut sx = 0.0;
    for y in 0..h {
        for x in 0..w - 1 {
            sx += (-(i(x + 1, y) - i(x, y)).abs()).exp() * (n(x + 1, y) - n(x, y)).abs();
        }
    }
    let mut sy = 0.0;
    for y in 0..h - 1 {
        for x in 0..w {
            sy += (-(i(x, y + 1) - i(x, y)).abs()).exp() * (n(x, y + 1) - n(x, y)).abs();
        }
    }
    sx / ((w - 1) * h) as f64 + sy / (w * (h - 1)) as f64
}

fn random_depth(w: usize, h: usize, seed: u64) -> DepthMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DepthMap::from_fn(w, h, |_, _| rng.random_range(0.5..4.0)).unwrap()
}

proptest! {
    #[test]
    fn ssim_matches_definition(a in patch(), b in patch()) {
        let v = ssim_patch(&PatchSample::gray(a), &PatchSample::gray(b)).unwrap();
        prop_assert!((v - ssim_oracle(&a, &b)).abs() <= 1e-12);
        let r = ssim_patch(&PatchSample::gray(b), &PatchSample::gray(a)).unwrap();
        prop_assert!((v - r).abs() <= 1e-15);
        prop_assert!((-1.0..=1.0).contains(&v));
    }

    #[test]
    fn smoothness_matches_definition_and_ignores_scale(seed in any::<u64>(), s in 0.1..20.0f64) {
        let img = block_image(20, 14, 5, seed);
        let depth = random_depth(20, 14, seed ^ 1);
        let (v, _) = smoothness_loss(&depth, &img).unwrap();
        prop_assert!((v - smoothness_oracle(&depth, &img)).abs() <= 1e-12);
        let (vs, _) = smoothness_loss(&depth.scaled(s).unwrap(), &img).unwrap();
        prop_assert!((v - vs).abs() <= 1e-10);
    }
}

#[test]
fn smoothness_gradient_matches_finite_differences() {
    let img = block_image(16, 12, 4, 8);
    let depth = random_depth(16, 12, 9);
    let (_, grad) = smoothness_loss(&depth, &img).unwrap();
    let h = 1e-6;
    for i in (0..16 * 12).step_by(5) {
        let at = |d: f64| {
            let mut data = depth.data().to_vec();
            data[i] += d;
            smoothness_loss(&DepthMap::new(16, 12, data).unwrap(), &img).unwrap().0
        };
        let numeric = (at(h) - at(-h)) / (2.0 * h);
        assert!((grad[i] - numeric).abs() <= 1e-6 * grad[i].abs().max(1e-3), "{i}: {} vs {numeric}", grad[i]);
    }
}

#[test]
fn identical_views_have_zero_photometric_loss() {
    let o = oracle_scene();
    let b = default_gt_bundle(&o, 1.0);
    let depth: Vec<f64> = vec![2.0; b.keypoints.len()];
    let (v, details) = photometric_loss(
        &o.scene.target,
        std::slice::from_ref(&o.scene.target),
        &b.keypoints,
        &depth,
        &o.spec.k,
        &[PoseSE3::identity()],
        DEFAULT_ALPHA,
        DEFAULT_WINDOW,
    )
    .unwrap();
    assert!(v.abs() < 1e-12, "{v}");
    assert!(details.iter().all(|d| d.source == Some(0)));
}

#[test]
fn minimum_picks_the_matching_source() {
    let o = oracle_scene();
    let b = default_gt_bundle(&o, 1.0);
    let depth: Vec<f64> = vec![2.0; b.keypoints.len()];
    let (_, details) = photometric_loss(
        &o.scene.target,
        &[o.scene.target.clone(), o.scene.target.inverted()],
        &b.keypoints,
        &depth,
        &o.spec.k,
        &[PoseSE3::identity(); 2],
        DEFAULT_ALPHA,
        DEFAULT_WINDOW,
    )
    .unwrap();
    assert!(details.iter().all(|d| d.source == Some(0)));
}

#[test]
fn views_without_overlap_are_an_error() {
    let o = oracle_scene();
    let b = default_gt_bundle(&o, 1.0);
    let depth: Vec<f64> = vec![2.0; b.keypoints.len()];
    let far = PoseSE3::from_translation(Vector3::new(100.0, 0.0, 0.0));
    let r = photometric_loss(
        &o.scene.target,
        std::slice::from_ref(&o.scene.sources[0]),
        &b.keypoints,
        &depth,
        &o.spec.k,
        &[far],
        DEFAULT_ALPHA,
        DEFAULT_WINDOW,
    );
    assert!(matches!(r, Err(Error::NoOverlap)), "{r:?}");
}

#[test]
fn adding_a_source_never_increases_the_loss() {
    let o = oracle_scene();
    let b = default_gt_bundle(&o, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        let depth: Vec<f64> = b.keypoints.points.iter().map(|p| o.scene.gt_depth[0].get(p.x, p.y) * rng.random_range(0.8..1.25)).collect();
        let run = |n: usize| {
            photometric_loss(&o.scene.target, &o.scene.sources[..n], &b.keypoints, &depth, &o.spec.k, &o.scene.gt_poses[..n], DEFAULT_ALPHA, DEFAULT_WINDOW)
                .unwrap()
        };
        let (one, d1) = run(1);
        let (two, d2) = run(2);
        assert!(two <= one + 1e-15, "{two} > {one}");
        for (a, b) in d1.iter().zip(&d2) {
            if let (Some(a), Some(b)) = (a.loss, b.loss) {
                assert!(b <= a);
            }
        }
    }
}

#[test]
fn total_at_ground_truth_is_near_smoothness_floor() {
    let o = oracle_scene();
    let e = evaluate(&default_gt_bundle(&o, 1.0), &LossConfig::default(), None).unwrap();
    let b = &e.breakdown;
    assert!(b.total < DEFAULT_LAMBDA1 * b.l_sm + 0.011, "{b:?}");
    assert!(b.l_ph < 0.01);
}

#[test]
fn evaluation_is_bit_reproducible() {
    let o = oracle_scene();
    let bundle = default_gt_bundle(&o, 1.1);
    let a = evaluate(&bundle, &LossConfig::default(), None).unwrap();
    let b = evaluate(&bundle, &LossConfig::default(), None).unwrap();
    assert_eq!(a.breakdown, b.breakdown);
    assert_eq!(a.gradients, b.gradients);
}
