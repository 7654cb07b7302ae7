//! Scene and bundle builders shared by the integration tests.
#![allow(dead_code)]

use planepatch::geometry::{DepthMap, Image};
use planepatch::losses::DEFAULT_WINDOW;
use planepatch::pipeline::{build_bundle, BundleParams};
use planepatch::solver::FrameBundle;
use planepatch::synth::{make_scene, RenderedScene, SceneSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Default three-plane scene, 192×144 with two sources.
pub fn oracle_scene() -> Oracle {
    let spec = SceneSpec::three_plane(192, 144, 2, 0).expect("default scene");
    let scene = make_scene(&spec).expect("render");
    Oracle { spec, scene }
}

pub struct Oracle {
    pub spec: SceneSpec,
    pub scene: RenderedScene,
}

/// Bundle on ground-truth poses and plane labels, depth `scale`×GT.
pub fn gt_bundle(o: &Oracle, scale: f64, window_n: usize) -> FrameBundle {
    let scene = &o.scene;
    let params = BundleParams {
        window_n,
        ..BundleParams::default()
    };
    let init = scene.gt_depth[0].scaled(scale).expect("scaled depth");
    build_bundle(
        scene.target.clone(),
        scene.sources.clone(),
        o.spec.k,
        &params,
        Some(&scene.gt_plane_labels),
        Some(&init),
        Some(scene.gt_poses.clone()),
    )
    .expect("bundle")
}

pub fn default_gt_bundle(o: &Oracle, scale: f64) -> FrameBundle {
    gt_bundle(o, scale, DEFAULT_WINDOW)
}

/// Mean |pred − gt| / gt over pixels valid in both maps.
pub fn abs_rel(pred: &DepthMap, gt: &DepthMap) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..gt.data().len() {
        if gt.is_valid_index(i) && pred.is_valid_index(i) {
            sum += (pred.data()[i] - gt.data()[i]).abs() / gt.data()[i];
            n += 1;
        }
    }
    sum / n as f64
}

/// Uniform random gray image.
pub fn noise_image(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..width * height).map(|_| rng.random::<f64>()).collect();
    Image::new(width, height, 1, data).expect("image")
}

/// Blocky random image: piecewise-constant cells plus mild noise.
pub fn block_image(width: usize, height: usize, cell: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols = width.div_ceil(cell);
    let rows = height.div_ceil(cell);
    let levels: Vec<f64> = (0..cols * rows).map(|_| rng.random::<f64>()).collect();
    let mut data = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let v = levels[(y / cell) * cols + x / cell] + 0.02 * (rng.random::<f64>() - 0.5);
            data.push(v.clamp(0.0, 1.0));
        }
    }
    Image::new(width, height, 1, data).expect("image")
}
