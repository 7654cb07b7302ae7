use planepatch::geometry::{backproject, bilinear_sample, pose_inverse, project, PixelPoint};
use planepatch::planes::planar_depth;
use planepatch::synth::{make_scene, max_image_frequency, SceneSpec, MAX_CYCLES_PER_PIXEL, TEXTURE_MAX, TEXTURE_MIN};
use proptest::prelude::*;

#[test]
fn source_pixels_show_the_world_texture_they_hit() {
    let spec = SceneSpec::three_plane(96, 72, 4, 3).unwrap();
    let scene = make_scene(&spec).unwrap();
    for (si, pose) in scene.gt_poses.iter().enumerate() {
        let img = &scene.sources[si];
        let depth = &scene.gt_depth[si + 1];
        let inv = pose_inverse(pose);
        for y in (0..72).step_by(5) {
            for x in (0..96).step_by(5) {
                let xs = backproject(&PixelPoint::new(x as f64, y as f64), depth.get(x, y), &spec.k).unwrap();
                let xw = inv.transform_point(&xs);
                let plane = spec
                    .planes
                    .iter()
                    .find(|p| (p.a.a.dot(&xw) - 1.0).abs() < 1e-9)
                    .unwrap_or_else(|| panic!("source {si} pixel ({x}, {y}) is on no plane"));
                let color = plane.texture.eval(&xw);
                for c in 0..3 {
                    let want = color[c].clamp(TEXTURE_MIN, TEXTURE_MAX);
                    assert!((img.get(x, y, c) - want).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn warping_target_pixels_reproduces_their_values() {
    let spec = SceneSpec::three_plane(192, 144, 2, 0).unwrap();
    let scene = make_scene(&spec).unwrap();
    let mut checked = 0;
    for (si, pose) in scene.gt_poses.iter().enumerate() {
        let src_depth = &scene.gt_depth[si + 1];
        let inv = pose_inverse(pose);
        for y in (0..144).step_by(3) {
            for x in (0..192).step_by(3) {
                let xw = backproject(&PixelPoint::new(x as f64, y as f64), scene.gt_depth[0].get(x, y), &spec.k).unwrap();
                let (q, z) = project(&pose.transform_point(&xw), &spec.k).unwrap();
                if !(q.x >= 0.0 && q.y >= 0.0 && q.x <= 190.0 && q.y <= 142.0) {
                    continue;
                }
                // Skip occluded points and cells straddling a plane boundary:
                // all four source neighbors must see the target pixel's plane.
                let plane = &spec.planes[scene.label_planes[scene.gt_plane_labels.get(x, y) as usize]];
                let (x0, y0) = (q.x as usize, q.y as usize);
                let visible = z > 0.0
                    && [(x0, y0), (x0 + 1, y0), (x0, y0 + 1), (x0 + 1, y0 + 1)].iter().all(|&(u, v)| {
                        let p = backproject(&PixelPoint::new(u as f64, v as f64), src_depth.get(u, v), &spec.k).unwrap();
                        (plane.a.a.dot(&inv.transform_point(&p)) - 1.0).abs() < 1e-9
                    });
                if !visible {
                    continue;
                }
                let s = bilinear_sample(&scene.sources[si], &q);
                for c in 0..3 {
                    assert!((s.values[c] - scene.target.get(x, y, c)).abs() < 0.01, "pixel ({x}, {y}) source {si}");
                }
                checked += 1;
            }
        }
    }
    assert!(checked > 4000, "{checked}");
}

#[test]
fn target_labels_partition_the_planes() {
    let spec = SceneSpec::three_plane(96, 72, 2, 0).unwrap();
    let scene = make_scene(&spec).unwrap();
    let labels = &scene.gt_plane_labels;
    assert_eq!(labels.segment_count(), scene.label_planes.len());
    assert_eq!(labels.areas().iter().sum::<usize>(), 96 * 72);
    for y in 0..72 {
        for x in 0..96 {
            let plane = &spec.planes[scene.label_planes[labels.get(x, y) as usize]];
            let d = planar_depth(&plane.a, &spec.k, &PixelPoint::new(x as f64, y as f64)).unwrap();
            assert!((d - scene.gt_depth[0].get(x, y)).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn default_scenes_are_band_limited(seed in any::<u64>(), w in 48usize..200) {
        let h = w * 3 / 4;
        let spec = SceneSpec::three_plane(w, h, 2, seed).unwrap();
        prop_assert!(max_image_frequency(&spec).unwrap() <= MAX_CYCLES_PER_PIXEL);
        let scene = make_scene(&spec).unwrap();
        prop_assert_eq!(scene.gt_depth.len(), 3);
        prop_assert!(scene.target.data().iter().all(|v| (TEXTURE_MIN..=TEXTURE_MAX).contains(v)));
    }
}

#[test]
fn rendering_is_deterministic() {
    let spec = SceneSpec::three_plane(64, 48, 2, 9).unwrap();
    assert_eq!(make_scene(&spec).unwrap(), make_scene(&spec).unwrap());
}
