use nalgebra::{Vector3, Vector6};
use planepatch::geometry::{
    backproject, bilinear_sample, left_update, pose_compose, pose_inverse, project, se3_exp, se3_log,
    support_domain, warp_patch, Image, Intrinsics, PixelPoint, PoseSE3, Twist,
};
use proptest::prelude::*;

fn intrinsics() -> impl Strategy<Value = Intrinsics> {
    (80.0..300.0f64, 0.9..1.1f64, 60.0..130.0f64, 40.0..100.0f64)
        .prop_map(|(f, r, cx, cy)| Intrinsics::new(f, f * r, cx, cy))
}

fn twist(max_v: f64, max_w: f64) -> impl Strategy<Value = Twist> {
    (prop::array::uniform3(-max_v..max_v), prop::array::uniform3(-max_w..max_w))
        .prop_map(|(v, w)| Twist::new(Vector3::from(v), Vector3::from(w)))
}

fn pixel() -> impl Strategy<Value = PixelPoint> {
    (5.0..186.0f64, 5.0..138.0f64).prop_map(|(x, y)| PixelPoint::new(x, y))
}

proptest! {
    #[test]
    fn identity_warp_is_a_fixpoint(k in intrinsics(), p in pixel(), d in 0.2..10.0f64, n in 1usize..=4) {
        let dom = support_domain(&p, n);
        let w = warp_patch(&dom, d, &k, &PoseSE3::identity(), (192, 144)).unwrap();
        for (a, b) in w.points.iter().zip(dom.samples.iter()) {
            prop_assert!((a.x - b.x).abs() <= 1e-9 && (a.y - b.y).abs() <= 1e-9);
        }
    }

    #[test]
    fn project_inverts_backproject(k in intrinsics(), p in pixel(), d in 0.05..50.0f64) {
        let (q, z) = project(&backproject(&p, d, &k).unwrap(), &k).unwrap();
        prop_assert!((q.x - p.x).abs() <= 1e-9);
        prop_assert!((q.y - p.y).abs() <= 1e-9);
        prop_assert!((z - d).abs() <= 1e-9 * d.max(1.0));
    }

    #[test]
    fn warp_round_trip_through_inverse(k in intrinsics(), p in pixel(), d in 0.5..10.0f64, t in twist(0.2, 0.1)) {
        let pose = se3_exp(&t);
        let x = pose.transform_point(&backproject(&p, d, &k).unwrap());
        prop_assume!(x.z > 0.05);
        let (q, zq) = project(&x, &k).unwrap();
        let back = pose_inverse(&pose).transform_point(&backproject(&q, zq, &k).unwrap());
        let (r, zr) = project(&back, &k).unwrap();
        prop_assert!((r.x - p.x).abs() <= 1e-6 && (r.y - p.y).abs() <= 1e-6);
        prop_assert!((zr - d).abs() <= 1e-6);
    }

    #[test]
    fn exp_log_round_trip(t in twist(2.0, 1.5)) {
        let back = se3_log(&se3_exp(&t)).to_vector();
        prop_assert!((back - t.to_vector()).norm() <= 1e-9);
    }

    #[test]
    fn exp_is_a_valid_pose(t in twist(5.0, 10.0)) {
        prop_assert!(se3_exp(&t).is_valid(1e-9));
    }

    #[test]
    fn left_update_is_left_composition(a in twist(1.0, 1.0), b in twist(0.5, 0.5)) {
        let pose = se3_exp(&a);
        let u = left_update(&pose, &b);
        let c = pose_compose(&se3_exp(&b), &pose);
        prop_assert!((u.rotation - c.rotation).norm() <= 1e-12);
        prop_assert!((u.translation - c.translation).norm() <= 1e-12);
    }

    #[test]
    fn composition_with_inverse_is_identity(a in twist(2.0, 3.0)) {
        let p = se3_exp(&a);
        let i = pose_compose(&p, &pose_inverse(&p));
        prop_assert!((i.rotation - nalgebra::Matrix3::identity()).norm() <= 1e-12);
        prop_assert!(i.translation.norm() <= 1e-12);
    }

    #[test]
    fn bilinear_stays_between_corner_values(x in 0.0..7.0f64, y in 0.0..5.0f64, seed in 0u64..1000) {
        let img = Image::from_fn(8, 6, 1, |i, j, _| ((i * 31 + j * 17 + seed as usize) % 11) as f64 / 10.0).unwrap();
        let s = bilinear_sample(&img, &PixelPoint::new(x, y));
        prop_assert!(s.valid);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let corners = [(x0, y0), ((x0 + 1).min(7), y0), (x0, (y0 + 1).min(5)), ((x0 + 1).min(7), (y0 + 1).min(5))];
        let vals: Vec<f64> = corners.iter().map(|&(i, j)| img.get(i, j, 0)).collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(s.values[0] >= lo - 1e-12 && s.values[0] <= hi + 1e-12);
    }
}

#[test]
fn points_behind_the_camera_fail_projection() {
    let k = Intrinsics::new(100.0, 100.0, 50.0, 40.0);
    assert!(project(&Vector3::new(0.1, 0.2, -1.0), &k).is_err());
    assert!(project(&Vector3::new(0.1, 0.2, 0.0), &k).is_err());
}

#[test]
fn twist_vector_order_is_translation_first() {
    let x = Vector6::new(1.0, 2.0, 3.0, 0.0, 0.0, 0.0);
    let p = se3_exp(&Twist::from_vector(&x));
    assert!((p.translation - Vector3::new(1.0, 2.0, 3.0)).norm() < 1e-15);
}
