use nalgebra::{Matrix3, Vector3};
use planepatch::geometry::{backproject, DepthMap, Intrinsics, PixelPoint};
use planepatch::planes::{fit_plane, planar_depth, spp_loss, PlaneParams};
use planepatch::superpixels::Superpixel;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const W: usize = 24;
const H: usize = 18;

fn k() -> Intrinsics {
    Intrinsics::new(30.0, 30.0, 11.5, 8.5)
}

/// Left and right halves of the image as two regions.
fn halves() -> Vec<Superpixel> {
    (0..2u32)
        .map(|id| {
            let pixels: Vec<(usize, usize)> = (0..H)
                .flat_map(|y| (0..W).map(move |x| (x, y)))
                .filter(|&(x, _)| (x < W / 2) == (id == 0))
                .collect();
            Superpixel { id, area: pixels.len(), pixels }
        })
        .collect()
}

fn noisy_depth(seed: u64) -> DepthMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DepthMap::from_fn(W, H, |x, y| 2.0 + 0.02 * x as f64 - 0.01 * y as f64 + rng.random_range(-0.05..0.05)).unwrap()
}

/// Independent evaluation: normal-equation fit per region, mean absolute
/// residual per region, averaged over regions.
fn spp_oracle(depth: &DepthMap, regions: &[Superpixel], k: &Intrinsics, eps: f64) -> f64 {
    let kinv = Matrix3::new(k.fx, 0.0, k.cx, 0.0, k.fy, k.cy, 0.0, 0.0, 1.0).try_inverse().unwrap();
    let mut total = 0.0;
    for r in regions {
        let rays: Vec<Vector3<f64>> = r.pixels.iter().map(|&(x, y)| kinv * Vector3::new(x as f64, y as f64, 1.0)).collect();
        let pts: Vec<Vector3<f64>> = r.pixels.iter().zip(&rays).map(|(&(x, y), ray)| ray * depth.get(x, y)).collect();
        let mut m = Matrix3::identity() * eps;
        let mut b = Vector3::zeros();
        for p in &pts {
            m += p * p.transpose();
            b += p;
        }
        let a = m.try_inverse().unwrap() * b;
        let sum: f64 = r.pixels.iter().zip(&rays).map(|(&(x, y), ray)| (depth.get(x, y) - 1.0 / a.dot(ray)).abs()).sum();
        total += sum / r.pixels.len() as f64;
    }
    total / regions.len() as f64
}

#[test]
fn loss_matches_independent_evaluation() {
    let depth = noisy_depth(3);
    let (v, _) = spp_loss(&depth, &halves(), &k(), 1e-4).unwrap();
    let oracle = spp_oracle(&depth, &halves(), &k(), 1e-4);
    assert!((v - oracle).abs() <= 1e-10 * oracle.max(1.0), "{v} vs {oracle}");
}

#[test]
fn single_pixel_perturbation_matches_brute_force() {
    let depth = noisy_depth(4);
    let mut data = depth.data().to_vec();
    data[5 * W + 3] += 0.1;
    let bumped = DepthMap::new(W, H, data).unwrap();
    let (v, _) = spp_loss(&bumped, &halves(), &k(), 1e-4).unwrap();
    let oracle = spp_oracle(&bumped, &halves(), &k(), 1e-4);
    assert!((v - oracle).abs() <= 1e-10 * oracle.max(1.0));
    let (before, _) = spp_loss(&depth, &halves(), &k(), 1e-4).unwrap();
    assert_ne!(v, before);
}

#[test]
fn gradient_matches_finite_differences_away_from_kinks() {
    let depth = noisy_depth(5);
    let regions = halves();
    let (_, grad) = spp_loss(&depth, &regions, &k(), 1e-4).unwrap();
    let h = 1e-6;
    let mut checked = 0;
    for i in (0..W * H).step_by(7) {
        let shift = |d: f64| {
            let mut data = depth.data().to_vec();
            data[i] += d;
            spp_loss(&DepthMap::new(W, H, data).unwrap(), &regions, &k(), 1e-4).unwrap().0
        };
        // Skip coordinates whose perturbation moves some residual across zero.
        let numeric = (shift(h) - shift(-h)) / (2.0 * h);
        let one_sided = [(shift(h) - shift(0.0)) / h, (shift(0.0) - shift(-h)) / h];
        if (one_sided[0] - one_sided[1]).abs() > 1e-3 * numeric.abs().max(1e-3) {
            continue;
        }
        let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1e-8);
        assert!(rel < 1e-4, "pixel {i}: analytic {} numeric {numeric}", grad[i]);
        checked += 1;
    }
    assert!(checked > 40);
}

#[test]
fn no_regions_gives_zero() {
    let (v, g) = spp_loss(&noisy_depth(1), &[], &k(), 1e-4).unwrap();
    assert_eq!(v, 0.0);
    assert!(g.iter().all(|x| *x == 0.0));
}

#[test]
fn zero_plane_has_no_planar_depth() {
    let a = PlaneParams::new(Vector3::zeros());
    assert_eq!(planar_depth(&a, &k(), &PixelPoint::new(3.0, 4.0)), None);
}

#[test]
fn exact_planes_have_zero_loss() {
    let a = PlaneParams::new(Vector3::new(0.05, -0.1, 0.4));
    let depth = DepthMap::from_fn(W, H, |x, y| planar_depth(&a, &k(), &PixelPoint::new(x as f64, y as f64)).unwrap()).unwrap();
    let (v, _) = spp_loss(&depth, &halves(), &k(), 1e-10).unwrap();
    assert!(v < 1e-8, "{v}");
}

fn plane() -> impl Strategy<Value = Vector3<f64>> {
    (-0.5..0.5f64, -0.5..0.5f64, 1.0..5.0f64).prop_map(|(nx, ny, d)| Vector3::new(nx, ny, 1.0).normalize() / d)
}

fn samples(a: Vector3<f64>, seed: u64, n: usize) -> Vec<(PixelPoint, f64, Vector3<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = k();
    let truth = PlaneParams::new(a);
    let mut out = Vec::new();
    while out.len() < n {
        let p = PixelPoint::new(rng.random_range(0.0..(W - 1) as f64), rng.random_range(0.0..(H - 1) as f64));
        if let Some(d) = planar_depth(&truth, &k, &p) {
            out.push((p, d, backproject(&p, d, &k).unwrap()));
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn exact_planes_are_recovered(a in plane(), seed in any::<u64>()) {
        let s = samples(a, seed, 50);
        let pts: Vec<_> = s.iter().map(|t| t.2).collect();
        let fit = fit_plane(&pts, 1e-8).unwrap();
        prop_assert!((fit.a - a).norm() < 1e-6);
        for (p, d, _) in &s {
            prop_assert!((planar_depth(&fit, &k(), p).unwrap() - d).abs() < 1e-6);
        }
    }

    #[test]
    fn fit_ignores_point_order(a in plane(), seed in any::<u64>(), rot in 0usize..50) {
        let pts: Vec<_> = samples(a, seed, 50).into_iter().map(|t| t.2 * 1.01).collect();
        let mut perm = pts.clone();
        perm.rotate_left(rot);
        perm.reverse();
        let f1 = fit_plane(&pts, 1e-4).unwrap();
        let f2 = fit_plane(&perm, 1e-4).unwrap();
        prop_assert!((f1.a - f2.a).norm() <= 1e-12 * f1.a.norm().max(1.0));
    }

    #[test]
    fn loss_is_nonnegative_and_scales_with_depth(seed in any::<u64>(), s in 0.5..3.0f64) {
        let depth = noisy_depth(seed);
        let (v, _) = spp_loss(&depth, &halves(), &k(), 1e-12).unwrap();
        let (vs, _) = spp_loss(&depth.scaled(s).unwrap(), &halves(), &k(), 1e-12).unwrap();
        prop_assert!(v >= 0.0);
        prop_assert!((vs - s * v).abs() <= 1e-6 * (s * v).max(1e-9));
    }
}
