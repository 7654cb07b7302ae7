mod common;

use planepatch::keypoints::KeypointSet;
use planepatch::losses::{photometric_loss, LossWeights};
use planepatch::solver::{refine, DepthGrid, FrameBundle, Solver, SolverConfig, D_MAX, D_MIN};
use planepatch::Error;

use common::{abs_rel, default_gt_bundle, oracle_scene};

#[test]
fn ground_truth_is_nearly_stationary() {
    let o = oracle_scene();
    let cfg = SolverConfig { iterations: 100, ..SolverConfig::default() };
    let (out, state) = refine(default_gt_bundle(&o, 1.0), &cfg).unwrap();
    assert_eq!(state.trace.len(), 100);
    let e = abs_rel(&out.depth.to_depth_map(), &o.scene.gt_depth[0]);
    assert!(e < 0.02, "abs-rel {e}");
}

#[test]
fn depth_stays_within_bounds() {
    let o = oracle_scene();
    let mut bundle = default_gt_bundle(&o, 1.0);
    bundle.depth = DepthGrid::constant(192, 144, 4, 50.0).unwrap();
    let mut solver = Solver::new(bundle, SolverConfig { iterations: 20, ..SolverConfig::default() }).unwrap();
    let within = |s: &Solver| s.bundle().depth.to_depth_map().data().iter().all(|d| *d >= D_MIN * (1.0 - 1e-12) && *d <= D_MAX * (1.0 + 1e-12));
    assert!(within(&solver));
    for _ in 0..20 {
        if solver.step().is_err() {
            break;
        }
        assert!(within(&solver));
    }
}

#[test]
fn empty_keypoints_are_rejected() {
    let o = oracle_scene();
    let b = default_gt_bundle(&o, 1.0);
    let empty = KeypointSet { points: Vec::new(), margin: 4, seed: 0 };
    let r = FrameBundle::new(
        o.scene.target.clone(),
        o.scene.sources.clone(),
        o.spec.k,
        empty,
        b.regions.clone(),
        b.depth.clone(),
        b.poses.clone(),
    );
    assert!(matches!(r, Err(Error::Precondition(_))));
}

#[test]
fn unweighted_regularizers_leave_photometric_loss() {
    let o = oracle_scene();
    let full = default_gt_bundle(&o, 1.1);
    let bundle = FrameBundle::new(
        o.scene.target.clone(),
        vec![o.scene.sources[0].clone()],
        o.spec.k,
        full.keypoints.clone(),
        full.regions.clone(),
        full.depth.clone(),
        vec![full.poses[0]],
    )
    .unwrap();
    let mut cfg = SolverConfig { iterations: 1, fix_poses: true, ..SolverConfig::default() };
    cfg.loss.weights = LossWeights { lambda1: 0.0, lambda2: 0.0, ..LossWeights::default() };
    let depth = bundle.depth.to_depth_map();
    let at: Vec<f64> = bundle.keypoints.points.iter().map(|p| depth.get(p.x, p.y)).collect();
    let (direct, _) = photometric_loss(
        bundle.target(),
        bundle.sources(),
        &bundle.keypoints,
        &at,
        bundle.intrinsics(),
        &bundle.poses,
        cfg.loss.weights.alpha,
        cfg.loss.window_n,
    )
    .unwrap();
    let (_, state) = refine(bundle, &cfg).unwrap();
    assert_eq!(state.trace[0].total, direct);
    assert_eq!(state.trace[0].l_ph, direct);
}

#[test]
fn identical_runs_give_identical_traces() {
    let o = oracle_scene();
    let cfg = SolverConfig { iterations: 30, ..SolverConfig::default() };
    let (ba, a) = refine(default_gt_bundle(&o, 1.2), &cfg).unwrap();
    let (bb, b) = refine(default_gt_bundle(&o, 1.2), &cfg).unwrap();
    assert_eq!(a.trace_jsonl(), b.trace_jsonl());
    assert_eq!(ba.depth.log_depth, bb.depth.log_depth);
    assert_eq!(ba.poses, bb.poses);
}

#[test]
fn loss_mostly_decreases_over_windows() {
    let o = oracle_scene();
    let cfg = SolverConfig { fix_poses: true, ..SolverConfig::default() };
    let (_, state) = refine(default_gt_bundle(&o, 1.2), &cfg).unwrap();
    let t: Vec<f64> = state.trace.iter().map(|b| b.total).collect();
    let windows = t.len() - 50;
    let good = (0..windows).filter(|&i| t[i + 50] <= t[i]).count();
    assert!(good as f64 >= 0.9 * windows as f64, "{good}/{windows}");
}

#[test]
fn invalid_config_is_rejected() {
    let o = oracle_scene();
    let cfg = SolverConfig { lr_depth: 0.0, ..SolverConfig::default() };
    assert!(Solver::new(default_gt_bundle(&o, 1.0), cfg).is_err());
}
