use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;

use planepatch::eval::{depth_metrics, normal_metrics, normals_from_depth, pose_metrics, MetricsReport, PoseMetrics};
use planepatch::geometry::{DepthMap, Image, Intrinsics, PoseSE3};
use planepatch::io;
use planepatch::keypoints::{gradient_map, select_keypoints_with, SelectionParams};
use planepatch::losses::{evaluate, gradient_check, LossConfig, LossWeights};
use planepatch::pipeline::{build_bundle, BundleParams, SegmentationParams};
use planepatch::planes::SppConfig;
use planepatch::solver::{Solver, SolverConfig, DEFAULT_INIT_DEPTH, D_MAX, D_MIN};
use planepatch::superpixels::{felzenszwalb_segment, large_regions, LabelMap};
use planepatch::synth::{make_scene, SceneSpec};

use crate::config::{
    resolved_json, EvalConfig, GradcheckConfig, KeypointsConfig, PoseInit, RefineConfig, RegionSource, SegmentConfig,
    SynthConfig, RESOLVED_CONFIG,
};

/// A run that completed but whose numerical result is unacceptable.
#[derive(Debug)]
pub struct NumericFailure(pub String);

impl fmt::Display for NumericFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericFailure {}

pub fn is_numeric_failure(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<NumericFailure>() || c.downcast_ref::<planepatch::Error>().is_some_and(|e| e.is_numeric())
    })
}

fn out_dir(out: &Option<PathBuf>) -> Result<PathBuf> {
    let Some(dir) = out else {
        bail!("--out is required");
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir.clone())
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref().with_context(|| format!("--{flag} is required"))
}

fn check_frames(frames: usize) -> Result<()> {
    ensure!(frames == 3 || frames == 5, "frames must be 3 or 5, got {frames}");
    Ok(())
}

fn write_resolved(dir: &Path, command: &str, cfg: &impl Serialize) -> Result<()> {
    io::write_json(&dir.join(RESOLVED_CONFIG), &resolved_json(command, cfg)?)?;
    Ok(())
}

fn source_name(i: usize) -> String {
    format!("source_{i}.png")
}

pub fn synth(cfg: SynthConfig) -> Result<()> {
    check_frames(cfg.frames)?;
    let dir = out_dir(&cfg.out)?;
    let spec = match &cfg.spec {
        Some(p) => io::read_json::<SceneSpec>(p)?,
        None => SceneSpec::three_plane(cfg.width, cfg.height, cfg.frames - 1, cfg.seed)?,
    };
    let scene = make_scene(&spec)?;
    io::write_json(&dir.join("scene.json"), &spec)?;
    io::write_json(&dir.join("intrinsics.json"), &spec.k)?;
    io::save_png16(&scene.target, &dir.join("target.png"))?;
    for (i, s) in scene.sources.iter().enumerate() {
        io::save_png16(s, &dir.join(source_name(i)))?;
    }
    io::write_pfm(&scene.gt_depth[0], &dir.join("gt_depth.pfm"))?;
    for (i, d) in scene.gt_depth[1..].iter().enumerate() {
        io::write_pfm(d, &dir.join(format!("gt_depth_source_{i}.pfm")))?;
    }
    io::save_png(&io::depth_preview(&scene.gt_depth[0], D_MIN, D_MAX), &dir.join("gt_depth.png"))?;
    io::write_json(&dir.join("gt_poses.json"), &scene.gt_poses)?;
    io::save_labels_png(&scene.gt_plane_labels, &dir.join("gt_labels.png"))?;
    write_resolved(&dir, "synth", &cfg)?;
    println!(
        "rendered {}x{} scene with {} planes and {} source views into {}",
        spec.width,
        spec.height,
        spec.planes.len(),
        scene.sources.len(),
        dir.display()
    );
    Ok(())
}

pub fn keypoints(cfg: KeypointsConfig) -> Result<()> {
    let image = io::load_image(required(&cfg.image, "image")?)?;
    let dir = out_dir(&cfg.out)?;
    let params = SelectionParams::for_window(cfg.window_n, cfg.keypoints, cfg.seed);
    let kps = select_keypoints_with(&gradient_map(&image)?, &params)?;
    io::write_text(&dir.join("keypoints.csv"), &kps.to_csv())?;
    io::save_png(&io::keypoint_overlay(&image, &kps)?, &dir.join("keypoints_overlay.png"))?;
    write_resolved(&dir, "keypoints", &cfg)?;
    println!(
        "{} keypoints ({} from gradients, {} random fill)",
        kps.len(),
        kps.gradient_count(),
        kps.len() - kps.gradient_count()
    );
    Ok(())
}

#[derive(Serialize)]
struct RegionSummary {
    id: u32,
    area: usize,
}

#[derive(Serialize)]
struct SegmentSummary {
    segments: usize,
    min_area: usize,
    regions: Vec<RegionSummary>,
}

pub fn segment(cfg: SegmentConfig) -> Result<()> {
    let image = io::load_image(required(&cfg.image, "image")?)?;
    let dir = out_dir(&cfg.out)?;
    let labels = felzenszwalb_segment(&image, cfg.k, cfg.sigma, cfg.min_size)?;
    let regions = large_regions(&labels, cfg.min_area);
    io::save_labels_png(&labels, &dir.join("labels.png"))?;
    io::save_png(&io::label_overlay(&image, &labels, cfg.seed)?, &dir.join("labels_overlay.png"))?;
    let summary = SegmentSummary {
        segments: labels.segment_count(),
        min_area: cfg.min_area,
        regions: regions
            .iter()
            .map(|r| RegionSummary { id: r.id, area: r.area })
            .collect(),
    };
    io::write_json(&dir.join("regions.json"), &summary)?;
    write_resolved(&dir, "segment", &cfg)?;
    println!("{} segments, {} larger than {} pixels", summary.segments, summary.regions.len(), cfg.min_area);
    Ok(())
}

/// Scene images and optional ground truth, from a `synth` directory or
/// from individual files.
struct Inputs {
    target: Image,
    sources: Vec<Image>,
    k: Intrinsics,
    gt_depth: Option<DepthMap>,
    gt_poses: Option<Vec<PoseSE3>>,
    labels: Option<PathBuf>,
}

fn load_scene_dir(dir: &Path, frames: usize) -> Result<Inputs> {
    let sources = (0..frames - 1)
        .map(|i| io::load_image(&dir.join(source_name(i))))
        .collect::<planepatch::Result<Vec<_>>>()?;
    let mut gt_poses: Vec<PoseSE3> = io::read_json(&dir.join("gt_poses.json"))?;
    ensure!(gt_poses.len() >= frames - 1, "{}: too few ground-truth poses", dir.display());
    gt_poses.truncate(frames - 1);
    Ok(Inputs {
        target: io::load_image(&dir.join("target.png"))?,
        sources,
        k: io::read_json(&dir.join("intrinsics.json"))?,
        gt_depth: Some(io::read_pfm(&dir.join("gt_depth.pfm"))?),
        gt_poses: Some(gt_poses),
        labels: Some(dir.join("gt_labels.png")),
    })
}

fn load_inputs(cfg: &RefineConfig) -> Result<Inputs> {
    if let Some(scene) = &cfg.scene {
        ensure!(
            cfg.target.is_none() && cfg.sources.is_empty() && cfg.intrinsics.is_none(),
            "give either --scene or --target/--source/--intrinsics, not both"
        );
        let mut inputs = load_scene_dir(scene, cfg.frames)?;
        if cfg.labels.is_some() {
            inputs.labels = cfg.labels.clone();
        }
        return Ok(inputs);
    }
    let target = io::load_image(required(&cfg.target, "target")?)?;
    ensure!(
        cfg.sources.len() == cfg.frames - 1,
        "{} frames need {} source images, got {}",
        cfg.frames,
        cfg.frames - 1,
        cfg.sources.len()
    );
    let sources = cfg
        .sources
        .iter()
        .map(|p| io::load_image(p))
        .collect::<planepatch::Result<Vec<_>>>()?;
    Ok(Inputs {
        target,
        sources,
        k: io::read_json(required(&cfg.intrinsics, "intrinsics")?)?,
        gt_depth: None,
        gt_poses: None,
        labels: cfg.labels.clone(),
    })
}

fn loss_config(alpha: f64, lambda1: f64, lambda2: f64, window_n: usize) -> LossConfig {
    LossConfig {
        weights: LossWeights { alpha, lambda1, lambda2 },
        window_n,
        spp: SppConfig::default(),
    }
}

#[derive(Serialize)]
struct RefineMetrics {
    depth: planepatch::eval::DepthMetrics,
    depth_unscaled: planepatch::eval::DepthMetrics,
    poses: Vec<Option<PoseMetrics>>,
}

pub fn refine(cfg: RefineConfig) -> Result<()> {
    check_frames(cfg.frames)?;
    let inputs = load_inputs(&cfg)?;
    let dir = out_dir(&cfg.out)?;
    write_resolved(&dir, "refine", &cfg)?;

    ensure!(cfg.init_depth_scale > 0.0, "init-depth-scale must be positive");
    let init = match &cfg.init_depth {
        Some(p) => io::read_pfm(p)?.scaled(cfg.init_depth_scale)?,
        None => DepthMap::from_fn(inputs.target.width(), inputs.target.height(), |_, _| {
            DEFAULT_INIT_DEPTH * cfg.init_depth_scale
        })?,
    };
    let labels: Option<LabelMap> = match cfg.regions {
        RegionSource::Segment => None,
        RegionSource::Labels => {
            let p = inputs
                .labels
                .as_deref()
                .context("--regions labels needs --labels or a scene directory")?;
            Some(io::load_labels_png(p)?)
        }
    };
    let poses = match cfg.init_poses {
        PoseInit::Identity => None,
        PoseInit::Gt => Some(inputs.gt_poses.clone().context("--init-poses gt needs a scene directory")?),
    };
    let params = BundleParams {
        keypoints: cfg.keypoints,
        window_n: cfg.window_n,
        grid_scale: cfg.grid_scale,
        init_depth: DEFAULT_INIT_DEPTH,
        segmentation: SegmentationParams {
            k: cfg.k,
            sigma: cfg.sigma,
            min_size: cfg.min_size,
            min_area: cfg.min_area,
        },
        seed: cfg.seed,
    };
    let bundle = build_bundle(
        inputs.target.clone(),
        inputs.sources.clone(),
        inputs.k,
        &params,
        labels.as_ref(),
        Some(&init),
        poses,
    )?;
    let solver_cfg = SolverConfig {
        iterations: cfg.iters,
        lr_depth: cfg.lr_depth,
        lr_pose: cfg.lr_pose,
        loss: loss_config(cfg.alpha, cfg.lambda1, cfg.lambda2, cfg.window_n),
        grid_scale: cfg.grid_scale,
        seed: cfg.seed,
        fix_poses: cfg.fix_poses,
        ..SolverConfig::default()
    };
    let region_count = bundle.regions.len();
    let mut solver = Solver::new(bundle, solver_cfg)?;
    let trace_path = dir.join("trace.jsonl");
    for _ in 0..cfg.iters {
        if let Err(e) = solver.step() {
            io::write_text(&trace_path, &solver.state().trace_jsonl())?;
            return Err(e).with_context(|| {
                format!(
                    "refinement stopped; trace of {} completed iterations in {}",
                    solver.state().iteration,
                    trace_path.display()
                )
            });
        }
    }
    io::write_text(&trace_path, &solver.state().trace_jsonl())?;
    let (bundle, state) = solver.into_parts();
    let depth = bundle.depth.to_depth_map();
    io::write_pfm(&depth, &dir.join("depth.pfm"))?;
    io::save_png(&io::depth_preview(&depth, D_MIN, D_MAX), &dir.join("depth.png"))?;
    io::write_json(&dir.join("poses.json"), &bundle.poses)?;
    let final_eval = evaluate(&bundle, &solver_cfg.loss, None)?;
    io::write_json(&dir.join("plane_fits.json"), &final_eval.plane_fits)?;

    let first = state.trace.first().expect("at least one iteration");
    println!(
        "{} iterations, {} regions: total loss {:.6} -> {:.6} (photometric {:.6} -> {:.6})",
        state.iteration, region_count, first.total, final_eval.breakdown.total, first.l_ph, final_eval.breakdown.l_ph
    );
    if let Some(gt) = &inputs.gt_depth {
        let poses = match &inputs.gt_poses {
            Some(gtp) => bundle
                .poses
                .iter()
                .zip(gtp)
                .map(|(p, g)| pose_metrics(p, g).ok())
                .collect(),
            None => Vec::new(),
        };
        let m = RefineMetrics {
            depth: depth_metrics(&depth, gt, true)?,
            depth_unscaled: depth_metrics(&depth, gt, false)?,
            poses,
        };
        println!("abs-rel vs ground truth: {:.4} (median-scaled {:.4})", m.depth_unscaled.rel, m.depth.rel);
        io::write_json(&dir.join("metrics.json"), &m)?;
    }
    Ok(())
}

pub fn gradcheck(cfg: GradcheckConfig) -> Result<()> {
    check_frames(cfg.frames)?;
    let dir = out_dir(&cfg.out)?;
    write_resolved(&dir, "gradcheck", &cfg)?;
    let (inputs, labels) = match &cfg.scene {
        Some(scene) => {
            let inputs = load_scene_dir(scene, cfg.frames)?;
            let labels = io::load_labels_png(inputs.labels.as_deref().expect("scene directories have labels"))?;
            (inputs, labels)
        }
        None => {
            let spec = SceneSpec::three_plane(cfg.width, cfg.height, cfg.frames - 1, cfg.seed)?;
            let s = make_scene(&spec)?;
            let inputs = Inputs {
                target: s.target,
                sources: s.sources,
                k: spec.k,
                gt_depth: Some(s.gt_depth[0].clone()),
                gt_poses: Some(s.gt_poses),
                labels: None,
            };
            (inputs, s.gt_plane_labels)
        }
    };
    let gt = inputs.gt_depth.as_ref().expect("scenes carry ground truth");
    let init = gt.scaled(cfg.depth_scale)?;
    let params = BundleParams {
        keypoints: cfg.keypoints,
        window_n: cfg.window_n,
        grid_scale: cfg.grid_scale,
        segmentation: SegmentationParams {
            min_area: cfg.min_area,
            ..SegmentationParams::default()
        },
        seed: cfg.seed,
        ..BundleParams::default()
    };
    let bundle = build_bundle(
        inputs.target,
        inputs.sources,
        inputs.k,
        &params,
        Some(&labels),
        Some(&init),
        inputs.gt_poses,
    )?;
    let loss = loss_config(cfg.alpha, cfg.lambda1, cfg.lambda2, cfg.window_n);
    let report = gradient_check(&bundle, &loss, cfg.samples, cfg.seed, cfg.depth_step, cfg.twist_step)?;
    let passed = report.max_rel_error < cfg.threshold;

    #[derive(Serialize)]
    struct Output<'a> {
        max_rel_error: f64,
        threshold: f64,
        passed: bool,
        report: &'a planepatch::losses::GradCheckReport,
    }
    io::write_json(
        &dir.join("gradcheck.json"),
        &Output {
            max_rel_error: report.max_rel_error,
            threshold: cfg.threshold,
            passed,
            report: &report,
        },
    )?;
    println!(
        "checked {} coordinates: max relative error {:.3e} (threshold {:.0e})",
        report.entries.len(),
        report.max_rel_error,
        cfg.threshold
    );
    if !passed {
        return Err(NumericFailure(format!(
            "gradient check failed: max relative error {:.3e} >= {:.0e}",
            report.max_rel_error, cfg.threshold
        ))
        .into());
    }
    Ok(())
}

pub fn eval(cfg: EvalConfig) -> Result<()> {
    let pred = io::read_pfm(required(&cfg.pred, "pred")?)?;
    let gt = io::read_pfm(required(&cfg.gt, "gt")?)?;
    let dir = out_dir(&cfg.out)?;
    let mut report = MetricsReport {
        depth: Some(depth_metrics(&pred, &gt, cfg.median_scale)?),
        ..Default::default()
    };
    if let Some(p) = &cfg.intrinsics {
        let k: Intrinsics = io::read_json(p)?;
        let np = normals_from_depth(&pred, &k, cfg.normal_window)?;
        let ng = normals_from_depth(&gt, &k, cfg.normal_window)?;
        report.normals = Some(normal_metrics(&np, &ng)?);
    }
    match (&cfg.pred_poses, &cfg.gt_poses) {
        (Some(pp), Some(gp)) => {
            let pred_poses: Vec<PoseSE3> = io::read_json(pp)?;
            let gt_poses: Vec<PoseSE3> = io::read_json(gp)?;
            ensure!(
                !pred_poses.is_empty() && pred_poses.len() == gt_poses.len(),
                "pose lists must be non-empty and of equal length"
            );
            let all = pred_poses
                .iter()
                .zip(&gt_poses)
                .map(|(p, g)| pose_metrics(p, g))
                .collect::<planepatch::Result<Vec<_>>>()?;
            let n = all.len() as f64;
            report.pose = Some(PoseMetrics {
                rot_deg: all.iter().map(|m| m.rot_deg).sum::<f64>() / n,
                tr_angle_deg: all.iter().map(|m| m.tr_angle_deg).sum::<f64>() / n,
                tr_cm: all.iter().map(|m| m.tr_cm).sum::<f64>() / n,
            });
        }
        (None, None) => {}
        _ => bail!("--pred-poses and --gt-poses must be given together"),
    }
    io::write_json(&dir.join("metrics.json"), &report)?;
    let table = report.table();
    io::write_text(&dir.join("metrics.txt"), &table)?;
    write_resolved(&dir, "eval", &cfg)?;
    print!("{table}");
    Ok(())
}
