//! Command-line entry point: scene synthesis, keypoint and superpixel
//! extraction, refinement, gradient checking and evaluation.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::{PoseInit, RegionSource};

#[derive(Parser)]
#[command(name = "planepatch", version, about = "Direct depth and pose refinement with patch photometric and planar losses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a textured piecewise-planar scene with exact ground truth.
    Synth(SynthArgs),
    /// Select keypoints on an image.
    Keypoints(KeypointsArgs),
    /// Segment an image into superpixels and list the large regions.
    Segment(SegmentArgs),
    /// Optimize target depth and source poses.
    Refine(RefineArgs),
    /// Compare the analytic gradient with finite differences.
    Gradcheck(GradcheckArgs),
    /// Depth, normal and pose error metrics.
    Eval(EvalArgs),
}

fn parse_frames(s: &str) -> Result<usize, String> {
    match s {
        "3" => Ok(3),
        "5" => Ok(5),
        _ => Err(format!("frames must be 3 or 5, got {s}")),
    }
}

/// Flags shared by every command.
#[derive(Args, Serialize)]
struct Common {
    /// Resolved-config JSON from an earlier run; explicit flags override it.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SynthArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long, value_parser = parse_frames)]
    #[serde(skip_serializing_if = "Option::is_none")]
    frames: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    width: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    height: Option<usize>,
    /// Scene description JSON to render instead of the default scene.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    spec: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct KeypointsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    image: Option<PathBuf>,
    /// Number of keypoints to select.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    keypoints: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    window_n: Option<usize>,
}

#[derive(Args, Serialize)]
struct SegmentArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    image: Option<PathBuf>,
    /// Merge threshold scale, in intensity units of [0, 1] images.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    min_size: Option<usize>,
    /// Regions must be strictly larger than this many pixels.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    min_area: Option<usize>,
}

/// Loss weights and window shared by refine and gradcheck.
#[derive(Args, Serialize)]
struct LossArgs {
    #[arg(long, value_parser = parse_frames)]
    #[serde(skip_serializing_if = "Option::is_none")]
    frames: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda1: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda2: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    window_n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    keypoints: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    min_area: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    grid_scale: Option<usize>,
}

#[derive(Args, Serialize)]
struct RefineArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    loss: LossArgs,
    /// Scene directory written by `synth`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    scene: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    target: Option<PathBuf>,
    /// Source image; repeat once per source frame.
    #[arg(long = "source")]
    #[serde(rename = "sources", skip_serializing_if = "Vec::is_empty")]
    sources: Vec<PathBuf>,
    /// Intrinsics JSON `{"fx", "fy", "cx", "cy"}`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    intrinsics: Option<PathBuf>,
    /// PFM depth map to start from.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    init_depth: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    init_depth_scale: Option<f64>,
    /// Label image used when `--regions labels`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<PathBuf>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    regions: Option<RegionSource>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    init_poses: Option<PoseInit>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    fix_poses: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    min_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    iters: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lr_depth: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lr_pose: Option<f64>,
}

#[derive(Args, Serialize)]
struct GradcheckArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    loss: LossArgs,
    /// Scene directory written by `synth`; the default scene otherwise.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    scene: Option<PathBuf>,
    /// Number of random log-depth coordinates to check.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    depth_scale: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    depth_step: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    twist_step: Option<f64>,
    /// Largest accepted relative error.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    width: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    height: Option<usize>,
}

#[derive(Args, Serialize)]
struct EvalArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    /// Predicted depth (PFM).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pred: Option<PathBuf>,
    /// Ground-truth depth (PFM); non-positive values are ignored.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    gt: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    median_scale: Option<bool>,
    /// Intrinsics JSON; enables normal metrics.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    intrinsics: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    normal_window: Option<usize>,
    /// JSON list of predicted poses.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pred_poses: Option<PathBuf>,
    /// JSON list of ground-truth poses.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    gt_poses: Option<PathBuf>,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    use config::resolve;
    match cli.command {
        Command::Synth(a) => commands::synth(resolve("synth", a.common.config.as_deref(), &a)?),
        Command::Keypoints(a) => {
            commands::keypoints(resolve("keypoints", a.common.config.as_deref(), &a)?)
        }
        Command::Segment(a) => commands::segment(resolve("segment", a.common.config.as_deref(), &a)?),
        Command::Refine(a) => commands::refine(resolve("refine", a.common.config.as_deref(), &a)?),
        Command::Gradcheck(a) => {
            commands::gradcheck(resolve("gradcheck", a.common.config.as_deref(), &a)?)
        }
        Command::Eval(a) => commands::eval(resolve("eval", a.common.config.as_deref(), &a)?),
    }
}

/// The error chain joined by `: `, skipping causes already spelled out by
/// the message before them.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if out.ends_with(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let informational = !e.use_stderr();
            let _ = e.print();
            return if informational { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            if commands::is_numeric_failure(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
