//! Per-command run configurations.
//!
//! A configuration is resolved from three layers: built-in defaults, an
//! optional `--config` JSON file, then flags given on the command line. The
//! resolved value is written next to the outputs and can be fed back through
//! `--config` to repeat the run.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use planepatch::losses::{DEFAULT_ALPHA, DEFAULT_LAMBDA1, DEFAULT_LAMBDA2, DEFAULT_WINDOW};
use planepatch::superpixels::{DEFAULT_K, DEFAULT_MIN_AREA, DEFAULT_MIN_SIZE, DEFAULT_SIGMA};

pub const RESOLVED_CONFIG: &str = "resolved_config.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Scene description to render instead of the default three-plane scene.
    pub spec: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            frames: 3,
            width: 192,
            height: 144,
            seed: 0,
            spec: None,
            out: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeypointsConfig {
    pub image: Option<PathBuf>,
    pub keypoints: usize,
    pub window_n: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for KeypointsConfig {
    fn default() -> Self {
        Self {
            image: None,
            keypoints: planepatch::keypoints::DEFAULT_COUNT,
            window_n: DEFAULT_WINDOW,
            seed: 0,
            out: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentConfig {
    pub image: Option<PathBuf>,
    pub k: f64,
    pub sigma: f64,
    pub min_size: usize,
    pub min_area: usize,
    /// Seeds the overlay colors.
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            image: None,
            k: DEFAULT_K,
            sigma: DEFAULT_SIGMA,
            min_size: DEFAULT_MIN_SIZE,
            min_area: DEFAULT_MIN_AREA,
            seed: 0,
            out: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum RegionSource {
    /// Segment the target image.
    Segment,
    /// Use a label image (the ground-truth plane labels of a scene directory).
    Labels,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PoseInit {
    Identity,
    /// Ground-truth poses of a scene directory.
    Gt,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    /// Directory written by `synth`.
    pub scene: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub sources: Vec<PathBuf>,
    pub intrinsics: Option<PathBuf>,
    /// PFM depth map to start from, multiplied by `init_depth_scale`.
    pub init_depth: Option<PathBuf>,
    pub init_depth_scale: f64,
    pub labels: Option<PathBuf>,
    pub regions: RegionSource,
    pub init_poses: PoseInit,
    pub fix_poses: bool,
    pub frames: usize,
    pub alpha: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub window_n: usize,
    pub keypoints: usize,
    pub k: f64,
    pub sigma: f64,
    pub min_size: usize,
    pub min_area: usize,
    pub iters: usize,
    pub grid_scale: usize,
    pub lr_depth: f64,
    pub lr_pose: f64,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for RefineConfig {
    fn default() -> Self {
        let solver = planepatch::solver::SolverConfig::default();
        Self {
            scene: None,
            target: None,
            sources: Vec::new(),
            intrinsics: None,
            init_depth: None,
            init_depth_scale: 1.0,
            labels: None,
            regions: RegionSource::Segment,
            init_poses: PoseInit::Identity,
            fix_poses: false,
            frames: 3,
            alpha: DEFAULT_ALPHA,
            lambda1: DEFAULT_LAMBDA1,
            lambda2: DEFAULT_LAMBDA2,
            window_n: DEFAULT_WINDOW,
            keypoints: planepatch::keypoints::DEFAULT_COUNT,
            k: DEFAULT_K,
            sigma: DEFAULT_SIGMA,
            min_size: DEFAULT_MIN_SIZE,
            min_area: DEFAULT_MIN_AREA,
            iters: solver.iterations,
            grid_scale: solver.grid_scale,
            lr_depth: solver.lr_depth,
            lr_pose: solver.lr_pose,
            seed: 0,
            out: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    /// Directory written by `synth`; the default scene is rendered when unset.
    pub scene: Option<PathBuf>,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub samples: usize,
    /// Ground-truth depth is multiplied by this before checking.
    pub depth_scale: f64,
    pub depth_step: f64,
    pub twist_step: f64,
    pub threshold: f64,
    pub alpha: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub window_n: usize,
    pub keypoints: usize,
    pub min_area: usize,
    pub grid_scale: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            scene: None,
            frames: 3,
            width: 192,
            height: 144,
            samples: 50,
            depth_scale: 1.1,
            depth_step: 1e-4,
            twist_step: 1e-5,
            threshold: 1e-4,
            alpha: DEFAULT_ALPHA,
            lambda1: DEFAULT_LAMBDA1,
            lambda2: DEFAULT_LAMBDA2,
            window_n: DEFAULT_WINDOW,
            keypoints: planepatch::keypoints::DEFAULT_COUNT,
            min_area: DEFAULT_MIN_AREA,
            grid_scale: planepatch::solver::DEFAULT_GRID_SCALE,
            seed: 1,
            out: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub pred: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub median_scale: bool,
    /// Enables normal metrics.
    pub intrinsics: Option<PathBuf>,
    pub normal_window: usize,
    pub pred_poses: Option<PathBuf>,
    pub gt_poses: Option<PathBuf>,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            pred: None,
            gt: None,
            median_scale: true,
            intrinsics: None,
            normal_window: 5,
            pred_poses: None,
            gt_poses: None,
            seed: 0,
            out: None,
        }
    }
}

/// Merges `overrides` into `base` key by key.
fn merge(base: &mut Map<String, Value>, overrides: Value) {
    if let Value::Object(o) = overrides {
        for (k, v) in o {
            base.insert(k, v);
        }
    }
}

/// Defaults, then the `--config` file, then explicit flags.
pub fn resolve<T>(command: &str, file: Option<&Path>, flags: &impl Serialize) -> Result<T>
where
    T: DeserializeOwned + Serialize + Default,
{
    let mut layered = match serde_json::to_value(T::default())? {
        Value::Object(m) => m,
        _ => unreachable!("configs serialize as objects"),
    };
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut v: Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let Some(obj) = v.as_object_mut() else {
            bail!("{}: config must be a JSON object", path.display());
        };
        if let Some(c) = obj.remove("command") {
            if c != command {
                bail!("{}: config is for command {c}, not {command:?}", path.display());
            }
        }
        // Unknown keys are caught when deserializing the merged value.
        merge(&mut layered, v);
    }
    merge(&mut layered, serde_json::to_value(flags)?);
    serde_json::from_value(Value::Object(layered)).with_context(|| match file {
        Some(p) => format!("invalid configuration in {}", p.display()),
        None => "invalid configuration".to_string(),
    })
}

/// The resolved configuration as written next to a run's outputs.
pub fn resolved_json(command: &str, cfg: &impl Serialize) -> Result<Value> {
    let mut v = serde_json::to_value(cfg)?;
    let obj = v.as_object_mut().expect("configs serialize as objects");
    let mut out = Map::new();
    out.insert("command".into(), Value::String(command.into()));
    out.append(obj);
    Ok(Value::Object(out))
}
