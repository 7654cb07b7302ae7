//! Direct minimization of the total loss over a log-depth grid and the
//! source-frame poses.
//!
//! Each iteration evaluates the loss, then takes one Adam step. Depth-grid
//! values are updated additively and clamped to `[d_min, d_max]`; poses are
//! updated by left-composing the exponential of the twist step.

mod grid;

use nalgebra::Vector6;
use serde::{Deserialize, Serialize};

pub use grid::DepthGrid;

use crate::error::{Error, Result};
use crate::geometry::{left_update, Image, Intrinsics, PoseSE3, Twist};
use crate::keypoints::KeypointSet;
use crate::losses::{evaluate, EdgeWeights, Evaluation, LossBreakdown, LossConfig};
use crate::superpixels::Superpixel;

pub const D_MIN: f64 = 0.1;
pub const D_MAX: f64 = 10.0;
pub const DEFAULT_INIT_DEPTH: f64 = 2.0;
pub const DEFAULT_GRID_SCALE: usize = 4;

/// Target frame, source frames and the variables being optimized.
#[derive(Clone, Debug)]
pub struct FrameBundle {
    pub(crate) target: Image,
    pub(crate) sources: Vec<Image>,
    pub(crate) k: Intrinsics,
    pub(crate) edge_weights: EdgeWeights,
    pub keypoints: KeypointSet,
    pub regions: Vec<Superpixel>,
    pub depth: DepthGrid,
    /// Target-to-source motion per source frame.
    pub poses: Vec<PoseSE3>,
}

impl FrameBundle {
    pub fn new(
        target: Image,
        sources: Vec<Image>,
        k: Intrinsics,
        keypoints: KeypointSet,
        regions: Vec<Superpixel>,
        depth: DepthGrid,
        poses: Vec<PoseSE3>,
    ) -> Result<Self> {
        let edge_weights = EdgeWeights::new(&target);
        let b = Self {
            target,
            sources,
            k,
            edge_weights,
            keypoints,
            regions,
            depth,
            poses,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn target(&self) -> &Image {
        &self.target
    }

    pub fn sources(&self) -> &[Image] {
        &self.sources
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.k
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.target.width(), self.target.height());
        if self.sources.is_empty() {
            return Err(Error::precondition("bundle needs at least one source frame"));
        }
        if self.poses.len() != self.sources.len() {
            return Err(Error::precondition("one pose per source frame is required"));
        }
        for s in &self.sources {
            if (s.width(), s.height(), s.channels())
                != (w, h, self.target.channels())
            {
                return Err(Error::precondition("source and target images differ in shape"));
            }
        }
        if (self.depth.image_width, self.depth.image_height) != (w, h) {
            return Err(Error::precondition("depth grid does not match the image size"));
        }
        self.k.validate(w, h)?;
        if self.keypoints.is_empty() {
            return Err(Error::precondition("keypoint set is empty"));
        }
        for r in &self.regions {
            if r.pixels.iter().any(|&(x, y)| x >= w || y >= h) {
                return Err(Error::precondition(format!("region {} leaves the image", r.id)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub iterations: usize,
    pub lr_depth: f64,
    pub lr_pose: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub loss: LossConfig,
    pub grid_scale: usize,
    pub seed: u64,
    /// Keep source poses at their initial values.
    pub fix_poses: bool,
    pub d_min: f64,
    pub d_max: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            lr_depth: 1e-2,
            lr_pose: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            loss: LossConfig::default(),
            grid_scale: DEFAULT_GRID_SCALE,
            seed: 0,
            fix_poses: false,
            d_min: D_MIN,
            d_max: D_MAX,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.iterations >= 1
            && self.lr_depth > 0.0
            && self.lr_pose > 0.0
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.eps_adam > 0.0
            && self.grid_scale >= 1
            && self.d_min > 0.0
            && self.d_max > self.d_min
            && self.loss.window_n >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::precondition(format!("invalid solver config {self:?}")))
        }
    }
}

/// Optimizer progress: loss trace and Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverState {
    pub iteration: usize,
    pub trace: Vec<LossBreakdown>,
    pub depth_m: Vec<f64>,
    pub depth_v: Vec<f64>,
    pub pose_m: Vec<Vector6<f64>>,
    pub pose_v: Vec<Vector6<f64>>,
}

impl SolverState {
    fn new(grid_len: usize, sources: usize) -> Self {
        Self {
            iteration: 0,
            trace: Vec::new(),
            depth_m: vec![0.0; grid_len],
            depth_v: vec![0.0; grid_len],
            pose_m: vec![Vector6::zeros(); sources],
            pose_v: vec![Vector6::zeros(); sources],
        }
    }

    /// One JSON object per line, one line per iteration.
    pub fn trace_jsonl(&self) -> String {
        let mut out = String::new();
        for b in &self.trace {
            out.push_str(&serde_json::to_string(b).expect("breakdown serializes"));
            out.push('\n');
        }
        out
    }
}

/// Stepwise optimizer over a bundle.
pub struct Solver {
    bundle: FrameBundle,
    cfg: SolverConfig,
    state: SolverState,
}

impl Solver {
    pub fn new(bundle: FrameBundle, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        bundle.validate()?;
        let mut bundle = bundle;
        bundle.depth.clamp(cfg.d_min, cfg.d_max);
        let state = SolverState::new(bundle.depth.len(), bundle.sources.len());
        Ok(Self { bundle, cfg, state })
    }

    pub fn bundle(&self) -> &FrameBundle {
        &self.bundle
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn into_parts(self) -> (FrameBundle, SolverState) {
        (self.bundle, self.state)
    }

    /// Evaluates the loss at the current variables and applies one update.
    pub fn step(&mut self) -> Result<&LossBreakdown> {
        let it = self.state.iteration;
        let eval: Evaluation = match evaluate(&self.bundle, &self.cfg.loss, None) {
            Ok(e) => e,
            Err(Error::NoOverlap) => return Err(Error::NoOverlapAt { iteration: it }),
            Err(e) => return Err(e),
        };
        let finite = eval.breakdown.total.is_finite()
            && eval.gradients.d_logdepth.iter().all(|g| g.is_finite())
            && eval.gradients.d_twist.iter().all(|g| g.iter().all(|c| c.is_finite()));
        if !finite {
            return Err(Error::NonFinite { iteration: it });
        }

        let cfg = &self.cfg;
        let t = (it + 1) as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        let st = &mut self.state;

        for (i, g) in eval.gradients.d_logdepth.iter().enumerate() {
            st.depth_m[i] = cfg.beta1 * st.depth_m[i] + (1.0 - cfg.beta1) * g;
            st.depth_v[i] = cfg.beta2 * st.depth_v[i] + (1.0 - cfg.beta2) * g * g;
            let step = cfg.lr_depth * (st.depth_m[i] / c1) / ((st.depth_v[i] / c2).sqrt() + cfg.eps_adam);
            self.bundle.depth.log_depth[i] -= step;
        }
        self.bundle.depth.clamp(cfg.d_min, cfg.d_max);

        if !cfg.fix_poses {
            for (s, g) in eval.gradients.d_twist.iter().enumerate() {
                st.pose_m[s] = st.pose_m[s] * cfg.beta1 + g * (1.0 - cfg.beta1);
                st.pose_v[s] = st.pose_v[s] * cfg.beta2 + g.component_mul(g) * (1.0 - cfg.beta2);
                let step = Vector6::from_fn(|r, _| {
                    -cfg.lr_pose * (st.pose_m[s][r] / c1) / ((st.pose_v[s][r] / c2).sqrt() + cfg.eps_adam)
                });
                self.bundle.poses[s] = left_update(&self.bundle.poses[s], &Twist::from_vector(&step));
            }
        }

        st.iteration += 1;
        st.trace.push(eval.breakdown);
        Ok(st.trace.last().expect("just pushed"))
    }
}

/// Runs `cfg.iterations` optimizer steps.
pub fn refine(bundle: FrameBundle, cfg: &SolverConfig) -> Result<(FrameBundle, SolverState)> {
    let mut solver = Solver::new(bundle, *cfg)?;
    for _ in 0..cfg.iterations {
        solver.step()?;
    }
    Ok(solver.into_parts())
}
