//! Photometric, smoothness and planar losses, combined with analytic gradients.

mod gradcheck;
mod photometric;
mod smoothness;
mod ssim;

use nalgebra::Vector6;
use serde::{Deserialize, Serialize};

pub use gradcheck::{gradient_check, GradCheckEntry, GradCheckReport, GradCoordinate};
pub use photometric::{
    photometric_evaluate, photometric_loss, KeypointBranch, PatchBranch, PhotometricEvaluation,
    PointDetail, MIN_VALID_SAMPLES,
};
pub use smoothness::{
    smoothness_evaluate, smoothness_loss, EdgeWeights, SmoothnessBranches, SmoothnessEvaluation,
};
pub use ssim::{ssim_patch, PatchSample, C1, C2};

use crate::error::Result;
use crate::planes::{spp_evaluate, RegionFit, SppBranches, SppConfig};
use crate::solver::FrameBundle;

pub const DEFAULT_ALPHA: f64 = 0.85;
pub const DEFAULT_LAMBDA1: f64 = 0.001;
pub const DEFAULT_LAMBDA2: f64 = 0.05;
pub const DEFAULT_WINDOW: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            lambda1: DEFAULT_LAMBDA1,
            lambda2: DEFAULT_LAMBDA2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub weights: LossWeights,
    /// Support-domain offset `N`.
    pub window_n: usize,
    pub spp: SppConfig,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            window_n: DEFAULT_WINDOW,
            spp: SppConfig::default(),
        }
    }
}

/// Loss components of one evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_ph: f64,
    pub l_sm: f64,
    pub l_spp: f64,
    pub total: f64,
    pub per_point_min_source: Vec<Option<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossGradients {
    /// Per depth-grid node.
    pub d_logdepth: Vec<f64>,
    /// Per source frame, with respect to the left-perturbation twist `[v, w]`.
    pub d_twist: Vec<Vector6<f64>>,
}

/// Every discrete choice made while evaluating the loss. Re-evaluating with
/// a frozen set stays on the same smooth piece of the loss.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActiveSet {
    pub photometric: Vec<KeypointBranch>,
    pub smoothness: SmoothnessBranches,
    pub planes: SppBranches,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub breakdown: LossBreakdown,
    pub gradients: LossGradients,
    pub active: ActiveSet,
    pub plane_fits: Vec<RegionFit>,
}

/// Evaluates the weighted total loss and its gradients, optionally replaying
/// the branch choices of an earlier evaluation.
pub fn evaluate(bundle: &FrameBundle, cfg: &LossConfig, frozen: Option<&ActiveSet>) -> Result<Evaluation> {
    bundle.validate()?;
    let depth = bundle.depth.to_depth_map();
    let w = depth.width();
    let depth_at: Vec<f64> = bundle
        .keypoints
        .points
        .iter()
        .map(|p| depth.get(p.x, p.y))
        .collect();

    let ph = photometric_evaluate(
        &bundle.target,
        &bundle.sources,
        &bundle.keypoints,
        &depth_at,
        &bundle.k,
        &bundle.poses,
        cfg.weights.alpha,
        cfg.window_n,
        frozen.map(|f| f.photometric.as_slice()),
    )?;
    let sm = smoothness_evaluate(
        &depth,
        &bundle.edge_weights,
        frozen.map(|f| f.smoothness.as_slice()),
    )?;
    let spp = spp_evaluate(
        &depth,
        &bundle.regions,
        &bundle.k,
        &cfg.spp,
        frozen.map(|f| &f.planes),
    )?;

    let (l1, l2) = (cfg.weights.lambda1, cfg.weights.lambda2);
    let mut d_depth: Vec<f64> = sm
        .grad
        .iter()
        .zip(&spp.grad)
        .map(|(a, b)| l1 * a + l2 * b)
        .collect();
    for (p, g) in bundle.keypoints.points.iter().zip(&ph.d_depth) {
        d_depth[p.y * w + p.x] += g;
    }
    let d_logdepth = bundle.depth.backpropagate(&depth, &d_depth);

    let breakdown = LossBreakdown {
        l_ph: ph.value,
        l_sm: sm.value,
        l_spp: spp.value,
        total: ph.value + l1 * sm.value + l2 * spp.value,
        per_point_min_source: ph.points.iter().map(|p| p.source).collect(),
    };
    Ok(Evaluation {
        breakdown,
        gradients: LossGradients {
            d_logdepth,
            d_twist: ph.d_twist,
        },
        active: ActiveSet {
            photometric: ph.branches,
            smoothness: sm.branches,
            planes: spp.branches,
        },
        plane_fits: spp.fits,
    })
}

/// `L = L_ph + λ₁ L_sm + λ₂ L_spp` with gradients for the depth grid and the
/// source poses.
pub fn total_loss_and_grad(bundle: &FrameBundle, cfg: &LossConfig) -> Result<(LossBreakdown, LossGradients)> {
    let e = evaluate(bundle, cfg, None)?;
    Ok((e.breakdown, e.gradients))
}
