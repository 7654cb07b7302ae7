//! Assembles a [`FrameBundle`] from images: keypoint selection, superpixel
//! regions and the initial depth grid.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{DepthMap, Image, Intrinsics, PoseSE3};
use crate::keypoints::{gradient_map, select_keypoints_with, SelectionParams, DEFAULT_COUNT};
use crate::solver::{DepthGrid, FrameBundle, DEFAULT_GRID_SCALE, DEFAULT_INIT_DEPTH};
use crate::superpixels::{
    felzenszwalb_segment, large_regions, LabelMap, DEFAULT_K, DEFAULT_MIN_AREA, DEFAULT_MIN_SIZE,
    DEFAULT_SIGMA,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationParams {
    pub k: f64,
    pub sigma: f64,
    pub min_size: usize,
    pub min_area: usize,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            sigma: DEFAULT_SIGMA,
            min_size: DEFAULT_MIN_SIZE,
            min_area: DEFAULT_MIN_AREA,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleParams {
    pub keypoints: usize,
    pub window_n: usize,
    pub grid_scale: usize,
    pub init_depth: f64,
    pub segmentation: SegmentationParams,
    pub seed: u64,
}

impl Default for BundleParams {
    fn default() -> Self {
        Self {
            keypoints: DEFAULT_COUNT,
            window_n: crate::losses::DEFAULT_WINDOW,
            grid_scale: DEFAULT_GRID_SCALE,
            init_depth: DEFAULT_INIT_DEPTH,
            segmentation: SegmentationParams::default(),
            seed: 0,
        }
    }
}

/// Segments `img` and keeps the regions above the area threshold.
pub fn segment_regions(img: &Image, p: &SegmentationParams) -> Result<(LabelMap, Vec<crate::superpixels::Superpixel>)> {
    let labels = felzenszwalb_segment(img, p.k, p.sigma, p.min_size)?;
    let regions = large_regions(&labels, p.min_area);
    Ok((labels, regions))
}

/// Builds a bundle. Regions come from `labels` when given, otherwise from
/// segmenting the target; depth starts from `init` when given, otherwise
/// from the constant `params.init_depth`. Poses default to identity.
pub fn build_bundle(
    target: Image,
    sources: Vec<Image>,
    k: Intrinsics,
    params: &BundleParams,
    labels: Option<&LabelMap>,
    init: Option<&DepthMap>,
    poses: Option<Vec<PoseSE3>>,
) -> Result<FrameBundle> {
    let g = gradient_map(&target)?;
    let keypoints = select_keypoints_with(
        &g,
        &SelectionParams::for_window(params.window_n, params.keypoints, params.seed),
    )?;
    let regions = match labels {
        Some(l) => large_regions(l, params.segmentation.min_area),
        None => segment_regions(&target, &params.segmentation)?.1,
    };
    let depth = match init {
        Some(d) => DepthGrid::from_depth_map(d, params.grid_scale)?,
        None => DepthGrid::constant(target.width(), target.height(), params.grid_scale, params.init_depth)?,
    };
    let poses = poses.unwrap_or_else(|| vec![PoseSE3::identity(); sources.len()]);
    FrameBundle::new(target, sources, k, keypoints, regions, depth, poses)
}
