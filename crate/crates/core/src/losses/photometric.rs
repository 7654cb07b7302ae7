//! Patch-based multi-view photometric loss.
//!
//! Each keypoint's support domain is warped into every source view with the
//! keypoint's depth, sampled bilinearly, and compared to the target patch by
//! `α·(1 − SSIM)/2 + (1 − α)·L1`. The per-keypoint loss is the minimum over
//! sources with a usable patch, and the loss is the mean over keypoints.

use nalgebra::{Vector3, Vector6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ssim::ssim_with_grad;
use crate::error::{Error, Result};
use crate::geometry::{
    bilinear_cell, bilinear_in_cell, projection_jacobian, support_domain, Image, Intrinsics,
    PixelPoint, PoseSE3, CHEIRALITY_EPS,
};
use crate::keypoints::KeypointSet;

/// A (keypoint, source) pair needs this many in-bounds warped samples.
pub const MIN_VALID_SAMPLES: usize = 6;

/// Branch choices of one (keypoint, source) patch comparison.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchBranch {
    /// Interpolation cell per sample; `None` when the sample is invalid.
    pub cells: [Option<(u32, u32)>; 9],
    /// Sign of `target − source` per sample and channel.
    pub signs: [[i8; 3]; 9],
    /// −1 / +1 when the SSIM dissimilarity was clamped to 0 / 1.
    pub clamp: i8,
}

/// Branch choices of one keypoint across all sources.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeypointBranch {
    /// `None` when the pair had too few valid samples.
    pub sources: Vec<Option<PatchBranch>>,
    pub chosen: Option<usize>,
}

/// Per-keypoint outcome.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointDetail {
    /// Source index with minimum loss; `None` if no source had a valid patch.
    pub source: Option<usize>,
    pub loss: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct PhotometricEvaluation {
    pub value: f64,
    pub points: Vec<PointDetail>,
    /// d value / d depth, per keypoint.
    pub d_depth: Vec<f64>,
    /// d value / d left-perturbation twist `[v, w]`, per source.
    pub d_twist: Vec<Vector6<f64>>,
    pub branches: Vec<KeypointBranch>,
}

struct PatchTerm {
    value: f64,
    d_depth: f64,
    d_twist: Vector6<f64>,
    branch: PatchBranch,
}

#[inline]
fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

#[allow(clippy::too_many_arguments)]
fn patch_term(
    target: &[[f64; 3]; 9],
    source: &Image,
    rays: &[Vector3<f64>; 9],
    depth: f64,
    k: &Intrinsics,
    pose: &PoseSE3,
    alpha: f64,
    frozen: Option<&PatchBranch>,
) -> Option<PatchTerm> {
    let channels = source.channels();
    let (w, h) = (source.width() as f64 - 1.0, source.height() as f64 - 1.0);

    let mut points = [Vector3::zeros(); 9];
    let mut pixels = [PixelPoint::default(); 9];
    let mut cells = [None; 9];
    for j in 0..9 {
        let p = pose.transform_point(&(rays[j] * depth));
        points[j] = p;
        let px = PixelPoint::new(k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy);
        pixels[j] = px;
        cells[j] = match frozen {
            Some(f) => f.cells[j],
            None => (p.z > CHEIRALITY_EPS && px.x >= 0.0 && px.y >= 0.0 && px.x <= w && px.y <= h)
                .then(|| {
                    let (cx, cy) = bilinear_cell(source, &px);
                    (cx as u32, cy as u32)
                }),
        };
    }
    let mask: [bool; 9] = std::array::from_fn(|j| cells[j].is_some());
    let n = mask.iter().filter(|m| **m).count();
    if frozen.is_none() && n < MIN_VALID_SAMPLES {
        return None;
    }

    let mut sampled = [[0.0; 3]; 9];
    let mut sdx = [[0.0; 3]; 9];
    let mut sdy = [[0.0; 3]; 9];
    for j in 0..9 {
        if let Some((cx, cy)) = cells[j] {
            let s = bilinear_in_cell(source, (cx as usize, cy as usize), &pixels[j]);
            sampled[j] = s.values;
            sdx[j] = s.dx;
            sdy[j] = s.dy;
        }
    }

    // L1 over valid samples and channels.
    let norm = 1.0 / (n * channels) as f64;
    let mut signs = [[0i8; 3]; 9];
    let mut l1 = 0.0;
    for j in (0..9).filter(|&j| mask[j]) {
        for c in 0..channels {
            let diff = target[j][c] - sampled[j][c];
            let s = frozen.map_or_else(|| sign(diff), |f| f.signs[j][c]);
            signs[j][c] = s;
            l1 += s as f64 * diff;
        }
    }
    l1 *= norm;

    let (ssim, d_ssim) = ssim_with_grad(target, &sampled, &mask, channels);
    let raw = 0.5 * (1.0 - ssim);
    let clamp = match frozen {
        Some(f) => f.clamp,
        None if raw < 0.0 => -1,
        None if raw > 1.0 => 1,
        None => 0,
    };
    let dissim = match clamp {
        -1 => 0.0,
        1 => 1.0,
        _ => raw,
    };
    let value = alpha * dissim + (1.0 - alpha) * l1;

    let mut d_depth = 0.0;
    let mut d_twist = Vector6::zeros();
    for j in (0..9).filter(|&j| mask[j]) {
        let (mut du, mut dv) = (0.0, 0.0);
        for c in 0..channels {
            let mut d_val = -(1.0 - alpha) * signs[j][c] as f64 * norm;
            if clamp == 0 {
                d_val -= 0.5 * alpha * d_ssim[j][c];
            }
            du += d_val * sdx[j][c];
            dv += d_val * sdy[j][c];
        }
        let p = points[j];
        let jp = projection_jacobian(&p, k);
        let g = jp.transpose() * nalgebra::Vector2::new(du, dv);
        d_depth += g.dot(&(pose.rotation * rays[j]));
        let wpart = p.cross(&g);
        d_twist += Vector6::new(g.x, g.y, g.z, wpart.x, wpart.y, wpart.z);
    }

    Some(PatchTerm {
        value,
        d_depth,
        d_twist,
        branch: PatchBranch {
            cells,
            signs,
            clamp,
        },
    })
}

/// Photometric loss and its gradients with respect to keypoint depths and
/// source-pose perturbations.
#[allow(clippy::too_many_arguments)]
pub fn photometric_evaluate(
    target: &Image,
    sources: &[Image],
    kps: &KeypointSet,
    depth_at: &[f64],
    k: &Intrinsics,
    poses: &[PoseSE3],
    alpha: f64,
    window_n: usize,
    frozen: Option<&[KeypointBranch]>,
) -> Result<PhotometricEvaluation> {
    if sources.is_empty() {
        return Err(Error::precondition("photometric loss needs at least one source"));
    }
    if poses.len() != sources.len() {
        return Err(Error::precondition("one pose per source frame is required"));
    }
    if depth_at.len() != kps.len() {
        return Err(Error::precondition("one depth per keypoint is required"));
    }
    if kps.is_empty() {
        return Err(Error::precondition("keypoint set is empty"));
    }
    if window_n == 0 {
        return Err(Error::precondition("window size must be at least 1"));
    }
    for s in sources {
        if s.width() != target.width()
            || s.height() != target.height()
            || s.channels() != target.channels()
        {
            return Err(Error::precondition("source and target images differ in shape"));
        }
    }
    if let Some(&d) = depth_at.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
        return Err(Error::InvalidDepth(d));
    }
    if let Some(f) = frozen {
        if f.len() != kps.len() {
            return Err(Error::precondition("frozen branches do not match keypoints"));
        }
    }
    let (tw, th) = (target.width() as f64 - 1.0, target.height() as f64 - 1.0);

    struct PointResult {
        term: Option<(usize, f64, f64, Vector6<f64>)>,
        branch: KeypointBranch,
    }

    let results: Vec<Result<PointResult>> = kps
        .points
        .par_iter()
        .enumerate()
        .map(|(i, kp)| {
            let domain = support_domain(&kp.pixel(), window_n);
            let mut target_vals = [[0.0; 3]; 9];
            let mut rays = [Vector3::zeros(); 9];
            for (j, s) in domain.samples.iter().enumerate() {
                if s.x < 0.0 || s.y < 0.0 || s.x > tw || s.y > th {
                    return Err(Error::precondition(format!(
                        "keypoint ({}, {}) support domain leaves the image",
                        kp.x, kp.y
                    )));
                }
                for c in 0..target.channels() {
                    target_vals[j][c] = target.get(s.x as usize, s.y as usize, c);
                }
                rays[j] = k.unproject_ray(s);
            }
            let fk = frozen.map(|f| &f[i]);
            let mut branch = KeypointBranch {
                sources: Vec::with_capacity(sources.len()),
                chosen: None,
            };
            let mut terms = Vec::with_capacity(sources.len());
            for (si, (src, pose)) in sources.iter().zip(poses).enumerate() {
                let fb = match fk {
                    Some(fk) => match &fk.sources[si] {
                        Some(b) => Some(b),
                        None => {
                            branch.sources.push(None);
                            terms.push(None);
                            continue;
                        }
                    },
                    None => None,
                };
                let t = patch_term(&target_vals, src, &rays, depth_at[i], k, pose, alpha, fb);
                branch.sources.push(t.as_ref().map(|t| t.branch.clone()));
                terms.push(t);
            }
            let chosen = match fk {
                Some(fk) => fk.chosen,
                None => terms
                    .iter()
                    .enumerate()
                    .filter_map(|(si, t)| t.as_ref().map(|t| (si, t.value)))
                    .fold(None, |best: Option<(usize, f64)>, (si, v)| match best {
                        Some((_, bv)) if bv <= v => best,
                        _ => Some((si, v)),
                    })
                    .map(|(si, _)| si),
            };
            branch.chosen = chosen;
            let term = chosen.map(|si| {
                let t = terms[si].as_ref().expect("chosen source has a term");
                (si, t.value, t.d_depth, t.d_twist)
            });
            Ok(PointResult { term, branch })
        })
        .collect();

    let mut points = Vec::with_capacity(kps.len());
    let mut branches = Vec::with_capacity(kps.len());
    let mut d_depth = vec![0.0; kps.len()];
    let mut d_twist = vec![Vector6::zeros(); sources.len()];
    let mut sum = 0.0;
    let mut surviving = 0usize;
    let mut staged = Vec::with_capacity(kps.len());
    for r in results {
        let r = r?;
        match r.term {
            Some((si, v, dd, dt)) => {
                points.push(PointDetail {
                    source: Some(si),
                    loss: Some(v),
                });
                sum += v;
                surviving += 1;
                staged.push(Some((si, dd, dt)));
            }
            None => {
                points.push(PointDetail {
                    source: None,
                    loss: None,
                });
                staged.push(None);
            }
        }
        branches.push(r.branch);
    }
    if surviving == 0 {
        return Err(Error::NoOverlap);
    }
    let inv = 1.0 / surviving as f64;
    for (i, s) in staged.into_iter().enumerate() {
        if let Some((si, dd, dt)) = s {
            d_depth[i] = dd * inv;
            d_twist[si] += dt * inv;
        }
    }
    Ok(PhotometricEvaluation {
        value: sum * inv,
        points,
        d_depth,
        d_twist,
        branches,
    })
}

/// Mean over keypoints of the minimum-over-sources patch loss.
#[allow(clippy::too_many_arguments)]
pub fn photometric_loss(
    target: &Image,
    sources: &[Image],
    kps: &KeypointSet,
    depth_at: &[f64],
    k: &Intrinsics,
    poses: &[PoseSE3],
    alpha: f64,
    window_n: usize,
) -> Result<(f64, Vec<PointDetail>)> {
    let e = photometric_evaluate(target, sources, kps, depth_at, k, poses, alpha, window_n, None)?;
    Ok((e.value, e.points))
}
