//! Depth, surface-normal and relative-pose error metrics.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{backproject, rotation_angle, DepthMap, Intrinsics, PixelPoint, PoseSE3};
use crate::planes::fit_plane;

/// Ridge term of local normal fits, negligible against point magnitudes.
pub const NORMAL_FIT_EPSILON: f64 = 1e-10;
pub const NORMAL_THRESHOLDS_DEG: [f64; 3] = [11.25, 22.5, 30.0];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    pub rms: f64,
    pub rel: f64,
    pub log10: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalMetrics {
    pub mean_angle: f64,
    pub pct_11_25: f64,
    pub pct_22_5: f64,
    pub pct_30: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseMetrics {
    pub rot_deg: f64,
    pub tr_angle_deg: f64,
    pub tr_cm: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Errors of `pred` against `gt` over pixels valid in both maps. With
/// `median_scale`, `pred` is first multiplied by `median(gt) / median(pred)`
/// and every metric uses the scaled values.
pub fn depth_metrics(pred: &DepthMap, gt: &DepthMap, median_scale: bool) -> Result<DepthMetrics> {
    if (pred.width(), pred.height()) != (gt.width(), gt.height()) {
        return Err(Error::precondition("predicted and ground-truth depth differ in size"));
    }
    let pairs: Vec<(f64, f64)> = (0..gt.data().len())
        .filter(|&i| gt.is_valid_index(i) && pred.is_valid_index(i))
        .map(|i| (pred.data()[i], gt.data()[i]))
        .collect();
    if pairs.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let s = if median_scale {
        median(pairs.iter().map(|p| p.1).collect()) / median(pairs.iter().map(|p| p.0).collect())
    } else {
        1.0
    };
    let n = pairs.len() as f64;
    let (mut sq, mut rel, mut lg) = (0.0, 0.0, 0.0);
    let mut within = [0usize; 3];
    for &(p, g) in &pairs {
        let p = p * s;
        sq += (p - g) * (p - g);
        rel += (p - g).abs() / g;
        lg += (p.log10() - g.log10()).abs();
        let ratio = (p / g).max(g / p);
        for (i, c) in within.iter_mut().enumerate() {
            if ratio < 1.25f64.powi(i as i32 + 1) {
                *c += 1;
            }
        }
    }
    Ok(DepthMetrics {
        rms: (sq / n).sqrt(),
        rel: rel / n,
        log10: lg / n,
        delta1: within[0] as f64 / n,
        delta2: within[1] as f64 / n,
        delta3: within[2] as f64 / n,
    })
}

/// Per-pixel unit normals; `None` where no full window is available.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalMap {
    pub width: usize,
    pub height: usize,
    pub normals: Vec<Option<Vector3<f64>>>,
}

impl NormalMap {
    pub fn valid_count(&self) -> usize {
        self.normals.iter().filter(|n| n.is_some()).count()
    }
}

/// Fits a plane `aᵀX = 1` to the back-projected `window`×`window`
/// neighborhood of each pixel and returns `a / ‖a‖`, which points away from
/// the camera through the surface (positive `z` for a fronto-parallel plane).
pub fn normals_from_depth(depth: &DepthMap, k: &Intrinsics, window: usize) -> Result<NormalMap> {
    if window < 3 || window % 2 == 0 {
        return Err(Error::precondition(format!("normal window must be odd and >= 3, got {window}")));
    }
    let (w, h) = (depth.width(), depth.height());
    let r = window / 2;
    let normals = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (x, y) = (i % w, i / w);
            if x < r || y < r || x + r >= w || y + r >= h {
                return None;
            }
            let mut pts = Vec::with_capacity(window * window);
            for yy in y - r..=y + r {
                for xx in x - r..=x + r {
                    let j = yy * w + xx;
                    if !depth.is_valid_index(j) {
                        return None;
                    }
                    let p = PixelPoint::new(xx as f64, yy as f64);
                    pts.push(backproject(&p, depth.data()[j], k).ok()?);
                }
            }
            let a = fit_plane(&pts, NORMAL_FIT_EPSILON).ok()?.a;
            let n = a.norm();
            (n > 0.0 && n.is_finite()).then(|| a / n)
        })
        .collect();
    Ok(NormalMap {
        width: w,
        height: h,
        normals,
    })
}

/// Angular errors over pixels where both maps have a normal.
pub fn normal_metrics(pred: &NormalMap, gt: &NormalMap) -> Result<NormalMetrics> {
    if (pred.width, pred.height) != (gt.width, gt.height) {
        return Err(Error::precondition("normal maps differ in size"));
    }
    let angles: Vec<f64> = pred
        .normals
        .iter()
        .zip(&gt.normals)
        .filter_map(|(p, g)| Some(p.as_ref()?.dot(g.as_ref()?).clamp(-1.0, 1.0).acos().to_degrees()))
        .collect();
    if angles.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let n = angles.len() as f64;
    let frac = |t: f64| angles.iter().filter(|&&a| a < t).count() as f64 / n;
    Ok(NormalMetrics {
        mean_angle: angles.iter().sum::<f64>() / n,
        pct_11_25: frac(NORMAL_THRESHOLDS_DEG[0]),
        pct_22_5: frac(NORMAL_THRESHOLDS_DEG[1]),
        pct_30: frac(NORMAL_THRESHOLDS_DEG[2]),
    })
}

/// Relative-pose errors. The predicted translation is rescaled to the
/// ground-truth length before the centimeter error.
pub fn pose_metrics(pred: &PoseSE3, gt: &PoseSE3) -> Result<PoseMetrics> {
    let (tp, tg) = (pred.translation, gt.translation);
    let (np, ng) = (tp.norm(), tg.norm());
    if np == 0.0 || ng == 0.0 || !(np.is_finite() && ng.is_finite()) {
        return Err(Error::UndefinedDirection);
    }
    let rot = rotation_angle(&(pred.rotation * gt.rotation.transpose()));
    let cos = (tp.dot(&tg) / (np * ng)).clamp(-1.0, 1.0);
    Ok(PoseMetrics {
        rot_deg: rot.to_degrees(),
        tr_angle_deg: cos.acos().to_degrees(),
        tr_cm: (tp * (ng / np) - tg).norm() * 100.0,
    })
}

/// Any combination of metric groups, serialized as one flat JSON object.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub depth: Option<DepthMetrics>,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub normals: Option<NormalMetrics>,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub pose: Option<PoseMetrics>,
}

impl MetricsReport {
    /// Aligned plain-text table, one header row and one value row per group.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let mut section = |headers: &[&str], values: &[f64]| {
            let cells: Vec<String> = values.iter().map(|v| format!("{v:.4}")).collect();
            let widths: Vec<usize> = headers
                .iter()
                .zip(&cells)
                .map(|(h, c)| h.chars().count().max(c.len()))
                .collect();
            let row = |items: Vec<String>| {
                items
                    .iter()
                    .zip(&widths)
                    .map(|(s, &w)| format!("{s:>w$}"))
                    .collect::<Vec<_>>()
                    .join("  ")
            };
            out.push_str(&row(headers.iter().map(|s| s.to_string()).collect()));
            out.push('\n');
            out.push_str(&row(cells));
            out.push('\n');
        };
        if let Some(d) = &self.depth {
            section(
                &["rms", "rel", "log10", "δ<1.25", "δ<1.25²", "δ<1.25³"],
                &[d.rms, d.rel, d.log10, d.delta1, d.delta2, d.delta3],
            );
        }
        if let Some(n) = &self.normals {
            section(
                &["mean", "11.25°", "22.5°", "30°"],
                &[n.mean_angle, n.pct_11_25, n.pct_22_5, n.pct_30],
            );
        }
        if let Some(p) = &self.pose {
            section(&["rot(deg)", "tr(deg)", "tr(cm)"], &[p.rot_deg, p.tr_angle_deg, p.tr_cm]);
        }
        out
    }
}
