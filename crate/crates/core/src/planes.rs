//! Ridge plane fitting per superpixel and the planar consistency loss.
//!
//! A plane is `aᵀX = 1`. Given back-projected points `X_n = D_n q_n` with
//! `q_n = K⁻¹(x, y, 1)ᵀ`, the fit is `a = (PᵀP + εI)⁻¹ Pᵀ1` and the fitted
//! depth of a pixel is `D′ = 1 / (aᵀq)`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DepthMap, Intrinsics, PixelPoint};
use crate::superpixels::Superpixel;

pub const DEFAULT_EPSILON: f64 = 1e-4;
/// `|aᵀq|` below this marks a fitted depth as invalid.
pub const MIN_DENOMINATOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct PlaneParams {
    pub a: Vector3<f64>,
}

impl From<[f64; 3]> for PlaneParams {
    fn from(a: [f64; 3]) -> Self {
        Self {
            a: Vector3::from_column_slice(&a),
        }
    }
}

impl From<PlaneParams> for [f64; 3] {
    fn from(p: PlaneParams) -> Self {
        [p.a.x, p.a.y, p.a.z]
    }
}

impl PlaneParams {
    pub fn new(a: Vector3<f64>) -> Self {
        Self { a }
    }
}

/// Solves the symmetric positive definite 3×3 system `m x = b`.
fn solve_spd(m: &Matrix3<f64>, b: &Vector3<f64>) -> Vector3<f64> {
    match m.cholesky() {
        Some(ch) => ch.solve(b),
        None => m.lu().solve(b).unwrap_or_else(Vector3::zeros),
    }
}

/// Closed-form ridge solution `(PᵀP + εI)⁻¹ Pᵀ1`.
pub fn fit_plane(points: &[Vector3<f64>], epsilon: f64) -> Result<PlaneParams> {
    if points.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: points.len(),
        });
    }
    if !(epsilon > 0.0) {
        return Err(Error::precondition("plane-fit epsilon must be positive"));
    }
    let mut m = Matrix3::identity() * epsilon;
    let mut b = Vector3::zeros();
    for p in points {
        m += p * p.transpose();
        b += p;
    }
    Ok(PlaneParams::new(solve_spd(&m, &b)))
}

/// `1 / (aᵀ K⁻¹ p)`, or `None` when the denominator is negative or within
/// [`MIN_DENOMINATOR`] of zero.
pub fn planar_depth(a: &PlaneParams, k: &Intrinsics, p: &PixelPoint) -> Option<f64> {
    inverse_planar_depth(a, &k.unproject_ray(p))
}

#[inline]
fn inverse_planar_depth(a: &PlaneParams, ray: &Vector3<f64>) -> Option<f64> {
    let den = a.a.dot(ray);
    (den >= MIN_DENOMINATOR).then(|| 1.0 / den)
}

/// How the loss gradient treats the per-region plane fit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlaneGradient {
    /// Differentiates through the closed-form fit: the exact gradient of the loss.
    #[default]
    ThroughFit,
    /// Holds each region's plane constant.
    Detached,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SppConfig {
    pub epsilon: f64,
    /// Plain double sum instead of per-region means averaged over regions.
    pub raw_sum: bool,
    pub gradient: PlaneGradient,
}

impl Default for SppConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            raw_sum: false,
            gradient: PlaneGradient::default(),
        }
    }
}

/// Fitted plane of one region, as exported to JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionFit {
    pub id: u32,
    pub a: PlaneParams,
    pub area: usize,
    /// Mean `|D − D′|` over pixels with a valid fitted depth.
    pub residual: f64,
}

/// Residual signs per region pixel; `None` for skipped regions.
/// Each entry is −1, 0, +1, or [`INVALID_FIT`].
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct SppBranches {
    pub regions: Vec<Option<Vec<i8>>>,
}

pub const INVALID_FIT: i8 = i8::MIN;

#[derive(Clone, Debug)]
pub struct SppEvaluation {
    pub value: f64,
    /// d value / d depth, per pixel of the depth map.
    pub grad: Vec<f64>,
    pub fits: Vec<RegionFit>,
    pub branches: SppBranches,
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

/// Planar consistency loss and its per-pixel gradient with default settings
/// and the given `epsilon`.
pub fn spp_loss(
    depth: &DepthMap,
    regions: &[Superpixel],
    k: &Intrinsics,
    epsilon: f64,
) -> Result<(f64, Vec<f64>)> {
    let cfg = SppConfig {
        epsilon,
        ..SppConfig::default()
    };
    let e = spp_evaluate(depth, regions, k, &cfg, None)?;
    Ok((e.value, e.grad))
}

/// Full evaluation. With `frozen`, residual signs and fitted-depth validity
/// are taken from a previous evaluation instead of being recomputed.
pub fn spp_evaluate(
    depth: &DepthMap,
    regions: &[Superpixel],
    k: &Intrinsics,
    cfg: &SppConfig,
    frozen: Option<&SppBranches>,
) -> Result<SppEvaluation> {
    if !(cfg.epsilon > 0.0) {
        return Err(Error::precondition("plane-fit epsilon must be positive"));
    }
    if let Some(f) = frozen {
        if f.regions.len() != regions.len() {
            return Err(Error::precondition("frozen branches do not match regions"));
        }
    }
    let w = depth.width();
    let mut grad = vec![0.0; depth.data().len()];
    let mut fits = Vec::new();
    let mut branches = SppBranches {
        regions: Vec::with_capacity(regions.len()),
    };
    let mut region_values = Vec::new();

    struct Term {
        idx: usize,
        ray: Vector3<f64>,
        d: f64,
    }

    for (ri, region) in regions.iter().enumerate() {
        let terms: Vec<Term> = region
            .pixels
            .iter()
            .filter_map(|&(x, y)| {
                let idx = y * w + x;
                depth.is_valid_index(idx).then(|| Term {
                    idx,
                    ray: k.unproject_ray(&PixelPoint::new(x as f64, y as f64)),
                    d: depth.data()[idx],
                })
            })
            .collect();
        let frozen_region = frozen.map(|f| f.regions[ri].as_ref());
        if terms.len() < 3 || frozen_region == Some(None) {
            branches.regions.push(None);
            continue;
        }

        let mut m = Matrix3::identity() * cfg.epsilon;
        let mut b = Vector3::zeros();
        for t in &terms {
            let p = t.ray * t.d;
            m += p * p.transpose();
            b += p;
        }
        let plane = PlaneParams::new(solve_spd(&m, &b));

        let mut signs = Vec::with_capacity(terms.len());
        let mut fitted = Vec::with_capacity(terms.len());
        for (ti, t) in terms.iter().enumerate() {
            let s = match frozen_region.flatten() {
                Some(fs) => {
                    let s = fs[ti];
                    let dp = (s != INVALID_FIT).then(|| 1.0 / plane.a.dot(&t.ray));
                    fitted.push(dp);
                    s
                }
                None => {
                    let dp = inverse_planar_depth(&plane, &t.ray);
                    fitted.push(dp);
                    dp.map_or(INVALID_FIT, |dp| sign(t.d - dp))
                }
            };
            signs.push(s);
        }
        let n = fitted.iter().filter(|f| f.is_some()).count();
        if n == 0 {
            branches.regions.push(if frozen.is_some() { Some(signs) } else { None });
            continue;
        }

        let mut sum = 0.0;
        let mut abs_sum = 0.0;
        let mut g = Vector3::zeros();
        for ((t, dp), &s) in terms.iter().zip(&fitted).zip(&signs) {
            if let Some(dp) = dp {
                let r = t.d - dp;
                sum += s as f64 * r;
                abs_sum += r.abs();
                g += t.ray * (s as f64 * dp * dp);
            }
        }
        let scale = if cfg.raw_sum { 1.0 } else { 1.0 / n as f64 };
        region_values.push(sum * scale);

        let h = match cfg.gradient {
            PlaneGradient::ThroughFit => Some(solve_spd(&m, &g)),
            PlaneGradient::Detached => None,
        };
        for ((t, dp), &s) in terms.iter().zip(&fitted).zip(&signs) {
            let mut dj = if dp.is_some() { s as f64 } else { 0.0 };
            if let Some(h) = &h {
                dj += h.dot(&t.ray) * (1.0 - 2.0 * t.d * plane.a.dot(&t.ray));
            }
            grad[t.idx] += dj * scale;
        }

        fits.push(RegionFit {
            id: region.id,
            a: plane,
            area: region.area,
            residual: abs_sum / n as f64,
        });
        branches.regions.push(Some(signs));
    }

    let count = region_values.len();
    let mut value: f64 = region_values.iter().sum();
    if !cfg.raw_sum && count > 0 {
        value /= count as f64;
        grad.iter_mut().for_each(|g| *g /= count as f64);
    }
    Ok(SppEvaluation {
        value,
        grad,
        fits,
        branches,
    })
}
