use nalgebra::{Matrix2x3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PoseSE3;

/// Points with `z` at or below this are behind or on the camera plane.
pub const CHEIRALITY_EPS: f64 = 1e-8;

/// Pinhole intrinsics in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        Self { fx, fy, cx, cy }
    }

    /// Checks focal lengths and that the principal point lies inside the image.
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx > 0.0
            && self.cy > 0.0
            && self.cx < width as f64
            && self.cy < height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::precondition(format!(
                "intrinsics {self:?} invalid for a {width}x{height} image"
            )))
        }
    }

    /// `K⁻¹ (x, y, 1)ᵀ`.
    #[inline]
    pub fn unproject_ray(&self, p: &PixelPoint) -> Vector3<f64> {
        Vector3::new((p.x - self.cx) / self.fx, (p.y - self.cy) / self.fy, 1.0)
    }

    /// Same camera at a different resolution, scaling pixel units by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self::new(self.fx * s, self.fy * s, self.cx * s, self.cy * s)
    }
}

/// Continuous pixel coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct PixelPoint {
    pub x: f64,
    pub y: f64,
}

impl PixelPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// `D · K⁻¹ · (x, y, 1)ᵀ`.
pub fn backproject(p: &PixelPoint, depth: f64, k: &Intrinsics) -> Result<Vector3<f64>> {
    if !(depth.is_finite() && depth > 0.0) {
        return Err(Error::InvalidDepth(depth));
    }
    Ok(k.unproject_ray(p) * depth)
}

/// Perspective projection returning pixel and depth `Z`.
pub fn project(point: &Vector3<f64>, k: &Intrinsics) -> Result<(PixelPoint, f64)> {
    let z = point.z;
    if !(z > CHEIRALITY_EPS) {
        return Err(Error::Cheirality(z));
    }
    Ok((
        PixelPoint::new(k.fx * point.x / z + k.cx, k.fy * point.y / z + k.cy),
        z,
    ))
}

/// Derivative of the projected pixel with respect to the 3-D point.
#[inline]
pub(crate) fn projection_jacobian(point: &Vector3<f64>, k: &Intrinsics) -> Matrix2x3<f64> {
    let iz = 1.0 / point.z;
    Matrix2x3::new(
        k.fx * iz,
        0.0,
        -k.fx * point.x * iz * iz,
        0.0,
        k.fy * iz,
        -k.fy * point.y * iz * iz,
    )
}

/// Nine-sample support region around a keypoint at offsets `{−n, 0, n}²`.
///
/// Samples are ordered row-major: `dy` outer, `dx` inner, so index 4 is the center.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SupportDomain {
    pub center: PixelPoint,
    pub samples: [PixelPoint; 9],
    pub window_size: usize,
}

pub const CENTER_SAMPLE: usize = 4;

pub fn support_domain(p: &PixelPoint, n: usize) -> SupportDomain {
    assert!(n >= 1, "window size must be at least 1");
    let step = n as f64;
    let mut samples = [PixelPoint::default(); 9];
    for (j, dy) in [-step, 0.0, step].into_iter().enumerate() {
        for (i, dx) in [-step, 0.0, step].into_iter().enumerate() {
            samples[j * 3 + i] = PixelPoint::new(p.x + dx, p.y + dy);
        }
    }
    SupportDomain {
        center: *p,
        samples,
        window_size: n,
    }
}

/// Support domain after rigid warping into another view.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WarpedPatch {
    pub points: [PixelPoint; 9],
    pub valid: [bool; 9],
}

impl WarpedPatch {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

/// Warps every sample with the shared `depth`: back-project, transform by
/// `pose`, project. Samples failing cheirality or leaving
/// `[0, W−1] × [0, H−1]` (with `bounds = (W, H)`) are flagged invalid.
pub fn warp_patch(
    domain: &SupportDomain,
    depth: f64,
    k: &Intrinsics,
    pose: &PoseSE3,
    bounds: (usize, usize),
) -> Result<WarpedPatch> {
    if !(depth.is_finite() && depth > 0.0) {
        return Err(Error::InvalidDepth(depth));
    }
    let (w, h) = (bounds.0 as f64 - 1.0, bounds.1 as f64 - 1.0);
    let mut out = WarpedPatch {
        points: [PixelPoint::default(); 9],
        valid: [false; 9],
    };
    for (i, s) in domain.samples.iter().enumerate() {
        let world = pose.transform_point(&(k.unproject_ray(s) * depth));
        if let Ok((q, _)) = project(&world, k) {
            out.points[i] = q;
            out.valid[i] = q.x >= 0.0 && q.y >= 0.0 && q.x <= w && q.y <= h;
        }
    }
    Ok(out)
}
