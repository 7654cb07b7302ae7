//! Edge-aware smoothness on mean-normalized depth.
//!
//! `L = mean_x(|∂x d*| e^{−|∂x I|}) + mean_y(|∂y d*| e^{−|∂y I|})` with
//! `d* = d / mean(d)`, forward differences and luminance gradients. The last
//! column (for `∂x`) and last row (for `∂y`) have no forward difference and
//! are dropped.

use crate::error::{Error, Result};
use crate::geometry::{DepthMap, Image};

/// Signs of the forward depth differences, x-terms then y-terms.
pub type SmoothnessBranches = Vec<i8>;

#[derive(Clone, Debug)]
pub struct SmoothnessEvaluation {
    pub value: f64,
    /// d value / d depth, per pixel.
    pub grad: Vec<f64>,
    pub branches: SmoothnessBranches,
}

/// Precomputed edge weights `e^{−|∂I|}` for one image.
#[derive(Clone, Debug)]
pub struct EdgeWeights {
    width: usize,
    height: usize,
    wx: Vec<f64>,
    wy: Vec<f64>,
}

impl EdgeWeights {
    pub fn new(img: &Image) -> Self {
        let lum = img.luminance();
        let (w, h) = (img.width(), img.height());
        let mut wx = Vec::with_capacity(w.saturating_sub(1) * h);
        let mut wy = Vec::with_capacity(w * h.saturating_sub(1));
        for y in 0..h {
            for x in 0..w.saturating_sub(1) {
                wx.push((-(lum.get(x + 1, y, 0) - lum.get(x, y, 0)).abs()).exp());
            }
        }
        for y in 0..h.saturating_sub(1) {
            for x in 0..w {
                wy.push((-(lum.get(x, y + 1, 0) - lum.get(x, y, 0)).abs()).exp());
            }
        }
        Self {
            width: w,
            height: h,
            wx,
            wy,
        }
    }
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

pub fn smoothness_evaluate(
    depth: &DepthMap,
    weights: &EdgeWeights,
    frozen: Option<&[i8]>,
) -> Result<SmoothnessEvaluation> {
    let (w, h) = (depth.width(), depth.height());
    if (w, h) != (weights.width, weights.height) {
        return Err(Error::precondition("depth map and image differ in size"));
    }
    let d = depth.data();
    let count = (w * h) as f64;
    let mean = d.iter().sum::<f64>() / count;
    if let Some(f) = frozen {
        if f.len() != weights.wx.len() + weights.wy.len() {
            return Err(Error::precondition("frozen smoothness branches do not match"));
        }
    }

    let mut branches = Vec::with_capacity(weights.wx.len() + weights.wy.len());
    // Unnormalized-depth energy and its gradient; divided by the mean below.
    let mut energy = 0.0;
    let mut grad = vec![0.0; w * h];
    let mut term = |a: usize, b: usize, wt: f64, scale: f64, branches: &mut Vec<i8>| {
        let diff = d[b] - d[a];
        let s = match frozen {
            Some(f) => f[branches.len()],
            None => sign(diff),
        };
        branches.push(s);
        let c = wt * scale;
        energy += c * s as f64 * diff;
        grad[b] += c * s as f64;
        grad[a] -= c * s as f64;
    };
    if w > 1 {
        let scale = 1.0 / weights.wx.len() as f64;
        for y in 0..h {
            for x in 0..w - 1 {
                let i = y * w + x;
                term(i, i + 1, weights.wx[y * (w - 1) + x], scale, &mut branches);
            }
        }
    }
    if h > 1 {
        let scale = 1.0 / weights.wy.len() as f64;
        for y in 0..h - 1 {
            for x in 0..w {
                let i = y * w + x;
                term(i, i + w, weights.wy[i], scale, &mut branches);
            }
        }
    }
    let value = energy / mean;
    let shared = energy / (mean * mean * count);
    grad.iter_mut().for_each(|g| *g = *g / mean - shared);
    Ok(SmoothnessEvaluation {
        value,
        grad,
        branches,
    })
}

/// Edge-aware smoothness and its per-pixel gradient.
pub fn smoothness_loss(depth: &DepthMap, img: &Image) -> Result<(f64, Vec<f64>)> {
    let e = smoothness_evaluate(depth, &EdgeWeights::new(img), None)?;
    Ok((e.value, e.grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_depth_is_zero() {
        let d = DepthMap::from_fn(10, 8, |_, _| 3.0).unwrap();
        let img = Image::from_fn(10, 8, 1, |x, _, _| (x % 2) as f64).unwrap();
        assert_eq!(smoothness_loss(&d, &img).unwrap().0, 0.0);
    }

    #[test]
    fn ramp_over_flat_image() {
        let (w, h) = (20, 6);
        let d = DepthMap::from_fn(w, h, |x, _| 1.0 + 0.01 * x as f64).unwrap();
        let mean = 1.0 + 0.01 * (w - 1) as f64 / 2.0;
        let flat = Image::filled(w, h, &[0.5]).unwrap();
        let (v, _) = smoothness_loss(&d, &flat).unwrap();
        assert!((v - 0.01 / mean).abs() < 1e-14);

        let stripes = Image::from_fn(w, h, 1, |x, _, _| (x % 2) as f64).unwrap();
        let (v2, _) = smoothness_loss(&d, &stripes).unwrap();
        assert!(v2 < v);
    }

    #[test]
    fn size_mismatch() {
        let d = DepthMap::from_fn(4, 4, |_, _| 1.0).unwrap();
        let img = Image::filled(5, 4, &[0.5]).unwrap();
        assert!(smoothness_loss(&d, &img).is_err());
    }
}
