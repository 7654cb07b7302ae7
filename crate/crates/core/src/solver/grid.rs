use crate::error::{Error, Result};
use crate::geometry::DepthMap;

/// Log-depth values on a coarse grid, bilinearly upsampled to image size.
///
/// Grid node `(u, v)` sits at image coordinate
/// `(u·(W−1)/(gw−1), v·(H−1)/(gh−1))`, so corner nodes coincide with corner
/// pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthGrid {
    pub grid_width: usize,
    pub grid_height: usize,
    pub image_width: usize,
    pub image_height: usize,
    pub log_depth: Vec<f64>,
}

fn grid_len(image: usize, scale: usize) -> usize {
    image.div_ceil(scale).max(2).min(image)
}

fn axis_map(image: usize, grid: usize) -> f64 {
    if image > 1 {
        (grid - 1) as f64 / (image - 1) as f64
    } else {
        0.0
    }
}

impl DepthGrid {
    /// Grid for a `scale`-times downsampled representation, filled with `depth`.
    pub fn constant(image_width: usize, image_height: usize, scale: usize, depth: f64) -> Result<Self> {
        if scale == 0 {
            return Err(Error::precondition("grid scale must be at least 1"));
        }
        if !(depth.is_finite() && depth > 0.0) {
            return Err(Error::InvalidDepth(depth));
        }
        if image_width == 0 || image_height == 0 {
            return Err(Error::ImageSize {
                width: image_width,
                height: image_height,
                reason: "depth grid needs a non-empty image".into(),
            });
        }
        let gw = grid_len(image_width, scale);
        let gh = grid_len(image_height, scale);
        Ok(Self {
            grid_width: gw,
            grid_height: gh,
            image_width,
            image_height,
            log_depth: vec![depth.ln(); gw * gh],
        })
    }

    /// Samples `ln(depth)` of a dense map at the grid nodes.
    pub fn from_depth_map(depth: &DepthMap, scale: usize) -> Result<Self> {
        let mut g = Self::constant(depth.width(), depth.height(), scale, 1.0)?;
        let sx = 1.0 / axis_map(depth.width(), g.grid_width).max(f64::MIN_POSITIVE);
        let sy = 1.0 / axis_map(depth.height(), g.grid_height).max(f64::MIN_POSITIVE);
        for v in 0..g.grid_height {
            for u in 0..g.grid_width {
                let x = (u as f64 * sx).min((depth.width() - 1) as f64);
                let y = (v as f64 * sy).min((depth.height() - 1) as f64);
                g.log_depth[v * g.grid_width + u] = sample_log(depth, x, y)?;
            }
        }
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.log_depth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_depth.is_empty()
    }

    /// Grid nodes and weights contributing to pixel `(x, y)`.
    #[inline]
    pub fn pixel_weights(&self, x: usize, y: usize) -> [(usize, f64); 4] {
        let gx = x as f64 * axis_map(self.image_width, self.grid_width);
        let gy = y as f64 * axis_map(self.image_height, self.grid_height);
        let x0 = (gx.floor() as usize).min(self.grid_width.saturating_sub(2));
        let y0 = (gy.floor() as usize).min(self.grid_height.saturating_sub(2));
        let x1 = (x0 + 1).min(self.grid_width - 1);
        let y1 = (y0 + 1).min(self.grid_height - 1);
        let ax = gx - x0 as f64;
        let ay = gy - y0 as f64;
        let gw = self.grid_width;
        [
            (y0 * gw + x0, (1.0 - ax) * (1.0 - ay)),
            (y0 * gw + x1, ax * (1.0 - ay)),
            (y1 * gw + x0, (1.0 - ax) * ay),
            (y1 * gw + x1, ax * ay),
        ]
    }

    /// Dense depth `exp(upsampled log-depth)`.
    pub fn to_depth_map(&self) -> DepthMap {
        let data = (0..self.image_height)
            .flat_map(|y| (0..self.image_width).map(move |x| (x, y)))
            .map(|(x, y)| {
                self.pixel_weights(x, y)
                    .iter()
                    .map(|&(i, w)| w * self.log_depth[i])
                    .sum::<f64>()
                    .exp()
            })
            .collect();
        DepthMap::new(self.image_width, self.image_height, data)
            .expect("exp of finite log-depth is positive")
    }

    /// Chains a per-pixel depth gradient through `exp` and the upsampling.
    pub fn backpropagate(&self, depth: &DepthMap, d_depth: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.log_depth.len()];
        for y in 0..self.image_height {
            for x in 0..self.image_width {
                let i = y * self.image_width + x;
                let g = d_depth[i];
                if g == 0.0 {
                    continue;
                }
                let gd = g * depth.data()[i];
                for (node, w) in self.pixel_weights(x, y) {
                    out[node] += gd * w;
                }
            }
        }
        out
    }

    /// Clamps depths to `[d_min, d_max]`.
    pub fn clamp(&mut self, d_min: f64, d_max: f64) {
        let (lo, hi) = (d_min.ln(), d_max.ln());
        self.log_depth.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
    }
}

fn sample_log(depth: &DepthMap, x: f64, y: f64) -> Result<f64> {
    let (w, h) = (depth.width(), depth.height());
    let x0 = (x.floor() as usize).min(w.saturating_sub(2));
    let y0 = (y.floor() as usize).min(h.saturating_sub(2));
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let (ax, ay) = (x - x0 as f64, y - y0 as f64);
    let mut acc = 0.0;
    let mut wsum = 0.0;
    for (xx, yy, wt) in [
        (x0, y0, (1.0 - ax) * (1.0 - ay)),
        (x1, y0, ax * (1.0 - ay)),
        (x0, y1, (1.0 - ax) * ay),
        (x1, y1, ax * ay),
    ] {
        let i = yy * w + xx;
        if wt > 0.0 && depth.is_valid_index(i) {
            acc += wt * depth.data()[i].ln();
            wsum += wt;
        }
    }
    if wsum > 0.0 {
        Ok(acc / wsum)
    } else {
        Err(Error::precondition(format!(
            "no valid depth near grid node at ({x}, {y})"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_dimensions() {
        let g = DepthGrid::constant(192, 144, 4, 2.0).unwrap();
        assert_eq!((g.grid_width, g.grid_height), (48, 36));
        let g = DepthGrid::constant(192, 144, 1, 2.0).unwrap();
        assert_eq!((g.grid_width, g.grid_height), (192, 144));
    }

    #[test]
    fn full_resolution_round_trip() {
        let d = DepthMap::from_fn(9, 7, |x, y| 1.0 + 0.1 * x as f64 + 0.05 * y as f64).unwrap();
        let g = DepthGrid::from_depth_map(&d, 1).unwrap();
        let back = g.to_depth_map();
        for (a, b) in back.data().iter().zip(d.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_sum_to_one_and_corners_align() {
        let g = DepthGrid::constant(192, 144, 4, 2.0).unwrap();
        for (x, y) in [(0, 0), (191, 143), (57, 101), (191, 0)] {
            let w: f64 = g.pixel_weights(x, y).iter().map(|p| p.1).sum();
            assert!((w - 1.0).abs() < 1e-12);
        }
        let last = g.pixel_weights(191, 143);
        assert!((last[3].1 - 1.0).abs() < 1e-12);
        assert_eq!(last[3].0, g.len() - 1);
    }

    #[test]
    fn backpropagation_matches_differences() {
        let mut g = DepthGrid::constant(20, 16, 4, 2.0).unwrap();
        for (i, v) in g.log_depth.iter_mut().enumerate() {
            *v += 0.01 * (i as f64).sin();
        }
        // Linear functional of depth: sum_i c_i D_i.
        let c: Vec<f64> = (0..320).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let f = |g: &DepthGrid| -> f64 {
            g.to_depth_map().data().iter().zip(&c).map(|(d, c)| d * c).sum()
        };
        let depth = g.to_depth_map();
        let analytic = g.backpropagate(&depth, &c);
        for node in [0, 7, 13, g.len() - 1] {
            let mut hi = g.clone();
            let mut lo = g.clone();
            hi.log_depth[node] += 1e-6;
            lo.log_depth[node] -= 1e-6;
            let fd = (f(&hi) - f(&lo)) / 2e-6;
            assert!((fd - analytic[node]).abs() < 1e-6 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn clamping() {
        let mut g = DepthGrid::constant(8, 8, 2, 50.0).unwrap();
        g.clamp(0.1, 10.0);
        assert!(g.to_depth_map().data().iter().all(|d| (d - 10.0).abs() < 1e-9));
    }
}
