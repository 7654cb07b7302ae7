//! Gradient-based keypoint selection padded with seeded random points.
//!
//! The interior (image minus a border margin) is tiled into square cells. A
//! cell contributes its strongest pixel when that pixel's gradient magnitude
//! exceeds the cell median by [`GRADIENT_THRESHOLD`]. The set is then filled
//! with distinct random interior pixels up to the requested count.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Image, PixelPoint};

pub const DEFAULT_BLOCK: usize = 16;
pub const GRADIENT_THRESHOLD: f64 = 7.0 / 255.0;
pub const DEFAULT_COUNT: usize = 3000;

/// Per-pixel luminance gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientMap {
    pub width: usize,
    pub height: usize,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
    pub magnitude: Vec<f64>,
}

impl GradientMap {
    #[inline]
    pub fn magnitude_at(&self, x: usize, y: usize) -> f64 {
        self.magnitude[y * self.width + x]
    }
}

/// Central differences inside the image, one-sided on the border.
pub fn gradient_map(img: &Image) -> Result<GradientMap> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(Error::ImageSize {
            width: w,
            height: h,
            reason: "gradients need at least 3x3 pixels".into(),
        });
    }
    let lum = img.luminance();
    let at = |x: usize, y: usize| lum.get(x, y, 0);
    let diff = |lo: f64, hi: f64, span: usize| (hi - lo) / span as f64;
    let mut gx = Vec::with_capacity(w * h);
    let mut gy = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            gx.push(match x {
                0 => diff(at(0, y), at(1, y), 1),
                _ if x == w - 1 => diff(at(w - 2, y), at(w - 1, y), 1),
                _ => diff(at(x - 1, y), at(x + 1, y), 2),
            });
            gy.push(match y {
                0 => diff(at(x, 0), at(x, 1), 1),
                _ if y == h - 1 => diff(at(x, h - 2), at(x, h - 1), 1),
                _ => diff(at(x, y - 1), at(x, y + 1), 2),
            });
        }
    }
    let magnitude = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    Ok(GradientMap {
        width: w,
        height: h,
        gx,
        gy,
        magnitude,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    Gradient,
    RandomFill,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Gradient => "gradient",
            Origin::RandomFill => "random-fill",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: usize,
    pub y: usize,
    pub origin: Origin,
}

impl Keypoint {
    pub fn pixel(&self) -> PixelPoint {
        PixelPoint::new(self.x as f64, self.y as f64)
    }
}

/// Ordered keypoints: gradient-selected in cell-major order, then fill order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeypointSet {
    pub points: Vec<Keypoint>,
    pub margin: usize,
    pub seed: u64,
}

impl KeypointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn gradient_count(&self) -> usize {
        self.points
            .iter()
            .filter(|p| p.origin == Origin::Gradient)
            .count()
    }

    /// One `x,y,origin` line per point.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.points.len() * 16);
        for p in &self.points {
            let _ = writeln!(s, "{},{},{}", p.x, p.y, p.origin.as_str());
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionParams {
    pub count: usize,
    pub block: usize,
    pub margin: usize,
    pub threshold: f64,
    pub seed: u64,
}

impl SelectionParams {
    /// Defaults for a given support-window size: margin `n + 1`.
    pub fn for_window(window_n: usize, count: usize, seed: u64) -> Self {
        Self {
            count,
            block: DEFAULT_BLOCK,
            margin: window_n + 1,
            threshold: GRADIENT_THRESHOLD,
            seed,
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Selects exactly `count` keypoints with the default gradient threshold.
pub fn select_keypoints(
    g: &GradientMap,
    count: usize,
    block: usize,
    margin: usize,
    seed: u64,
) -> Result<KeypointSet> {
    select_keypoints_with(
        g,
        &SelectionParams {
            count,
            block,
            margin,
            threshold: GRADIENT_THRESHOLD,
            seed,
        },
    )
}

pub fn select_keypoints_with(g: &GradientMap, params: &SelectionParams) -> Result<KeypointSet> {
    let SelectionParams {
        count,
        block,
        margin,
        threshold,
        seed,
    } = *params;
    if count == 0 {
        return Err(Error::precondition("keypoint count must be at least 1"));
    }
    if block < 2 {
        return Err(Error::precondition("cell size must be at least 2"));
    }
    let (w, h) = (g.width, g.height);
    let inner_w = w.saturating_sub(2 * margin);
    let inner_h = h.saturating_sub(2 * margin);
    let available = inner_w * inner_h;
    if available < count {
        return Err(Error::Capacity {
            requested: count,
            available,
        });
    }

    // Strongest pixel per cell, cell-major order.
    let mut picked: Vec<(usize, usize, f64)> = Vec::new();
    let mut cell = Vec::with_capacity(block * block);
    for cy in (0..inner_h).step_by(block) {
        for cx in (0..inner_w).step_by(block) {
            cell.clear();
            let mut best = (0, 0, f64::NEG_INFINITY);
            for y in margin + cy..margin + (cy + block).min(inner_h) {
                for x in margin + cx..margin + (cx + block).min(inner_w) {
                    let m = g.magnitude_at(x, y);
                    cell.push(m);
                    if m > best.2 {
                        best = (x, y, m);
                    }
                }
            }
            if best.2 > median(&mut cell) + threshold {
                picked.push(best);
            }
        }
    }
    if picked.len() > count {
        // Keep the strongest, preserving cell order among survivors.
        let mut order: Vec<usize> = (0..picked.len()).collect();
        order.sort_by(|&a, &b| picked[b].2.total_cmp(&picked[a].2).then(a.cmp(&b)));
        let mut keep = order[..count].to_vec();
        keep.sort_unstable();
        picked = keep.into_iter().map(|i| picked[i]).collect();
    }

    let mut points: Vec<Keypoint> = picked
        .iter()
        .map(|&(x, y, _)| Keypoint {
            x,
            y,
            origin: Origin::Gradient,
        })
        .collect();
    let taken: HashSet<(usize, usize)> = points.iter().map(|p| (p.x, p.y)).collect();

    let needed = count - points.len();
    if needed > 0 {
        let free: Vec<(usize, usize)> = (margin..margin + inner_h)
            .flat_map(|y| (margin..margin + inner_w).map(move |x| (x, y)))
            .filter(|xy| !taken.contains(xy))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in rand::seq::index::sample(&mut rng, free.len(), needed) {
            let (x, y) = free[i];
            points.push(Keypoint {
                x,
                y,
                origin: Origin::RandomFill,
            });
        }
    }

    Ok(KeypointSet {
        points,
        margin,
        seed,
    })
}
