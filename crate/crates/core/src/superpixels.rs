//! Graph-based (Felzenszwalb–Huttenlocher) segmentation and the large-region
//! filter used as a planar prior.
//!
//! Pixels are nodes of an 8-connected grid graph weighted by color distance.
//! Edges are visited in nondecreasing `(weight, index)` order and two
//! components merge when the edge is no heavier than either component's
//! internal difference plus `k / |C|`. Components are then split into
//! 4-connected pieces, and pieces below `min_size` are absorbed along their
//! lightest 4-adjacent edge.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Image;

pub const DEFAULT_SIGMA: f64 = 0.8;
pub const DEFAULT_K: f64 = 300.0 / 255.0;
pub const DEFAULT_MIN_SIZE: usize = 100;
pub const DEFAULT_MIN_AREA: usize = 1000;

/// Per-pixel segment ids, contiguous from 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
}

impl LabelMap {
    /// Builds a label map, renumbering ids to be contiguous in order of
    /// first appearance.
    pub fn from_raw(width: usize, height: usize, raw: &[u32]) -> Result<Self> {
        if raw.len() != width * height || raw.is_empty() {
            return Err(Error::precondition("label data does not match image size"));
        }
        let max = *raw.iter().max().unwrap() as usize;
        let mut remap = vec![u32::MAX; max + 1];
        let mut next = 0u32;
        let labels = raw
            .iter()
            .map(|&l| {
                let slot = &mut remap[l as usize];
                if *slot == u32::MAX {
                    *slot = next;
                    next += 1;
                }
                *slot
            })
            .collect();
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn segment_count(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| *m as usize + 1)
    }

    pub fn areas(&self) -> Vec<usize> {
        let mut areas = vec![0; self.segment_count()];
        for &l in &self.labels {
            areas[l as usize] += 1;
        }
        areas
    }

    /// True when every segment is a single 4-connected component.
    pub fn is_four_connected(&self) -> bool {
        let comps = four_connected_components(self.width, self.height, |i| self.labels[i]);
        comps.1 == self.segment_count()
    }
}

/// A segment with its pixel coordinates in row-major order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Superpixel {
    pub id: u32,
    pub pixels: Vec<(usize, usize)>,
    pub area: usize,
}

struct DisjointSets {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Unions two roots; the larger (then lower-index) root survives.
    fn union(&mut self, a: usize, b: usize) -> usize {
        let (keep, drop) = if self.size[a] > self.size[b] || (self.size[a] == self.size[b] && a < b) {
            (a, b)
        } else {
            (b, a)
        };
        self.parent[drop] = keep;
        self.size[keep] += self.size[drop];
        keep
    }
}

#[derive(Clone, Copy)]
struct Edge {
    a: usize,
    b: usize,
    w: f64,
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as usize;
    let mut k: Vec<f64> = (0..=radius)
        .map(|i| (-0.5 * (i as f64 / sigma).powi(2)).exp())
        .collect();
    let sum = k[0] + 2.0 * k[1..].iter().sum::<f64>();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur with clamped borders, per channel.
fn smooth(img: &Image, sigma: f64) -> Vec<f64> {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let src = img.data().to_vec();
    if sigma <= 0.0 {
        return src;
    }
    let k = gaussian_kernel(sigma);
    let r = k.len() as isize - 1;
    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
    let mut tmp = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for o in -r..=r {
                    let xx = clamp(x as isize + o, w);
                    acc += k[o.unsigned_abs()] * src[(y * w + xx) * c + ch];
                }
                tmp[(y * w + x) * c + ch] = acc;
            }
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for o in -r..=r {
                    let yy = clamp(y as isize + o, h);
                    acc += k[o.unsigned_abs()] * tmp[(yy * w + x) * c + ch];
                }
                out[(y * w + x) * c + ch] = acc;
            }
        }
    }
    out
}

/// Labels 4-connected runs of equal `key`; returns per-pixel piece ids and
/// the piece count.
fn four_connected_components(
    w: usize,
    h: usize,
    key: impl Fn(usize) -> u32,
) -> (Vec<usize>, usize) {
    let mut piece = vec![usize::MAX; w * h];
    let mut count = 0;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if piece[start] != usize::MAX {
            continue;
        }
        let k = key(start);
        piece[start] = count;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if piece[j] == usize::MAX && key(j) == k {
                    piece[j] = count;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        count += 1;
    }
    (piece, count)
}

fn sort_edges(edges: &mut [(usize, Edge)]) {
    edges.sort_by(|(ia, a), (ib, b)| a.w.total_cmp(&b.w).then(ia.cmp(ib)));
}

/// Graph-based segmentation. `k` is in intensity units of `[0, 1]` images.
pub fn felzenszwalb_segment(img: &Image, k: f64, sigma: f64, min_size: usize) -> Result<LabelMap> {
    if !(k > 0.0) || !(sigma >= 0.0) || min_size < 1 {
        return Err(Error::precondition(format!(
            "segmentation needs k > 0, sigma >= 0, min_size >= 1 (got {k}, {sigma}, {min_size})"
        )));
    }
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let data = smooth(img, sigma);
    let dist = |a: usize, b: usize| -> f64 {
        (0..c)
            .map(|ch| (data[a * c + ch] - data[b * c + ch]).powi(2))
            .sum::<f64>()
            .sqrt()
    };

    let mut edges: Vec<(usize, Edge)> = Vec::with_capacity(w * h * 4);
    let mut push = |a: usize, b: usize| {
        let idx = edges.len();
        edges.push((idx, Edge { a, b, w: dist(a, b) }));
    };
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                push(i, i + 1);
            }
            if y + 1 < h {
                push(i, i + w);
            }
            if x + 1 < w && y + 1 < h {
                push(i, i + w + 1);
            }
            if x + 1 < w && y > 0 {
                push(i, i - w + 1);
            }
        }
    }
    sort_edges(&mut edges);

    let mut sets = DisjointSets::new(w * h);
    let mut threshold = vec![k; w * h];
    for (_, e) in &edges {
        let (a, b) = (sets.find(e.a), sets.find(e.b));
        if a != b && e.w <= threshold[a] && e.w <= threshold[b] {
            let root = sets.union(a, b);
            threshold[root] = e.w + k / sets.size[root] as f64;
        }
    }

    let roots: Vec<u32> = (0..w * h).map(|i| sets.find(i) as u32).collect();
    let (piece, pieces) = four_connected_components(w, h, |i| roots[i]);

    // Absorb small pieces along their lightest 4-adjacent edges.
    let mut four: Vec<(usize, Edge)> = edges
        .iter()
        .filter(|(_, e)| e.b == e.a + 1 || e.b == e.a + w)
        .copied()
        .collect();
    sort_edges(&mut four);
    let mut merged = DisjointSets::new(pieces);
    merged.size.iter_mut().for_each(|s| *s = 0);
    for &p in &piece {
        merged.size[p] += 1;
    }
    for (_, e) in &four {
        let (a, b) = (merged.find(piece[e.a]), merged.find(piece[e.b]));
        if a != b && (merged.size[a] < min_size || merged.size[b] < min_size) {
            merged.union(a, b);
        }
    }

    let raw: Vec<u32> = piece.iter().map(|&p| merged.find(p) as u32).collect();
    LabelMap::from_raw(w, h, &raw)
}

/// Segments with area strictly greater than `min_area`, largest first.
pub fn large_regions(lm: &LabelMap, min_area: usize) -> Vec<Superpixel> {
    let mut pixels: Vec<Vec<(usize, usize)>> = vec![Vec::new(); lm.segment_count()];
    for y in 0..lm.height {
        for x in 0..lm.width {
            pixels[lm.get(x, y) as usize].push((x, y));
        }
    }
    let mut out: Vec<Superpixel> = pixels
        .into_iter()
        .enumerate()
        .filter(|(_, px)| px.len() > min_area)
        .map(|(id, px)| Superpixel {
            id: id as u32,
            area: px.len(),
            pixels: px,
        })
        .collect();
    out.sort_by(|a, b| b.area.cmp(&a.area).then(a.id.cmp(&b.id)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn halves(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, 1, |x, _, _| if x < w / 2 { 0.25 } else { 0.75 }).unwrap()
    }

    #[test]
    fn uniform_image_is_one_segment() {
        let img = Image::filled(40, 30, &[0.3, 0.6, 0.1]).unwrap();
        let lm = felzenszwalb_segment(&img, DEFAULT_K, DEFAULT_SIGMA, DEFAULT_MIN_SIZE).unwrap();
        assert_eq!(lm.segment_count(), 1);
    }

    #[test]
    fn two_halves_without_smoothing() {
        let lm = felzenszwalb_segment(&halves(40, 30), 100.0 / 255.0, 0.0, 1).unwrap();
        assert_eq!(lm.segment_count(), 2);
        assert_eq!(lm.areas(), vec![600, 600]);
    }

    #[test]
    fn rejects_bad_parameters() {
        let img = Image::filled(4, 4, &[0.3]).unwrap();
        assert!(felzenszwalb_segment(&img, 0.0, 0.8, 10).is_err());
        assert!(felzenszwalb_segment(&img, 1.0, -1.0, 10).is_err());
        assert!(felzenszwalb_segment(&img, 1.0, 0.8, 0).is_err());
    }

    #[test]
    fn kernel_is_normalized() {
        let k = gaussian_kernel(0.8);
        assert_eq!(k.len(), 5);
        let total = k[0] + 2.0 * k[1..].iter().sum::<f64>();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn large_region_filter() {
        let raw: Vec<u32> = (0..2000).map(|i| if i < 1200 { 0 } else { 1 }).collect();
        let lm = LabelMap::from_raw(50, 40, &raw).unwrap();
        let r = large_regions(&lm, 1000);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].area, 1200);
        assert_eq!(r[0].pixels.len(), 1200);
        assert!(large_regions(&lm, 1200).is_empty());
        assert_eq!(large_regions(&lm, 100).len(), 2);
    }

    #[test]
    fn labels_are_renumbered_contiguously() {
        let lm = LabelMap::from_raw(3, 1, &[7, 2, 7]).unwrap();
        assert_eq!(lm.labels, vec![0, 1, 0]);
        assert!(!lm.is_four_connected());
    }
}
