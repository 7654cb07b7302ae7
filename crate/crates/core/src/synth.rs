//! Procedurally textured piecewise-planar scenes rendered by ray casting.
//!
//! Every view is a pure function of world geometry, so a point seen from two
//! poses gets exactly the same color, and depth, poses and plane labels are
//! known exactly.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DepthMap, Image, Intrinsics, PixelPoint, PoseSE3, CHEIRALITY_EPS};
use crate::planes::PlaneParams;
use crate::superpixels::LabelMap;

/// Texture values are kept inside this range.
pub const TEXTURE_MIN: f64 = 0.05;
pub const TEXTURE_MAX: f64 = 0.95;
/// Plane depths in the target view must fall inside this range.
pub const PLANE_DEPTH_RANGE: (f64, f64) = (0.5, 8.0);
/// Largest allowed texture frequency in image space.
pub const MAX_CYCLES_PER_PIXEL: f64 = 0.25;

/// One term `amplitude · sin(2π frequency·X + phase)` of a texture.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    pub amplitude: f64,
    /// Cycles per scene unit along each world axis.
    pub frequency: [f64; 3],
    pub phase: f64,
}

/// Per-channel base color plus a shared sum of 3-D sinusoids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Texture {
    SinusoidSum { base: [f64; 3], waves: Vec<Wave> },
}

impl Texture {
    pub fn eval(&self, x: &Vector3<f64>) -> [f64; 3] {
        match self {
            Texture::SinusoidSum { base, waves } => {
                let s: f64 = waves
                    .iter()
                    .map(|w| {
                        let f = Vector3::from(w.frequency);
                        w.amplitude * (std::f64::consts::TAU * f.dot(x) + w.phase).sin()
                    })
                    .sum();
                base.map(|b| b + s)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Texture::SinusoidSum { base, waves } => {
                let swing: f64 = waves.iter().map(|w| w.amplitude.abs()).sum();
                let finite = waves
                    .iter()
                    .all(|w| w.amplitude.is_finite() && w.phase.is_finite() && w.frequency.iter().all(|f| f.is_finite()));
                let in_range = base
                    .iter()
                    .all(|b| b - swing >= TEXTURE_MIN - 1e-12 && b + swing <= TEXTURE_MAX + 1e-12);
                if finite && in_range {
                    Ok(())
                } else {
                    Err(Error::precondition(format!(
                        "texture can leave [{TEXTURE_MIN}, {TEXTURE_MAX}]: base {base:?}, swing {swing}"
                    )))
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanePrimitive {
    pub a: PlaneParams,
    pub texture: Texture,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub planes: Vec<PlanePrimitive>,
    pub k: Intrinsics,
    pub width: usize,
    pub height: usize,
    /// Target-to-source motion of each source view.
    pub source_poses: Vec<PoseSE3>,
    pub seed: u64,
}

/// Rendered views and their exact ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedScene {
    pub target: Image,
    pub sources: Vec<Image>,
    /// Target view first, then one map per source.
    pub gt_depth: Vec<DepthMap>,
    pub gt_poses: Vec<PoseSE3>,
    pub gt_plane_labels: LabelMap,
    /// Index into `planes` for every target label id.
    pub label_planes: Vec<usize>,
}

/// Nearest positive hit along the ray `origin + λ·dir`.
fn nearest_hit(planes: &[PlanePrimitive], origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in planes.iter().enumerate() {
        let den = p.a.a.dot(dir);
        if den.abs() < 1e-15 {
            continue;
        }
        let lambda = (1.0 - p.a.a.dot(origin)) / den;
        if lambda > CHEIRALITY_EPS && best.map_or(true, |(_, l)| lambda < l) {
            best = Some((i, lambda));
        }
    }
    best
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.planes.is_empty() {
            return Err(Error::precondition("scene has no planes"));
        }
        self.k.validate(self.width, self.height)?;
        for (i, p) in self.planes.iter().enumerate() {
            if !(p.a.a.iter().all(|c| c.is_finite()) && p.a.a.norm() > 0.0) {
                return Err(Error::precondition(format!("plane {i} has invalid parameters")));
            }
            p.texture.validate()?;
        }
        if self.source_poses.iter().any(|t| !t.is_valid(1e-9)) {
            return Err(Error::precondition("source pose is not a rigid motion"));
        }
        Ok(())
    }

    /// Default scene: back wall at `z = 4`, floor at `y = 1`, side wall at
    /// `x = −1.5`, seen by a camera with a 192×144-style field of view
    /// scaled to `width`×`height`. Textures are drawn from `seed`.
    pub fn three_plane(width: usize, height: usize, sources: usize, seed: u64) -> Result<Self> {
        if sources == 0 {
            return Err(Error::precondition("at least one source view is required"));
        }
        let f = 160.0 * width as f64 / 192.0;
        let k = Intrinsics {
            fx: f,
            fy: f,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Tangent directions of each plane and a frequency band in cycles per
        // unit at width 192, well below the image-space limit at these depths.
        // Bands scale with the focal length so the image-space frequency does
        // not depend on resolution.
        let res = width as f64 / 192.0;
        let layout: [(Vector3<f64>, [Vector3<f64>; 2], (f64, f64), [f64; 3]); 3] = [
            (
                Vector3::new(0.0, 0.0, 0.25),
                [Vector3::x(), Vector3::y()],
                (1.2, 3.0),
                [0.55, 0.5, 0.45],
            ),
            (
                Vector3::new(0.0, 1.0, 0.0),
                [Vector3::x(), Vector3::z()],
                (0.6, 1.4),
                [0.45, 0.5, 0.55],
            ),
            (
                Vector3::new(-1.0 / 1.5, 0.0, 0.0),
                [Vector3::y(), Vector3::z()],
                (0.6, 1.4),
                [0.5, 0.55, 0.5],
            ),
        ];
        let amplitudes = [0.14, 0.1, 0.08];
        let planes = layout
            .iter()
            .map(|(a, tangents, band, base)| {
                let waves = amplitudes
                    .iter()
                    .map(|&amp| {
                        let theta = rng.random_range(0.0..std::f64::consts::PI);
                        let mag = rng.random_range(band.0..band.1) * res;
                        let f = (tangents[0] * theta.cos() + tangents[1] * theta.sin()) * mag;
                        Wave {
                            amplitude: amp,
                            frequency: [f.x, f.y, f.z],
                            phase: rng.random_range(0.0..std::f64::consts::TAU),
                        }
                    })
                    .collect();
                PlanePrimitive {
                    a: PlaneParams { a: *a },
                    texture: Texture::SinusoidSum { base: *base, waves },
                }
            })
            .collect();
        let source_poses = (0..sources).map(default_source_pose).collect();
        Ok(Self {
            planes,
            k,
            width,
            height,
            source_poses,
            seed,
        })
    }
}

/// Small sideways and forward motions with slight rotations, alternating
/// sides and growing with the index, like frames `t±1, t±2`.
fn default_source_pose(i: usize) -> PoseSE3 {
    let side = if i % 2 == 0 { 1.0 } else { -1.0 };
    let step = (i / 2 + 1) as f64;
    let t = Vector3::new(0.05 * side, 0.01 * side, 0.02) * step;
    let axis = Vector3::new(0.3 * side, 1.0, 0.1).normalize();
    let r = PoseSE3::from_axis_angle(axis, -side * step * 0.5f64.to_radians());
    PoseSE3::new(r.rotation, t)
}

/// Renders the scene from `pose` (world-to-camera).
pub fn render_view(spec: &SceneSpec, pose: &PoseSE3) -> Result<(Image, DepthMap, LabelMap)> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let rt = pose.rotation.transpose();
    let origin = -(rt * pose.translation);
    let hits: Vec<Result<(usize, f64, [f64; 3])>> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (x, y) = (i % w, i / w);
            let ray_cam = spec.k.unproject_ray(&PixelPoint::new(x as f64, y as f64));
            let dir = rt * ray_cam;
            // Camera-frame depth equals λ because the ray has unit z.
            let (plane, lambda) = nearest_hit(&spec.planes, &origin, &dir).ok_or(Error::Coverage { x, y })?;
            let color = spec.planes[plane].texture.eval(&(origin + dir * lambda));
            Ok((plane, lambda, color))
        })
        .collect();
    let mut depth = Vec::with_capacity(w * h);
    let mut labels = Vec::with_capacity(w * h);
    let mut data = Vec::with_capacity(3 * w * h);
    for hit in hits {
        let (plane, lambda, color) = hit?;
        depth.push(lambda);
        labels.push(plane as u32);
        data.extend(color.iter().map(|c| c.clamp(TEXTURE_MIN, TEXTURE_MAX)));
    }
    Ok((
        Image::new(w, h, 3, data)?,
        DepthMap::new(w, h, depth)?,
        LabelMap::from_raw(w, h, &labels)?,
    ))
}

/// Renders the target at the identity pose and every source view.
pub fn make_scene(spec: &SceneSpec) -> Result<RenderedScene> {
    spec.validate()?;
    let (target, target_depth, _) = render_view(spec, &PoseSE3::identity())?;
    // Plane ids in first-appearance order, matching the renumbered labels.
    let raw = raw_plane_ids(spec)?;
    let mut label_planes = Vec::new();
    for &p in &raw {
        if !label_planes.contains(&p) {
            label_planes.push(p);
        }
    }
    let raw_u32: Vec<u32> = raw.iter().map(|&p| p as u32).collect();
    let gt_plane_labels = LabelMap::from_raw(spec.width, spec.height, &raw_u32)?;
    let w = spec.width;
    let (lo, hi) = PLANE_DEPTH_RANGE;
    if let Some(i) = target_depth.data().iter().position(|d| !(lo..=hi).contains(d)) {
        return Err(Error::precondition(format!(
            "target depth {} at pixel ({}, {}) outside [{lo}, {hi}]",
            target_depth.data()[i],
            i % w,
            i / w
        )));
    }
    let mut sources = Vec::with_capacity(spec.source_poses.len());
    let mut gt_depth = vec![target_depth];
    for pose in &spec.source_poses {
        let (img, d, _) = render_view(spec, pose)?;
        sources.push(img);
        gt_depth.push(d);
    }
    Ok(RenderedScene {
        target,
        sources,
        gt_depth,
        gt_poses: spec.source_poses.clone(),
        gt_plane_labels,
        label_planes,
    })
}

fn raw_plane_ids(spec: &SceneSpec) -> Result<Vec<usize>> {
    let w = spec.width;
    (0..w * spec.height)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            nearest_hit(&spec.planes, &Vector3::zeros(), &spec.k.unproject_ray(&PixelPoint::new(x as f64, y as f64)))
                .map(|(p, _)| p)
                .ok_or(Error::Coverage { x, y })
        })
        .collect()
}

/// Largest image-space texture frequency (cycles per pixel) over the
/// target view, measured from phase changes between neighboring pixels.
pub fn max_image_frequency(spec: &SceneSpec) -> Result<f64> {
    let (w, h) = (spec.width, spec.height);
    let point = |x: usize, y: usize| -> Result<(usize, Vector3<f64>)> {
        let ray = spec.k.unproject_ray(&PixelPoint::new(x as f64, y as f64));
        let (p, l) = nearest_hit(&spec.planes, &Vector3::zeros(), &ray).ok_or(Error::Coverage { x, y })?;
        Ok((p, ray * l))
    };
    let mut worst: f64 = 0.0;
    for y in 0..h {
        for x in 0..w {
            let (p, xp) = point(x, y)?;
            for (nx, ny) in [(x + 1, y), (x, y + 1)] {
                if nx >= w || ny >= h {
                    continue;
                }
                let (q, xq) = point(nx, ny)?;
                if p != q {
                    continue;
                }
                let Texture::SinusoidSum { waves, .. } = &spec.planes[p].texture;
                for wv in waves {
                    let f = Vector3::from(wv.frequency);
                    worst = worst.max(f.dot(&(xq - xp)).abs());
                }
            }
        }
    }
    Ok(worst)
}
