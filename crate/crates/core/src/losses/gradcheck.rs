//! Central finite-difference check of the analytic total-loss gradient.
//!
//! Both perturbed evaluations replay the branch choices of the unperturbed
//! one (bilinear cells, `|·|` signs, chosen sources, validity), so the
//! difference quotient differentiates the same smooth piece the analytic
//! gradient describes. Whether a plain re-evaluation would have switched
//! branches is reported per coordinate as `kink_crossed`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{evaluate, LossConfig};
use crate::error::{Error, Result};
use crate::geometry::{left_update, Twist};
use crate::solver::FrameBundle;

/// Denominator floor of the relative error, far above the difference
/// quotient's rounding noise.
pub const RELATIVE_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradCoordinate {
    LogDepth(usize),
    Twist { source: usize, component: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckEntry {
    pub coordinate: GradCoordinate,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
    pub kink_crossed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub max_rel_error: f64,
    pub depth_step: f64,
    pub twist_step: f64,
}

impl GradCheckReport {
    /// Largest relative error among coordinates whose plain re-evaluation did
    /// not switch branches.
    pub fn max_rel_error_smooth(&self) -> f64 {
        self.entries
            .iter()
            .filter(|e| !e.kink_crossed)
            .map(|e| e.rel_error)
            .fold(0.0, f64::max)
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_FLOOR)
}

fn perturbed(bundle: &FrameBundle, coord: GradCoordinate, h: f64) -> FrameBundle {
    let mut b = bundle.clone();
    match coord {
        GradCoordinate::LogDepth(i) => b.depth.log_depth[i] += h,
        GradCoordinate::Twist { source, component } => {
            let mut x = nalgebra::Vector6::zeros();
            x[component] = h;
            b.poses[source] = left_update(&b.poses[source], &Twist::from_vector(&x));
        }
    }
    b
}

/// Checks `samples` random log-depth coordinates and every twist coordinate.
pub fn gradient_check(
    bundle: &FrameBundle,
    cfg: &LossConfig,
    samples: usize,
    seed: u64,
    depth_step: f64,
    twist_step: f64,
) -> Result<GradCheckReport> {
    let base = evaluate(bundle, cfg, None)?;
    let n = bundle.depth.len();
    if samples > n {
        return Err(Error::precondition(format!(
            "cannot sample {samples} of {n} depth-grid coordinates"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords: Vec<GradCoordinate> = rand::seq::index::sample(&mut rng, n, samples)
        .into_iter()
        .map(GradCoordinate::LogDepth)
        .collect();
    for source in 0..bundle.sources.len() {
        for component in 0..6 {
            coords.push(GradCoordinate::Twist { source, component });
        }
    }

    let mut entries = Vec::with_capacity(coords.len());
    for coord in coords {
        let (h, analytic) = match coord {
            GradCoordinate::LogDepth(i) => (depth_step, base.gradients.d_logdepth[i]),
            GradCoordinate::Twist { source, component } => {
                (twist_step, base.gradients.d_twist[source][component])
            }
        };
        let hi = perturbed(bundle, coord, h);
        let lo = perturbed(bundle, coord, -h);
        let f_hi = evaluate(&hi, cfg, Some(&base.active))?.breakdown.total;
        let f_lo = evaluate(&lo, cfg, Some(&base.active))?.breakdown.total;
        let numeric = (f_hi - f_lo) / (2.0 * h);
        let kink_crossed = [&hi, &lo].iter().any(|b| {
            evaluate(b, cfg, None).map_or(true, |e| e.active != base.active)
        });
        entries.push(GradCheckEntry {
            coordinate: coord,
            analytic,
            numeric,
            rel_error: relative_error(analytic, numeric),
            kink_crossed,
        });
    }
    let max_rel_error = entries.iter().map(|e| e.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        entries,
        max_rel_error,
        depth_step,
        twist_step,
    })
}
