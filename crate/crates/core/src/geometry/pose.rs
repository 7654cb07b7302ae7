//! Rigid motions and their 6-vector tangent parameterization.
//!
//! A [`Twist`] `(v, w)` maps to a [`PoseSE3`] through the SE(3) exponential.
//! Rotations use Rodrigues' formula; below [`SMALL_ANGLE`] the trigonometric
//! coefficients switch to their Taylor series.

use nalgebra::{Matrix3, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

/// Rotation angle (radians) below which series expansions replace the
/// closed-form coefficients.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Tangent-space element: translational part `v`, rotational part `w` (radians).
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Twist {
    pub v: Vector3<f64>,
    pub w: Vector3<f64>,
}

impl Twist {
    pub fn new(v: Vector3<f64>, w: Vector3<f64>) -> Self {
        Self { v, w }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Packs as `[v, w]`.
    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.v.x, self.v.y, self.v.z, self.w.x, self.w.y, self.w.z)
    }

    pub fn from_vector(x: &Vector6<f64>) -> Self {
        Self {
            v: Vector3::new(x[0], x[1], x[2]),
            w: Vector3::new(x[3], x[4], x[5]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().chain(self.w.iter()).all(|c| c.is_finite())
    }
}

/// Rigid motion `X ↦ R·X + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "PoseRepr", into = "PoseRepr")]
pub struct PoseSE3 {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    rotation: [f64; 9],
    translation: [f64; 3],
}

impl From<PoseRepr> for PoseSE3 {
    fn from(r: PoseRepr) -> Self {
        PoseSE3 {
            rotation: Matrix3::from_row_slice(&r.rotation),
            translation: Vector3::from_column_slice(&r.translation),
        }
    }
}

impl From<PoseSE3> for PoseRepr {
    fn from(p: PoseSE3) -> Self {
        let m = &p.rotation;
        PoseRepr {
            rotation: [
                m[(0, 0)],
                m[(0, 1)],
                m[(0, 2)],
                m[(1, 0)],
                m[(1, 1)],
                m[(1, 2)],
                m[(2, 0)],
                m[(2, 1)],
                m[(2, 2)],
            ],
            translation: [p.translation.x, p.translation.y, p.translation.z],
        }
    }
}

impl Default for PoseSE3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl PoseSE3 {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(Matrix3::identity(), t)
    }

    /// Pure rotation about `axis` (need not be normalized) by `angle` radians.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Self {
        se3_exp(&Twist::new(Vector3::zeros(), axis.normalize() * angle))
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Checks `RᵀR = I` and `det R = 1` within `tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        let orth = (self.rotation.transpose() * self.rotation - Matrix3::identity()).abs().max();
        let det = (self.rotation.determinant() - 1.0).abs();
        orth <= tol && det <= tol && self.translation.iter().all(|c| c.is_finite())
    }

    /// Rotation angle in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        rotation_angle(&self.rotation)
    }
}

/// Angle of a rotation matrix, stable over the whole range `[0, π]`.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let s = 0.5 * vee(&(r - r.transpose())).norm();
    let c = 0.5 * (r.trace() - 1.0);
    s.atan2(c)
}

/// `[w]×`, the cross-product matrix.
pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Coefficients `(sinθ/θ, (1−cosθ)/θ², (θ−sinθ)/θ³)`.
fn rodrigues_coefficients(theta: f64) -> (f64, f64, f64) {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
    } else {
        let (s, c) = theta.sin_cos();
        let t2 = theta * theta;
        (s / theta, (1.0 - c) / t2, (theta - s) / (t2 * theta))
    }
}

/// Left Jacobian `V(w)` relating `v` to the translation of `exp(v, w)`.
fn left_jacobian(w: &Vector3<f64>) -> Matrix3<f64> {
    let (_, b, c) = rodrigues_coefficients(w.norm());
    let wx = hat(w);
    Matrix3::identity() + wx * b + wx * wx * c
}

/// Exponential map from twist to pose.
pub fn se3_exp(t: &Twist) -> PoseSE3 {
    let theta = t.w.norm();
    let (a, b, c) = rodrigues_coefficients(theta);
    let wx = hat(&t.w);
    let wx2 = wx * wx;
    let rotation = Matrix3::identity() + wx * a + wx2 * b;
    let v = Matrix3::identity() + wx * b + wx2 * c;
    PoseSE3 {
        rotation,
        translation: v * t.v,
    }
}

/// Logarithm map; the inverse of [`se3_exp`] for rotation angles below π.
pub fn se3_log(p: &PoseSE3) -> Twist {
    let theta = rotation_angle(&p.rotation);
    let w = if theta < SMALL_ANGLE {
        // sinθ/θ ≈ 1 − θ²/6 inverted to second order.
        vee(&(p.rotation - p.rotation.transpose())) * 0.5 * (1.0 + theta * theta / 6.0)
    } else {
        let q = UnitQuaternion::from_matrix(&p.rotation);
        q.scaled_axis()
    };
    let v = left_jacobian(&w)
        .lu()
        .solve(&p.translation)
        .unwrap_or_else(|| p.translation);
    Twist { v, w }
}

/// `a ∘ b`: apply `b` first, then `a`.
pub fn pose_compose(a: &PoseSE3, b: &PoseSE3) -> PoseSE3 {
    PoseSE3 {
        rotation: a.rotation * b.rotation,
        translation: a.rotation * b.translation + a.translation,
    }
}

pub fn pose_inverse(a: &PoseSE3) -> PoseSE3 {
    let rt = a.rotation.transpose();
    PoseSE3 {
        rotation: rt,
        translation: -(rt * a.translation),
    }
}

/// Left-multiplicative update `exp(δ) ∘ pose`.
pub fn left_update(pose: &PoseSE3, delta: &Twist) -> PoseSE3 {
    pose_compose(&se3_exp(delta), pose)
}
