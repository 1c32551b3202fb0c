//! Rigid-body pose algebra.
//!
//! Conventions used throughout the crate:
//!
//! * Quaternions are Hamilton, scalar-first `(w, x, y, z)`, and act as active
//!   rotations (`q * v` rotates the vector `v`).
//! * In-memory world coordinates are left-handed and Y-up (engine frame).
//!   The motion-capture wire format is right-handed and Z-up; use
//!   [`convert_handedness`] at the boundary.
//! * Yaw is the twist angle of a swing-twist decomposition about world-up
//!   (+Y). It is the reference yaw definition for leveling and residuals.

use nalgebra::{Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Forward vectors with a horizontal component below this are treated as
/// pointing straight up or down.
pub const GIMBAL_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum GeomError {
    #[error("yaw is undefined: forward axis is parallel to world-up")]
    UndefinedYaw,
}

/// Named unit axes of the engine frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    WorldUp,
    Forward,
    Right,
}

impl Axis {
    pub fn vector(self) -> Vector3<f64> {
        match self {
            Axis::WorldUp => Vector3::y(),
            Axis::Forward => Vector3::z(),
            Axis::Right => Vector3::x(),
        }
    }

    pub fn unit(self) -> Unit<Vector3<f64>> {
        Unit::new_unchecked(self.vector())
    }
}

/// A rigid transform: rotation followed by translation (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRepr", into = "PoseRepr")]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

/// Serialized form: `{ translation = [x, y, z], rotation = [w, x, y, z] }`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseRepr {
    #[serde(default)]
    translation: [f64; 3],
    #[serde(default = "identity_wxyz")]
    rotation: [f64; 4],
}

fn identity_wxyz() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

impl TryFrom<PoseRepr> for Pose {
    type Error = String;

    fn try_from(r: PoseRepr) -> Result<Self, Self::Error> {
        Pose::from_parts(r.translation, r.rotation)
            .ok_or_else(|| "pose needs finite translation and non-zero quaternion".to_string())
    }
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> Self {
        PoseRepr {
            translation: p.translation.into(),
            rotation: p.wxyz(),
        }
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(UnitQuaternion::identity(), Vector3::zeros())
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(UnitQuaternion::identity(), Vector3::new(x, y, z))
    }

    pub fn from_rotation(rotation: UnitQuaternion<f64>) -> Self {
        Self::new(rotation, Vector3::zeros())
    }

    /// Builds a pose from raw `(w, x, y, z)` quaternion components, normalizing
    /// them unless they already are to within 1e-12 (so serialized poses read
    /// back bit-exact). Returns `None` for a zero or non-finite quaternion.
    pub fn from_parts(translation: [f64; 3], wxyz: [f64; 4]) -> Option<Self> {
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        let norm = q.norm();
        if !norm.is_finite() || norm < 1e-12 || translation.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let rotation = if (norm - 1.0).abs() <= 1e-12 {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::new_normalize(q)
        };
        Some(Self::new(rotation, Vector3::from(translation)))
    }

    /// Quaternion components as `[w, x, y, z]`.
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn is_identity(&self) -> bool {
        let q = self.rotation.quaternion();
        q.w == 1.0 && q.i == 0.0 && q.j == 0.0 && q.k == 0.0 && self.translation == Vector3::zeros()
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        let mut rotation = self.rotation * other.rotation;
        rotation.renormalize();
        Pose::new(rotation, self.translation + self.rotation * other.translation)
    }

    pub fn inverse(&self) -> Pose {
        let rotation = self.rotation.inverse();
        Pose::new(rotation, -(rotation * self.translation))
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Interpolates linearly in translation and spherically in rotation.
    pub fn interpolate(&self, other: &Pose, s: f64) -> Pose {
        let a = self.rotation;
        // keep the short arc
        let b = if a.coords.dot(&other.rotation.coords) < 0.0 {
            UnitQuaternion::new_unchecked(-other.rotation.into_inner())
        } else {
            other.rotation
        };
        let rotation = a.try_slerp(&b, s, 1e-12).unwrap_or(a);
        Pose::new(
            rotation,
            self.translation + (other.translation - self.translation) * s,
        )
    }

    /// Distance between translations and geodesic angle between rotations.
    pub fn distance_to(&self, other: &Pose) -> (f64, f64) {
        (
            (self.translation - other.translation).norm(),
            geodesic_angle(&self.rotation, &other.rotation),
        )
    }
}

/// `a ∘ b`.
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

pub fn inverse(p: &Pose) -> Pose {
    p.inverse()
}

/// Pure rotation about world-up by `angle` radians.
pub fn yaw_rotation(angle: f64) -> UnitQuaternion<f64> {
    let (s, c) = (angle * 0.5).sin_cos();
    UnitQuaternion::new_unchecked(Quaternion::new(c, 0.0, s, 0.0))
}

/// Rotation about the engine right axis (+X). Positive pitch tips the forward
/// axis downward.
pub fn pitch_rotation(angle: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Axis::Right.unit(), angle)
}

/// Rotation about the engine forward axis (+Z).
pub fn roll_rotation(angle: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Axis::Forward.unit(), angle)
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Twist component about world-up, unnormalized `(w, y)`.
fn twist_components(q: &UnitQuaternion<f64>) -> (f64, f64) {
    let q = q.quaternion();
    (q.w, q.j)
}

/// Twist angle about world-up without the gimbal check. Returns 0 when the
/// twist is undefined (half-turn swing).
pub(crate) fn twist_angle(q: &UnitQuaternion<f64>) -> f64 {
    let (w, y) = twist_components(q);
    if w.hypot(y) < 1e-12 {
        return 0.0;
    }
    wrap_angle(2.0 * y.atan2(w))
}

fn check_gimbal(q: &UnitQuaternion<f64>) -> Result<(), GeomError> {
    let forward = q * Axis::Forward.vector();
    let (w, y) = twist_components(q);
    if forward.x.hypot(forward.z) < GIMBAL_EPS || w.hypot(y) < 1e-12 {
        return Err(GeomError::UndefinedYaw);
    }
    Ok(())
}

/// Yaw (twist about world-up) in `(-π, π]`.
pub fn yaw_of(q: &UnitQuaternion<f64>) -> Result<f64, GeomError> {
    check_gimbal(q)?;
    Ok(twist_angle(q))
}

/// The pure world-up rotation carrying the same yaw as `q`.
///
/// Already-leveled inputs are returned unchanged, which makes the operation
/// exactly idempotent.
pub fn yaw_only(q: &UnitQuaternion<f64>) -> Result<UnitQuaternion<f64>, GeomError> {
    check_gimbal(q)?;
    let c = q.quaternion();
    if c.i == 0.0 && c.k == 0.0 {
        return Ok(*q);
    }
    let n = c.w.hypot(c.j);
    Ok(UnitQuaternion::new_unchecked(Quaternion::new(
        c.w / n,
        0.0,
        c.j / n,
        0.0,
    )))
}

/// Angle of the relative rotation between `a` and `b`, in `[0, π]`.
pub fn geodesic_angle(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    // atan2 form stays accurate near zero where acos(|<a,b>|) does not
    let rel = a.inverse() * b;
    2.0 * rel.imag().norm().atan2(rel.scalar().abs())
}

/// Maps a vector between the right-handed Z-up mocap frame and the
/// left-handed Y-up engine frame: `(x, y, z) -> (x, z, y)`. Self-inverse.
pub fn convert_vector(v: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(v.x, v.z, v.y)
}

/// Quaternion counterpart of [`convert_vector`]: `(w, x, y, z) -> (w, -x, -z, -y)`.
/// Self-inverse.
pub fn convert_rotation(q: &UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let c = q.quaternion();
    UnitQuaternion::new_unchecked(Quaternion::new(c.w, -c.i, -c.k, -c.j))
}

/// Converts a pose between the mocap (RH Z-up) and engine (LH Y-up) frames.
/// The mapping is an involution, so the same function performs the inverse
/// conversion.
pub fn convert_handedness(p: &Pose) -> Pose {
    Pose::new(convert_rotation(&p.rotation), convert_vector(&p.translation))
}
