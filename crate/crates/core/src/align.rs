//! XR-origin alignment and drift correction.
//!
//! The engine places the virtual camera at `origin ∘ cam_local`, where
//! `cam_local` is the headset's own tracked pose. Alignment picks `origin` so
//! that the camera lands on the mocap-derived eye pose. The full solve copies
//! all six degrees of freedom, which tilts the whole tracking space if the
//! two rotations disagree in pitch or roll; the leveled solve keeps only
//! position and yaw so the tracking space stays parallel to the floor.

use crate::calib::Extrinsics;
use crate::geom::{twist_angle, wrap_angle, yaw_only, GeomError, Pose};
use crate::par::{self, Mode};
use nalgebra::{Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignError {
    #[error("invalid correction config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

/// Disagreement between the device-tracked camera and the mocap eye pose.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Residual {
    /// Euclidean distance, meters.
    pub position_error: f64,
    /// Signed yaw difference camera − reference, radians in `(-π, π]`.
    pub yaw_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionMode {
    /// Replace the origin in a single step.
    Snap,
    /// Interpolate the origin towards the target over `smooth_duration`.
    Smooth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectionConfig {
    pub position_threshold: f64,
    pub yaw_threshold: f64,
    pub sustain_frames: u32,
    pub mode: CorrectionMode,
    pub smooth_duration: f64,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        Self {
            position_threshold: 0.03,
            yaw_threshold: 5f64.to_radians(),
            sustain_frames: 30,
            mode: CorrectionMode::Smooth,
            smooth_duration: 0.5,
        }
    }
}

impl CorrectionConfig {
    pub fn validate(&self) -> Result<(), AlignError> {
        let bad = |m: &str| Err(AlignError::InvalidConfig(m.to_string()));
        if !(self.position_threshold > 0.0) {
            return bad("position_threshold must be > 0");
        }
        if !(self.yaw_threshold > 0.0) {
            return bad("yaw_threshold must be > 0");
        }
        if self.sustain_frames < 1 {
            return bad("sustain_frames must be >= 1");
        }
        if !(self.smooth_duration > 0.0) {
            return bad("smooth_duration must be > 0");
        }
        Ok(())
    }

    pub fn violated_by(&self, r: &Residual) -> bool {
        r.position_error > self.position_threshold || r.yaw_error.abs() > self.yaw_threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Phase {
    Monitoring,
    /// `from` is the origin when the correction started.
    Correcting { progress: f64, from: Pose },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentState {
    pub origin: Pose,
    pub phase: Phase,
    pub consecutive_violations: u32,
    pub last_residual: Residual,
}

impl AlignmentState {
    pub fn new(origin: Pose) -> Self {
        Self {
            origin,
            phase: Phase::Monitoring,
            consecutive_violations: 0,
            last_residual: Residual::default(),
        }
    }

    pub fn is_correcting(&self) -> bool {
        matches!(self.phase, Phase::Correcting { .. })
    }
}

/// Eye-center world pose from the mocap body pose.
pub fn eye_world(mocap: &Pose, extrinsics: &Extrinsics) -> Pose {
    mocap.compose(&extrinsics.transform)
}

/// `eye_w ∘ cam_local⁻¹`: the origin that puts the camera exactly on `eye_w`.
pub fn solve_origin_full(eye_w: &Pose, cam_local: &Pose) -> Pose {
    eye_w.compose(&cam_local.inverse())
}

pub fn solve_origins_full_batch(pairs: &[(Pose, Pose)], mode: Mode) -> Vec<Pose> {
    par::map_slice(mode, pairs, |(e, c)| solve_origin_full(e, c))
}

/// Position-and-yaw origin: a pure rotation about world-up equal to the yaw
/// difference, with the translation that puts the camera exactly on the eye
/// position. Camera pitch and roll stay as tracked.
pub fn solve_origin_leveled(eye_w: &Pose, cam_local: &Pose) -> Result<Pose, GeomError> {
    let ye = yaw_only(&eye_w.rotation)?.into_inner();
    let yc = yaw_only(&cam_local.rotation)?.into_inner();
    let q = ye * yc.conjugate();
    // product of two world-up twists is a world-up twist; drop rounding dust
    let n = q.w.hypot(q.j);
    let rotation = UnitQuaternion::new_unchecked(Quaternion::new(q.w / n, 0.0, q.j / n, 0.0));
    let translation = eye_w.translation - rotation * cam_local.translation;
    Ok(Pose::new(rotation, translation))
}

/// Position distance and signed yaw difference; pitch and roll are ignored.
pub fn drift_residual(cam_world: &Pose, eye_w_ref: &Pose) -> Residual {
    Residual {
        position_error: (cam_world.translation - eye_w_ref.translation).norm(),
        yaw_error: wrap_angle(twist_angle(&cam_world.rotation) - twist_angle(&eye_w_ref.rotation)),
    }
}

/// Advances the correction state machine by one frame.
///
/// While monitoring, consecutive frames that violate either threshold are
/// counted and a correction starts once `sustain_frames` is reached. Each
/// following frame moves the origin towards `target_origin`: in one step for
/// snap mode, or along a linear-position / spherical-rotation path completing
/// after `smooth_duration` seconds.
pub fn correction_step(
    state: &AlignmentState,
    residual: Residual,
    target_origin: &Pose,
    cfg: &CorrectionConfig,
    dt: f64,
) -> AlignmentState {
    let mut next = *state;
    next.last_residual = residual;
    match state.phase {
        Phase::Monitoring => {
            if cfg.violated_by(&residual) {
                next.consecutive_violations = state.consecutive_violations.saturating_add(1);
            } else {
                next.consecutive_violations = 0;
            }
            if next.consecutive_violations >= cfg.sustain_frames {
                next.phase = Phase::Correcting {
                    progress: 0.0,
                    from: state.origin,
                };
            }
        }
        Phase::Correcting { progress, from } => {
            let progress = match cfg.mode {
                CorrectionMode::Snap => 1.0,
                CorrectionMode::Smooth => {
                    let p = progress + dt / cfg.smooth_duration;
                    if p >= 1.0 - 1e-9 {
                        1.0
                    } else {
                        p
                    }
                }
            };
            if progress >= 1.0 {
                next.origin = *target_origin;
                next.phase = Phase::Monitoring;
                next.consecutive_violations = 0;
            } else {
                next.origin = from.interpolate(target_origin, progress);
                next.phase = Phase::Correcting { progress, from };
            }
        }
    }
    next
}
