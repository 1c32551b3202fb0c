//! Inside-out tracker model.
//!
//! The device reports `C(t) = F⁻¹ ∘ J(t) ∘ E(t) ∘ G(t)`, where `G` is the
//! true pose, `E` an accumulating registration error (yaw about world-up
//! plus a position offset), `J` an optional tracking-loss jump that persists
//! once it happens, and `F` the pose of the device's tracking frame in the
//! world. Per-sample white position noise is added last.

use super::{seeded_rng, SimError};
use crate::geom::{yaw_rotation, Pose};
use crate::trajectory::{Trajectory, TrajectorySample};
use nalgebra::Vector3;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftMode {
    /// Rates are random-walk intensities: m/√s and rad/√s.
    RandomWalk,
    /// Rates are constant velocities: m/s along `bias_direction`, rad/s.
    LinearBias,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingLoss {
    pub time: f64,
    pub jump: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftConfig {
    pub mode: DriftMode,
    pub position_drift_rate: f64,
    pub yaw_drift_rate: f64,
    /// Direction of the linear position bias (normalized on use).
    pub bias_direction: [f64; 3],
    /// Per-sample position noise σ, meters.
    pub white_noise_pos: f64,
    pub tracking_loss: Option<TrackingLoss>,
    /// Device tracking frame expressed in the world.
    pub frame_offset: Pose,
    pub seed: u64,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            mode: DriftMode::RandomWalk,
            position_drift_rate: 0.003,
            yaw_drift_rate: 0.0005,
            bias_direction: [1.0, 0.0, 0.0],
            white_noise_pos: 0.0,
            tracking_loss: None,
            frame_offset: Pose::identity(),
            seed: 0,
        }
    }
}

impl DriftConfig {
    /// No drift, noise, loss, or frame offset.
    pub fn none() -> Self {
        Self {
            position_drift_rate: 0.0,
            yaw_drift_rate: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (name, v) in [
            ("position_drift_rate", self.position_drift_rate),
            ("yaw_drift_rate", self.yaw_drift_rate),
            ("white_noise_pos", self.white_noise_pos),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::InvalidSpec(format!("drift {name} must be >= 0, got {v}")));
            }
        }
        if self.mode == DriftMode::LinearBias
            && self.position_drift_rate > 0.0
            && !(Vector3::from(self.bias_direction).norm() > 0.0)
        {
            return Err(SimError::InvalidSpec("drift bias_direction must be non-zero".into()));
        }
        if let Some(loss) = &self.tracking_loss {
            if !loss.time.is_finite() {
                return Err(SimError::InvalidSpec("tracking loss time must be finite".into()));
            }
        }
        Ok(())
    }
}

/// The combined distortion `F⁻¹ ∘ J ∘ E` at each time.
pub fn drift_process(times: &[f64], cfg: &DriftConfig) -> Vec<Pose> {
    let Some(&t0) = times.first() else {
        return Vec::new();
    };
    let mut rng = seeded_rng(cfg.seed, 0);
    let dir = {
        let d = Vector3::from(cfg.bias_direction);
        let n = d.norm();
        if n > 0.0 {
            d / n
        } else {
            d
        }
    };
    let frame_inv = cfg.frame_offset.inverse();
    let mut offset = Vector3::zeros();
    let mut yaw = 0.0f64;
    let mut prev = t0;
    times
        .iter()
        .map(|&t| {
            match cfg.mode {
                DriftMode::RandomWalk => {
                    let dt = t - prev;
                    if dt > 0.0 {
                        let s = dt.sqrt();
                        let n: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
                        offset += Vector3::new(n[0], n[1], n[2]) * (cfg.position_drift_rate * s);
                        yaw += n[3] * cfg.yaw_drift_rate * s;
                    }
                }
                DriftMode::LinearBias => {
                    offset = dir * (cfg.position_drift_rate * (t - t0));
                    yaw = cfg.yaw_drift_rate * (t - t0);
                }
            }
            prev = t;
            let mut e = Pose::new(yaw_rotation(yaw), offset);
            if let Some(loss) = &cfg.tracking_loss {
                if t >= loss.time {
                    e = loss.jump.compose(&e);
                }
            }
            if frame_inv.is_identity() {
                e
            } else {
                frame_inv.compose(&e)
            }
        })
        .collect()
}

/// Applies a precomputed distortion to a trajectory sampled at the same
/// times, adding white noise from RNG stream `stream`.
pub fn apply_drift(gt: &Trajectory, distortion: &[Pose], cfg: &DriftConfig, stream: u64) -> Trajectory {
    assert_eq!(gt.len(), distortion.len(), "distortion must match the trajectory");
    let mut rng = seeded_rng(cfg.seed, 1 + stream);
    let samples = gt
        .iter()
        .zip(distortion)
        .map(|(s, d)| {
            let mut pose = if d.is_identity() { s.pose } else { d.compose(&s.pose) };
            if cfg.white_noise_pos > 0.0 {
                let n: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
                pose.translation += Vector3::from(n) * cfg.white_noise_pos;
            }
            TrajectorySample::new(s.t, pose)
        })
        .collect();
    Trajectory::new(samples, gt.rate()).expect("timestamps are unchanged")
}

/// Device-frame camera poses for a ground-truth eye trajectory.
pub fn slam_track(gt: &Trajectory, cfg: &DriftConfig) -> Trajectory {
    let d = drift_process(&gt.times(), cfg);
    apply_drift(gt, &d, cfg, 0)
}
