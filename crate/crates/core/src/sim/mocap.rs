//! Motion-capture observer: body poses in the mocap convention, with noise
//! and transport delay.

use super::{seeded_rng, SimError};
use crate::geom::{convert_handedness, Pose};
use crate::trajectory::{Trajectory, TrajectorySample};
use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MocapObserverConfig {
    pub rate: f64,
    /// Position noise σ per axis, meters.
    pub noise_pos: f64,
    /// Rotation noise σ per axis (tangent space), radians.
    pub noise_rot: f64,
    pub latency_frames: u32,
    /// Extra delay drawn uniformly from `0..=jitter_frames` per frame.
    pub jitter_frames: u32,
    pub seed: u64,
}

impl Default for MocapObserverConfig {
    fn default() -> Self {
        Self {
            rate: 100.0,
            noise_pos: 5e-4,
            noise_rot: 1e-3,
            latency_frames: 7,
            jitter_frames: 0,
            seed: 0,
        }
    }
}

impl MocapObserverConfig {
    /// Exact, undelayed observation.
    pub fn ideal() -> Self {
        Self {
            noise_pos: 0.0,
            noise_rot: 0.0,
            latency_frames: 0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(SimError::InvalidSpec(format!("mocap rate must be positive, got {}", self.rate)));
        }
        for (name, v) in [("noise_pos", self.noise_pos), ("noise_rot", self.noise_rot)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::InvalidSpec(format!("mocap {name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// One observed frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MocapFrame {
    pub frame: u32,
    /// When the pose was true.
    pub capture_time: f64,
    /// When the pose reaches the client.
    pub arrival_time: f64,
    /// Body pose, mocap convention (RH Z-up), meters.
    pub pose: Pose,
}

/// Capture instants `t0 + k / rate` inside the ground-truth span.
pub fn capture_times(gt: &Trajectory, cfg: &MocapObserverConfig) -> Vec<f64> {
    let (Some(first), Some(last)) = (gt.first(), gt.last()) else {
        return Vec::new();
    };
    let n = ((last.t - first.t) * cfg.rate + 1e-9).floor() as usize + 1;
    (0..n).map(|k| first.t + k as f64 / cfg.rate).collect()
}

/// Arrival times: capture plus `latency + jitter` frames, kept strictly
/// increasing (a late frame holds back the ones behind it).
pub fn arrival_times(captures: &[f64], cfg: &MocapObserverConfig) -> Vec<f64> {
    let mut rng = seeded_rng(cfg.seed, 1);
    let t0 = captures.first().copied().unwrap_or(0.0);
    let mut prev = f64::NEG_INFINITY;
    captures
        .iter()
        .enumerate()
        .map(|(k, _)| {
            let jitter = if cfg.jitter_frames > 0 {
                rng.random_range(0..=cfg.jitter_frames)
            } else {
                0
            };
            let mut t = t0 + (k as u64 + cfg.latency_frames as u64 + jitter as u64) as f64 / cfg.rate;
            if t <= prev {
                t = prev + 1e-6;
            }
            prev = t;
            t
        })
        .collect()
}

/// Observed frames for a ground-truth eye trajectory. `extrinsics_inv` maps
/// the eye to the mocap body (`body = eye ∘ extrinsics_inv`).
pub fn observe_frames(gt: &Trajectory, extrinsics_inv: &Pose, cfg: &MocapObserverConfig) -> Vec<MocapFrame> {
    let captures = capture_times(gt, cfg);
    let arrivals = arrival_times(&captures, cfg);
    let mut rng = seeded_rng(cfg.seed, 0);
    let same_grid = gt.len() == captures.len() && (gt.rate() - cfg.rate).abs() < 1e-12;
    captures
        .iter()
        .zip(&arrivals)
        .enumerate()
        .map(|(k, (&tc, &ta))| {
            let eye = if same_grid {
                gt.samples()[k].pose
            } else {
                gt.sample_at(tc).expect("capture inside ground truth")
            };
            let body = if extrinsics_inv.is_identity() {
                eye
            } else {
                eye.compose(extrinsics_inv)
            };
            let mut pose = convert_handedness(&body);
            if cfg.noise_pos > 0.0 {
                let n: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
                pose.translation += Vector3::from(n) * cfg.noise_pos;
            }
            if cfg.noise_rot > 0.0 {
                let n: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
                let delta = UnitQuaternion::from_scaled_axis(Vector3::from(n) * cfg.noise_rot);
                pose.rotation = UnitQuaternion::new_normalize((pose.rotation * delta).into_inner());
            }
            MocapFrame {
                frame: k as u32,
                capture_time: tc,
                arrival_time: ta,
                pose,
            }
        })
        .collect()
}

/// Observed mocap-body trajectory stamped with arrival times.
pub fn mocap_observe(gt: &Trajectory, extrinsics_inv: &Pose, cfg: &MocapObserverConfig) -> Trajectory {
    let samples = observe_frames(gt, extrinsics_inv, cfg)
        .into_iter()
        .map(|f| TrajectorySample::new(f.arrival_time, f.pose))
        .collect();
    Trajectory::new(samples, cfg.rate).expect("arrival times are strictly increasing")
}
