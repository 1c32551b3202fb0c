//! Extrinsics calibration between the mocap rigid body and the HMD eye center.
//!
//! The fixed transform `X` (mocap body frame -> eye frame) satisfies
//! `eye(t) = mocap(t) ∘ X` for every common instant. Given paired world-frame
//! poses it is recovered in closed form: per-pair estimates
//! `X_i = mocap_i⁻¹ ∘ eye_i` are averaged (arithmetic mean of translations,
//! chordal mean of sign-aligned quaternions). When the eye poses live in the
//! device's own tracking frame, [`calibrate_streams`] first estimates transport
//! latency, associates samples, aligns the two frames with a rigid point-set
//! fit, and then refines frame and extrinsics jointly.

use crate::eval::{estimate_latency, EvalError, LatencyEstimate};
use crate::geom::Pose;
use crate::par::{self, Mode};
use crate::trajectory::Trajectory;
use nalgebra::{Matrix3, Quaternion, SMatrix, SVector, UnitQuaternion, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_MIN_PAIRS: usize = 50;
pub const DEFAULT_MAX_DT: f64 = 0.005;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibError {
    #[error("insufficient data: {found} usable pairs, at least {required} required")]
    InsufficientData { found: usize, required: usize },
    #[error("point lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("degenerate geometry: point configuration is collinear or coincident")]
    DegenerateGeometry,
    #[error("inconsistent data: rotation samples disagree (mean quaternion norm {0:.3})")]
    InconsistentData(f64),
    #[error("latency estimation failed: {0}")]
    Latency(#[from] EvalError),
}

/// Recovered mocap-body -> eye-center transform with fit statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrinsics {
    pub transform: Pose,
    pub rms_position_residual: f64,
    pub rms_rotation_residual: f64,
    pub sample_count: usize,
}

impl Extrinsics {
    /// Exact extrinsics with no fit statistics, e.g. a known ground truth.
    pub fn exact(transform: Pose) -> Self {
        Self {
            transform,
            rms_position_residual: 0.0,
            rms_rotation_residual: 0.0,
            sample_count: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibConfig {
    pub min_pairs: usize,
    /// Maximum timestamp gap for association, seconds.
    pub max_dt: f64,
    /// Sample rate used for latency estimation, Hz.
    pub rate: f64,
    pub max_lag_frames: usize,
    pub max_iterations: usize,
    /// Convergence threshold on the extrinsics update (meters and radians).
    pub tolerance: f64,
}

impl Default for CalibConfig {
    fn default() -> Self {
        Self {
            min_pairs: DEFAULT_MIN_PAIRS,
            max_dt: DEFAULT_MAX_DT,
            rate: 100.0,
            max_lag_frames: 30,
            max_iterations: 100,
            tolerance: 1e-12,
        }
    }
}

/// Mutual nearest-neighbour association by timestamp.
///
/// Returns index pairs `(i, j)` such that `b[j]` is the closest sample of `b`
/// to `a[i]`, `a[i]` is the closest sample of `a` to `b[j]`, and the gap is at
/// most `max_dt`. Ties go to the earlier sample. Each sample appears at most
/// once and pairs are in time order.
pub fn associate(a: &Trajectory, b: &Trajectory, max_dt: f64) -> Vec<(usize, usize)> {
    let ta = a.times();
    let tb = b.times();
    if ta.is_empty() || tb.is_empty() {
        return Vec::new();
    }
    let nn_ab = nearest_indices(&ta, &tb);
    let nn_ba = nearest_indices(&tb, &ta);
    nn_ab
        .iter()
        .enumerate()
        .filter(|&(i, &j)| nn_ba[j] == i && (ta[i] - tb[j]).abs() <= max_dt)
        .map(|(i, &j)| (i, j))
        .collect()
}

/// For each query time, the index of the nearest target time (sorted inputs).
fn nearest_indices(query: &[f64], target: &[f64]) -> Vec<usize> {
    let mut j = 0usize;
    query
        .iter()
        .map(|&t| {
            while j + 1 < target.len() && (target[j + 1] - t).abs() < (target[j] - t).abs() {
                j += 1;
            }
            j
        })
        .collect()
}

/// Least-squares rigid transform `T` minimizing `Σ |b_i − T·a_i|²`
/// (similarity alignment with unit scale).
pub fn umeyama_align(points_a: &[Vector3<f64>], points_b: &[Vector3<f64>]) -> Result<Pose, CalibError> {
    if points_a.len() != points_b.len() {
        return Err(CalibError::LengthMismatch(points_a.len(), points_b.len()));
    }
    let n = points_a.len();
    if n < 3 {
        return Err(CalibError::InsufficientData { found: n, required: 3 });
    }
    let inv_n = 1.0 / n as f64;
    let mu_a = points_a.iter().sum::<Vector3<f64>>() * inv_n;
    let mu_b = points_b.iter().sum::<Vector3<f64>>() * inv_n;
    let mut cov = Matrix3::zeros();
    for (a, b) in points_a.iter().zip(points_b) {
        cov += (b - mu_b) * (a - mu_a).transpose();
    }
    cov *= inv_n;

    let svd = cov.svd(true, true);
    let mut sv = svd.singular_values;
    sv.as_mut_slice().sort_by(|x, y| y.total_cmp(x));
    // rank >= 2 fixes the rotation; planar sets are fine, collinear are not
    if !(sv[0] > 0.0) || sv[1] < 1e-12 * sv[0] {
        return Err(CalibError::DegenerateGeometry);
    }
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let mut s = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let r = u * s * v_t;
    let rotation = UnitQuaternion::from_matrix_eps(&r, 1e-15, 100, UnitQuaternion::identity());
    let translation = mu_b - rotation * mu_a;
    Ok(Pose::new(rotation, translation))
}

/// Objective value `Σ |t_eye − t_(mocap∘X)|² + ‖R_eye − R_(mocap∘X)‖_F²`.
pub fn objective(pairs: &[(Pose, Pose)], x: &Pose) -> f64 {
    pairs
        .iter()
        .map(|(m, e)| {
            let p = m.compose(x);
            let dt = (e.translation - p.translation).norm_squared();
            let dr = (e.rotation.to_rotation_matrix().into_inner()
                - p.rotation.to_rotation_matrix().into_inner())
            .norm_squared();
            dt + dr
        })
        .sum()
}

/// Closed-form extrinsics from `(mocap, eye)` pose pairs in a common world frame.
pub fn estimate_extrinsics(pairs: &[(Pose, Pose)], cfg: &CalibConfig) -> Result<Extrinsics, CalibError> {
    estimate_extrinsics_with(pairs, cfg, Mode::available())
}

pub fn estimate_extrinsics_with(
    pairs: &[(Pose, Pose)],
    cfg: &CalibConfig,
    mode: Mode,
) -> Result<Extrinsics, CalibError> {
    if pairs.len() < cfg.min_pairs.max(1) {
        return Err(CalibError::InsufficientData {
            found: pairs.len(),
            required: cfg.min_pairs.max(1),
        });
    }
    let per_sample = par::map_slice(mode, pairs, |(m, e)| m.inverse().compose(e));

    let n = per_sample.len() as f64;
    let reference = per_sample[0].rotation.coords;
    let mut t_sum = Vector3::zeros();
    let mut q_sum = Vector4::zeros();
    for x in &per_sample {
        t_sum += x.translation;
        let c = x.rotation.coords;
        q_sum += if c.dot(&reference) < 0.0 { -c } else { c };
    }
    let q_mean = q_sum / n;
    let norm = q_mean.norm();
    if norm < 0.5 {
        return Err(CalibError::InconsistentData(norm));
    }
    let rotation = UnitQuaternion::new_normalize(Quaternion::from(q_mean));
    let transform = Pose::new(rotation, t_sum / n);

    let residuals = par::map_slice(mode, pairs, |(m, e)| {
        let (dt, da) = m.compose(&transform).distance_to(e);
        (dt * dt, da * da)
    });
    let (sp, sr) = residuals
        .iter()
        .fold((0.0, 0.0), |(a, b), (p, r)| (a + p, b + r));
    Ok(Extrinsics {
        transform,
        rms_position_residual: (sp / n).sqrt(),
        rms_rotation_residual: (sr / n).sqrt(),
        sample_count: pairs.len(),
    })
}

/// Result of calibrating from raw streams in different frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamCalibration {
    pub extrinsics: Extrinsics,
    /// Transport latency of the mocap stream relative to the eye stream.
    pub latency: LatencyEstimate,
    /// Device tracking frame expressed in the world frame.
    pub frame_alignment: Pose,
    pub iterations: usize,
    pub pair_count: usize,
}

/// Calibrates from a world-frame mocap stream (engine convention, stamped at
/// arrival) and an eye/camera stream in the device's tracking frame.
pub fn calibrate_streams(
    mocap_world: &Trajectory,
    eye_local: &Trajectory,
    cfg: &CalibConfig,
) -> Result<StreamCalibration, CalibError> {
    let mut latency = estimate_latency(eye_local, mocap_world, cfg.rate, cfg.max_lag_frames)?;
    let mut result = align_and_estimate(mocap_world, eye_local, &latency, cfg)?;

    // The mocap body speed differs from the eye speed by the lever arm; redo
    // the latency estimate on mocap-derived eye poses and refit if it moved.
    let x = result.extrinsics.transform;
    let eye_from_mocap = mocap_world.map_poses(|m| m.compose(&x));
    let refined = estimate_latency(eye_local, &eye_from_mocap, cfg.rate, cfg.max_lag_frames)?;
    if refined.lag_frames != latency.lag_frames {
        latency = refined;
        result = align_and_estimate(mocap_world, eye_local, &latency, cfg)?;
    }
    result.latency = latency;
    Ok(result)
}

fn align_and_estimate(
    mocap_world: &Trajectory,
    eye_local: &Trajectory,
    latency: &LatencyEstimate,
    cfg: &CalibConfig,
) -> Result<StreamCalibration, CalibError> {
    let mocap = mocap_world.shifted(-latency.latency);
    let idx = associate(&mocap, eye_local, cfg.max_dt);
    if idx.len() < cfg.min_pairs {
        return Err(CalibError::InsufficientData {
            found: idx.len(),
            required: cfg.min_pairs,
        });
    }
    let m: Vec<Pose> = idx.iter().map(|&(i, _)| mocap.samples()[i].pose).collect();
    let c: Vec<Pose> = idx.iter().map(|&(_, j)| eye_local.samples()[j].pose).collect();
    let local_pts: Vec<Vector3<f64>> = c.iter().map(|p| p.translation).collect();
    let world_pts: Vec<Vector3<f64>> = m.iter().map(|p| p.translation).collect();

    // Rigid alignment of raw positions, then the closed form on top of it.
    let mut frame = umeyama_align(&local_pts, &world_pts)?;
    let mut x = estimate_extrinsics(&frame_pairs(&m, &c, &frame), cfg)?.transform;

    // Joint Levenberg-Marquardt refinement of frame and extrinsics.
    let mut cost = joint_cost(&m, &c, &frame, &x);
    let mut lambda = 1e-9;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let (h, g) = normal_equations(&m, &c, &frame, &x);
        let scale = (0..12).map(|k| h[(k, k)]).fold(0.0, f64::max).max(1e-300);
        let mut damped = h;
        for k in 0..12 {
            damped[(k, k)] += lambda * scale;
        }
        let Some(step) = damped.cholesky().map(|ch| ch.solve(&(-g))) else {
            lambda *= 10.0;
            continue;
        };
        let (frame_new, x_new) = (retract(&frame, &step, 0), retract(&x, &step, 6));
        let cost_new = joint_cost(&m, &c, &frame_new, &x_new);
        if cost_new <= cost {
            frame = frame_new;
            x = x_new;
            cost = cost_new;
            lambda = (lambda * 0.1).max(1e-15);
            if step.norm() < cfg.tolerance {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e6 {
                break;
            }
        }
    }
    let extrinsics = estimate_extrinsics(&frame_pairs(&m, &c, &frame), cfg)?;
    Ok(StreamCalibration {
        extrinsics,
        latency: *latency,
        frame_alignment: frame,
        iterations,
        pair_count: idx.len(),
    })
}

fn frame_pairs(m: &[Pose], c: &[Pose], frame: &Pose) -> Vec<(Pose, Pose)> {
    m.iter().zip(c).map(|(mp, cp)| (*mp, frame.compose(cp))).collect()
}

/// Residual of `frame ∘ c = m ∘ x`: position difference and rotation log.
fn joint_residual(m: &Pose, c: &Pose, frame: &Pose, x: &Pose) -> (Vector3<f64>, Vector3<f64>, Matrix3<f64>) {
    let lhs = frame.compose(c);
    let rhs = m.compose(x);
    let e = rhs.rotation.inverse() * lhs.rotation;
    (
        lhs.translation - rhs.translation,
        e.scaled_axis(),
        e.to_rotation_matrix().into_inner(),
    )
}

fn joint_cost(m: &[Pose], c: &[Pose], frame: &Pose, x: &Pose) -> f64 {
    m.iter()
        .zip(c)
        .map(|(mp, cp)| {
            let (p, r, _) = joint_residual(mp, cp, frame, x);
            p.norm_squared() + r.norm_squared()
        })
        .sum()
}

/// Gauss-Newton normal equations in the local tangent of `(frame, x)`,
/// ordered `[φ_frame, ρ_frame, φ_x, ρ_x]`.
fn normal_equations(m: &[Pose], c: &[Pose], frame: &Pose, x: &Pose) -> (SMatrix<f64, 12, 12>, SVector<f64, 12>) {
    let ra = frame.rotation.to_rotation_matrix().into_inner();
    let rx = x.rotation.to_rotation_matrix().into_inner();
    let mut h = SMatrix::<f64, 12, 12>::zeros();
    let mut g = SVector::<f64, 12>::zeros();
    for (mp, cp) in m.iter().zip(c) {
        let (p, r, e) = joint_residual(mp, cp, frame, x);
        let rc = cp.rotation.to_rotation_matrix().into_inner();
        let rm = mp.rotation.to_rotation_matrix().into_inner();
        let mut j = SMatrix::<f64, 6, 12>::zeros();
        j.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-ra * cp.translation.cross_matrix()));
        j.fixed_view_mut::<3, 3>(0, 3).copy_from(&ra);
        j.fixed_view_mut::<3, 3>(0, 9).copy_from(&(-rm * rx));
        j.fixed_view_mut::<3, 3>(3, 0).copy_from(&rc.transpose());
        j.fixed_view_mut::<3, 3>(3, 6).copy_from(&(-e.transpose()));
        let mut res = SVector::<f64, 6>::zeros();
        res.fixed_rows_mut::<3>(0).copy_from(&p);
        res.fixed_rows_mut::<3>(3).copy_from(&r);
        h += j.transpose() * j;
        g += j.transpose() * res;
    }
    (h, g)
}

fn retract(pose: &Pose, step: &SVector<f64, 12>, at: usize) -> Pose {
    let phi = Vector3::new(step[at], step[at + 1], step[at + 2]);
    let rho = Vector3::new(step[at + 3], step[at + 4], step[at + 5]);
    let rotation = pose.rotation * UnitQuaternion::from_scaled_axis(phi);
    Pose::new(
        UnitQuaternion::new_normalize(rotation.into_inner()),
        pose.translation + pose.rotation * rho,
    )
}
