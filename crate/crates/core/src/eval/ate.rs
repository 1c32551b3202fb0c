use super::EvalError;
use crate::calib::{associate, umeyama_align};
use crate::par::{self, Mode};
use crate::trajectory::Trajectory;
use nalgebra::Vector3;

/// Per-sample errors behind an ATE value.
#[derive(Debug, Clone, PartialEq)]
pub struct AteResult {
    pub rmse: f64,
    /// `(t_est, est − ref)` per associated pair, in time order.
    pub errors: Vec<(f64, Vector3<f64>)>,
}

impl AteResult {
    pub fn sample_count(&self) -> usize {
        self.errors.len()
    }
}

/// Absolute trajectory error (RMSE of position differences) in the shared
/// world frame. No re-alignment is applied.
pub fn ate_rmse(est: &Trajectory, reference: &Trajectory, max_dt: f64) -> Result<f64, EvalError> {
    ate_rmse_with(est, reference, max_dt, Mode::available())
}

pub fn ate_rmse_with(
    est: &Trajectory,
    reference: &Trajectory,
    max_dt: f64,
    mode: Mode,
) -> Result<f64, EvalError> {
    Ok(ate_details(est, reference, max_dt, false, mode)?.rmse)
}

/// ATE with per-sample errors. With `aligned`, the estimate is first mapped
/// onto the reference by a rigid least-squares fit (SLAM benchmark style).
pub fn ate_details(
    est: &Trajectory,
    reference: &Trajectory,
    max_dt: f64,
    aligned: bool,
    mode: Mode,
) -> Result<AteResult, EvalError> {
    let idx = associate(est, reference, max_dt);
    if idx.len() < 2 {
        return Err(EvalError::InsufficientOverlap {
            found: idx.len(),
            required: 2,
        });
    }
    let e = est.samples();
    let r = reference.samples();
    let fit = if aligned {
        let a: Vec<_> = idx.iter().map(|&(i, _)| e[i].pose.translation).collect();
        let b: Vec<_> = idx.iter().map(|&(_, j)| r[j].pose.translation).collect();
        Some(umeyama_align(&a, &b).map_err(|err| EvalError::Alignment(err.to_string()))?)
    } else {
        None
    };
    let errors = par::map_slice(mode, &idx, |&(i, j)| {
        let p = match &fit {
            Some(t) => t.transform_point(&e[i].pose.translation),
            None => e[i].pose.translation,
        };
        (e[i].t, p - r[j].pose.translation)
    });
    let sum: f64 = errors.iter().map(|(_, d)| d.norm_squared()).sum();
    Ok(AteResult {
        rmse: (sum / errors.len() as f64).sqrt(),
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{yaw_rotation, Pose};

    fn walk(offset: impl Fn(usize) -> Vector3<f64>) -> Trajectory {
        Trajectory::from_poses(
            0.0,
            100.0,
            (0..500).map(|k| {
                let t = k as f64 / 100.0;
                Pose::new(
                    yaw_rotation(0.3 * t),
                    Vector3::new(t.cos() * 2.0, 1.7, t.sin() * 2.0) + offset(k),
                )
            }),
        )
    }

    #[test]
    fn ate_examples() {
        let r = walk(|_| Vector3::zeros());
        assert_eq!(ate_rmse(&r, &r, 0.005).unwrap(), 0.0);

        let c = walk(|_| Vector3::new(0.03, 0.0, 0.0));
        assert!((ate_rmse(&c, &r, 0.005).unwrap() - 0.03).abs() < 1e-12);

        let alt = walk(|k| Vector3::new(if k % 2 == 0 { 0.03 } else { 0.04 }, 0.0, 0.0));
        let expect = ((0.03f64.powi(2) + 0.04f64.powi(2)) / 2.0).sqrt();
        assert!((ate_rmse(&alt, &r, 0.005).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 0.03536).abs() < 1e-5);
    }

    #[test]
    fn ate_requires_overlap() {
        let r = walk(|_| Vector3::zeros());
        let far = r.shifted(100.0);
        assert!(matches!(
            ate_rmse(&far, &r, 0.005),
            Err(EvalError::InsufficientOverlap { found: 0, .. })
        ));
    }

    #[test]
    fn ate_symmetric_and_rigid_invariant() {
        let r = walk(|_| Vector3::zeros());
        let e = walk(|k| Vector3::new((k as f64 * 0.1).sin() * 0.05, 0.01, 0.0));
        let a = ate_rmse(&e, &r, 0.005).unwrap();
        let b = ate_rmse(&r, &e, 0.005).unwrap();
        assert!((a - b).abs() < 1e-15);
        let w = Pose::new(yaw_rotation(2.0), Vector3::new(3.0, 0.5, -1.0));
        let c = ate_rmse(&e.map_poses(|p| w.compose(p)), &r.map_poses(|p| w.compose(p)), 0.005).unwrap();
        assert!((a - c).abs() < 1e-12);
    }

    #[test]
    fn aligned_ate_removes_rigid_offset() {
        let r = walk(|_| Vector3::zeros());
        let w = Pose::new(yaw_rotation(0.2), Vector3::new(0.5, 0.0, -0.3));
        let e = r.map_poses(|p| w.compose(p));
        assert!(ate_rmse(&e, &r, 0.005).unwrap() > 0.1);
        let al = ate_details(&e, &r, 0.005, true, Mode::Sequential).unwrap();
        assert!(al.rmse < 1e-9);
    }

    #[test]
    fn modes_agree() {
        let r = walk(|_| Vector3::zeros());
        let e = walk(|k| Vector3::new(0.0, (k as f64).cos() * 0.02, 0.0));
        assert_eq!(
            ate_rmse_with(&e, &r, 0.005, Mode::Sequential).unwrap(),
            ate_rmse_with(&e, &r, 0.005, Mode::Parallel).unwrap()
        );
    }
}
