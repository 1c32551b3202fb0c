use colotrack_core::calib::{associate, estimate_extrinsics, CalibConfig};
use colotrack_core::eval::{estimate_latency, export_report};
use colotrack_core::geom::{convert_handedness, pitch_rotation, Pose};
use colotrack_core::net::{encode_packet, RigidBody, RigidBodyPacket, SessionPhase, SessionState, StreamDecoder};
use colotrack_core::sim::{
    build_report, gen_motion, mocap_observe, observe_frames, run_scenario, AlignmentEventKind, MocapObserverConfig,
    MotionKind, MotionSpec, ScenarioConfig,
};
use colotrack_core::trajectory::{Trajectory, TrajectorySample};
use nalgebra::Vector3;

fn t_star() -> Pose {
    Pose::new(pitch_rotation(15f64.to_radians()), Vector3::new(0.02, 0.08, 0.10))
}

fn head(kind: MotionKind, duration: f64) -> Trajectory {
    gen_motion(&MotionSpec {
        kind,
        duration,
        ..Default::default()
    })
    .unwrap()
    .users
    .remove(0)
    .head
}

/// Encodes observed mocap frames, decodes them from an arbitrarily chunked
/// stream, and returns engine-frame poses stamped at capture time.
fn through_wire(gt: &Trajectory, cfg: &MocapObserverConfig) -> Trajectory {
    let frames = observe_frames(gt, &t_star().inverse(), cfg);
    let mut bytes = Vec::new();
    for f in &frames {
        bytes.extend(
            encode_packet(&RigidBodyPacket {
                frame_number: f.frame,
                timestamp_us: (f.capture_time * 1e6).round() as u64,
                bodies: vec![RigidBody::from_pose(1, &f.pose)],
            })
            .unwrap(),
        );
    }
    let mut dec = StreamDecoder::new();
    let mut session = SessionState::new(1);
    let mut out = Vec::new();
    for chunk in bytes.chunks(37) {
        dec.feed(chunk);
        while let Some(p) = dec.next_packet().unwrap() {
            let d = session.step(&p).unwrap();
            out.push(TrajectorySample::new(d.timestamp_us as f64 * 1e-6, d.pose));
        }
    }
    assert_eq!(dec.buffered(), 0);
    Trajectory::new(out, cfg.rate).unwrap()
}

fn recover(gt: &Trajectory, mocap: &Trajectory) -> Pose {
    let pairs: Vec<_> = associate(mocap, gt, 0.004)
        .into_iter()
        .map(|(i, j)| (mocap.samples()[i].pose, gt.samples()[j].pose))
        .collect();
    assert_eq!(pairs.len(), gt.len());
    estimate_extrinsics(&pairs, &CalibConfig::default()).unwrap().transform
}

#[test]
fn closed_loop_recovers_extrinsics() {
    let gt = head(MotionKind::Circle, 20.0);
    let exact = recover(&gt, &through_wire(&gt, &MocapObserverConfig::ideal()));
    let (dt, da) = exact.distance_to(&t_star());
    // only the f32 wire quantization remains
    assert!(dt < 1e-6 && da < 1e-6, "{dt} {da}");

    let noisy_cfg = MocapObserverConfig {
        latency_frames: 0,
        seed: 21,
        ..MocapObserverConfig::default()
    };
    let noisy = recover(&gt, &through_wire(&gt, &noisy_cfg));
    let (dt, da) = noisy.distance_to(&t_star());
    assert!(dt < 2e-3 && da < 0.2f64.to_radians(), "{dt} {da}");
}

#[test]
fn observed_stream_converts_back_to_truth() {
    let gt = head(MotionKind::Line, 10.0);
    let m = mocap_observe(&gt, &Pose::identity(), &MocapObserverConfig::ideal());
    for (a, b) in gt.iter().zip(&m) {
        assert_eq!(convert_handedness(&b.pose).translation, a.pose.translation);
    }
}

#[test]
fn corrections_complete_inside_threshold() {
    let mut cfg = ScenarioConfig::default();
    cfg.scenario.duration = 180.0;
    cfg.seed = 2;
    let run = run_scenario(&cfg).unwrap();
    let u = &run.users[0];
    let bound = cfg.correction.position_threshold + 3.0 * cfg.mocap.noise_pos * 3f64.sqrt();
    let mut completed = 0;
    for e in &u.events {
        if e.kind == AlignmentEventKind::CorrectionCompleted {
            completed += 1;
            let est = u.estimate.sample_at(e.time).unwrap();
            let truth = u.ground_truth.sample_at(e.time).unwrap();
            let err = (est.translation - truth.translation).norm();
            assert!(err < bound, "t={} err={err}", e.time);
        }
    }
    assert!(completed >= 2, "{completed}");
}

#[test]
fn transport_delay_matches_injected_latency() {
    let mut cfg = ScenarioConfig::default();
    cfg.scenario.duration = 20.0;
    cfg.pipeline.calibration_duration = 20.0;
    cfg.mocap.latency_frames = 4;
    let run = run_scenario(&cfg).unwrap();
    let u = &run.users[0];
    assert!(u.transport_delays.iter().all(|d| (d - 0.04).abs() < 1e-6));
    let lag = estimate_latency(&u.ground_truth, &u.mocap_eye, 100.0, 20).unwrap();
    assert_eq!(lag.lag_frames, 4);
    assert_eq!(u.calibration.as_ref().unwrap().latency.lag_frames, 4);
}

#[test]
fn session_waits_for_first_real_body() {
    let gt = head(MotionKind::Patrol, 2.0);
    let mut session = SessionState::new(1);
    for (k, s) in gt.iter().enumerate() {
        let body = if k < 30 {
            RigidBody::placeholder(1)
        } else {
            RigidBody::from_pose(1, &convert_handedness(&s.pose))
        };
        let delivered = session.step(&RigidBodyPacket {
            frame_number: k as u32,
            timestamp_us: 0,
            bodies: vec![body],
        });
        if k < 30 {
            assert_eq!(session.phase, SessionPhase::AwaitingData);
            assert!(delivered.is_none());
        } else {
            assert_eq!(session.phase, SessionPhase::Tracking);
            let d = delivered.unwrap();
            assert_eq!(d.frame_number, k as u32);
            assert!((d.pose.translation - s.pose.translation).norm() < 1e-6);
        }
    }
}

#[test]
fn scenario_report_exports() {
    let mut cfg = ScenarioConfig::default();
    cfg.scenario.duration = 15.0;
    cfg.pipeline.calibration_duration = 15.0;
    let run = run_scenario(&cfg).unwrap();
    let (report, plots) = build_report(&cfg, &run).unwrap();
    assert!(report.ate_rmse > 0.0 && report.ate_rmse < 0.05);
    assert_eq!(report.latency.unwrap().lag_frames, 7);
    let dir = tempfile::tempdir().unwrap();
    let files = export_report(&report, &plots, dir.path()).unwrap();
    assert!(files.iter().all(|f| f.exists()));
    assert!(dir.path().join("circle_0_topdown.svg").exists());
}
