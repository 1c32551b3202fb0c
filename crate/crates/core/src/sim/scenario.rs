//! End-to-end scenario: generate, observe, stream, align, correct, share.
//!
//! Each user first walks a short drift-free calibration patrol from which
//! the extrinsics and the mocap latency are estimated. The main run then
//! streams one shared mocap packet per frame (all users' bodies, NaN
//! placeholders during warm-up). Every client decodes that byte stream in
//! randomly sized chunks, initializes its session on the first real body,
//! solves the XR origin, and keeps it aligned with the correction policy.
//! Finally the world-frame head and hand poses go through the pose-sharing
//! hub so every user sees the others.

use super::drift::{apply_drift, drift_process, DriftConfig};
use super::mocap::{arrival_times, capture_times, observe_frames, MocapObserverConfig};
use super::motion::{gen_motion, MotionKind, MotionSpec, UserMotion};
use super::{mix_seed, seeded_rng, SimError};
use crate::align::{
    correction_step, drift_residual, solve_origin_full, solve_origin_leveled, AlignmentState, CorrectionConfig,
};
use crate::calib::{calibrate_streams, CalibConfig, StreamCalibration};
use crate::eval::{
    ate_details, estimate_latency, InteractionEvent, LatencyEstimate, MetricsReport, NamedTrajectory, PlotSet,
};
use crate::geom::{pitch_rotation, yaw_rotation, Pose};
use crate::net::{
    decode_frame, encode_packet, encode_shared_pose, Decoded, Hub, Message, RigidBody, RigidBodyPacket,
    SessionState, SharedPoseMessage, StreamDecoder,
};
use crate::par::{self, Mode};
use crate::trajectory::{Trajectory, TrajectorySample};
use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::BTreeMap;

/// Side of the calibration patrol square, meters.
const CALIBRATION_SIDE: f64 = 3.0;
const MIN_CALIBRATION_DURATION: f64 = 10.0;
/// Largest chunk handed to a client decoder at once, bytes.
const MAX_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Estimate extrinsics and latency in a calibration phase. Otherwise the
    /// true values are used.
    pub calibrate: bool,
    pub calibration_duration: f64,
    /// True mocap-body -> eye-center transform of every headset.
    pub extrinsics: Pose,
    /// Position-and-yaw origin solve instead of the full solve.
    pub leveled: bool,
    pub correction_enabled: bool,
    /// Compare mocap poses with the camera pose from `latency` seconds ago.
    pub latency_compensation: bool,
    /// Placeholder frames streamed before real data.
    pub warmup_frames: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            calibrate: true,
            calibration_duration: 60.0,
            extrinsics: Pose::new(pitch_rotation(15f64.to_radians()), Vector3::new(0.02, 0.08, 0.10)),
            leveled: true,
            correction_enabled: true,
            latency_compensation: true,
            warmup_frames: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: MotionSpec,
    pub drift: DriftConfig,
    pub mocap: MocapObserverConfig,
    pub correction: CorrectionConfig,
    pub pipeline: PipelineConfig,
    pub users: usize,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: MotionSpec::default(),
            drift: DriftConfig::default(),
            mocap: MocapObserverConfig::default(),
            correction: CorrectionConfig::default(),
            pipeline: PipelineConfig::default(),
            users: 1,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.scenario.validate()?;
        self.drift.validate()?;
        self.mocap.validate()?;
        self.correction.validate()?;
        if self.users == 0 || self.users > crate::net::packet::MAX_BODIES {
            return Err(SimError::InvalidSpec(format!(
                "users must be in 1..={}, got {}",
                crate::net::packet::MAX_BODIES,
                self.users
            )));
        }
        if self.scenario.kind == MotionKind::Fistbump && self.users != 2 {
            return Err(SimError::InvalidSpec(format!(
                "the fistbump scenario has exactly 2 users, got {}",
                self.users
            )));
        }
        let p = &self.pipeline;
        if p.calibrate && !(p.calibration_duration >= MIN_CALIBRATION_DURATION) {
            return Err(SimError::InvalidSpec(format!(
                "calibration_duration must be at least {MIN_CALIBRATION_DURATION} s, got {}",
                p.calibration_duration
            )));
        }
        Ok(())
    }

    /// Lower-case motion name used in file names.
    pub fn name(&self) -> String {
        format!("{:?}", self.scenario.kind).to_lowercase()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentEventKind {
    Initialized,
    CorrectionStarted,
    CorrectionCompleted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentEvent {
    pub time: f64,
    pub user: u16,
    pub kind: AlignmentEventKind,
    /// Residual that triggered the event, meters / radians.
    pub position_error: f64,
    pub yaw_error: f64,
}

/// Left and right controller tracks of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct HandTracks {
    pub left_truth: Trajectory,
    pub right_truth: Trajectory,
    pub left_estimate: Trajectory,
    pub right_estimate: Trajectory,
}

/// Another user's poses as received through the hub.
#[derive(Debug, Clone, PartialEq)]
pub struct RemoteView {
    pub from: u16,
    pub head: Trajectory,
    pub left_hand: Trajectory,
    pub right_hand: Trajectory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserRun {
    pub user: u16,
    /// True eye pose in the world.
    pub ground_truth: Trajectory,
    /// `origin ∘ camera`, from the first alignment on.
    pub estimate: Trajectory,
    /// Camera pose in the device's own tracking frame.
    pub device: Trajectory,
    /// Decoded mocap body pose (engine convention), stamped at arrival.
    pub mocap_body: Trajectory,
    /// Mocap-derived eye pose, stamped at arrival.
    pub mocap_eye: Trajectory,
    pub hands: Option<HandTracks>,
    pub calibration: Option<StreamCalibration>,
    /// Extrinsics and latency the client actually used.
    pub extrinsics: Pose,
    pub latency: f64,
    pub events: Vec<AlignmentEvent>,
    /// Delivery time minus capture timestamp, per delivered packet.
    pub transport_delays: Vec<f64>,
    pub received: Vec<RemoteView>,
}

impl UserRun {
    pub fn corrections(&self) -> usize {
        self.events
            .iter()
            .filter(|e| e.kind == AlignmentEventKind::CorrectionCompleted)
            .count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub users: Vec<UserRun>,
    pub contacts: Vec<InteractionEvent>,
    /// Every mocap frame as sent on the wire, in arrival order.
    pub mocap_capture: Vec<u8>,
    /// Every shared-pose message published to the hub, in publish order.
    pub hub_capture: Vec<u8>,
}

impl ScenarioRun {
    /// All alignment events, ordered by time then user.
    pub fn events(&self) -> Vec<AlignmentEvent> {
        let mut all: Vec<AlignmentEvent> = self.users.iter().flat_map(|u| u.events.iter().copied()).collect();
        all.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.user.cmp(&b.user)));
        all
    }
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioRun, SimError> {
    run_scenario_with(cfg, Mode::available())
}

/// Runs many scenarios; results are in input order.
pub fn run_batch(configs: &[ScenarioConfig], mode: Mode) -> Vec<Result<ScenarioRun, SimError>> {
    par::map_slice(mode, configs, |c| run_scenario_with(c, Mode::Sequential))
}

/// Ground truth for every user. Single-user circuits are shared by rotating
/// user `u` of `n` by `2πu/n` about the vertical axis through the origin.
fn user_motions(cfg: &ScenarioConfig) -> Result<(Vec<UserMotion>, Vec<InteractionEvent>), SimError> {
    let g = gen_motion(&cfg.scenario)?;
    if cfg.scenario.kind == MotionKind::Fistbump {
        return Ok((g.users, g.contacts));
    }
    let base = &g.users[0];
    let n = cfg.users;
    let users = (0..n)
        .map(|u| {
            if u == 0 {
                return base.clone();
            }
            let turn = Pose::from_rotation(yaw_rotation(2.0 * std::f64::consts::PI * u as f64 / n as f64));
            UserMotion {
                head: base.head.map_poses(|p| turn.compose(p)),
                left_hand: None,
                right_hand: None,
            }
        })
        .collect();
    Ok((users, g.contacts))
}

/// Mocap stream as seen by a client: decoded, converted to the engine frame,
/// stamped at arrival.
fn wire_roundtrip(pose: &Pose) -> Pose {
    RigidBody::from_pose(1, pose).pose().expect("finite pose survives the wire")
}

fn calibrate_user(cfg: &ScenarioConfig, user: usize) -> Result<StreamCalibration, SimError> {
    let spec = MotionSpec {
        kind: MotionKind::Patrol,
        extent: CALIBRATION_SIDE,
        duration: cfg.pipeline.calibration_duration,
        ..cfg.scenario
    };
    let gt = gen_motion(&spec)?.users.remove(0).head;
    let device = apply_drift(
        &gt,
        &drift_process(&gt.times(), &DriftConfig {
            frame_offset: cfg.drift.frame_offset,
            ..DriftConfig::none()
        }),
        &DriftConfig::none(),
        0,
    );
    let mocap_cfg = MocapObserverConfig {
        seed: mix_seed(&[cfg.seed, cfg.mocap.seed, user as u64, 5]),
        ..cfg.mocap
    };
    let frames = observe_frames(&gt, &cfg.pipeline.extrinsics.inverse(), &mocap_cfg);
    let samples = frames
        .iter()
        .map(|f| TrajectorySample::new(f.arrival_time, crate::geom::convert_handedness(&wire_roundtrip(&f.pose))))
        .collect();
    let mocap_world = Trajectory::new(samples, cfg.mocap.rate).expect("arrival times increase");
    let calib_cfg = CalibConfig {
        rate: cfg.mocap.rate,
        max_lag_frames: 30.max((cfg.mocap.latency_frames + cfg.mocap.jitter_frames) as usize + 10),
        ..CalibConfig::default()
    };
    Ok(calibrate_streams(&mocap_world, &device, &calib_cfg)?)
}

/// The shared packet stream: encoded frames and their arrival times.
fn mocap_stream(cfg: &ScenarioConfig, heads: &[&Trajectory]) -> Result<(Vec<Vec<u8>>, Vec<f64>), SimError> {
    let shared = MocapObserverConfig {
        seed: mix_seed(&[cfg.seed, cfg.mocap.seed, 3]),
        ..cfg.mocap
    };
    let captures = capture_times(heads[0], &shared);
    let arrivals = arrival_times(&captures, &shared);
    let x_inv = cfg.pipeline.extrinsics.inverse();
    let observed: Vec<Vec<Pose>> = heads
        .iter()
        .enumerate()
        .map(|(u, head)| {
            let c = MocapObserverConfig {
                seed: mix_seed(&[cfg.seed, cfg.mocap.seed, u as u64, 2]),
                ..cfg.mocap
            };
            observe_frames(head, &x_inv, &c).into_iter().map(|f| f.pose).collect()
        })
        .collect();
    let frames = captures
        .iter()
        .enumerate()
        .map(|(k, &tc)| {
            let bodies = observed
                .iter()
                .enumerate()
                .map(|(u, poses)| {
                    let id = u as u16 + 1;
                    if k < cfg.pipeline.warmup_frames as usize {
                        RigidBody::placeholder(id)
                    } else {
                        RigidBody::from_pose(id, &poses[k])
                    }
                })
                .collect();
            encode_packet(&RigidBodyPacket {
                frame_number: k as u32,
                timestamp_us: (tc * 1e6).round() as u64,
                bodies,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((frames, arrivals))
}

struct ClientOutput {
    estimate: Vec<Option<[Pose; 3]>>,
    mocap_body: Vec<TrajectorySample>,
    mocap_eye: Vec<TrajectorySample>,
    events: Vec<AlignmentEvent>,
    delays: Vec<f64>,
}

/// One headset client: decodes the shared stream and keeps its origin
/// aligned. `locals` are the device-frame head, left and right tracks.
#[allow(clippy::too_many_arguments)]
fn run_client(
    cfg: &ScenarioConfig,
    user: usize,
    frames: &[Vec<u8>],
    arrivals: &[f64],
    device: &Trajectory,
    hands_local: Option<(&Trajectory, &Trajectory)>,
    extrinsics: &Pose,
    latency: f64,
) -> Result<ClientOutput, SimError> {
    let id = user as u16 + 1;
    let mut rng = seeded_rng(mix_seed(&[cfg.seed, user as u64, 4]), 0);
    let mut decoder = StreamDecoder::new();
    let mut session = SessionState::new(id);
    let mut state: Option<AlignmentState> = None;
    let mut out = ClientOutput {
        estimate: Vec::with_capacity(device.len()),
        mocap_body: Vec::new(),
        mocap_eye: Vec::new(),
        events: Vec::new(),
        delays: Vec::new(),
    };
    let (t_first, t_last) = (device.samples()[0].t, device.samples()[device.len() - 1].t);
    let dt = 1.0 / cfg.mocap.rate;
    let mut next = 0;
    let mut pending = Vec::new();

    for (j, sample) in device.iter().enumerate() {
        let t = sample.t;
        pending.clear();
        while next < frames.len() && arrivals[next] <= t + 1e-9 {
            pending.extend_from_slice(&frames[next]);
            next += 1;
        }
        let mut latest = None;
        let mut off = 0;
        while off < pending.len() {
            let n = rng.random_range(1..=MAX_CHUNK).min(pending.len() - off);
            decoder.feed(&pending[off..off + n]);
            off += n;
            while let Some(packet) = decoder.next_packet()? {
                if let Some(d) = session.step(&packet) {
                    out.delays.push(t - d.timestamp_us as f64 * 1e-6);
                    latest = Some(d);
                }
            }
        }

        if let Some(d) = latest {
            let eye_ref = d.pose.compose(extrinsics);
            out.mocap_body.push(TrajectorySample::new(t, d.pose));
            out.mocap_eye.push(TrajectorySample::new(t, eye_ref));
            let t_cam = if cfg.pipeline.latency_compensation { t - latency } else { t };
            let cam = device.sample_at(t_cam.clamp(t_first, t_last)).expect("clamped into range");
            let target = if cfg.pipeline.leveled {
                solve_origin_leveled(&eye_ref, &cam)?
            } else {
                solve_origin_full(&eye_ref, &cam)
            };
            match &mut state {
                None => {
                    state = Some(AlignmentState::new(target));
                    out.events.push(AlignmentEvent {
                        time: t,
                        user: user as u16,
                        kind: crate::sim::AlignmentEventKind::Initialized,
                        position_error: 0.0,
                        yaw_error: 0.0,
                    });
                }
                Some(s) if cfg.pipeline.correction_enabled => {
                    let residual = drift_residual(&s.origin.compose(&cam), &eye_ref);
                    let was = s.is_correcting();
                    *s = correction_step(s, residual, &target, &cfg.correction, dt);
                    let kind = match (was, s.is_correcting()) {
                        (false, true) => Some(AlignmentEventKind::CorrectionStarted),
                        (true, false) => Some(AlignmentEventKind::CorrectionCompleted),
                        _ => None,
                    };
                    if let Some(kind) = kind {
                        out.events.push(AlignmentEvent {
                            time: t,
                            user: user as u16,
                            kind,
                            position_error: residual.position_error,
                            yaw_error: residual.yaw_error,
                        });
                    }
                }
                Some(_) => {}
            }
        }

        out.estimate.push(state.as_ref().map(|s| {
            let head = s.origin.compose(&sample.pose);
            match hands_local {
                Some((l, r)) => [
                    head,
                    s.origin.compose(&l.samples()[j].pose),
                    s.origin.compose(&r.samples()[j].pose),
                ],
                None => [head; 3],
            }
        }));
    }
    Ok(out)
}

fn collect(times: &[f64], slots: &[Option<[Pose; 3]>], which: usize, rate: f64) -> Trajectory {
    let samples = times
        .iter()
        .zip(slots)
        .filter_map(|(&t, s)| s.map(|p| TrajectorySample::new(t, p[which])))
        .collect();
    Trajectory::new(samples, rate).expect("tick times increase")
}

/// Publishes every user's world poses each tick and records what the others
/// receive. Returns the published bytes.
fn hub_exchange(runs: &mut [UserRun], slots: &[Vec<Option<[Pose; 3]>>], times: &[f64], rate: f64) -> Result<Vec<u8>, SimError> {
    let hub = Hub::new();
    let n = runs.len();
    for u in 0..n {
        hub.register(u as u16);
    }
    let mut capture = Vec::new();
    // received[u][from] = (t, [head, left, right]) samples
    let mut received: Vec<BTreeMap<u16, Vec<(f64, [Pose; 3])>>> = vec![BTreeMap::new(); n];
    let mut last_frame: Vec<BTreeMap<u16, u32>> = vec![BTreeMap::new(); n];
    for (j, &t) in times.iter().enumerate() {
        for (u, user_slots) in slots.iter().enumerate() {
            let Some([head, left, right]) = user_slots[j] else { continue };
            let bytes = encode_shared_pose(&SharedPoseMessage {
                user_id: u as u16,
                frame_number: j as u32,
                head,
                left_hand: left,
                right_hand: right,
            });
            capture.extend_from_slice(&bytes);
            match decode_frame(&bytes)? {
                Decoded::Message(Message::SharedPose(m), _) => {
                    hub.publish(m)?;
                }
                other => return Err(SimError::InvalidSpec(format!("hub message did not round-trip: {other:?}"))),
            }
        }
        for u in 0..n {
            for m in hub.poll(u as u16)? {
                let seen = last_frame[u].entry(m.user_id).or_insert(u32::MAX);
                if *seen != u32::MAX && *seen >= m.frame_number {
                    continue;
                }
                *seen = m.frame_number;
                received[u]
                    .entry(m.user_id)
                    .or_default()
                    .push((t, [m.head, m.left_hand, m.right_hand]));
            }
        }
    }
    for (run, views) in runs.iter_mut().zip(received) {
        run.received = views
            .into_iter()
            .map(|(from, samples)| {
                let track = |k: usize| {
                    Trajectory::new(samples.iter().map(|(t, p)| TrajectorySample::new(*t, p[k])).collect(), rate)
                        .expect("tick times increase")
                };
                RemoteView {
                    from,
                    head: track(0),
                    left_hand: track(1),
                    right_hand: track(2),
                }
            })
            .collect();
    }
    Ok(capture)
}

/// Runs a full scenario. Users are simulated in parallel under
/// [`Mode::Parallel`]; results are identical in both modes.
pub fn run_scenario_with(cfg: &ScenarioConfig, mode: Mode) -> Result<ScenarioRun, SimError> {
    cfg.validate()?;
    let (motions, contacts) = user_motions(cfg)?;
    let n = motions.len();
    let heads: Vec<&Trajectory> = motions.iter().map(|m| &m.head).collect();
    let (frames, arrivals) = mocap_stream(cfg, &heads)?;
    let times = motions[0].head.times();
    let rate = cfg.scenario.rate;

    let results = par::map_range(mode, n, |u| -> Result<(UserRun, Vec<Option<[Pose; 3]>>), SimError> {
        let motion = &motions[u];
        let calibration = if cfg.pipeline.calibrate {
            Some(calibrate_user(cfg, u)?)
        } else {
            None
        };
        let (extrinsics, latency) = match &calibration {
            Some(c) => (c.extrinsics.transform, c.latency.latency),
            None => (
                cfg.pipeline.extrinsics,
                cfg.mocap.latency_frames as f64 / cfg.mocap.rate,
            ),
        };

        let drift_cfg = DriftConfig {
            seed: mix_seed(&[cfg.seed, cfg.drift.seed, u as u64, 1]),
            ..cfg.drift
        };
        let distortion = drift_process(&times, &drift_cfg);
        let device = apply_drift(&motion.head, &distortion, &drift_cfg, 0);
        let hands_local = match (&motion.left_hand, &motion.right_hand) {
            (Some(l), Some(r)) => Some((
                apply_drift(l, &distortion, &drift_cfg, 1),
                apply_drift(r, &distortion, &drift_cfg, 2),
            )),
            _ => None,
        };

        let out = run_client(
            cfg,
            u,
            &frames,
            &arrivals,
            &device,
            hands_local.as_ref().map(|(l, r)| (l, r)),
            &extrinsics,
            latency,
        )?;
        let hands = match (&motion.left_hand, &motion.right_hand) {
            (Some(l), Some(r)) => Some(HandTracks {
                left_truth: l.clone(),
                right_truth: r.clone(),
                left_estimate: collect(&times, &out.estimate, 1, rate),
                right_estimate: collect(&times, &out.estimate, 2, rate),
            }),
            _ => None,
        };
        let run = UserRun {
            user: u as u16,
            ground_truth: motion.head.clone(),
            estimate: collect(&times, &out.estimate, 0, rate),
            device,
            mocap_body: Trajectory::new(out.mocap_body, cfg.mocap.rate).expect("tick times increase"),
            mocap_eye: Trajectory::new(out.mocap_eye, cfg.mocap.rate).expect("tick times increase"),
            hands,
            calibration,
            extrinsics,
            latency,
            events: out.events,
            transport_delays: out.delays,
            received: Vec::new(),
        };
        Ok((run, out.estimate))
    });

    let mut runs = Vec::with_capacity(n);
    let mut slots = Vec::with_capacity(n);
    for r in results {
        let (run, s) = r?;
        runs.push(run);
        slots.push(s);
    }
    let hub_capture = if n > 1 {
        hub_exchange(&mut runs, &slots, &times, rate)?
    } else {
        Vec::new()
    };
    Ok(ScenarioRun {
        users: runs,
        contacts,
        mocap_capture: frames.concat(),
        hub_capture,
    })
}

/// Pooled RMSE over several per-user error lists.
fn pooled(parts: &[(f64, usize)]) -> f64 {
    let (sum, count) = parts
        .iter()
        .fold((0.0, 0usize), |(s, c), &(rmse, k)| (s + rmse * rmse * k as f64, c + k));
    if count == 0 {
        0.0
    } else {
        (sum / count as f64).sqrt()
    }
}

/// Metrics and plots for a finished run.
///
/// `ate_rmse` compares the estimate with the true eye pose, pooled over all
/// users. `ate_rmse_compensated` compares it with the mocap-derived eye pose
/// shifted back by the latency the client used.
pub fn build_report(cfg: &ScenarioConfig, run: &ScenarioRun) -> Result<(MetricsReport, PlotSet), SimError> {
    let max_dt = 0.5 / cfg.scenario.rate;
    let mode = Mode::Sequential;
    let mut report = MetricsReport::new(cfg.name(), cfg.seed);
    let mut truth = Vec::new();
    let mut comp = Vec::new();
    let mut aligned = Vec::new();
    let mut series = None;
    for u in &run.users {
        let d = ate_details(&u.estimate, &u.ground_truth, max_dt, false, mode)?;
        let a = ate_details(&u.estimate, &u.ground_truth, max_dt, true, mode)?;
        let vs_mocap = ate_details(&u.estimate, &u.mocap_eye, max_dt, false, mode)?;
        let vs_comp = ate_details(&u.estimate, &u.mocap_eye.shifted(-u.latency), max_dt, false, mode)?;
        truth.push((d.rmse, d.sample_count()));
        comp.push((vs_comp.rmse, vs_comp.sample_count()));
        aligned.push((a.rmse, a.sample_count()));
        let mean_delay = if u.transport_delays.is_empty() {
            0.0
        } else {
            u.transport_delays.iter().sum::<f64>() / u.transport_delays.len() as f64
        };
        let hands = u.hands.as_ref().map(|h| -> Result<_, SimError> {
            Ok(json!({
                "left_ate_rmse": ate_details(&h.left_estimate, &h.left_truth, max_dt, false, mode)?.rmse,
                "right_ate_rmse": ate_details(&h.right_estimate, &h.right_truth, max_dt, false, mode)?.rmse,
            }))
        });
        report.users.push(json!({
            "user": u.user,
            "ate_rmse": d.rmse,
            "ate_rmse_vs_mocap": vs_mocap.rmse,
            "ate_rmse_vs_mocap_compensated": vs_comp.rmse,
            "ate_rmse_aligned": a.rmse,
            "sample_count": d.sample_count(),
            "corrections": u.corrections(),
            "extrinsics": u.extrinsics,
            "latency": u.latency,
            "mean_transport_delay": mean_delay,
            "hands": hands.transpose()?,
            "received_from": u.received.iter().map(|r| r.from).collect::<Vec<_>>(),
        }));
        if series.is_none() {
            series = Some(
                d.errors
                    .iter()
                    .map(|(t, e)| (*t, [e.x, e.y, e.z]))
                    .collect::<Vec<_>>(),
            );
        }
    }
    report.ate_rmse = pooled(&truth);
    report.ate_rmse_compensated = Some(pooled(&comp));
    report.ate_rmse_aligned = Some(pooled(&aligned));
    report.sample_count = truth.iter().map(|p| p.1).sum();
    let first = &run.users[0];
    report.latency = match &first.calibration {
        Some(c) => Some(c.latency),
        None => estimate_latency(&first.ground_truth, &first.mocap_eye, cfg.mocap.rate, 30)
            .ok()
            .map(|l: LatencyEstimate| l),
    };
    report.config = serde_json::to_value(cfg).expect("config serializes");

    let mut trajectories = Vec::new();
    for u in &run.users {
        trajectories.push(NamedTrajectory::new(format!("u{}_truth", u.user), u.ground_truth.clone()));
        trajectories.push(NamedTrajectory::new(format!("u{}_estimate", u.user), u.estimate.clone()));
        if let Some(h) = &u.hands {
            trajectories.push(NamedTrajectory::new(format!("u{}_right_truth", u.user), h.right_truth.clone()));
            trajectories.push(NamedTrajectory::new(format!("u{}_right_estimate", u.user), h.right_estimate.clone()));
        }
    }
    let plots = PlotSet {
        trajectories,
        events: run.contacts.clone(),
        event_window: 1.0,
        error_series: series,
    };
    Ok((report, plots))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::CorrectionMode;
    use crate::net::decode_all;
    use crate::sim::DriftMode;

    fn quiet(kind: MotionKind, duration: f64) -> ScenarioConfig {
        ScenarioConfig {
            scenario: MotionSpec {
                kind,
                duration,
                ..Default::default()
            },
            drift: DriftConfig::none(),
            mocap: MocapObserverConfig::ideal(),
            pipeline: PipelineConfig {
                calibration_duration: 20.0,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn noiseless_line_tracks_exactly() {
        let cfg = ScenarioConfig {
            scenario: MotionSpec {
                kind: MotionKind::Line,
                extent: 4.0,
                duration: 20.0,
                ..Default::default()
            },
            ..quiet(MotionKind::Line, 20.0)
        };
        let run = run_scenario(&cfg).unwrap();
        let u = &run.users[0];
        let cal = u.calibration.as_ref().unwrap();
        assert_eq!(cal.latency.lag_frames, 0);
        let (dt, da) = cal.extrinsics.transform.distance_to(&cfg.pipeline.extrinsics);
        assert!(dt < 1e-5 && da < 1e-5, "{dt} {da}");
        // f32 millimeters on the wire bound the agreement
        let ate = crate::eval::ate_rmse(&u.estimate, &u.ground_truth, 0.005).unwrap();
        assert!(ate < 1e-5, "{ate}");
        assert_eq!(u.estimate.first().unwrap().t, 0.5);
        assert_eq!(u.corrections(), 0);
        assert_eq!(u.events.len(), 1);
    }

    #[test]
    fn shared_stream_decodes_with_placeholders_first() {
        let cfg = quiet(MotionKind::Circle, 5.0);
        let run = run_scenario(&cfg).unwrap();
        let msgs = decode_all(&run.mocap_capture).unwrap();
        assert_eq!(msgs.len(), 501);
        for (k, m) in msgs.iter().enumerate() {
            let Message::RigidBodies(p) = m else { panic!() };
            assert_eq!(p.frame_number as usize, k);
            assert_eq!(p.bodies[0].is_placeholder(), k < 50);
        }
        assert!(run.hub_capture.is_empty());
    }

    #[test]
    fn latency_is_compensated_and_reported() {
        let mut cfg = quiet(MotionKind::Circle, 20.0);
        cfg.mocap.latency_frames = 7;
        cfg.mocap.noise_pos = 5e-4;
        let run = run_scenario(&cfg).unwrap();
        let u = &run.users[0];
        assert_eq!(u.calibration.as_ref().unwrap().latency.lag_frames, 7);
        for d in &u.transport_delays {
            assert!((d - 0.07).abs() < 1e-6, "{d}");
        }
        let (report, _) = build_report(&cfg, &run).unwrap();
        assert_eq!(report.latency.unwrap().lag_frames, 7);
        assert!(report.ate_rmse < 0.005, "{}", report.ate_rmse);
    }

    #[test]
    fn correction_bounds_drift() {
        let mut cfg = quiet(MotionKind::Patrol, 120.0);
        cfg.scenario.extent = 3.0;
        cfg.drift = DriftConfig {
            mode: DriftMode::LinearBias,
            position_drift_rate: 0.002,
            yaw_drift_rate: 0.0,
            ..DriftConfig::none()
        };
        cfg.pipeline.calibrate = false;
        let on = run_scenario(&cfg).unwrap();
        cfg.pipeline.correction_enabled = false;
        let off = run_scenario(&cfg).unwrap();
        let err = |r: &ScenarioRun| crate::eval::ate_rmse(&r.users[0].estimate, &r.users[0].ground_truth, 0.005).unwrap();
        // linear drift of 0.2 m/100 s uncorrected vs a 3 cm sawtooth
        assert!(err(&off) > 0.1, "{}", err(&off));
        assert!(err(&on) < 0.03, "{}", err(&on));
        let u = &on.users[0];
        assert!(u.corrections() >= 5);
        let worst = u
            .estimate
            .iter()
            .map(|s| (s.pose.translation - u.ground_truth.sample_at(s.t).unwrap().translation).norm())
            .fold(0.0, f64::max);
        assert!(worst < 0.03 + 31.0 * 0.002 / 100.0 + 0.5 * 0.002 + 1e-4, "{worst}");
    }

    #[test]
    fn snap_mode_corrects_immediately() {
        let mut cfg = quiet(MotionKind::Circle, 30.0);
        cfg.drift = DriftConfig {
            tracking_loss: Some(crate::sim::TrackingLoss {
                time: 10.0,
                jump: Pose::from_translation(0.2, 0.0, 0.0),
            }),
            ..DriftConfig::none()
        };
        cfg.correction.mode = CorrectionMode::Snap;
        let run = run_scenario(&cfg).unwrap();
        let ev = &run.users[0].events;
        assert_eq!(ev.len(), 3);
        assert_eq!(ev[1].kind, AlignmentEventKind::CorrectionStarted);
        // 30 violating frames, starting with the first delivery showing the jump
        assert!((ev[1].time - (10.0 + 0.29)).abs() < 1e-9, "{}", ev[1].time);
        assert!((ev[2].time - ev[1].time - 0.01).abs() < 1e-9);
        let after = run.users[0].estimate.sample_at(15.0).unwrap();
        let truth = run.users[0].ground_truth.sample_at(15.0).unwrap();
        assert!((after.translation - truth.translation).norm() < 1e-5);
    }

    #[test]
    fn fistbump_shares_poses_through_hub() {
        let mut cfg = quiet(MotionKind::Fistbump, 50.0);
        cfg.users = 2;
        let run = run_scenario(&cfg).unwrap();
        assert_eq!(run.contacts.len(), 4);
        assert!(!run.hub_capture.is_empty());
        for (me, other) in [(0usize, 1usize), (1, 0)] {
            let view = &run.users[me].received[0];
            assert_eq!(view.from as usize, other);
            let own = &run.users[other].hands.as_ref().unwrap().right_estimate;
            for c in &run.contacts {
                let a = view.right_hand.sample_at(c.time).unwrap();
                assert_eq!(a, own.sample_at(c.time).unwrap());
                assert!((a.translation - Vector3::from(c.point)).norm() < 1e-5);
            }
        }
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let mut cfg = ScenarioConfig {
            users: 3,
            seed: 7,
            ..Default::default()
        };
        cfg.scenario.duration = 10.0;
        cfg.pipeline.calibration_duration = 15.0;
        let a = run_scenario_with(&cfg, Mode::Sequential).unwrap();
        let b = run_scenario_with(&cfg, Mode::Parallel).unwrap();
        assert_eq!(a, b);
        let batch = run_batch(&[cfg, cfg], Mode::Parallel);
        assert_eq!(batch[1].as_ref().unwrap(), &a);
        assert_eq!(a.users[1].received.len(), 2);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = ScenarioConfig::default();
        cfg.users = 0;
        assert!(run_scenario(&cfg).is_err());
        cfg.users = 1;
        cfg.scenario.kind = MotionKind::Fistbump;
        assert!(run_scenario(&cfg).is_err());
        let mut cfg = ScenarioConfig::default();
        cfg.pipeline.calibration_duration = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = ScenarioConfig::default();
        let v = serde_json::to_string(&cfg).unwrap();
        let back: ScenarioConfig = serde_json::from_str(&v).unwrap();
        assert_eq!(back, cfg);
        let partial: ScenarioConfig = serde_json::from_str(r#"{"users": 2, "scenario": {"kind": "line"}}"#).unwrap();
        assert_eq!(partial.users, 2);
        assert_eq!(partial.scenario.kind, MotionKind::Line);
        assert!(serde_json::from_str::<ScenarioConfig>(r#"{"nope": 1}"#).is_err());
    }
}
