//! Command implementations behind the `colotrack` binary.

use clap::{Args, Parser, Subcommand, ValueEnum};
use colotrack_core::align::CorrectionConfig;
use colotrack_core::calib::{associate, calibrate_streams, estimate_extrinsics, CalibConfig, CalibError};
use colotrack_core::eval::{
    ate_details, estimate_latency, export_report, EvalError, MetricsReport, NamedTrajectory, PlotSet,
};
use colotrack_core::geom::convert_handedness;
use colotrack_core::net::{
    decode_frame, receive_packets, Decoded, Hub, HubServer, Message, MocapServer, NetError, DEFAULT_HUB_PORT,
    DEFAULT_MOCAP_PORT,
};
use colotrack_core::par::Mode;
use colotrack_core::sim::{
    build_report, run_scenario, DriftConfig, MocapObserverConfig, MotionSpec, PipelineConfig, ScenarioConfig,
    SimError,
};
use colotrack_core::trajectory::{Trajectory, TrajectoryError, TrajectorySample};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};
use thiserror::Error;

/// Exit codes, one per failure class.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const IO: i32 = 3;
    pub const INSUFFICIENT_DATA: i32 = 4;
    pub const DEGENERATE: i32 = 5;
    pub const INCONSISTENT: i32 = 6;
    pub const BIND: i32 = 7;
    pub const MALFORMED: i32 = 8;
    pub const EVAL: i32 = 9;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error(transparent)]
    Calib(#[from] CalibError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("cannot bind: {0}")]
    Bind(String),
    #[error("malformed capture: {0}")]
    Malformed(String),
    #[error(transparent)]
    Net(NetError),
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::Bind(m) => CliError::Bind(m),
            NetError::Malformed(m) => CliError::Malformed(m),
            other => CliError::Net(other),
        }
    }
}

fn calib_code(e: &CalibError) -> i32 {
    match e {
        CalibError::InsufficientData { .. } | CalibError::LengthMismatch(..) => exit::INSUFFICIENT_DATA,
        CalibError::Latency(EvalError::InsufficientOverlap { .. }) => exit::INSUFFICIENT_DATA,
        CalibError::Latency(_) | CalibError::DegenerateGeometry => exit::DEGENERATE,
        CalibError::InconsistentData(_) => exit::INCONSISTENT,
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Io { .. } => exit::IO,
            CliError::Calib(e) => calib_code(e),
            CliError::Sim(e) => match e {
                SimError::InvalidSpec(_) | SimError::Align(_) => exit::USAGE,
                SimError::Calib(c) => calib_code(c),
                SimError::Geom(_) => exit::DEGENERATE,
                SimError::Net(_) => exit::MALFORMED,
                SimError::Eval(_) => exit::EVAL,
            },
            CliError::Eval(EvalError::Io { .. }) => exit::IO,
            CliError::Eval(_) => exit::EVAL,
            CliError::Bind(_) => exit::BIND,
            CliError::Malformed(_) => exit::MALFORMED,
            CliError::Net(_) => exit::IO,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

fn traj_err(path: &Path, e: TrajectoryError) -> CliError {
    match e {
        TrajectoryError::Io { .. } => io_err(path, e),
        other => CliError::Usage(format!("{}: {other}", path.display())),
    }
}

/// Simulation config file (TOML). Every section and field is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: MotionSpec,
    pub drift: DriftConfig,
    pub mocap: MocapObserverConfig,
    pub correction: CorrectionConfig,
    pub pipeline: PipelineConfig,
    pub users: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = ScenarioConfig::default();
        Self {
            scenario: s.scenario,
            drift: s.drift,
            mocap: s.mocap,
            correction: s.correction,
            pipeline: s.pipeline,
            users: s.users,
            seed: s.seed,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.scenario().validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }

    pub fn scenario(&self) -> ScenarioConfig {
        ScenarioConfig {
            scenario: self.scenario,
            drift: self.drift,
            mocap: self.mocap,
            correction: self.correction,
            pipeline: self.pipeline,
            users: self.users,
            seed: self.seed,
        }
    }

    fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "colotrack", version, about = "Co-located VR tracking: calibrate, simulate, serve, evaluate, replay")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the mocap-body -> eye-center extrinsics from two pose CSVs.
    Calibrate(CalibrateArgs),
    /// Run a simulated scenario end to end and write all outputs.
    Simulate(SimulateArgs),
    /// Serve a mocap packet stream and the pose-sharing hub over TCP.
    Serve(ServeArgs),
    /// Compute ATE, latency and plots for an estimate against a reference.
    Evaluate(EvaluateArgs),
    /// Decode a packet capture (file or live server) into per-body CSVs.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Convention {
    /// Left-handed, Y up (as written by `simulate`).
    Engine,
    /// Right-handed, Z up (as sent on the wire).
    Mocap,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Mocap body poses, stamped at arrival.
    #[arg(long)]
    pub mocap: PathBuf,
    /// Eye/camera poses.
    #[arg(long)]
    pub eye: PathBuf,
    /// Run config; its mocap rate is used when --rate is not given.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "extrinsics.json")]
    pub out: PathBuf,
    /// Coordinate convention of the mocap CSV.
    #[arg(long, value_enum, default_value_t = Convention::Engine)]
    pub mocap_convention: Convention,
    /// Both files are already in the same world frame; skip the frame
    /// alignment and the latency estimate.
    #[arg(long)]
    pub world: bool,
    /// Known mocap latency in seconds (with --world).
    #[arg(long, default_value_t = 0.0)]
    pub latency: f64,
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long, default_value_t = colotrack_core::calib::DEFAULT_MIN_PAIRS)]
    pub min_pairs: usize,
    #[arg(long, default_value_t = colotrack_core::calib::DEFAULT_MAX_DT)]
    pub max_dt: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: String,
    #[arg(long, env = "COLOTRACK_MOCAP_PORT", default_value_t = DEFAULT_MOCAP_PORT)]
    pub mocap_port: u16,
    #[arg(long, env = "COLOTRACK_HUB_PORT", default_value_t = DEFAULT_HUB_PORT)]
    pub hub_port: u16,
    /// Stream this capture file instead of simulating.
    #[arg(long, conflicts_with = "config")]
    pub replay: Option<PathBuf>,
    /// Simulate this config and stream its packets.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Frames per second (defaults to the config mocap rate, or 100).
    #[arg(long)]
    pub rate: Option<f64>,
    /// Stop after this many seconds instead of waiting for a signal.
    #[arg(long)]
    pub duration: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub est: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long, default_value = "out")]
    pub output_dir: PathBuf,
    /// Name used for output files.
    #[arg(long, default_value = "evaluate")]
    pub name: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Common grid rate for the latency estimate, Hz.
    #[arg(long, default_value_t = 100.0)]
    pub rate: f64,
    #[arg(long, default_value_t = 30)]
    pub max_lag: usize,
    /// Association tolerance, seconds (defaults to half a frame).
    #[arg(long)]
    pub max_dt: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Capture file written by `simulate`.
    #[arg(long, required_unless_present = "connect", conflicts_with = "connect")]
    pub input: Option<PathBuf>,
    /// Read from a running mocap server instead.
    #[arg(long)]
    pub connect: Option<String>,
    /// Stop after this many frames (with --connect).
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value = "replay")]
    pub output_dir: PathBuf,
    /// Write poses in the engine convention instead of the wire convention.
    #[arg(long)]
    pub engine: bool,
    /// Rate used to time shared-pose messages, Hz.
    #[arg(long, default_value_t = 100.0)]
    pub rate: f64,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Calibrate(a) => calibrate(&a),
        Command::Simulate(a) => simulate(&a).map(|_| ()),
        Command::Serve(a) => serve(&a),
        Command::Evaluate(a) => evaluate(&a).map(|_| ()),
        Command::Replay(a) => replay(&a),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn calibrate(a: &CalibrateArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load_or_default(a.config.as_deref())?;
    let rate = a.rate.unwrap_or(cfg.mocap.rate);
    let mut mocap = Trajectory::load_csv(&a.mocap, Some(rate)).map_err(|e| traj_err(&a.mocap, e))?;
    if a.mocap_convention == Convention::Mocap {
        mocap = mocap.map_poses(convert_handedness);
    }
    let eye = Trajectory::load_csv(&a.eye, None).map_err(|e| traj_err(&a.eye, e))?;
    let found = mocap.len().min(eye.len());
    if found < a.min_pairs {
        return Err(CalibError::InsufficientData {
            found,
            required: a.min_pairs,
        }
        .into());
    }
    let calib_cfg = CalibConfig {
        min_pairs: a.min_pairs,
        max_dt: a.max_dt,
        rate,
        ..CalibConfig::default()
    };
    let doc = if a.world {
        let shifted = mocap.shifted(-a.latency);
        let pairs: Vec<_> = associate(&shifted, &eye, a.max_dt)
            .into_iter()
            .map(|(i, j)| (shifted.samples()[i].pose, eye.samples()[j].pose))
            .collect();
        let x = estimate_extrinsics(&pairs, &calib_cfg)?;
        json!({ "extrinsics": x, "latency": a.latency, "pair_count": pairs.len() })
    } else {
        let c = calibrate_streams(&mocap, &eye, &calib_cfg)?;
        json!({
            "extrinsics": c.extrinsics,
            "latency": c.latency.latency,
            "latency_estimate": c.latency,
            "frame_alignment": c.frame_alignment,
            "pair_count": c.pair_count,
            "iterations": c.iterations,
        })
    };
    write_json(&a.out, &doc)?;
    let x = &doc["extrinsics"];
    println!(
        "extrinsics: translation {} rotation {} (rms residual {:.3e} m, {:.3e} rad, {} pairs) -> {}",
        x["transform"]["translation"],
        x["transform"]["rotation"],
        x["rms_position_residual"].as_f64().unwrap_or(f64::NAN),
        x["rms_rotation_residual"].as_f64().unwrap_or(f64::NAN),
        doc["pair_count"],
        a.out.display()
    );
    Ok(())
}

/// Runs a simulation and returns the written files.
pub fn simulate(a: &SimulateArgs) -> Result<Vec<PathBuf>, CliError> {
    let mut cfg = RunConfig::load_or_default(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &a.output_dir {
        cfg.output_dir = dir.clone();
    }
    let sc = cfg.scenario();
    let run = run_scenario(&sc)?;
    let (report, plots) = build_report(&sc, &run)?;
    let dir = &cfg.output_dir;
    let mut written = export_report(&report, &plots, dir)?;
    let stem = report.stem();
    let mut save = |name: String, t: &Trajectory| -> Result<(), CliError> {
        let path = dir.join(format!("{stem}_{name}.csv"));
        t.save_csv(&path).map_err(|e| traj_err(&path, e))?;
        written.push(path);
        Ok(())
    };
    for u in &run.users {
        let id = u.user;
        save(format!("u{id}_device"), &u.device)?;
        save(format!("u{id}_mocap_body"), &u.mocap_body)?;
        save(format!("u{id}_mocap_eye"), &u.mocap_eye)?;
        if let Some(h) = &u.hands {
            save(format!("u{id}_left_truth"), &h.left_truth)?;
            save(format!("u{id}_left_estimate"), &h.left_estimate)?;
        }
        for r in &u.received {
            save(format!("u{id}_from{}_head", r.from), &r.head)?;
            save(format!("u{id}_from{}_right", r.from), &r.right_hand)?;
        }
    }
    let events = dir.join(format!("{stem}_events.json"));
    write_json(&events, &json!({ "events": run.events(), "contacts": run.contacts }))?;
    written.push(events);
    let bin = dir.join(format!("{stem}_mocap.bin"));
    std::fs::write(&bin, &run.mocap_capture).map_err(|e| io_err(&bin, e))?;
    written.push(bin);
    if !run.hub_capture.is_empty() {
        let hub = dir.join(format!("{stem}_hub.bin"));
        std::fs::write(&hub, &run.hub_capture).map_err(|e| io_err(&hub, e))?;
        written.push(hub);
    }
    println!(
        "{}: ATE {:.4} m over {} samples, {} alignment events, {} files in {}",
        stem,
        report.ate_rmse,
        report.sample_count,
        run.events().len(),
        written.len(),
        dir.display()
    );
    Ok(written)
}

/// Splits a capture into wire frames, keeping unknown frame types.
pub fn split_frames(bytes: &[u8]) -> Result<Vec<Vec<u8>>, CliError> {
    let mut frames = Vec::new();
    let mut off = 0;
    while off < bytes.len() {
        let used = match decode_frame(&bytes[off..])? {
            Decoded::Message(_, used) => used,
            Decoded::Unknown { consumed, .. } => consumed,
            Decoded::NeedMore => {
                return Err(CliError::Malformed(format!(
                    "truncated frame at byte {off} ({} trailing bytes)",
                    bytes.len() - off
                )))
            }
        };
        frames.push(bytes[off..off + used].to_vec());
        off += used;
    }
    Ok(frames)
}

pub fn serve(a: &ServeArgs) -> Result<(), CliError> {
    let (frames, default_rate) = match (&a.replay, &a.config) {
        (Some(path), _) => {
            let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
            (split_frames(&bytes)?, 100.0)
        }
        (None, cfg) => {
            let cfg = RunConfig::load_or_default(cfg.as_deref())?;
            let run = run_scenario(&cfg.scenario())?;
            (split_frames(&run.mocap_capture)?, cfg.mocap.rate)
        }
    };
    let rate = a.rate.unwrap_or(default_rate);
    let n = frames.len();
    let mocap = MocapServer::start((a.bind.as_str(), a.mocap_port), Arc::new(frames), rate)?;
    let hub = HubServer::start((a.bind.as_str(), a.hub_port), Arc::new(Hub::new()))?;
    println!("mocap listening on {} ({n} frames at {rate} Hz)", mocap.local_addr());
    println!("hub listening on {}", hub.local_addr());

    let stop = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&stop);
    if let Err(e) = ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst)) {
        log::warn!("no signal handler installed: {e}");
    }
    let start = Instant::now();
    while !stop.load(Ordering::SeqCst) {
        if a.duration.is_some_and(|d| start.elapsed().as_secs_f64() >= d) {
            break;
        }
        std::thread::sleep(Duration::from_millis(20));
    }
    mocap.shutdown();
    hub.shutdown();
    println!("stopped");
    Ok(())
}

/// Evaluates and returns the report.
pub fn evaluate(a: &EvaluateArgs) -> Result<MetricsReport, CliError> {
    let est = Trajectory::load_csv(&a.est, None).map_err(|e| traj_err(&a.est, e))?;
    let reference = Trajectory::load_csv(&a.reference, None).map_err(|e| traj_err(&a.reference, e))?;
    let max_dt = a.max_dt.unwrap_or(0.5 / a.rate);
    let mode = Mode::available();
    let details = ate_details(&est, &reference, max_dt, false, mode)?;
    let mut report = MetricsReport::new(a.name.clone(), a.seed);
    report.ate_rmse = details.rmse;
    report.sample_count = details.sample_count();
    report.ate_rmse_aligned = Some(ate_details(&est, &reference, max_dt, true, mode)?.rmse);
    match estimate_latency(&est, &reference, a.rate, a.max_lag) {
        Ok(l) => {
            report.ate_rmse_compensated =
                Some(ate_details(&est, &reference.shifted(-l.latency), max_dt, false, mode)?.rmse);
            report.latency = Some(l);
        }
        Err(e) => log::warn!("latency not estimated: {e}"),
    }
    report.config = json!({
        "est": a.est.display().to_string(),
        "ref": a.reference.display().to_string(),
        "rate": a.rate,
        "max_lag": a.max_lag,
        "max_dt": max_dt,
    });
    let plots = PlotSet {
        trajectories: vec![
            NamedTrajectory::new("estimate", est),
            NamedTrajectory::new("reference", reference),
        ],
        events: Vec::new(),
        event_window: 1.0,
        error_series: Some(details.errors.iter().map(|(t, e)| (*t, [e.x, e.y, e.z])).collect()),
    };
    let files = export_report(&report, &plots, &a.output_dir)?;
    match &report.latency {
        Some(l) => println!(
            "ATE {:.4} m over {} samples, latency {} frames ({:.3} s); {} files in {}",
            report.ate_rmse,
            report.sample_count,
            l.lag_frames,
            l.latency,
            files.len(),
            a.output_dir.display()
        ),
        None => println!(
            "ATE {:.4} m over {} samples; {} files in {}",
            report.ate_rmse,
            report.sample_count,
            files.len(),
            a.output_dir.display()
        ),
    }
    Ok(report)
}

fn push_increasing(tracks: &mut BTreeMap<String, Vec<TrajectorySample>>, name: String, s: TrajectorySample) -> bool {
    let v = tracks.entry(name).or_default();
    if v.last().is_some_and(|l| l.t >= s.t) {
        return false;
    }
    v.push(s);
    true
}

pub fn replay(a: &ReplayArgs) -> Result<(), CliError> {
    let messages: Vec<Message> = match (&a.input, &a.connect) {
        (Some(path), _) => {
            let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
            let mut out = Vec::new();
            for f in split_frames(&bytes)? {
                if let Decoded::Message(m, _) = decode_frame(&f)? {
                    out.push(m);
                }
            }
            out
        }
        (None, Some(addr)) => receive_packets(addr.as_str(), a.limit)?
            .into_iter()
            .map(Message::RigidBodies)
            .collect(),
        (None, None) => return Err(CliError::Usage("either --input or --connect is required".into())),
    };
    let mut tracks: BTreeMap<String, Vec<TrajectorySample>> = BTreeMap::new();
    let (mut frames, mut placeholders, mut dropped) = (0usize, 0usize, 0usize);
    let convert = |p| if a.engine { convert_handedness(&p) } else { p };
    for m in &messages {
        match m {
            Message::RigidBodies(p) => {
                frames += 1;
                let t = p.timestamp_us as f64 * 1e-6;
                for b in &p.bodies {
                    match b.pose() {
                        Some(pose) => {
                            if !push_increasing(&mut tracks, format!("body_{}", b.id), TrajectorySample::new(t, convert(pose))) {
                                dropped += 1;
                            }
                        }
                        None if b.is_placeholder() => placeholders += 1,
                        None => dropped += 1,
                    }
                }
            }
            Message::SharedPose(s) => {
                frames += 1;
                let t = s.frame_number as f64 / a.rate;
                for (part, pose) in [("head", s.head), ("left", s.left_hand), ("right", s.right_hand)] {
                    if !push_increasing(&mut tracks, format!("user_{}_{part}", s.user_id), TrajectorySample::new(t, pose)) {
                        dropped += 1;
                    }
                }
            }
            Message::Register(_) | Message::PollEnd(_) => {}
        }
    }
    std::fs::create_dir_all(&a.output_dir).map_err(|e| io_err(&a.output_dir, e))?;
    for (name, samples) in tracks.iter() {
        let path = a.output_dir.join(format!("{name}.csv"));
        let t = Trajectory::new(samples.clone(), a.rate).map_err(|e| traj_err(&path, e))?;
        t.save_csv(&path).map_err(|e| traj_err(&path, e))?;
    }
    println!(
        "{frames} frames, {} tracks, {placeholders} placeholder bodies, {dropped} dropped samples -> {}",
        tracks.len(),
        a.output_dir.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_config_defaults_and_unknown_fields() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let cfg = RunConfig::parse("users = 2\nseed = 5\n[scenario]\nkind = \"fistbump\"\n").unwrap();
        assert_eq!(cfg.users, 2);
        assert_eq!(cfg.scenario().seed, 5);
        assert!(RunConfig::parse("bogus = 1").is_err());
        assert!(RunConfig::parse("[scenario]\nspeed = -1.0").is_err());
        assert!(RunConfig::parse("users = 3\n[scenario]\nkind = \"fistbump\"").is_err());
    }

    #[test]
    fn pose_fields_parse_from_toml() {
        let cfg = RunConfig::parse(
            "[pipeline]\nextrinsics = { translation = [0.0, 0.1, 0.0] }\n[drift.tracking_loss]\ntime = 5.0\njump = { translation = [0.5, 0.0, 0.0] }\n",
        )
        .unwrap();
        assert_eq!(cfg.pipeline.extrinsics.translation.y, 0.1);
        assert_eq!(cfg.drift.tracking_loss.unwrap().jump.translation.x, 0.5);
    }

    #[test]
    fn exit_codes_are_distinct_per_class() {
        let codes = [
            CliError::Usage(String::new()).exit_code(),
            io_err(Path::new("x"), "e").exit_code(),
            CliError::Calib(CalibError::InsufficientData { found: 1, required: 50 }).exit_code(),
            CliError::Calib(CalibError::DegenerateGeometry).exit_code(),
            CliError::Calib(CalibError::InconsistentData(0.1)).exit_code(),
            CliError::from(NetError::Bind(String::new())).exit_code(),
            CliError::from(NetError::Malformed(String::new())).exit_code(),
            CliError::Eval(EvalError::InvalidRate(0.0)).exit_code(),
        ];
        assert_eq!(codes, [2, 3, 4, 5, 6, 7, 8, 9]);
    }

    #[test]
    fn split_frames_rejects_truncation() {
        let frame = colotrack_core::net::encode_message(&Message::Register(3)).unwrap();
        let mut two = frame.clone();
        two.extend_from_slice(&frame);
        assert_eq!(split_frames(&two).unwrap().len(), 2);
        assert!(matches!(split_frames(&two[..frame.len() + 3]), Err(CliError::Malformed(_))));
    }
}
