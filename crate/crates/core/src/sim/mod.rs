//! Deterministic synthetic world: ground-truth motion, a drifting inside-out
//! tracker, a noisy delayed mocap observer, and the end-to-end scenario
//! runner that pushes all of it through the wire protocol and alignment.

pub mod drift;
pub mod mocap;
pub mod motion;
pub mod scenario;

pub use drift::{apply_drift, drift_process, slam_track, DriftConfig, DriftMode, TrackingLoss};
pub use mocap::{arrival_times, capture_times, mocap_observe, observe_frames, MocapFrame, MocapObserverConfig};
pub use motion::{gen_motion, GeneratedMotion, MotionKind, MotionSpec, UserMotion, AREA_SIDE, FISTBUMP_CYCLES};
pub use scenario::{
    build_report, run_batch, run_scenario, run_scenario_with, AlignmentEvent, AlignmentEventKind, PipelineConfig,
    ScenarioConfig, ScenarioRun, UserRun,
};

use crate::align::AlignError;
use crate::calib::CalibError;
use crate::eval::EvalError;
use crate::geom::GeomError;
use crate::net::NetError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error("calibration failed: {0}")]
    Calib(#[from] CalibError),
    #[error("wire protocol: {0}")]
    Net(#[from] NetError),
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Align(#[from] AlignError),
}

/// Independent generator for `(seed, stream)`.
pub(crate) fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a sub-seed from a run seed and a few labels (splitmix64 rounds).
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}
