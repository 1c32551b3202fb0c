//! Trajectory metrics and report export.

mod ate;
mod latency;
mod report;
mod svg;

pub use ate::{ate_details, ate_rmse, ate_rmse_with, AteResult};
pub use latency::{
    estimate_latency, estimate_latency_with, lag_from_signals, speed_signal, LatencyEstimate,
};
pub use report::{export_report, InteractionEvent, MetricsReport, NamedTrajectory, PlotSet, SCHEMA_VERSION};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("insufficient overlap: {found} associated samples, at least {required} required")]
    InsufficientOverlap { found: usize, required: usize },
    #[error("correlation undefined: speed signal is constant (variance {0:.3e})")]
    UndefinedCorrelation(f64),
    #[error("rate must be positive, got {0}")]
    InvalidRate(f64),
    #[error("aligned ATE failed: {0}")]
    Alignment(String),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}
