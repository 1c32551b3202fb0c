use super::svg::{project_3d, render, Marker, Series};
use super::{EvalError, LatencyEstimate};
use crate::trajectory::Trajectory;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Bumped whenever a field of [`MetricsReport`] changes meaning or is removed.
pub const SCHEMA_VERSION: u32 = 1;

/// Metrics JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    /// World-frame ATE against the reference, meters.
    pub ate_rmse: f64,
    /// ATE after shifting the reference by the estimated latency.
    pub ate_rmse_compensated: Option<f64>,
    /// ATE after rigid least-squares alignment, for comparison only.
    pub ate_rmse_aligned: Option<f64>,
    pub sample_count: usize,
    pub latency: Option<LatencyEstimate>,
    /// File holding per-axis errors `t,ex,ey,ez`, relative to the report.
    pub error_series: Option<String>,
    /// Free-form per-user or per-run entries (multi-user simulations).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub users: Vec<serde_json::Value>,
    /// Echo of the configuration that produced the report.
    pub config: serde_json::Value,
}

impl MetricsReport {
    pub fn new(scenario: impl Into<String>, seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            scenario: scenario.into(),
            seed,
            ate_rmse: 0.0,
            ate_rmse_compensated: None,
            ate_rmse_aligned: None,
            sample_count: 0,
            latency: None,
            error_series: None,
            users: Vec::new(),
            config: serde_json::Value::Null,
        }
    }

    /// `{scenario}_{seed}` stem shared by every exported file.
    pub fn stem(&self) -> String {
        format!("{}_{}", self.scenario, self.seed)
    }
}

#[derive(Debug, Clone)]
pub struct NamedTrajectory {
    pub name: String,
    pub trajectory: Trajectory,
}

impl NamedTrajectory {
    pub fn new(name: impl Into<String>, trajectory: Trajectory) -> Self {
        Self {
            name: name.into(),
            trajectory,
        }
    }
}

/// A scripted interaction (e.g. a fist bump) to plot in its own window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub time: f64,
    pub point: [f64; 3],
}

#[derive(Debug, Clone, Default)]
pub struct PlotSet {
    pub trajectories: Vec<NamedTrajectory>,
    pub events: Vec<InteractionEvent>,
    /// Half-width of the window plotted around each event, seconds.
    pub event_window: f64,
    /// Optional per-axis error series written next to the report.
    pub error_series: Option<Vec<(f64, [f64; 3])>>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> EvalError {
    EvalError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

fn write_file(path: &Path, data: &[u8]) -> Result<PathBuf, EvalError> {
    std::fs::write(path, data).map_err(|e| io_err(path, e))?;
    Ok(path.to_path_buf())
}

/// Writes the metrics JSON, one CSV per trajectory, an optional error series,
/// and SVG plots (top-down and 3D, plus a pair per interaction event).
/// Returns the written paths in a stable order.
pub fn export_report(report: &MetricsReport, plots: &PlotSet, out_dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let stem = report.stem();
    let mut report = report.clone();
    let mut written = Vec::new();

    if let Some(series) = &plots.error_series {
        let name = format!("{stem}_errors.csv");
        let mut text = String::from("t,ex,ey,ez\n");
        for (t, e) in series {
            text.push_str(&format!("{t},{},{},{}\n", e[0], e[1], e[2]));
        }
        written.push(write_file(&out_dir.join(&name), text.as_bytes())?);
        report.error_series = Some(name);
    }

    let json = serde_json::to_string_pretty(&report).map_err(|e| io_err(out_dir, e))?;
    written.insert(0, write_file(&out_dir.join(format!("{stem}.json")), json.as_bytes())?);

    if plots.trajectories.is_empty() {
        return Ok(written);
    }

    for nt in &plots.trajectories {
        let path = out_dir.join(format!("{stem}_{}.csv", nt.name));
        nt.trajectory.save_csv(&path).map_err(|e| io_err(&path, e))?;
        written.push(path);
    }

    let top = |lo: f64, hi: f64| -> Vec<Series<'_>> {
        plots
            .trajectories
            .iter()
            .map(|nt| Series {
                name: &nt.name,
                points: nt
                    .trajectory
                    .iter()
                    .filter(|s| s.t >= lo && s.t <= hi)
                    .map(|s| (s.pose.translation.x, s.pose.translation.z))
                    .collect(),
            })
            .collect()
    };
    let iso = |lo: f64, hi: f64| -> Vec<Series<'_>> {
        plots
            .trajectories
            .iter()
            .map(|nt| Series {
                name: &nt.name,
                points: nt
                    .trajectory
                    .iter()
                    .filter(|s| s.t >= lo && s.t <= hi)
                    .map(|s| {
                        let p = s.pose.translation;
                        project_3d(p.x, p.y, p.z)
                    })
                    .collect(),
            })
            .collect()
    };

    let all = (f64::NEG_INFINITY, f64::INFINITY);
    let svg = render(&format!("{stem} top-down"), "x [m]", "z [m]", &top(all.0, all.1), &[]);
    written.push(write_file(&out_dir.join(format!("{stem}_topdown.svg")), svg.as_bytes())?);
    let svg = render(&format!("{stem} 3D"), "", "", &iso(all.0, all.1), &[]);
    written.push(write_file(&out_dir.join(format!("{stem}_3d.svg")), svg.as_bytes())?);

    let half = if plots.event_window > 0.0 { plots.event_window } else { 2.0 };
    for (k, ev) in plots.events.iter().enumerate() {
        let (lo, hi) = (ev.time - half, ev.time + half);
        let label = format!("event {}", k + 1);
        let p = ev.point;
        let svg = render(
            &format!("{stem} {label} (3D)"),
            "",
            "",
            &iso(lo, hi),
            &[Marker {
                label: label.clone(),
                at: project_3d(p[0], p[1], p[2]),
            }],
        );
        written.push(write_file(&out_dir.join(format!("{stem}_event{}_3d.svg", k + 1)), svg.as_bytes())?);
        let svg = render(
            &format!("{stem} {label} (top-down)"),
            "x [m]",
            "z [m]",
            &top(lo, hi),
            &[Marker { label, at: (p[0], p[2]) }],
        );
        written.push(write_file(&out_dir.join(format!("{stem}_event{}_topdown.svg", k + 1)), svg.as_bytes())?);
    }
    Ok(written)
}
