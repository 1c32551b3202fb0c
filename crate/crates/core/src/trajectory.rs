//! Timestamped pose sequences and their CSV representation.
//!
//! CSV layout: header `t,px,py,pz,qw,qx,qy,qz`, seconds and meters, one
//! trajectory per file. Values are written with the shortest representation
//! that round-trips exactly.

use crate::geom::Pose;
use nalgebra::Vector3;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

pub const CSV_HEADER: [&str; 8] = ["t", "px", "py", "pz", "qw", "qx", "qy", "qz"];

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("timestamps must be strictly increasing (sample {index}: {prev} -> {next})")]
    NonMonotonic { index: usize, prev: f64, next: f64 },
    #[error("nominal rate must be positive, got {0}")]
    InvalidRate(f64),
    #[error("non-finite value in sample {0}")]
    NonFinite(usize),
    #[error("bad CSV header: expected `t,px,py,pz,qw,qx,qy,qz`, got `{0}`")]
    BadHeader(String),
    #[error("CSV row {row}: {msg}")]
    BadRow { row: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub pose: Pose,
}

impl TrajectorySample {
    pub fn new(t: f64, pose: Pose) -> Self {
        Self { t, pose }
    }
}

/// Poses with strictly increasing timestamps and a nominal sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    samples: Vec<TrajectorySample>,
    rate: f64,
}

impl Trajectory {
    pub fn new(samples: Vec<TrajectorySample>, rate: f64) -> Result<Self, TrajectoryError> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(TrajectoryError::InvalidRate(rate));
        }
        for (i, s) in samples.iter().enumerate() {
            if !s.t.is_finite() || s.pose.translation.iter().any(|v| !v.is_finite()) {
                return Err(TrajectoryError::NonFinite(i));
            }
            if i > 0 && s.t <= samples[i - 1].t {
                return Err(TrajectoryError::NonMonotonic {
                    index: i,
                    prev: samples[i - 1].t,
                    next: s.t,
                });
            }
        }
        Ok(Self { samples, rate })
    }

    /// Builds a trajectory on the grid `t0 + k / rate`.
    pub fn from_poses(t0: f64, rate: f64, poses: impl IntoIterator<Item = Pose>) -> Self {
        let samples = poses
            .into_iter()
            .enumerate()
            .map(|(k, pose)| TrajectorySample::new(t0 + k as f64 / rate, pose))
            .collect();
        Self::new(samples, rate).expect("grid trajectory is well formed")
    }

    pub fn empty(rate: f64) -> Self {
        Self {
            samples: Vec::new(),
            rate,
        }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn samples(&self) -> &[TrajectorySample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TrajectorySample> {
        self.samples.iter()
    }

    pub fn first(&self) -> Option<&TrajectorySample> {
        self.samples.first()
    }

    pub fn last(&self) -> Option<&TrajectorySample> {
        self.samples.last()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.samples.iter().map(|s| s.pose.translation).collect()
    }

    /// Appends a sample; panics if it would break timestamp ordering.
    pub fn push(&mut self, sample: TrajectorySample) {
        if let Some(last) = self.samples.last() {
            assert!(sample.t > last.t, "trajectory timestamps must increase");
        }
        self.samples.push(sample);
    }

    /// Same poses, timestamps offset by `dt`.
    pub fn shifted(&self, dt: f64) -> Trajectory {
        Trajectory {
            samples: self
                .samples
                .iter()
                .map(|s| TrajectorySample::new(s.t + dt, s.pose))
                .collect(),
            rate: self.rate,
        }
    }

    pub fn map_poses(&self, f: impl Fn(&Pose) -> Pose) -> Trajectory {
        Trajectory {
            samples: self
                .samples
                .iter()
                .map(|s| TrajectorySample::new(s.t, f(&s.pose)))
                .collect(),
            rate: self.rate,
        }
    }

    /// Interpolated pose at time `t` (linear translation, slerp rotation).
    /// `None` outside the covered time range.
    pub fn sample_at(&self, t: f64) -> Option<Pose> {
        let s = &self.samples;
        if s.is_empty() || t < s[0].t || t > s[s.len() - 1].t {
            return None;
        }
        let idx = s.partition_point(|x| x.t <= t);
        if idx == 0 {
            return Some(s[0].pose);
        }
        let a = &s[idx - 1];
        if a.t == t || idx == s.len() {
            return Some(a.pose);
        }
        let b = &s[idx];
        let u = (t - a.t) / (b.t - a.t);
        Some(a.pose.interpolate(&b.pose, u))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), TrajectoryError> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(CSV_HEADER)?;
        for s in &self.samples {
            let p = &s.pose.translation;
            let q = s.pose.wxyz();
            let row = [s.t, p.x, p.y, p.z, q[0], q[1], q[2], q[3]];
            wtr.write_record(row.iter().map(|v| v.to_string()))?;
        }
        wtr.flush().map_err(|source| TrajectoryError::Io {
            path: "<writer>".into(),
            source,
        })?;
        Ok(())
    }

    /// Parses CSV; the nominal rate is inferred from the median sample spacing
    /// when not given.
    pub fn read_csv<R: Read>(r: R, rate: Option<f64>) -> Result<Trajectory, TrajectoryError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let header = rdr.headers()?.clone();
        if header.iter().ne(CSV_HEADER.iter().copied()) {
            return Err(TrajectoryError::BadHeader(header.iter().collect::<Vec<_>>().join(",")));
        }
        let mut samples = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i + 2;
            if rec.len() != 8 {
                return Err(TrajectoryError::BadRow {
                    row,
                    msg: format!("expected 8 fields, got {}", rec.len()),
                });
            }
            let mut v = [0.0f64; 8];
            for (slot, field) in v.iter_mut().zip(rec.iter()) {
                *slot = field.parse().map_err(|e| TrajectoryError::BadRow {
                    row,
                    msg: format!("`{field}`: {e}"),
                })?;
            }
            let pose = Pose::from_parts([v[1], v[2], v[3]], [v[4], v[5], v[6], v[7]]).ok_or(
                TrajectoryError::BadRow {
                    row,
                    msg: "invalid pose".into(),
                },
            )?;
            samples.push(TrajectorySample::new(v[0], pose));
        }
        let rate = rate.unwrap_or_else(|| infer_rate(&samples));
        Trajectory::new(samples, rate)
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), TrajectoryError> {
        let f = std::fs::File::create(path).map_err(|source| TrajectoryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load_csv(path: &Path, rate: Option<f64>) -> Result<Trajectory, TrajectoryError> {
        let f = std::fs::File::open(path).map_err(|source| TrajectoryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::read_csv(std::io::BufReader::new(f), rate)
    }
}

fn infer_rate(samples: &[TrajectorySample]) -> f64 {
    let mut dts: Vec<f64> = samples.windows(2).map(|w| w[1].t - w[0].t).collect();
    if dts.is_empty() {
        return 1.0;
    }
    dts.sort_by(f64::total_cmp);
    let med = dts[dts.len() / 2];
    if med > 0.0 {
        // snap to a whole number of Hz when the grid is regular
        let r = 1.0 / med;
        if (r - r.round()).abs() < 1e-6 {
            r.round()
        } else {
            r
        }
    } else {
        1.0
    }
}

impl<'a> IntoIterator for &'a Trajectory {
    type Item = &'a TrajectorySample;
    type IntoIter = std::slice::Iter<'a, TrajectorySample>;

    fn into_iter(self) -> Self::IntoIter {
        self.samples.iter()
    }
}
