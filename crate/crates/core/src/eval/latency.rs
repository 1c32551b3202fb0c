use super::EvalError;
use crate::par::{self, Mode};
use crate::trajectory::Trajectory;
use serde::{Deserialize, Serialize};

/// Integer-frame delay of one signal relative to another.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyEstimate {
    /// Positive when the second signal lags the first.
    pub lag_frames: i64,
    /// `lag_frames / rate`, seconds.
    pub latency: f64,
    pub rate: f64,
    /// Normalized correlation at the chosen lag.
    pub peak_correlation: f64,
    /// Another lag reached the same peak; the smallest |lag| was kept.
    pub tie: bool,
}

/// Speed (displacement magnitude per frame) on the grid `t0 + k / rate`,
/// `k = 0..n`. Produces `n - 1` values.
pub fn speed_signal(traj: &Trajectory, rate: f64, t0: f64, n: usize) -> Vec<f64> {
    let t_end = traj.last().map(|s| s.t).unwrap_or(t0);
    let pos: Vec<_> = (0..n)
        .map(|k| {
            let t = (t0 + k as f64 / rate).min(t_end);
            traj.sample_at(t)
                .expect("grid lies inside the trajectory")
                .translation
        })
        .collect();
    pos.windows(2).map(|w| (w[1] - w[0]).norm()).collect()
}

/// Delay of `sig_b` relative to `sig_a` from the peak of the normalized
/// cross-correlation of their zero-mean speed signals.
pub fn estimate_latency(
    sig_a: &Trajectory,
    sig_b: &Trajectory,
    rate: f64,
    max_lag_frames: usize,
) -> Result<LatencyEstimate, EvalError> {
    estimate_latency_with(sig_a, sig_b, rate, max_lag_frames, Mode::available())
}

pub fn estimate_latency_with(
    sig_a: &Trajectory,
    sig_b: &Trajectory,
    rate: f64,
    max_lag_frames: usize,
    mode: Mode,
) -> Result<LatencyEstimate, EvalError> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(EvalError::InvalidRate(rate));
    }
    let required = 2 * max_lag_frames + 3;
    let (Some(a0), Some(b0)) = (sig_a.first(), sig_b.first()) else {
        return Err(EvalError::InsufficientOverlap { found: 0, required });
    };
    let t0 = a0.t.max(b0.t);
    let t1 = sig_a.last().unwrap().t.min(sig_b.last().unwrap().t);
    let n = if t1 >= t0 {
        ((t1 - t0) * rate + 1e-6).floor() as usize + 1
    } else {
        0
    };
    if n < required {
        return Err(EvalError::InsufficientOverlap { found: n, required });
    }
    let sa = speed_signal(sig_a, rate, t0, n);
    let sb = speed_signal(sig_b, rate, t0, n);
    lag_from_signals(&sa, &sb, rate, max_lag_frames, mode)
}

fn variance(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

/// Pearson correlation of two equal-length slices.
fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    let denom = sxx.sqrt() * syy.sqrt();
    if denom > 0.0 {
        sxy / denom
    } else {
        f64::NEG_INFINITY
    }
}

/// Peak search over lags `-max_lag..=max_lag` on pre-sampled signals.
/// Lag `k` pairs `a[n]` with `b[n + k]`.
pub fn lag_from_signals(
    a: &[f64],
    b: &[f64],
    rate: f64,
    max_lag_frames: usize,
    mode: Mode,
) -> Result<LatencyEstimate, EvalError> {
    let len = a.len().min(b.len());
    let required = 2 * max_lag_frames + 2;
    if len < required {
        return Err(EvalError::InsufficientOverlap { found: len, required });
    }
    let (a, b) = (&a[..len], &b[..len]);
    for s in [a, b] {
        let v = variance(s);
        if v < 1e-12 {
            return Err(EvalError::UndefinedCorrelation(v));
        }
    }
    let max_lag = max_lag_frames as i64;
    let lags: Vec<i64> = (-max_lag..=max_lag).collect();
    let corr = par::map_slice(mode, &lags, |&k| {
        let k_abs = k.unsigned_abs() as usize;
        if k >= 0 {
            pearson(&a[..len - k_abs], &b[k_abs..])
        } else {
            pearson(&a[k_abs..], &b[..len - k_abs])
        }
    });
    let peak = corr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return Err(EvalError::UndefinedCorrelation(0.0));
    }
    let mut best: Option<i64> = None;
    let mut ties = 0;
    for (&k, &c) in lags.iter().zip(&corr) {
        if peak - c <= 1e-12 {
            ties += 1;
            best = match best {
                Some(prev) if prev.abs() <= k.abs() => Some(prev),
                _ => Some(k),
            };
        }
    }
    let lag = best.expect("finite peak exists");
    Ok(LatencyEstimate {
        lag_frames: lag,
        latency: lag as f64 / rate,
        rate,
        peak_correlation: peak,
        tie: ties > 1,
    })
}
