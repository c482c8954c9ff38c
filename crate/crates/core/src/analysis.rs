//! Exponential rate fits `gap ≈ A e^{−Bt}` and last/best summaries.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::igahd::IterateLog;
use crate::problems::ObjectiveModel;
use crate::restart::RestartedTrajectory;

pub const MIN_FIT_SAMPLES: usize = 10;

/// `1e2 · ε · initial_gap`; gaps below it are dominated by rounding.
pub fn default_clip_floor(initial_gap: f64) -> f64 {
    1e2 * f64::EPSILON * initial_gap
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub r2: f64,
    /// Window actually used, after trimming at the first nonpositive gap.
    pub window: [f64; 2],
    pub used: usize,
    /// Points excluded for lying below the clip floor.
    pub clipped: usize,
    /// Points dropped because the window was cut at a nonpositive gap.
    pub trimmed: usize,
}

/// Least squares of `ln gap` against `t` over `window`.
///
/// The window is cut just before the first nonpositive gap. Points below
/// `clip_floor` are skipped and counted.
pub fn fit_rate(samples: &[(f64, f64)], window: [f64; 2], clip_floor: Option<f64>) -> Result<RateFit> {
    let [lo, mut hi] = window;
    if !(lo <= hi) {
        return Err(Error::InvalidArgument(format!("empty window [{lo}, {hi}]")));
    }
    let in_window = |t: f64, hi: f64| t >= lo && t <= hi;
    if let Some(&(t_bad, _)) = samples
        .iter()
        .filter(|&&(t, g)| in_window(t, hi) && !(g > 0.0))
        .min_by(|a, b| a.0.total_cmp(&b.0))
    {
        hi = samples
            .iter()
            .filter(|&&(t, _)| t >= lo && t < t_bad)
            .map(|s| s.0)
            .fold(lo, f64::max);
    }
    let trimmed = samples
        .iter()
        .filter(|&&(t, _)| in_window(t, window[1]) && !in_window(t, hi))
        .count();
    let floor = clip_floor.unwrap_or(0.0);
    let mut clipped = 0;
    let mut pts = Vec::new();
    for &(t, g) in samples.iter().filter(|&&(t, _)| in_window(t, hi)) {
        if g < floor {
            clipped += 1;
        } else {
            pts.push((t, g.ln()));
        }
    }
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientData {
            usable: pts.len(),
            needed: MIN_FIT_SAMPLES,
        });
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for &(t, y) in &pts {
        stt += (t - mt) * (t - mt);
        sty += (t - mt) * (y - my);
        syy += (y - my) * (y - my);
    }
    if stt == 0.0 {
        return Err(Error::InsufficientData {
            usable: 1,
            needed: MIN_FIT_SAMPLES,
        });
    }
    let slope = sty / stt;
    let intercept = my - slope * mt;
    let r2 = if syy == 0.0 { 1.0 } else { sty * sty / (stt * syy) };
    Ok(RateFit {
        a: intercept.exp(),
        b: -slope,
        r2,
        window: [lo, hi],
        used: pts.len(),
        clipped,
        trimmed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub t_report: f64,
    pub last_value: f64,
    pub best_value: f64,
    /// The best gap sits below `1e-16 ·` the initial gap.
    pub precision_floor: bool,
}

/// Last value at `t_report` (the latest sample not after it) and the best
/// value over samples up to `t_report`.
pub fn summarize(series: &[(f64, f64)], t_report: f64) -> Result<Summary> {
    let (Some(first), Some(last)) = (series.first(), series.last()) else {
        return Err(Error::Range {
            t: t_report,
            lo: f64::NAN,
            hi: f64::NAN,
        });
    };
    if !(t_report >= first.0 && t_report <= last.0) {
        return Err(Error::Range {
            t: t_report,
            lo: first.0,
            hi: last.0,
        });
    }
    let upto: Vec<_> = series.iter().filter(|s| s.0 <= t_report).collect();
    let last_value = upto.last().map_or(f64::NAN, |s| s.1);
    let best_value = upto.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    Ok(Summary {
        t_report,
        last_value,
        best_value,
        precision_floor: best_value < 1e-16 * first.1,
    })
}

/// `(t, gap)` at every dense sample of the trajectory.
pub fn trajectory_series(traj: &RestartedTrajectory, model: &dyn ObjectiveModel) -> Vec<(f64, f64)> {
    traj.sample_rows(model)
        .into_iter()
        .map(|r| (r.t, r.phi_gap))
        .collect()
}

/// `(t, gap)` on `n` evenly spaced times in `[lo, hi]`.
pub fn uniform_series(
    traj: &RestartedTrajectory,
    model: &dyn ObjectiveModel,
    lo: f64,
    hi: f64,
    n: usize,
) -> Result<Vec<(f64, f64)>> {
    let n = n.max(2);
    (0..n)
        .map(|i| {
            let t = if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 };
            let gap = traj
                .chi_eval(model, t)?
                .gap
                .ok_or_else(|| Error::NotCheckable("optimal value unknown".into()))?;
            Ok((t, gap))
        })
        .collect()
}

/// Default spacing of the report grid used by [`summarize_trajectory`].
pub const REPORT_DT: f64 = 1e-3;

/// Last value at `t_report` and the best value on the uniform grid of spacing
/// `dt` from the trajectory start to `t_report`.
///
/// Along oscillating trajectories the gap dips close to zero whenever a slow
/// component crosses the minimizer, so the best value is always that of a
/// sampled trajectory and depends on `dt`.
pub fn summarize_trajectory(
    traj: &RestartedTrajectory,
    model: &dyn ObjectiveModel,
    t_report: f64,
    dt: f64,
) -> Result<Summary> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let (t0, _) = traj.horizon();
    if !(t_report >= t0) {
        return Err(Error::Range {
            t: t_report,
            lo: t0,
            hi: traj.horizon().1,
        });
    }
    let n = ((t_report - t0) / dt).round() as usize + 1;
    summarize(&uniform_series(traj, model, t0, t_report, n)?, t_report)
}

pub fn summarize_log(log: &IterateLog, k_report: usize) -> Result<Summary> {
    summarize(&log.gap_series(), k_report as f64)
}

/// Report schema `{A, B, r2, window, clipped, last_value, best_value}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub r2: f64,
    pub window: [f64; 2],
    pub clipped: usize,
    pub last_value: f64,
    pub best_value: f64,
}

impl AnalysisReport {
    pub fn new(fit: &RateFit, summary: &Summary) -> Self {
        AnalysisReport {
            a: fit.a,
            b: fit.b,
            r2: fit.r2,
            window: fit.window,
            clipped: fit.clipped,
            last_value: summary.last_value,
            best_value: summary.best_value,
        }
    }
}
