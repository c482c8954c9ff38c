//! Inertial gradient algorithm with Hessian damping (IGAHD), speed-restarted.
//!
//! ```text
//! y_k     = x_k + (1 − α/k)(x_k − x_{k−1}) − βh(∇φ(x_k) − ∇φ(x_{k−1}))
//! x_{k+1} = y_k − h²∇φ(y_k)
//! ```
//!
//! `k` is the local counter. A speed restart sets it back to 1 once
//! `‖x_{k+1} − x_k‖ < ‖x_k − x_{k−1}‖` and `k ≥ k_min`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::{ObjectiveModel, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IgahdPolicy {
    None,
    Speed,
    /// First restart at the first increase of `φ`, speed restarts afterwards.
    WarmThenSpeed,
}

/// What happens to the previous iterate when `k` is reset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetMode {
    /// `x_{k−1} := x_k`: the next step starts with zero momentum.
    ClearMomentum,
    /// Only the counter is reset.
    StrictBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IgahdParams {
    pub alpha: f64,
    pub beta: f64,
    pub h: f64,
    pub k_min: usize,
    /// Index of the last iterate: the run produces `x_2, …, x_N`.
    #[serde(rename = "N")]
    pub n_iter: usize,
    pub reset: ResetMode,
}

impl IgahdParams {
    /// `h = 1/√L`, `β = h`, `α = 3.1`, `k_min = 10`.
    pub fn defaults_for(l: f64, n_iter: usize) -> Self {
        let h = 1.0 / l.sqrt();
        IgahdParams {
            alpha: 3.1,
            beta: h,
            h,
            k_min: 10,
            n_iter,
            reset: ResetMode::ClearMomentum,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::InvalidArgument(format!("h must be positive, got {}", self.h)));
        }
        if !(self.alpha > 0.0) || !(self.beta >= 0.0) {
            return Err(Error::InvalidArgument(
                "need alpha > 0 and beta >= 0".into(),
            ));
        }
        if self.n_iter < 1 || self.k_min < 1 {
            return Err(Error::InvalidArgument("need N >= 1 and k_min >= 1".into()));
        }
        Ok(())
    }
}

/// One update with local counter `local_k`.
pub fn igahd_step(
    x_k: &Point,
    x_km1: &Point,
    local_k: usize,
    params: &IgahdParams,
    model: &dyn ObjectiveModel,
) -> Result<Point> {
    if local_k < 1 {
        return Err(Error::InvalidArgument("local_k must be at least 1".into()));
    }
    let g_k = model.gradient(x_k);
    let g_km1 = model.gradient(x_km1);
    let bad = |g: &Point| g.iter().any(|c| !c.is_finite());
    if bad(&g_k) || bad(&g_km1) {
        return Err(Error::Divergence { t: local_k as f64 });
    }
    let momentum = 1.0 - params.alpha / local_k as f64;
    let mut y = x_k + (x_k - x_km1) * momentum;
    y.axpy(-params.beta * params.h, &(g_k - g_km1), 1.0);
    let g_y = model.gradient(&y);
    if bad(&g_y) {
        return Err(Error::Divergence { t: local_k as f64 });
    }
    y.axpy(-params.h * params.h, &g_y, 1.0);
    if bad(&y) {
        return Err(Error::Divergence { t: local_k as f64 });
    }
    Ok(y)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterateRow {
    pub k_global: usize,
    /// Counter used to produce this iterate; `0` for the given `x_1`.
    pub k_local: usize,
    pub phi_gap: f64,
    /// `‖x_k − x_{k−1}‖`.
    pub step_norm: f64,
    pub restarted: u8,
}

#[derive(Debug, Clone)]
pub struct IterateLog {
    pub rows: Vec<IterateRow>,
    /// `x_1, …, x_N`.
    pub points: Vec<Point>,
    pub params: IgahdParams,
    pub policy: IgahdPolicy,
    /// Global indices of the iterates at which a restart fired.
    pub restart_indices: Vec<usize>,
    /// Gaps are measured from the best value seen because `φ*` is unknown.
    pub gap_from_best: bool,
}

impl IterateLog {
    pub fn best_gap(&self) -> f64 {
        self.rows.iter().map(|r| r.phi_gap).fold(f64::INFINITY, f64::min)
    }

    pub fn last_gap(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.phi_gap)
    }

    /// `(k, gap)` pairs.
    pub fn gap_series(&self) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .map(|r| (r.k_global as f64, r.phi_gap))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn run_igahd(
    x0: &Point,
    x1: &Point,
    params: &IgahdParams,
    model: &dyn ObjectiveModel,
    policy: IgahdPolicy,
) -> Result<IterateLog> {
    params.validate()?;
    if x0.len() != model.dim() || x1.len() != model.dim() {
        return Err(Error::InvalidArgument("dimension mismatch with model".into()));
    }
    let mut points = Vec::with_capacity(params.n_iter);
    let mut values = Vec::with_capacity(params.n_iter);
    let mut meta: Vec<(usize, f64, bool)> = Vec::with_capacity(params.n_iter);
    let mut restart_indices = Vec::new();

    let mut prev = x0.clone();
    let mut cur = x1.clone();
    points.push(cur.clone());
    values.push(model.value(&cur));
    meta.push((0, (&cur - &prev).norm(), false));

    let mut local_k = 1;
    let mut warm_pending = policy == IgahdPolicy::WarmThenSpeed;
    for k in 1..params.n_iter {
        let next = igahd_step(&cur, &prev, local_k, params, model)
            .map_err(|e| Error::Iteration {
                iteration: k,
                source: Box::new(e),
            })?;
        let prev_step = (&cur - &prev).norm();
        let step = (&next - &cur).norm();
        let value_next = model.value(&next);
        let fire = match policy {
            IgahdPolicy::None => false,
            _ if warm_pending => value_next > *values.last().unwrap(),
            _ => step < prev_step && local_k >= params.k_min,
        };
        meta.push((local_k, step, fire));
        points.push(next.clone());
        values.push(value_next);
        if fire {
            warm_pending = false;
            restart_indices.push(k + 1);
            local_k = 1;
            prev = match params.reset {
                ResetMode::ClearMomentum => next.clone(),
                ResetMode::StrictBox => cur,
            };
        } else {
            local_k += 1;
            prev = cur;
        }
        cur = next;
    }

    let (reference, gap_from_best) = match model.optimal_value() {
        Some(opt) => (opt, false),
        None => (values.iter().cloned().fold(f64::INFINITY, f64::min), true),
    };
    let rows = meta
        .into_iter()
        .zip(points.iter())
        .zip(values.iter())
        .enumerate()
        .map(|(i, (((k_local, step_norm, fired), x), &value))| IterateRow {
            k_global: i + 1,
            k_local,
            phi_gap: if gap_from_best {
                value - reference
            } else {
                model.gap(x).unwrap_or(value - reference)
            },
            step_norm,
            restarted: u8::from(fired),
        })
        .collect();
    Ok(IterateLog {
        rows,
        points,
        params: *params,
        policy,
        restart_indices,
        gap_from_best,
    })
}
