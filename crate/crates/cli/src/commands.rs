//! Single-run subcommands: one trajectory or one IGAHD run.

use din_restart::analysis::{fit_rate, summarize_log, summarize_trajectory, uniform_series};
use din_restart::igahd::{run_igahd, IgahdPolicy, ResetMode};
use din_restart::integrator::{DynamicsParams, System, Tolerances};
use din_restart::problems::{random_start, ObjectiveModel, Point, ProblemSpec};
use din_restart::restart::{build_restarted, LegClock, RestartOptions, RestartPolicy};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{typed, CliError};
use crate::recipes::{igahd_params, rises, Artifact, Check, RecipeOutput};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeConfig {
    pub problem: ProblemSpec,
    pub system: System,
    pub alpha: f64,
    pub beta: f64,
    pub t0: f64,
    pub t_end: f64,
    /// Defaults to the all-ones vector.
    pub x0: Option<Vec<f64>>,
    pub velocity_factor: f64,
    pub policy: RestartPolicy,
    pub leg_clock: LegClock,
    pub tol_rel: f64,
    pub tol_abs: f64,
    pub delta_frac: f64,
    pub report_dt: f64,
}

pub fn ode_preset() -> Value {
    json!({
        "problem": {"kind": "diag_rho", "rho": 10.0},
        "system": "DIN_AVD",
        "alpha": 3.1,
        "beta": 0.25,
        "t0": 1.0,
        "t_end": 25.0,
        "x0": null,
        "velocity_factor": 0.0,
        "policy": {"kind": "speed"},
        "leg_clock": "zero",
        "tol_rel": 1e-9,
        "tol_abs": 1e-12,
        "delta_frac": 1e-4,
        "report_dt": 1e-3,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IgahdConfig {
    pub problem: ProblemSpec,
    /// Explicit start; otherwise drawn from `start_seed`, otherwise all ones.
    pub x0: Option<Vec<f64>>,
    pub start_seed: Option<u64>,
    pub alpha: f64,
    pub beta: Option<f64>,
    pub h: Option<f64>,
    pub k_min: usize,
    #[serde(rename = "N")]
    pub n_iter: usize,
    pub policy: IgahdPolicy,
    pub reset: ResetMode,
}

pub fn igahd_preset() -> Value {
    json!({
        "problem": {"kind": "diag_rho", "rho": 10.0},
        "x0": null,
        "start_seed": null,
        "alpha": 3.1,
        "beta": null,
        "h": null,
        "k_min": 10,
        "N": 1000,
        "policy": "warm_then_speed",
        "reset": "clear_momentum",
    })
}

fn start(x0: &Option<Vec<f64>>, seed: Option<u64>, model: &dyn ObjectiveModel) -> Result<Point, CliError> {
    let n = model.dim();
    match (x0, seed) {
        (Some(xs), _) if xs.len() != n => {
            Err(CliError::config(format!("x0 has {} entries, problem dimension is {n}", xs.len())))
        }
        (Some(xs), _) => Ok(DVector::from_column_slice(xs)),
        (None, Some(s)) => Ok(random_start(n, s)),
        (None, None) => Ok(DVector::from_element(n, 1.0)),
    }
}

pub fn run_ode(config: &Value) -> Result<RecipeOutput, CliError> {
    let cfg: OdeConfig = typed(config)?;
    let q = cfg.problem.build()?;
    let x0 = start(&cfg.x0, None, &q)?;
    let opts = RestartOptions {
        tol: Tolerances { rel: cfg.tol_rel, abs: cfg.tol_abs, delta_frac: cfg.delta_frac, ..Default::default() },
        leg_clock: cfg.leg_clock,
        ..Default::default()
    };
    let mut params = DynamicsParams::at_rest(cfg.alpha, cfg.beta, cfg.system, cfg.t0, x0.clone());
    params.v_start = -q.gradient(&x0) * cfg.velocity_factor;
    let traj = build_restarted(&params, &q, cfg.t_end, cfg.policy, &opts)?;
    let mut csv = Vec::new();
    traj.write_csv(&q, &mut csv)?;
    let summary = summarize_trajectory(&traj, &q, cfg.t_end, cfg.report_dt)?;
    let mut checks = Vec::new();
    let mut fit = Value::Null;
    if let Some(&s1) = traj.restart_times.first() {
        let n = ((cfg.t_end - s1) / cfg.report_dt).round() as usize + 1;
        let series = uniform_series(&traj, &q, s1, cfg.t_end, n)?;
        let gaps: Vec<f64> = series.iter().map(|p| p.1).collect();
        let up = rises(&gaps, 1e-9 * (1.0 + q.value(&x0).abs()));
        checks.push(Check {
            name: "nonincreasing_after_first_restart".into(),
            pass: up == 0,
            detail: format!("{up} increases"),
            reference: false,
        });
        if let Ok(f) = fit_rate(&series, [s1, cfg.t_end], None) {
            fit = serde_json::to_value(f)?;
        }
    }
    Ok(RecipeOutput {
        artifacts: vec![Artifact { name: "trajectory.csv".into(), bytes: csv }],
        summary: json!({
            "restart_times": traj.restart_times,
            "horizon_restarts": traj.horizon_restarts,
            "converged_at": traj.converged_at,
            "last_value": summary.last_value,
            "best_value": summary.best_value,
            "fit": fit,
        }),
        checks,
    })
}

pub fn run_igahd_command(config: &Value) -> Result<RecipeOutput, CliError> {
    let cfg: IgahdConfig = typed(config)?;
    let q = cfg.problem.build()?;
    let x0 = start(&cfg.x0, cfg.start_seed, &q)?;
    let params = igahd_params(q.lipschitz(), cfg.alpha, cfg.beta, cfg.h, cfg.k_min, cfg.n_iter, cfg.reset);
    let log = run_igahd(&x0, &x0, &params, &q, cfg.policy)?;
    let mut csv = Vec::new();
    log.write_csv(&mut csv)?;
    let summary = summarize_log(&log, params.n_iter)?;
    let skip = usize::from(cfg.policy == IgahdPolicy::WarmThenSpeed);
    let close = log.restart_indices.iter().skip(skip).filter(|&&i| log.rows[i - 1].k_local < params.k_min).count();
    Ok(RecipeOutput {
        artifacts: vec![Artifact { name: "iterates.csv".into(), bytes: csv }],
        summary: json!({
            "params": params,
            "restart_indices": log.restart_indices,
            "gap_from_best": log.gap_from_best,
            "last_value": summary.last_value,
            "best_value": summary.best_value,
        }),
        checks: vec![Check {
            name: "restart_spacing".into(),
            pass: close == 0,
            detail: format!("{close} restarts closer than k_min"),
            reference: false,
        }],
    })
}
