//! Named experiment presets and the studies behind them.

use std::collections::BTreeMap;

use din_restart::analysis::{
    default_clip_floor, fit_rate, summarize_log, summarize_trajectory, uniform_series, RateFit, Summary,
};
use din_restart::igahd::{run_igahd, IgahdParams, IgahdPolicy, IterateLog, ResetMode};
use din_restart::integrator::{DynamicsParams, System, Tolerances};
use din_restart::problems::{make_random_quadratic, random_start, ObjectiveModel, Point, ProblemSpec, Quadratic};
use din_restart::restart::{build_restarted, LegClock, RestartOptions, RestartPolicy, RestartedTrajectory};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{typed, CliError};

pub const RECIPES: [&str; 8] = [
    "fig_avd_r3",
    "fig_avd_gin_r3",
    "fig_cont",
    "fig_cont4",
    "table_coef_regression",
    "table_values_t25",
    "igahd_algo1",
    "igahd_algo2",
];

/// Reference rates for the restarted DIN-AVD columns, by initial velocity factor.
pub const REFERENCE_B_DIN: [(f64, f64); 2] = [(0.0, 1.1901), (0.25, 1.2014)];
pub const REFERENCE_B_TOLERANCE: f64 = 0.2;
pub const CONTINUOUS_GAIN: f64 = 1e-3;
pub const ALGO1_GAIN: f64 = 1e-4;
pub const ALGO1_B_AGREEMENT: f64 = 0.1;
pub const ALGO2_GAIN: f64 = 1e-3;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
    /// Comparison against reference numbers, evaluated only for unmodified presets.
    pub reference: bool,
}

impl Check {
    fn invariant(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), pass, detail: detail.into(), reference: false }
    }

    fn reference(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), pass, detail: detail.into(), reference: true }
    }
}

pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

pub struct RecipeOutput {
    pub artifacts: Vec<Artifact>,
    pub summary: Value,
    pub checks: Vec<Check>,
}

pub fn preset(name: &str) -> Option<Value> {
    let tol = json!({"tol_rel": 1e-9, "tol_abs": 1e-12, "delta_frac": 1e-4});
    let with_tol = |mut v: Value| {
        v.as_object_mut().unwrap().extend(tol.as_object().unwrap().clone());
        v
    };
    let oscillation = |systems: Value, beta: f64| {
        with_tol(json!({
            "rhos": [10.0, 100.0],
            "systems": systems,
            "alpha": 3.1,
            "beta": beta,
            "t0": 1.0,
            "t_end": 35.0,
            "x0": [1.0, 1.0, 1.0],
            "velocity_factor": 1.0,
            "report_dt": 1e-3,
        }))
    };
    let continuous = |policy: &str, velocities: Value| {
        with_tol(json!({
            "problem": {"kind": "diag_rho", "rho": 10.0},
            "systems": ["AVD", "DIN_AVD"],
            "alpha": 3.1,
            "beta": 0.25,
            "t0": 1.0,
            "t_end": 25.0,
            "x0": [1.0, 1.0, 1.0],
            "velocity_factors": velocities,
            "policy": {"kind": policy},
            "leg_clock": "initial",
            "report_dt": 1e-3,
        }))
    };
    Some(match name {
        "fig_avd_r3" => oscillation(json!(["AVD"]), 0.0),
        "fig_avd_gin_r3" => oscillation(json!(["AVD", "DIN_AVD"]), 1.0),
        "fig_cont" => continuous("speed", json!([0.0])),
        "fig_cont4" | "table_coef_regression" | "table_values_t25" => {
            continuous("warm_then_speed", json!([0.0, 0.25]))
        }
        "igahd_algo1" => json!({
            "problem": {"kind": "diag_rho", "rho": 10.0},
            "x0": [1.0, 1.0, 1.0],
            "alpha": 3.1,
            "beta": null,
            "h": null,
            "k_min": 10,
            "N": 1000,
            "reset": "clear_momentum",
        }),
        "igahd_algo2" => json!({
            "n": 500,
            "eig": [1e-6, 1.0],
            "seeds": [0, 1, 2, 3, 4],
            "start_seed_offset": 1000,
            "alpha": 3.1,
            "beta": null,
            "h": null,
            "k_min": 10,
            "N": 1800,
            "reset": "clear_momentum",
        }),
        _ => return None,
    })
}

/// Runs a recipe on a merged config. Reference checks are included only when
/// `reference` is set, i.e. when the preset was not modified.
pub fn run(name: &str, config: &Value, reference: bool) -> Result<RecipeOutput, CliError> {
    match name {
        "fig_avd_r3" | "fig_avd_gin_r3" => oscillation_recipe(name, &typed(config)?),
        "fig_cont" | "fig_cont4" | "table_coef_regression" | "table_values_t25" => {
            continuous_recipe(name, &typed(config)?, reference)
        }
        "igahd_algo1" => algo1_recipe(&typed(config)?, reference),
        "igahd_algo2" => algo2_recipe(&typed(config)?, reference),
        _ => Err(CliError::config(format!("unknown recipe '{name}'"))),
    }
}

fn tolerances(rel: f64, abs: f64, delta_frac: f64) -> Tolerances {
    Tolerances { rel, abs, delta_frac, ..Default::default() }
}

fn system_label(s: System) -> &'static str {
    match s {
        System::Avd => "avd",
        System::DinAvd => "din_avd",
    }
}

fn point(xs: &[f64], model: &dyn ObjectiveModel) -> Result<Point, CliError> {
    if xs.len() != model.dim() {
        return Err(CliError::config(format!(
            "x0 has {} entries, problem dimension is {}",
            xs.len(),
            model.dim()
        )));
    }
    Ok(DVector::from_column_slice(xs))
}

fn trajectory_csv(traj: &RestartedTrajectory, model: &dyn ObjectiveModel) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    traj.write_csv(model, &mut buf)?;
    Ok(buf)
}

fn log_csv(log: &IterateLog) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    log.write_csv(&mut buf)?;
    Ok(buf)
}

fn grid(lo: f64, hi: f64, dt: f64) -> usize {
    ((hi - lo) / dt).round() as usize + 1
}

/// Number of strict interior local maxima.
pub fn local_maxima(values: &[f64]) -> usize {
    values.windows(3).filter(|w| w[1] > w[0] && w[1] > w[2]).count()
}

/// Number of increases beyond `slack` between consecutive values.
pub fn rises(values: &[f64], slack: f64) -> usize {
    values.windows(2).filter(|w| w[1] > w[0] + slack).count()
}

// ---------------------------------------------------------------- oscillation

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillationConfig {
    pub rhos: Vec<f64>,
    pub systems: Vec<System>,
    pub alpha: f64,
    pub beta: f64,
    pub t0: f64,
    pub t_end: f64,
    pub x0: Vec<f64>,
    /// `ẋ(t0) = −c·∇φ(x0)`.
    pub velocity_factor: f64,
    pub tol_rel: f64,
    pub tol_abs: f64,
    pub delta_frac: f64,
    pub report_dt: f64,
}

#[derive(Debug, Serialize)]
pub struct OscillationRun {
    pub rho: f64,
    pub system: System,
    pub local_maxima: usize,
    pub last_value: f64,
    pub best_value: f64,
    #[serde(skip)]
    pub trajectory: RestartedTrajectory,
}

pub fn oscillation_study(cfg: &OscillationConfig) -> Result<Vec<(Quadratic, OscillationRun)>, CliError> {
    let opts = RestartOptions { tol: tolerances(cfg.tol_rel, cfg.tol_abs, cfg.delta_frac), ..Default::default() };
    let mut runs = Vec::new();
    for &rho in &cfg.rhos {
        for &system in &cfg.systems {
            let q = ProblemSpec::DiagRho { rho }.build()?;
            let x0 = point(&cfg.x0, &q)?;
            let mut params = DynamicsParams::at_rest(cfg.alpha, cfg.beta, system, cfg.t0, x0.clone());
            params.v_start = -q.gradient(&x0) * cfg.velocity_factor;
            let traj = build_restarted(&params, &q, cfg.t_end, RestartPolicy::None, &opts)?;
            let series = uniform_series(&traj, &q, cfg.t0, cfg.t_end, grid(cfg.t0, cfg.t_end, cfg.report_dt))?;
            let gaps: Vec<f64> = series.iter().map(|p| p.1).collect();
            let summary = din_restart::analysis::summarize(&series, cfg.t_end)?;
            runs.push((
                q,
                OscillationRun {
                    rho,
                    system,
                    local_maxima: local_maxima(&gaps),
                    last_value: summary.last_value,
                    best_value: summary.best_value,
                    trajectory: traj,
                },
            ));
        }
    }
    Ok(runs)
}

fn oscillation_recipe(name: &str, cfg: &OscillationConfig) -> Result<RecipeOutput, CliError> {
    let runs = oscillation_study(cfg)?;
    let mut artifacts = Vec::new();
    let mut checks = Vec::new();
    for (q, run) in &runs {
        artifacts.push(Artifact {
            name: format!("{name}_rho{}_{}.csv", run.rho, system_label(run.system)),
            bytes: trajectory_csv(&run.trajectory, q)?,
        });
        if run.system == System::Avd {
            checks.push(Check::invariant(
                format!("avd_oscillates_rho{}", run.rho),
                run.local_maxima >= 3,
                format!("{} local maxima of the gap", run.local_maxima),
            ));
        }
    }
    for &rho in &cfg.rhos {
        let count = |s: System| runs.iter().find(|(_, r)| r.rho == rho && r.system == s).map(|(_, r)| r.local_maxima);
        if let (Some(avd), Some(din)) = (count(System::Avd), count(System::DinAvd)) {
            checks.push(Check::invariant(
                format!("hessian_damping_tames_oscillations_rho{rho}"),
                din <= avd,
                format!("local maxima: AVD {avd}, DIN-AVD {din}"),
            ));
        }
    }
    let runs: Vec<&OscillationRun> = runs.iter().map(|(_, r)| r).collect();
    Ok(RecipeOutput { artifacts, summary: json!({ "runs": runs }), checks })
}

// ----------------------------------------------------------------- continuous

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuousConfig {
    pub problem: ProblemSpec,
    pub systems: Vec<System>,
    pub alpha: f64,
    pub beta: f64,
    pub t0: f64,
    pub t_end: f64,
    pub x0: Vec<f64>,
    /// Each factor `c` gives a column with `ẋ(t0) = −c·∇φ(x0)`.
    pub velocity_factors: Vec<f64>,
    pub policy: RestartPolicy,
    pub leg_clock: LegClock,
    pub tol_rel: f64,
    pub tol_abs: f64,
    pub delta_frac: f64,
    pub report_dt: f64,
}

pub struct ContinuousColumn {
    pub system: System,
    pub beta: f64,
    pub velocity_factor: f64,
    pub first_restart: Option<f64>,
    pub restarted: RestartedTrajectory,
    pub plain: RestartedTrajectory,
    pub fit: RateFit,
    pub restarted_summary: Summary,
    pub plain_summary: Summary,
    /// Gap increases on the report grid after the first restart.
    pub rises_after_first_restart: usize,
}

impl ContinuousColumn {
    pub fn label(&self) -> String {
        format!("{}_v{}", system_label(self.system), self.velocity_factor)
    }

    fn json(&self) -> Value {
        json!({
            "system": self.system,
            "beta": self.beta,
            "velocity_factor": self.velocity_factor,
            "first_restart": self.first_restart,
            "restarts": self.restarted.restart_times.len(),
            "fit": self.fit,
            "last_with_restart": self.restarted_summary.last_value,
            "best_with_restart": self.restarted_summary.best_value,
            "last_without_restart": self.plain_summary.last_value,
            "best_without_restart": self.plain_summary.best_value,
        })
    }
}

fn continuous_column(
    cfg: &ContinuousConfig,
    q: &Quadratic,
    system: System,
    velocity_factor: f64,
) -> Result<ContinuousColumn, CliError> {
    let opts = RestartOptions {
        tol: tolerances(cfg.tol_rel, cfg.tol_abs, cfg.delta_frac),
        leg_clock: cfg.leg_clock,
        ..Default::default()
    };
    let x0 = point(&cfg.x0, q)?;
    let mut params = DynamicsParams::at_rest(cfg.alpha, cfg.beta, system, cfg.t0, x0.clone());
    params.v_start = -q.gradient(&x0) * velocity_factor;
    let restarted = build_restarted(&params, q, cfg.t_end, cfg.policy, &opts)?;
    let plain = build_restarted(&params, q, cfg.t_end, RestartPolicy::None, &opts)?;
    let first_restart = restarted.restart_times.first().copied();
    let lo = first_restart.unwrap_or(cfg.t0);
    let series = uniform_series(&restarted, q, lo, cfg.t_end, grid(lo, cfg.t_end, cfg.report_dt))?;
    let clip = (!q.gap_is_exact()).then(|| default_clip_floor(q.gap(&x0).unwrap_or(0.0)));
    let fit = fit_rate(&series, [lo, cfg.t_end], clip)?;
    let gaps: Vec<f64> = series.iter().map(|p| p.1).collect();
    let slack = 1e-9 * (1.0 + q.value(&x0).abs());
    Ok(ContinuousColumn {
        system,
        beta: params.effective_beta(),
        velocity_factor,
        first_restart,
        restarted_summary: summarize_trajectory(&restarted, q, cfg.t_end, cfg.report_dt)?,
        plain_summary: summarize_trajectory(&plain, q, cfg.t_end, cfg.report_dt)?,
        rises_after_first_restart: rises(&gaps, slack),
        restarted,
        plain,
        fit,
    })
}

/// Restarted and plain runs for every (velocity, system) column, computed in parallel.
pub fn continuous_study(cfg: &ContinuousConfig) -> Result<(Quadratic, Vec<ContinuousColumn>), CliError> {
    let q = cfg.problem.build()?;
    let jobs: Vec<(f64, System)> = cfg
        .velocity_factors
        .iter()
        .flat_map(|&v| cfg.systems.iter().map(move |&s| (v, s)))
        .collect();
    let columns = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&(v, s)| {
                let q = &q;
                scope.spawn(move || continuous_column(cfg, q, s, v))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect::<Result<Vec<_>, _>>()
    })?;
    Ok((q, columns))
}

fn continuous_recipe(name: &str, cfg: &ContinuousConfig, reference: bool) -> Result<RecipeOutput, CliError> {
    let (q, columns) = continuous_study(cfg)?;
    let mut artifacts = Vec::new();
    if name.starts_with("fig_") {
        for c in &columns {
            artifacts.push(Artifact {
                name: format!("{name}_{}_restarted.csv", c.label()),
                bytes: trajectory_csv(&c.restarted, &q)?,
            });
            artifacts.push(Artifact {
                name: format!("{name}_{}_plain.csv", c.label()),
                bytes: trajectory_csv(&c.plain, &q)?,
            });
        }
    }
    let mut checks = Vec::new();
    if cfg.policy != RestartPolicy::None {
        for c in &columns {
            checks.push(Check::invariant(
                format!("restarted_nonincreasing_{}", c.label()),
                c.rises_after_first_restart == 0,
                format!("{} increases after the first restart", c.rises_after_first_restart),
            ));
            checks.push(Check::invariant(
                format!("restart_improves_last_value_{}", c.label()),
                c.restarted_summary.last_value < c.plain_summary.last_value,
                format!("{:e} vs {:e}", c.restarted_summary.last_value, c.plain_summary.last_value),
            ));
        }
    }
    if reference && name == "table_coef_regression" {
        checks.extend(coefficient_checks(&columns));
    }
    if reference && name == "table_values_t25" {
        checks.extend(value_checks(&columns));
    }
    let summary = match name {
        "table_values_t25" => json!({
            "t_report": cfg.t_end,
            "columns": columns.iter().map(|c| json!({
                "system": c.system,
                "beta": c.beta,
                "velocity_factor": c.velocity_factor,
                "last_without_restart": c.plain_summary.last_value,
                "best_without_restart": c.plain_summary.best_value,
                "last_with_restart": c.restarted_summary.last_value,
                "best_with_restart": c.restarted_summary.best_value,
                "best_ratio": c.restarted_summary.best_value / c.plain_summary.best_value,
            })).collect::<Vec<_>>(),
        }),
        "table_coef_regression" => json!({
            "columns": columns.iter().map(|c| json!({
                "system": c.system,
                "beta": c.beta,
                "velocity_factor": c.velocity_factor,
                "A": c.fit.a,
                "B": c.fit.b,
                "r2": c.fit.r2,
                "window": c.fit.window,
            })).collect::<Vec<_>>(),
        }),
        _ => json!({ "columns": columns.iter().map(ContinuousColumn::json).collect::<Vec<_>>() }),
    };
    Ok(RecipeOutput { artifacts, summary, checks })
}

/// Reference-rate comparisons for the coefficient table.
pub fn coefficient_checks(columns: &[ContinuousColumn]) -> Vec<Check> {
    let mut checks = Vec::new();
    for (v, b_ref) in REFERENCE_B_DIN {
        let find = |s: System| columns.iter().find(|c| c.system == s && c.velocity_factor == v);
        if let Some(din) = find(System::DinAvd) {
            let rel = (din.fit.b - b_ref).abs() / b_ref;
            checks.push(Check::reference(
                format!("din_avd_rate_v{v}"),
                rel <= REFERENCE_B_TOLERANCE,
                format!("B = {:.4}, reference {b_ref}, relative deviation {rel:.3}", din.fit.b),
            ));
            if let Some(avd) = find(System::Avd) {
                checks.push(Check::reference(
                    format!("din_avd_faster_than_avd_v{v}"),
                    din.fit.b > avd.fit.b,
                    format!("B: DIN-AVD {:.4}, AVD {:.4}", din.fit.b, avd.fit.b),
                ));
            }
        }
    }
    checks
}

/// Best restarted value against best plain value, per column.
pub fn value_checks(columns: &[ContinuousColumn]) -> Vec<Check> {
    let mut checks = Vec::new();
    for c in columns {
        let ratio = c.restarted_summary.best_value / c.plain_summary.best_value;
        checks.push(Check::reference(
            format!("best_value_gain_{}", c.label()),
            ratio <= CONTINUOUS_GAIN,
            format!("best ratio {ratio:.3e}"),
        ));
    }
    if let Some(c) = columns.iter().find(|c| c.system == System::Avd && c.velocity_factor == 0.0) {
        checks.push(Check::reference(
            "plain_avd_best_below_last",
            c.plain_summary.best_value < c.plain_summary.last_value,
            format!("{:e} < {:e}", c.plain_summary.best_value, c.plain_summary.last_value),
        ));
    }
    checks
}

// ------------------------------------------------------------------- discrete

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteConfig {
    pub problem: ProblemSpec,
    pub x0: Vec<f64>,
    pub alpha: f64,
    /// Defaults to `h`.
    pub beta: Option<f64>,
    /// Defaults to `1/√L`.
    pub h: Option<f64>,
    pub k_min: usize,
    #[serde(rename = "N")]
    pub n_iter: usize,
    pub reset: ResetMode,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomDiscreteConfig {
    pub n: usize,
    pub eig: [f64; 2],
    pub seeds: Vec<u64>,
    /// Start point of seed `s` is drawn with seed `s + start_seed_offset`.
    pub start_seed_offset: u64,
    pub alpha: f64,
    pub beta: Option<f64>,
    pub h: Option<f64>,
    pub k_min: usize,
    #[serde(rename = "N")]
    pub n_iter: usize,
    pub reset: ResetMode,
}

pub const DISCRETE_POLICIES: [IgahdPolicy; 3] = [IgahdPolicy::None, IgahdPolicy::Speed, IgahdPolicy::WarmThenSpeed];

fn policy_label(p: IgahdPolicy) -> &'static str {
    match p {
        IgahdPolicy::None => "none",
        IgahdPolicy::Speed => "speed",
        IgahdPolicy::WarmThenSpeed => "warm_then_speed",
    }
}

pub fn igahd_params(
    l: f64,
    alpha: f64,
    beta: Option<f64>,
    h: Option<f64>,
    k_min: usize,
    n_iter: usize,
    reset: ResetMode,
) -> IgahdParams {
    let base = IgahdParams::defaults_for(l, n_iter);
    let h = h.unwrap_or(base.h);
    IgahdParams { alpha, beta: beta.unwrap_or(h), h, k_min, n_iter, reset }
}

pub struct DiscreteRun {
    pub policy: IgahdPolicy,
    pub log: IterateLog,
    pub fit: RateFit,
    pub summary: Summary,
}

impl DiscreteRun {
    fn json(&self) -> Value {
        json!({
            "policy": self.policy,
            "restarts": self.log.restart_indices.len(),
            "fit": self.fit,
            "last_value": self.summary.last_value,
            "best_value": self.summary.best_value,
        })
    }
}

/// Runs every policy from `x0 = x1` and fits `gap ~ A·e^{−Bk}` over all iterates.
pub fn discrete_runs(model: &dyn ObjectiveModel, x0: &Point, params: &IgahdParams) -> Result<Vec<DiscreteRun>, CliError> {
    DISCRETE_POLICIES
        .iter()
        .map(|&policy| {
            let log = run_igahd(x0, x0, params, model, policy)?;
            let series = log.gap_series();
            let lo = series.first().map_or(1.0, |p| p.0);
            let clip = (!model.gap_is_exact() || log.gap_from_best).then(|| default_clip_floor(log.rows[0].phi_gap));
            let fit = fit_rate(&series, [lo, params.n_iter as f64], clip)?;
            let summary = summarize_log(&log, params.n_iter)?;
            Ok(DiscreteRun { policy, log, fit, summary })
        })
        .collect()
}

fn find(runs: &[DiscreteRun], p: IgahdPolicy) -> &DiscreteRun {
    runs.iter().find(|r| r.policy == p).expect("all policies are run")
}

fn spacing_check(label: &str, runs: &[DiscreteRun], k_min: usize) -> Check {
    let mut bad = 0;
    for r in runs {
        let skip = usize::from(r.policy == IgahdPolicy::WarmThenSpeed);
        bad += r.log.restart_indices.iter().skip(skip).filter(|&&i| r.log.rows[i - 1].k_local < k_min).count();
    }
    Check::invariant(format!("restart_spacing_{label}"), bad == 0, format!("{bad} restarts closer than k_min"))
}

fn convergence_check(label: &str, runs: &[DiscreteRun]) -> Check {
    let none = find(runs, IgahdPolicy::None);
    let (first, last) = (none.log.rows[0].phi_gap, none.log.last_gap());
    Check::invariant(format!("plain_converges_{label}"), last < first, format!("{last:e} < {first:e}"))
}

pub fn algo1_study(cfg: &DiscreteConfig) -> Result<(Quadratic, IgahdParams, Vec<DiscreteRun>), CliError> {
    let q = cfg.problem.build()?;
    let x0 = point(&cfg.x0, &q)?;
    let params = igahd_params(q.lipschitz(), cfg.alpha, cfg.beta, cfg.h, cfg.k_min, cfg.n_iter, cfg.reset);
    let runs = discrete_runs(&q, &x0, &params)?;
    Ok((q, params, runs))
}

/// Reference-value comparisons for the ill-conditioned discrete example.
pub fn algo1_checks(runs: &[DiscreteRun]) -> Vec<Check> {
    let (none, speed, warm) =
        (find(runs, IgahdPolicy::None), find(runs, IgahdPolicy::Speed), find(runs, IgahdPolicy::WarmThenSpeed));
    let ratio = warm.summary.best_value / none.summary.best_value;
    let (b1, b2) = (speed.fit.b, warm.fit.b);
    let rel = (b1 - b2).abs() / b1.min(b2);
    vec![
        Check::reference(
            "warm_best_value_gain",
            ratio <= ALGO1_GAIN,
            format!("best ratio {ratio:.3e}"),
        ),
        Check::reference(
            "speed_and_warm_rates_agree",
            rel <= ALGO1_B_AGREEMENT,
            format!("B: speed {b1:.4}, warm {b2:.4}, relative difference {rel:.3}"),
        ),
    ]
}

fn algo1_recipe(cfg: &DiscreteConfig, reference: bool) -> Result<RecipeOutput, CliError> {
    let (_, params, runs) = algo1_study(cfg)?;
    let mut artifacts = Vec::new();
    for r in &runs {
        artifacts.push(Artifact {
            name: format!("igahd_algo1_{}.csv", policy_label(r.policy)),
            bytes: log_csv(&r.log)?,
        });
    }
    let mut checks = vec![spacing_check("algo1", &runs, params.k_min), convergence_check("algo1", &runs)];
    if reference {
        checks.extend(algo1_checks(&runs));
    }
    let summary = json!({
        "params": params,
        "runs": runs.iter().map(DiscreteRun::json).collect::<Vec<_>>(),
    });
    Ok(RecipeOutput { artifacts, summary, checks })
}

pub struct SeedStudy {
    pub seed: u64,
    pub lipschitz: f64,
    pub params: IgahdParams,
    pub runs: Vec<DiscreteRun>,
}

impl SeedStudy {
    pub fn ratio(&self, p: IgahdPolicy) -> f64 {
        find(&self.runs, p).summary.best_value / find(&self.runs, IgahdPolicy::None).summary.best_value
    }
}

/// One random instance per seed, run in parallel.
pub fn algo2_study(cfg: &RandomDiscreteConfig) -> Result<Vec<SeedStudy>, CliError> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = cfg
            .seeds
            .iter()
            .map(|&seed| {
                scope.spawn(move || -> Result<SeedStudy, CliError> {
                    let (q, _) = make_random_quadratic(cfg.n, cfg.eig[0], cfg.eig[1], seed)?;
                    let x0 = random_start(cfg.n, seed + cfg.start_seed_offset);
                    let params =
                        igahd_params(q.lipschitz(), cfg.alpha, cfg.beta, cfg.h, cfg.k_min, cfg.n_iter, cfg.reset);
                    let runs = discrete_runs(&q, &x0, &params)?;
                    Ok(SeedStudy { seed, lipschitz: q.lipschitz(), params, runs })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    })
}

pub fn algo2_checks(studies: &[SeedStudy]) -> Vec<Check> {
    studies
        .iter()
        .map(|s| {
            let ratio = s.ratio(IgahdPolicy::WarmThenSpeed);
            Check::reference(
                format!("warm_best_value_gain_seed{}", s.seed),
                ratio <= ALGO2_GAIN,
                format!("best ratio {ratio:.3e} (speed only: {:.3e})", s.ratio(IgahdPolicy::Speed)),
            )
        })
        .collect()
}

fn algo2_recipe(cfg: &RandomDiscreteConfig, reference: bool) -> Result<RecipeOutput, CliError> {
    let studies = algo2_study(cfg)?;
    let mut artifacts = Vec::new();
    let mut checks = Vec::new();
    let mut per_seed = BTreeMap::new();
    for s in &studies {
        for r in &s.runs {
            artifacts.push(Artifact {
                name: format!("igahd_algo2_seed{}_{}.csv", s.seed, policy_label(r.policy)),
                bytes: log_csv(&r.log)?,
            });
        }
        let label = format!("seed{}", s.seed);
        checks.push(spacing_check(&label, &s.runs, s.params.k_min));
        checks.push(convergence_check(&label, &s.runs));
        per_seed.insert(
            label,
            json!({
                "L": s.lipschitz,
                "params": s.params,
                "runs": s.runs.iter().map(DiscreteRun::json).collect::<Vec<_>>(),
            }),
        );
    }
    if reference {
        checks.extend(algo2_checks(&studies));
    }
    Ok(RecipeOutput { artifacts, summary: json!({ "seeds": per_seed }), checks })
}
