use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use din_restart::theory::{certificate, TauChoice};
use din_restart_cli::{commands, config, execute, run_experiment, CliError, Outcome};
use serde_json::{json, Map, Value};

#[derive(Parser)]
#[command(name = "din-restart", version, about = "Restarted inertial dynamics and IGAHD experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one (restarted) trajectory.
    Ode(OdeArgs),
    /// Run the discrete algorithm once.
    Igahd(IgahdArgs),
    /// Print a linear-rate certificate as JSON.
    Cert(CertArgs),
    /// Run a named recipe.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct Common {
    /// JSON document overriding the defaults key by key.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Artifact directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProblemArgs {
    /// Diagonal test problem with entries (ρ, 1, 1/ρ)².
    #[arg(long, conflicts_with = "n")]
    rho: Option<f64>,
    /// Dimension of a random quadratic.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, requires = "n")]
    eig_lo: Option<f64>,
    #[arg(long, requires = "n")]
    eig_hi: Option<f64>,
}

#[derive(Args)]
struct OdeArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    problem: ProblemArgs,
    /// Problem seed for random quadratics.
    #[arg(long, requires = "n")]
    seed: Option<u64>,
    /// AVD or DIN_AVD.
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    t0: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    velocity_factor: Option<f64>,
    /// none, speed, warm_then_speed or fixed_tau.
    #[arg(long)]
    policy: Option<String>,
    /// Restart period for the fixed_tau policy.
    #[arg(long)]
    tau: Option<f64>,
    /// zero or initial.
    #[arg(long)]
    leg_clock: Option<String>,
    #[arg(long)]
    tol_rel: Option<f64>,
    #[arg(long)]
    tol_abs: Option<f64>,
    #[arg(long)]
    delta_frac: Option<f64>,
    #[arg(long)]
    report_dt: Option<f64>,
}

#[derive(Args)]
struct IgahdArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    problem: ProblemArgs,
    /// Problem seed for random quadratics; the start point uses seed + 1000.
    /// For the diagonal problem it seeds the start point.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long = "kmin")]
    k_min: Option<usize>,
    #[arg(long = "N")]
    n_iter: Option<usize>,
    /// none, speed or warm_then_speed.
    #[arg(long)]
    policy: Option<String>,
    /// clear_momentum or strict_box.
    #[arg(long)]
    reset: Option<String>,
}

#[derive(Args)]
struct CertArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    #[arg(long = "L")]
    l: f64,
    #[arg(long)]
    mu: f64,
    /// Search (0, τ₃] for the restart length maximizing the rate.
    #[arg(long)]
    optimize: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Recipe name; may instead be given as "recipe" in the config.
    recipe: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn read_config(path: &Option<PathBuf>) -> Result<Option<String>, CliError> {
    path.as_ref().map(std::fs::read_to_string).transpose().map_err(CliError::from)
}

fn overrides(path: &Option<PathBuf>) -> Result<Map<String, Value>, CliError> {
    match read_config(path)? {
        Some(text) => config::parse_document(&text),
        None => Ok(Map::new()),
    }
}

fn set<T: Into<Value>>(map: &mut Map<String, Value>, key: &str, v: Option<T>) {
    if let Some(v) = v {
        map.insert(key.into(), v.into());
    }
}

fn problem_override(map: &mut Map<String, Value>, p: &ProblemArgs, seed: Option<u64>) {
    if let Some(rho) = p.rho {
        map.insert("problem".into(), json!({"kind": "diag_rho", "rho": rho}));
    } else if let Some(n) = p.n {
        map.insert(
            "problem".into(),
            json!({
                "kind": "random_quadratic",
                "n": n,
                "eig": [p.eig_lo.unwrap_or(1e-6), p.eig_hi.unwrap_or(1.0)],
                "seed": seed.unwrap_or(0),
            }),
        );
    }
}

fn ode(args: &OdeArgs) -> Result<Outcome, CliError> {
    let mut map = overrides(&args.common.config)?;
    problem_override(&mut map, &args.problem, args.seed);
    set(&mut map, "system", args.system.clone());
    set(&mut map, "alpha", args.alpha);
    set(&mut map, "beta", args.beta);
    set(&mut map, "t0", args.t0);
    set(&mut map, "t_end", args.t_end);
    set(&mut map, "velocity_factor", args.velocity_factor);
    if let Some(p) = &args.policy {
        let mut policy = json!({"kind": p});
        if let Some(tau) = args.tau {
            policy["tau"] = json!(tau);
        }
        map.insert("policy".into(), policy);
    }
    set(&mut map, "leg_clock", args.leg_clock.clone());
    set(&mut map, "tol_rel", args.tol_rel);
    set(&mut map, "tol_abs", args.tol_abs);
    set(&mut map, "delta_frac", args.delta_frac);
    set(&mut map, "report_dt", args.report_dt);
    execute("ode", &commands::ode_preset(), &map, &args.common.out, |cfg, _| commands::run_ode(cfg))
}

fn igahd(args: &IgahdArgs) -> Result<Outcome, CliError> {
    let mut map = overrides(&args.common.config)?;
    problem_override(&mut map, &args.problem, args.seed);
    if let Some(seed) = args.seed {
        let offset = if args.problem.n.is_some() { 1000 } else { 0 };
        map.insert("start_seed".into(), json!(seed + offset));
    }
    set(&mut map, "alpha", args.alpha);
    set(&mut map, "beta", args.beta);
    set(&mut map, "h", args.h);
    set(&mut map, "k_min", args.k_min);
    set(&mut map, "N", args.n_iter);
    set(&mut map, "policy", args.policy.clone());
    set(&mut map, "reset", args.reset.clone());
    execute("igahd", &commands::igahd_preset(), &map, &args.common.out, |cfg, _| {
        commands::run_igahd_command(cfg)
    })
}

fn cert(args: &CertArgs) -> Result<Outcome, CliError> {
    let choice = if args.optimize { TauChoice::Optimize } else { TauChoice::Tau3 };
    let c = certificate(args.alpha, args.beta, args.l, args.mu, choice)?;
    println!("{}", serde_json::to_string_pretty(&c)?);
    Ok(Outcome::Passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Ode(a) => ode(a),
        Command::Igahd(a) => igahd(a),
        Command::Cert(a) => cert(a),
        Command::Experiment(a) => {
            read_config(&a.config).and_then(|text| run_experiment(a.recipe.as_deref(), text.as_deref(), &a.out))
        }
    };
    match result {
        Ok(Outcome::Passed) => ExitCode::SUCCESS,
        Ok(Outcome::ChecksFailed) => {
            eprintln!("some checks failed; see manifest.json");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
