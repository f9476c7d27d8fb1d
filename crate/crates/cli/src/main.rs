//! `icvar`: run, evaluate and check the ICVaR planners from the shell.
//!
//! Exit status: 0 success, 1 configuration or usage error, 2 resource
//! limit exceeded, 3 a requested check failed.

use clap::{Args, Parser, Subcommand};
use icvar_core::env::tinychain::{brute_force_icvar, OracleMode};
use icvar_core::env::{TinyChain, TinyChainSpec};
use icvar_core::harness::{
    evaluate_planner, summaries_to_csv, summarize, EnvSpec, EvalSummary, PlannerKind, RunConfig, RunRecords,
};
use icvar_core::sparse::estimate_v_star;
use icvar_core::validation::{validate_policy_eval_bounds, validate_sparse_sampling_bounds, CoverageConfig};
use icvar_core::{substream, Budget, EvalConfig, IcvarError, RiskLevel};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "icvar", version, about = "Risk-averse online POMDP planning with iterated CVaR")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run episodes and write a records file.
    Run(RunArgs),
    /// Summarize records files (or run a config) into JSON and CSV.
    Eval(EvalArgs),
    /// Empirical coverage of the policy-evaluation and sparse-sampling bounds on TinyChain.
    BoundsCheck(BoundsArgs),
    /// Compare sparse sampling with the exact TinyChain oracle.
    OracleCheck(OracleArgs),
    /// Print the effective RunConfig JSON for the given flags.
    Config(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    #[command(flatten)]
    plan: PlanArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct PlanArgs {
    /// lasertag | lightdark | tinychain | tinychain-risky
    #[arg(long)]
    env: Option<String>,
    /// icvar-pomcpow | icvar-pft-dpw | sparse-sampling | policy-eval
    #[arg(long)]
    planner: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    episodes: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Wall-clock planning budget per step.
    #[arg(long, conflicts_with = "budget_iters")]
    budget_secs: Option<f64>,
    /// Simulations per planning step.
    #[arg(long)]
    budget_iters: Option<u64>,
    /// Tree depth (or sparse-sampling horizon).
    #[arg(long)]
    depth: Option<u32>,
    #[arg(long)]
    particles: Option<usize>,
    /// Also compute the policy-evaluation ICVaR metric per episode.
    #[arg(long)]
    eval_icvar: bool,
    /// RunConfig JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    plan: PlanArgs,
    #[arg(long, default_value = "records.json")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Records files written by `run`; summarized side by side.
    #[arg(long = "in")]
    inputs: Vec<PathBuf>,
    /// CVaR level of the summary (defaults to each run's planning level).
    #[arg(long)]
    summary_alpha: Option<f64>,
    /// Run this configuration instead of reading records.
    #[command(flatten)]
    plan: PlanArgs,
    /// Summary JSON output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV output (printed to stdout when omitted).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 500)]
    trials: u32,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Branching factors to test.
    #[arg(long = "n-b", value_delimiter = ',', default_values_t = vec![2u32, 8])]
    n_b: Vec<u32>,
    #[arg(long, default_value_t = 3)]
    horizon: u32,
    #[arg(long, default_value_t = 3)]
    particles: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "tinychain")]
    env: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value = "tinychain-risky")]
    env: String,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long = "n-b", default_value_t = 16)]
    n_b: u32,
    #[arg(long, default_value_t = 200)]
    trials: u32,
    #[arg(long, default_value_t = 16)]
    particles: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Minimum fraction of runs that must pick the oracle's action.
    #[arg(long, default_value_t = 0.9)]
    min_agreement: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Error(IcvarError),
    CheckFailed(String),
}

impl From<IcvarError> for Failure {
    fn from(e: IcvarError) -> Self {
        Failure::Error(e)
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn risk(alpha: f64) -> Result<RiskLevel, IcvarError> {
    RiskLevel::new(alpha).map_err(|e| IcvarError::Config(e.to_string()))
}

fn build_config(p: &PlanArgs) -> CliResult<RunConfig> {
    let mut cfg = match &p.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(IcvarError::from)?;
            serde_json::from_str::<RunConfig>(&text).map_err(|e| IcvarError::Config(e.to_string()))?
        }
        None => {
            let env = EnvSpec::by_name(p.env.as_deref().unwrap_or("lightdark"))?;
            let planner: PlannerKind = p.planner.as_deref().unwrap_or("icvar-pft-dpw").parse()?;
            RunConfig::defaults(env, planner, risk(p.alpha.unwrap_or(0.1))?)
        }
    };
    if p.config.is_some() {
        if let Some(env) = &p.env {
            let spec = EnvSpec::by_name(env)?;
            if spec.id() != cfg.env.id() {
                cfg.env = spec;
            }
        }
        if let Some(planner) = &p.planner {
            cfg.planner = planner.parse()?;
        }
        if let Some(a) = p.alpha {
            cfg.set_alpha(risk(a)?);
        }
    }
    if let Some(d) = p.delta {
        cfg.mcts.delta = d;
    }
    if let Some(n) = p.episodes {
        cfg.episodes = n;
    }
    if let Some(s) = p.seed {
        cfg.seed = s;
    }
    if let Some(s) = p.budget_secs {
        cfg.mcts.budget = Budget::Seconds(s);
    }
    if let Some(n) = p.budget_iters {
        cfg.mcts.budget = Budget::Iterations(n);
    }
    if let Some(d) = p.depth {
        cfg.mcts.d_max = d;
        cfg.sparse.horizon = d;
    }
    if let Some(n) = p.particles {
        cfg.n_particles = n;
    }
    cfg.eval_icvar |= p.eval_icvar;
    cfg.validate()?;
    Ok(cfg)
}

fn write_or_print(path: Option<&PathBuf>, text: &str) -> CliResult {
    match path {
        Some(p) => std::fs::write(p, format!("{text}\n")).map_err(IcvarError::from)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn json<T: serde::Serialize>(v: &T) -> CliResult<String> {
    Ok(serde_json::to_string_pretty(v).map_err(IcvarError::from)?)
}

fn summary_line(s: &EvalSummary) -> String {
    format!(
        "{} {} alpha={}: mean {:.3} ± {:.3}, CVaR_{} {:.3} ± {:.3} over {} episodes",
        s.env, s.planner, s.planner_alpha, s.mean_return, s.mean_ci95, s.alpha, s.cvar_return, s.cvar_ci95, s.episodes
    )
}

fn cmd_run(args: RunArgs) -> CliResult {
    let cfg = build_config(&args.plan)?;
    let (runs, summary) = evaluate_planner(&cfg)?;
    runs.write_json(&args.out)?;
    eprintln!("{}", summary_line(&summary));
    eprintln!("wrote {} records to {}", runs.records.len(), args.out.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> CliResult {
    let mut runs = Vec::new();
    for path in &args.inputs {
        runs.push(RunRecords::read_json(path)?);
    }
    if runs.is_empty() {
        let cfg = build_config(&args.plan)?;
        runs.push(evaluate_planner(&cfg)?.0);
    }
    let summaries = runs
        .iter()
        .map(|r| {
            let alpha = match args.summary_alpha {
                Some(a) => risk(a)?,
                None => r.config.alpha(),
            };
            summarize(r, alpha)
        })
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(out) = &args.out {
        let doc = if summaries.len() == 1 { json(&summaries[0])? } else { json(&summaries)? };
        std::fs::write(out, doc).map_err(IcvarError::from)?;
    }
    write_or_print(args.csv.as_ref(), summaries_to_csv(&summaries)?.trim_end())
}

fn tinychain_spec(name: &str) -> CliResult<TinyChainSpec> {
    match EnvSpec::by_name(name)? {
        EnvSpec::TinyChain(s) => Ok(s),
        _ => Err(IcvarError::Config(format!("`{name}` is not a TinyChain environment")).into()),
    }
}

fn cmd_bounds(args: BoundsArgs) -> CliResult {
    let spec = tinychain_spec(&args.env)?;
    let alpha = risk(args.alpha)?;
    let mut reports = Vec::new();
    for &n_b in &args.n_b {
        let cfg = CoverageConfig {
            eval: EvalConfig { n_b, horizon: args.horizon, alpha, gamma: spec.gamma },
            n_particles: args.particles,
            trials: args.trials,
            delta: args.delta,
            seed: args.seed,
        };
        reports.push(validate_policy_eval_bounds(&spec, &cfg)?);
        reports.push(validate_sparse_sampling_bounds(&spec, &cfg)?);
    }
    write_or_print(args.out.as_ref(), &json(&reports)?)?;
    let failed: Vec<_> = reports
        .iter()
        .filter(|r| !r.holds())
        .map(|r| format!("{:?} N_b={}", r.estimator, r.bound_params.n_b))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::CheckFailed(format!("violation rate above delta for {}", failed.join(", "))))
    }
}

#[derive(serde::Serialize)]
struct OracleReport {
    env: String,
    alpha: f64,
    n_b: u32,
    trials: u32,
    oracle_value: f64,
    oracle_action: usize,
    oracle_q_values: Vec<f64>,
    agreement: f64,
    mean_abs_error: f64,
}

fn cmd_oracle(args: OracleArgs) -> CliResult {
    let spec = tinychain_spec(&args.env)?;
    let alpha = risk(args.alpha)?;
    let model = TinyChain::new(spec.clone())?;
    let root = model.quantile_belief(args.particles);
    let oracle = brute_force_icvar(&model, &root, alpha, spec.horizon, &OracleMode::Optimal)?;
    let eval = EvalConfig { n_b: args.n_b, horizon: spec.horizon, alpha, gamma: spec.gamma };
    let mut agree = 0;
    let mut abs_err = 0.0;
    for i in 0..args.trials {
        let (v, a) = estimate_v_star(&root, 0, &eval, &model, &mut substream(args.seed, i as u64))?;
        agree += (a == oracle.best_action) as u32;
        abs_err += (v - oracle.value).abs();
    }
    let report = OracleReport {
        env: args.env.clone(),
        alpha: args.alpha,
        n_b: args.n_b,
        trials: args.trials,
        oracle_value: oracle.value,
        oracle_action: oracle.best_action,
        oracle_q_values: oracle.q_values.clone(),
        agreement: agree as f64 / args.trials.max(1) as f64,
        mean_abs_error: abs_err / args.trials.max(1) as f64,
    };
    write_or_print(args.out.as_ref(), &json(&report)?)?;
    if report.agreement >= args.min_agreement {
        Ok(())
    } else {
        Err(Failure::CheckFailed(format!("agreement {:.3} below {}", report.agreement, args.min_agreement)))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Eval(a) => cmd_eval(a),
        Command::BoundsCheck(a) => cmd_bounds(a),
        Command::OracleCheck(a) => cmd_oracle(a),
        Command::Config(a) => build_config(&a.plan).and_then(|cfg| write_or_print(a.out.as_ref(), &json(&cfg)?)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::CheckFailed(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                IcvarError::Resource(_) => 2,
                _ => 1,
            })
        }
    }
}
