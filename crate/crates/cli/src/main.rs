//! `mfp`: run experiments, sweeps and single solves from the command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use mfp_core::baselines::schedule_with_policy;
use mfp_core::sim::{self, write_outputs, write_sweep_summary, ExperimentConfig, Summary};
use mfp_core::{Budgets, ConsumptionTask, Error, OutcomeKind, PolicyId, PriceVector, ResourceQuanta, SolveInput};

const EXIT_CONFIG: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser)]
#[command(name = "mfp", version, about = "Multimodal federated perception resource simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a multi-round experiment and write its result files.
    Run(RunArgs),
    /// Run once per value of one config field.
    Sweep(SweepArgs),
    /// Solve one client's minimum-cost schedule and print it as JSON.
    SolveOne(SolveArgs),
    /// Check a config file and print the resolved config.
    ValidateConfig(ConfigArg),
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment config (TOML); defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct Overrides {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    seed: Option<u64>,
    /// Policy name, e.g. SISCC, MC_T, MLPG.
    #[arg(long)]
    policy: Option<PolicyId>,
    #[arg(long)]
    rounds: Option<u32>,
    /// Resource multipliers `t:b:f`, e.g. `1/4:1/2:1/2`.
    #[arg(long, value_name = "T:B:F")]
    scale: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Dotted config path, e.g. `scenario.clients` or `resources.scale.1`.
    #[arg(long)]
    axis: String,
    /// `lo..hi` (inclusive integers) or a comma-separated list.
    #[arg(long)]
    values: String,
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

/// All quantities in cells; budgets default to unbounded.
#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    n: u64,
    #[arg(long)]
    a: f64,
    #[arg(long, default_value_t = 0.0)]
    b: f64,
    #[arg(long, default_value_t = 1.0)]
    dt: f64,
    #[arg(long, default_value_t = 1.0)]
    db: f64,
    #[arg(long, default_value_t = 1.0)]
    df: f64,
    /// Sets both the sensing and the consumption time budget.
    #[arg(long)]
    time: Option<f64>,
    #[arg(long)]
    gen_time: Option<f64>,
    #[arg(long)]
    cons_time: Option<f64>,
    #[arg(long)]
    freq: Option<f64>,
    #[arg(long)]
    compute: Option<f64>,
    /// Model download, time×frequency cells.
    #[arg(long, default_value_t = 0.0)]
    w_down: f64,
    /// Model upload, time×frequency cells.
    #[arg(long, default_value_t = 0.0)]
    w_up: f64,
    /// Training per sample, time×compute cells.
    #[arg(long, default_value_t = 0.0)]
    per_sample: f64,
    #[arg(long, default_value = "SISCC")]
    policy: PolicyId,
}

fn load_config(o: &Overrides) -> mfp_core::Result<ExperimentConfig> {
    let mut cfg = match &o.config.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(p) = o.policy {
        cfg.policy = p;
    }
    if let Some(r) = o.rounds {
        cfg.rounds = r;
    }
    if let Some(s) = &o.scale {
        cfg.set_scale(s)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_values(raw: &str) -> anyhow::Result<Vec<toml::Value>> {
    if let Some((lo, hi)) = raw.split_once("..") {
        let lo: i64 = lo.trim().parse().context("range start")?;
        let hi: i64 = hi.trim().parse().context("range end")?;
        if lo > hi {
            return Err(anyhow!("empty range {raw}"));
        }
        return Ok((lo..=hi).map(toml::Value::Integer).collect());
    }
    raw.split(',')
        .map(|v| {
            let v = v.trim();
            Ok(if let Ok(i) = v.parse::<i64>() {
                toml::Value::Integer(i)
            } else if let Ok(f) = v.parse::<f64>() {
                toml::Value::Float(f)
            } else if let Ok(b) = v.parse::<bool>() {
                toml::Value::Boolean(b)
            } else {
                toml::Value::String(v.to_string())
            })
        })
        .collect()
}

fn run(args: RunArgs) -> anyhow::Result<u8> {
    let cfg = load_config(&args.overrides)?;
    let rec = sim::run(&cfg)?;
    write_outputs(&rec, &args.out, cfg.output.trajectories)?;
    std::fs::write(args.out.join("config.toml"), cfg.to_toml_string())?;
    let summary = Summary::of(&rec);
    println!("{}", serde_json::to_string_pretty(&summary)?);
    if summary.shortfall_rounds > 0 {
        eprintln!("gain target missed in {} of {} rounds", summary.shortfall_rounds, summary.rounds);
        return Ok(EXIT_INFEASIBLE);
    }
    Ok(0)
}

fn sweep(args: SweepArgs) -> anyhow::Result<u8> {
    let cfg = load_config(&args.overrides)?;
    let values = parse_values(&args.values).map_err(|e| Error::Config {
        path: "values".into(),
        message: e.to_string(),
    })?;
    let runs = sim::sweep(&cfg, &args.axis, &values)?;
    for (k, (_, rec)) in runs.iter().enumerate() {
        write_outputs(rec, &args.out.join(format!("run_{k:03}")), cfg.output.trajectories)?;
    }
    let path = args.out.join("sweep.csv");
    write_sweep_summary(&path, &runs)?;
    println!("{}", path.display());
    Ok(0)
}

fn solve_one(args: SolveArgs) -> anyhow::Result<u8> {
    let inf = f64::INFINITY;
    let time = args.time.unwrap_or(inf);
    let mut budgets = Budgets::new(time, args.freq.unwrap_or(inf), args.compute.unwrap_or(inf));
    budgets.gen_time = args.gen_time.unwrap_or(time);
    budgets.cons_time = args.cons_time.unwrap_or(time);
    let input = SolveInput {
        n: args.n,
        a: args.a,
        b: args.b,
        task: ConsumptionTask {
            d_down: args.w_down,
            d_up: args.w_up,
            kappa: args.per_sample,
            c_down: 1.0,
            c_up: 1.0,
        },
        prices: PriceVector {
            dt: args.dt,
            db: args.db,
            df: args.df,
            ..PriceVector::default()
        },
        budgets,
        quanta: ResourceQuanta::new(1.0, 1.0, 1.0)?,
    };
    input.prices.validate()?;
    let out = schedule_with_policy(args.policy, &input);
    println!("{}", out.to_json());
    Ok(match out.kind {
        OutcomeKind::Infeasible => EXIT_INFEASIBLE,
        _ => 0,
    })
}

fn validate(args: ConfigArg) -> anyhow::Result<u8> {
    let cfg = match &args.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    print!("{}", cfg.to_toml_string());
    eprintln!("config ok, hash {}", cfg.hash());
    Ok(0)
}

fn exit_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config { .. }) | Some(Error::InvalidArgument(_)) => EXIT_CONFIG,
        Some(Error::Infeasible(_)) | Some(Error::GainShortfall { .. }) => EXIT_INFEASIBLE,
        _ => 1,
    }
}

fn describe(err: &anyhow::Error, config: Option<&Path>) -> String {
    match (err.downcast_ref::<Error>(), config) {
        (Some(Error::Config { .. }), Some(p)) => format!("{}: {err}", p.display()),
        _ => format!("{err:#}"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config_path = match &cli.command {
        Command::Run(a) => a.overrides.config.config.clone(),
        Command::Sweep(a) => a.overrides.config.config.clone(),
        Command::ValidateConfig(a) => a.config.clone(),
        Command::SolveOne(_) => None,
    };
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::SolveOne(a) => solve_one(a),
        Command::ValidateConfig(a) => validate(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", describe(&e, config_path.as_deref()));
            ExitCode::from(exit_for(&e))
        }
    }
}
