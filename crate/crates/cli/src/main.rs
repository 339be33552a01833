use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use taskexp::harness::{self, parse_checkpoints, parse_override, RunConfig, ScenarioSpec};
use taskexp::hessian::HessianMethod;
use taskexp::scenarios::{MethodKind, ScenarioConfig};
use taskexp::Error;

/// Task-driven exploration benchmarks.
#[derive(Parser)]
#[command(name = "taskexp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a multi-trial benchmark and write records.csv, summary.json and resolved-config.json.
    Bench(BenchArgs),
    /// Print the model-task Hessian spectrum of a scenario.
    Hessian(HessianArgs),
    /// Run DynamicOED on a scenario and print the objective per iteration.
    OedDemo(OedDemoArgs),
    /// Fit A from a saved trajectory file.
    Estimate(EstimateArgs),
    /// Print a built-in scenario definition as JSON.
    Scenario {
        name: String,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// Built-in scenario name (bump1d, drone, car).
    #[arg(long, conflicts_with = "scenario_file")]
    scenario: Option<String>,
    /// Scenario definition file (JSON or TOML).
    #[arg(long)]
    scenario_file: Option<PathBuf>,
    /// Override a scenario field, e.g. `--set noise_var=0`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Emit JSON instead of a table.
    #[arg(long)]
    json: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    /// Run configuration file (JSON or TOML); flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    /// Comma-separated subset of task, random, uniform, costmin.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// `pow2`, `every:N`, or a comma-separated list.
    #[arg(long)]
    checkpoints: Option<String>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Record wall-clock milliseconds (makes records.csv run-dependent).
    #[arg(long)]
    timing: bool,
    /// Save every live episode as NDJSON under <out>/trajectories.
    #[arg(long)]
    save_trajectories: bool,
    /// Override any configuration value by dotted key, e.g. `scenario.noise_var=0`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct HessianArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// finite-difference or gauss-newton; the scenario default otherwise.
    #[arg(long)]
    method: Option<String>,
    /// Standard deviation of a Gaussian perturbation of the true parameters.
    #[arg(long, default_value_t = 0.0)]
    perturb: f64,
}

#[derive(Args)]
struct OedDemoArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value_t = 8)]
    iterations: usize,
    /// Episodes per iteration; (iterations + 1)² by default.
    #[arg(long)]
    per_iteration: Option<usize>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// NDJSON trajectory file.
    #[arg(long)]
    trajectories: PathBuf,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
}

fn main() -> ExitCode {
    let filter = std::env::var("TASK_OED_LOG").unwrap_or_else(|_| "warn".into());
    env_logger::Builder::new().parse_filters(&filter).format_timestamp(None).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = ErrorReport { error: e.kind(), message: e.to_string() };
            eprintln!("{}", serde_json::to_string(&report).unwrap_or_else(|_| e.to_string()));
            ExitCode::from(if matches!(e, Error::Config(_)) { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> taskexp::Result<()> {
    match cli.command {
        Command::Bench(args) => bench(args),
        Command::Hessian(args) => {
            let method = args.method.as_deref().map(parse_method).transpose()?;
            let cfg = args.scenario.load()?;
            let report = harness::tools::hessian_report(cfg, method, args.perturb, args.scenario.seed)?;
            emit(&report, args.scenario.json)
        }
        Command::OedDemo(args) => {
            let cfg = args.scenario.load()?;
            let report = harness::tools::oed_demo(cfg, args.iterations, args.per_iteration, args.scenario.seed)?;
            emit(&report, args.scenario.json)
        }
        Command::Estimate(args) => {
            let cfg = args.scenario.load()?;
            let report = harness::tools::estimate_from_file(cfg, &args.trajectories)?;
            emit(&report, args.scenario.json)
        }
        Command::Scenario { name } => {
            println!("{}", serde_json::to_string_pretty(&ScenarioConfig::builtin(&name)?)?);
            Ok(())
        }
    }
}

fn bench(args: BenchArgs) -> taskexp::Result<()> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => {
            let name = args
                .scenario
                .clone()
                .ok_or_else(|| Error::Config("bench needs --scenario or --config".into()))?;
            let episodes = args.episodes.ok_or_else(|| Error::Config("bench needs --episodes".into()))?;
            RunConfig::new(&name, episodes, 1)
        }
    };
    if let Some(s) = args.scenario {
        cfg.scenario = ScenarioSpec::Named(s);
    }
    if let Some(m) = args.methods {
        cfg.methods = m.iter().map(|s| s.parse::<MethodKind>()).collect::<taskexp::Result<_>>()?;
    }
    if let Some(e) = args.episodes {
        cfg.episodes = e;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = args.out {
        cfg.out = Some(o);
    }
    if let Some(c) = args.checkpoints {
        cfg.checkpoints = parse_checkpoints(&c)?;
    }
    if args.jobs.is_some() {
        cfg.jobs = args.jobs;
    }
    cfg.timing |= args.timing;
    cfg.save_trajectories |= args.save_trajectories;
    for s in &args.set {
        let (k, v) = parse_override(s)?;
        cfg.overrides.insert(k, v);
    }
    let report = harness::bench(&cfg)?;
    for m in &report.summary.methods {
        if let Some(last) = m.checkpoints.last() {
            println!(
                "{:<8} episodes {:>5}  excess loss mean {:>12.5e}  median {:>12.5e}  (n = {})",
                m.method, last.episodes, last.excess_loss.mean, last.excess_loss.median, last.n
            );
        }
    }
    if !report.failures.is_empty() {
        eprintln!("{} trial failures recorded", report.failures.len());
    }
    Ok(())
}

impl ScenarioArgs {
    fn load(&self) -> taskexp::Result<ScenarioConfig> {
        let cfg = match (&self.scenario, &self.scenario_file) {
            (Some(name), _) => ScenarioConfig::builtin(name)?,
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path)?;
                if path.extension().is_some_and(|e| e == "toml") {
                    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
                } else {
                    serde_json::from_str(&text)?
                }
            }
            (None, None) => return Err(Error::Config("--scenario or --scenario-file is required".into())),
        };
        if self.set.is_empty() {
            return Ok(cfg);
        }
        let mut tree = serde_json::to_value(&cfg)?;
        for s in &self.set {
            let (k, v) = parse_override(s)?;
            harness::apply_override(&mut tree, &k, v)?;
        }
        serde_json::from_value(tree).map_err(|e| Error::Config(format!("invalid override: {e}")))
    }
}

fn parse_method(s: &str) -> taskexp::Result<HessianMethod> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| Error::Config(format!("unknown Hessian method '{s}' (finite-difference or gauss-newton)")))
}

fn emit<R: Serialize + std::fmt::Display>(report: &R, json: bool) -> taskexp::Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(report)?);
    } else {
        print!("{report}");
    }
    Ok(())
}
