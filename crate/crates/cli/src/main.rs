//! `cio`: run scenarios, compare CIO against prediction-only filtering,
//! solve contact batches and run the validation suite.
//!
//! Exit codes: 0 success, 1 configuration or input error (including failed
//! validation checks), 2 simulation or output error.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::builder::PossibleValuesParser;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use cio_core::contact_solver::{estimate_contact, ContactSolution, TotalWrench};
use cio_core::sim::config::ConfigError;
use cio_core::sim::log::write_metrics;
use cio_core::sim::{run_scenario, scenarios, Metrics, Mode, RunLog, ScenarioConfig};
use cio_core::validation::{run_checks, Fault};
use cio_core::vehicle_model::{DynamicsModel, Vec3};
use cio_core::{CioError, VehicleParams};

#[derive(Parser)]
#[command(name = "cio", version, about = "Contact inertial odometry simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write run.jsonl, metrics.json and traces.csv.
    Run(RunArgs),
    /// Run CIO and prediction-only filters on one sensor stream and report both errors.
    Compare(ScenarioArgs),
    /// Solve contact points for a JSON-lines file of total wrenches.
    SolveContacts(SolveArgs),
    /// Run the oracle-equivalence checks.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario configuration file (TOML).
    #[arg(long, required_unless_present = "scenario", conflicts_with = "scenario")]
    config: Option<PathBuf>,
    /// Built-in scenario instead of a file.
    #[arg(long, value_parser = PossibleValuesParser::new(scenarios::NAMES))]
    scenario: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override the duration, s.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Disable contact updates (prediction-only ablation).
    #[arg(long)]
    no_cio: bool,
    /// Run N consecutive seeds in parallel, one output directory per seed.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    batch: u64,
}

#[derive(Args)]
struct SolveArgs {
    /// JSON-lines file of total wrenches.
    #[arg(long)]
    input: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Take vehicle parameters from this scenario configuration.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Perturb a component to confirm the suite catches it.
    #[arg(long, value_enum)]
    inject_fault: Option<FaultArg>,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Flying,
    Rolling,
    Bouncing,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    ContactSolver,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Input(String),
    #[error("{failed} validation check(s) failed")]
    Validation { failed: usize },
    #[error(transparent)]
    Simulation(#[from] CioError),
    #[error("cannot write {path}: {message}")]
    Output { path: String, message: String },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Input(_) | CliError::Validation { .. } => 1,
            CliError::Simulation(_) | CliError::Output { .. } => 2,
        }
    }

    fn output(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Output {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

fn load_scenario(args: &ScenarioArgs) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match (&args.config, &args.scenario) {
        (Some(path), _) => ScenarioConfig::load(path)?,
        (None, Some(name)) => scenarios::by_name(name, 1).expect("name checked by the parser"),
        (None, None) => unreachable!("clap requires --config or --scenario"),
    };
    if let Some(seed) = args.seed {
        cfg.apply_seed(seed);
    }
    if let Some(duration) = args.duration {
        cfg.duration = duration;
    }
    if let Some(mode) = args.mode {
        cfg.mode = match mode {
            ModeArg::Flying => Mode::Flying,
            ModeArg::Rolling => Mode::Rolling,
            ModeArg::Bouncing => Mode::Bouncing,
        };
        if cfg.mode == Mode::Rolling {
            cfg.dynamics = DynamicsModel::Rolling;
        } else if cfg.dynamics == DynamicsModel::Rolling {
            cfg.dynamics = DynamicsModel::Rollocopter;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))
}

fn write_run(log: &RunLog, dir: &Path) -> Result<Metrics, CliError> {
    create_dir(dir)?;
    let metrics = log.metrics();
    let path = dir.join("run.jsonl");
    log.write_jsonl(&path).map_err(|e| CliError::output(&path, e))?;
    let path = dir.join("metrics.json");
    write_metrics(&metrics, &path).map_err(|e| CliError::output(&path, e))?;
    let path = dir.join("traces.csv");
    log.write_csv(&path).map_err(|e| CliError::output(&path, e))?;
    Ok(metrics)
}

fn print_json<T: Serialize>(value: &T) {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let mut cfg = load_scenario(&args.scenario)?;
    if args.no_cio {
        cfg.cio = false;
    }
    let out = &args.scenario.out;
    if args.batch == 1 {
        log::info!("running {} for {} s", cfg.name, cfg.duration);
        let log = run_scenario(&cfg)?;
        let metrics = write_run(&log, out)?;
        print_json(&metrics);
        return Ok(());
    }

    let base = cfg.seed.unwrap_or(0);
    let seeds: Vec<u64> = (0..args.batch).map(|i| base.wrapping_add(i)).collect();
    log::info!("running {} seeds of {} in parallel", seeds.len(), cfg.name);
    let runs: Vec<(u64, Result<RunLog, CioError>)> = seeds
        .par_iter()
        .map(|&seed| {
            let mut c = cfg.clone();
            c.apply_seed(seed);
            (seed, run_scenario(&c))
        })
        .collect();
    let mut all = Vec::with_capacity(runs.len());
    for (seed, result) in runs {
        let log = result?;
        all.push(write_run(&log, &out.join(format!("seed_{seed}")))?);
    }
    let path = out.join("batch.json");
    let text = serde_json::to_string_pretty(&all).expect("metrics serialize");
    fs::write(&path, text + "\n").map_err(|e| CliError::output(&path, e))?;
    print_json(&all);
    Ok(())
}

#[derive(Serialize)]
struct FilterSummary {
    max_abs_error: [f64; 3],
    max_error_norm: f64,
}

impl FilterSummary {
    fn from_errors(errors: impl Iterator<Item = Vec3>) -> Self {
        let mut s = FilterSummary {
            max_abs_error: [0.0; 3],
            max_error_norm: 0.0,
        };
        for e in errors {
            for i in 0..3 {
                s.max_abs_error[i] = s.max_abs_error[i].max(e[i].abs());
            }
            s.max_error_norm = s.max_error_norm.max(e.norm());
        }
        s
    }
}

#[derive(Serialize)]
struct ComparisonReport {
    name: String,
    seed: Option<u64>,
    contact_updates: usize,
    cio: FilterSummary,
    prediction_only: FilterSummary,
}

fn cmd_compare(args: &ScenarioArgs) -> Result<(), CliError> {
    let mut cfg = load_scenario(args)?;
    cfg.cio = true;
    cfg.comparison = true;
    let log = run_scenario(&cfg)?;
    write_run(&log, &args.out)?;
    let path = args.out.join("comparison.csv");
    log.write_comparison_csv(&path).map_err(|e| CliError::output(&path, e))?;
    let report = ComparisonReport {
        name: log.name.clone(),
        seed: log.seed,
        contact_updates: log.updates().count(),
        cio: FilterSummary::from_errors(log.cio_errors().map(|(_, e)| e)),
        prediction_only: FilterSummary::from_errors(log.shadow_errors().map(|(_, e)| e)),
    };
    let path = args.out.join("comparison.json");
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&path, text + "\n").map_err(|e| CliError::output(&path, e))?;
    print_json(&report);
    Ok(())
}

#[derive(Serialize)]
struct SolveRecord {
    line: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    solution: Option<ContactSolution>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn solve_line(line: usize, text: &str, p: &VehicleParams) -> SolveRecord {
    let result = serde_json::from_str::<TotalWrench>(text)
        .map_err(|e| format!("invalid wrench record: {e}"))
        .and_then(|w| estimate_contact(&w, p).map_err(|e| e.to_string()));
    match result {
        Ok(s) => SolveRecord {
            line,
            solution: Some(s),
            error: None,
        },
        Err(e) => SolveRecord {
            line,
            solution: None,
            error: Some(e),
        },
    }
}

fn cmd_solve_contacts(args: &SolveArgs) -> Result<(), CliError> {
    let params = match &args.config {
        Some(path) => ScenarioConfig::load(path)?.vehicle,
        None => VehicleParams::default(),
    };
    let input = fs::File::open(&args.input)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", args.input.display())))?;
    let sink: Box<dyn Write> = match &args.output {
        Some(path) => Box::new(fs::File::create(path).map_err(|e| CliError::output(path, e))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let out_name = args.output.clone().unwrap_or_else(|| PathBuf::from("<stdout>"));
    let mut out = BufWriter::new(sink);
    let (mut solved, mut failed) = (0, 0);
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line.map_err(|e| CliError::Input(format!("cannot read {}: {e}", args.input.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = solve_line(i + 1, &line, &params);
        if record.error.is_some() {
            failed += 1;
        } else {
            solved += 1;
        }
        serde_json::to_writer(&mut out, &record).map_err(|e| CliError::output(&out_name, e))?;
        out.write_all(b"\n").map_err(|e| CliError::output(&out_name, e))?;
    }
    out.flush().map_err(|e| CliError::output(&out_name, e))?;
    log::info!("solved {solved} records, {failed} flagged");
    Ok(())
}

fn cmd_validate(args: &ValidateArgs) -> Result<(), CliError> {
    let fault = match args.inject_fault {
        Some(FaultArg::ContactSolver) => Fault::ContactSolver,
        None => Fault::None,
    };
    let checks = run_checks(fault);
    if args.json {
        print_json(&checks);
    } else {
        println!("{:<42} {:>6} {:>13} {:>10}  result", "check", "cases", "max residual", "tolerance");
        for c in &checks {
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            println!(
                "{:<42} {:>6} {:>13.3e} {:>10.0e}  {verdict}",
                c.name, c.cases, c.max_residual, c.tolerance
            );
        }
    }
    match checks.iter().filter(|c| !c.passed).count() {
        0 => Ok(()),
        failed => Err(CliError::Validation { failed }),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("CIO_LOG_LEVEL", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::SolveContacts(args) => cmd_solve_contacts(args),
        Command::Validate(args) => cmd_validate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
