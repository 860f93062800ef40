//! `trailsim` command-line interface.
//!
//! Exit codes: 0 on success, 1 on usage or configuration errors, 2 on
//! runtime errors. Malformed input never panics.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};

use trailsim::engine::{self, RunResult};
use trailsim::protocol::Mode;
use trailsim::report;
use trailsim::scenario::{AttributeSetSpec, ScenarioConfig};

const SEED_ENV: &str = "TRAILSIM_SEED";

#[derive(Parser)]
#[command(
    name = "trailsim",
    about = "Deterministic simulator for counting unique users of sensor-instrumented trails",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one seeded run and write its CSV reports.
    Run(RunArgs),
    /// Compare duty-cycle against always-on energy over paired replications.
    CompareEnergy(CompareArgs),
    /// Measure count accuracy for several comparison attribute sets.
    SweepAttributes(SweepArgs),
    /// Rank attributes by the accuracy drop when each is excluded.
    RankFeatures(RankArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario file (TOML).
    #[arg(long, value_name = "PATH")]
    scenario: PathBuf,
    /// Base seed; falls back to $TRAILSIM_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for CSV files.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Worker pool size for replications.
    #[arg(long, default_value_t = default_jobs())]
    jobs: usize,
    /// Override the scenario's sensing mode.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    /// Verbose output; also writes messages.csv where applicable.
    #[arg(short, long, action = ArgAction::Count)]
    verbose: u8,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comparison attribute set: a named set or a comma-separated list.
    #[arg(long)]
    attributes: Option<String>,
    /// Include ground-truth id columns in observations.csv.
    #[arg(long)]
    emit_truth: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = 100)]
    replications: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Attribute sets to evaluate (repeatable).
    #[arg(long, required = true)]
    attributes: Vec<String>,
    #[arg(long, default_value_t = 100)]
    replications: usize,
}

#[derive(Args)]
struct RankArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = 100)]
    replications: usize,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    Mode::parse(s).ok_or_else(|| format!("expected 'always-on' or 'duty-cycle', got {s:?}"))
}

/// Error carrying its exit-code class.
enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::CompareEnergy(args) => cmd_compare_energy(args),
        Command::SweepAttributes(args) => cmd_sweep_attributes(args),
        Command::RankFeatures(args) => cmd_rank_features(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("trailsim: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn seed_of(common: &CommonArgs) -> Result<u64, CliError> {
    if let Some(seed) = common.seed {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .parse()
            .map_err(|_| CliError::Config(format!("{SEED_ENV}={v:?} is not a valid seed"))),
        Err(_) => Ok(0),
    }
}

fn load_scenario(common: &CommonArgs) -> Result<ScenarioConfig, CliError> {
    let mut config =
        ScenarioConfig::load(&common.scenario).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(mode) = common.mode {
        config.mode = mode;
    }
    Ok(config)
}

fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create output directory {}: {e}", dir.display())))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, contents)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn run_one(config: &ScenarioConfig, seed: u64) -> Result<RunResult, CliError> {
    engine::run(config, seed).map_err(|e| match e {
        engine::EngineError::Population(_) | engine::EngineError::ConfigInvalid(_) => {
            CliError::Config(e.to_string())
        }
        other => CliError::Runtime(other.to_string()),
    })
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let mut config = load_scenario(&args.common)?;
    if let Some(spec) = &args.attributes {
        AttributeSetSpec::parse(spec)
            .map_err(|e| CliError::Config(e.to_string()))?
            .apply(&mut config);
    }
    let seed = seed_of(&args.common)?;
    let result = run_one(&config, seed)?;

    ensure_out_dir(&args.common.out)?;
    let out = &args.common.out;
    write(out, "observations.csv", &report::observations_csv(&result, &config, args.emit_truth))?;
    write(out, "trails.csv", &report::trails_csv(&result))?;
    write(out, "energy.csv", &report::energy_csv(&result))?;
    write(out, "summary.csv", &report::summary_csv(&config, &result))?;
    if args.common.verbose > 0 {
        write(out, "messages.csv", &report::messages_csv(&result.messages))?;
    }

    let accuracy = result
        .accuracy
        .as_ref()
        .map(|a| report::fmt_sig(a.count_accuracy))
        .unwrap_or_else(|| "n/a".into());
    println!("unique_count: {}", result.registry.unique_count());
    println!("count_accuracy: {accuracy}");
    if args.common.verbose > 0 {
        println!(
            "observations: {}  messages: {} (fulfilled {}, expired {}, clamped {})",
            result.observations.len(),
            result.ledger.emitted,
            result.ledger.fulfilled,
            result.ledger.expired,
            result.ledger.clamped,
        );
    }
    Ok(())
}

fn cmd_compare_energy(args: CompareArgs) -> Result<(), CliError> {
    if args.replications == 0 {
        return Err(CliError::Config("--replications must be at least 1".into()));
    }
    let config = load_scenario(&args.common)?;
    let seed = seed_of(&args.common)?;
    let cmp = engine::compare_energy(&config, args.replications, seed, args.common.jobs);

    ensure_out_dir(&args.common.out)?;
    write(&args.common.out, "energy_compare.csv", &report::energy_compare_csv(&cmp))?;

    println!("{:<10} {:>12} {:>12} {:>10}", "sensor", "duty", "always-on", "saving%");
    for row in &cmp.per_sensor {
        println!(
            "{:<10} {:>12.1} {:>12.1} {:>10}",
            row.sensor.0,
            row.mean_units_duty,
            row.mean_units_on,
            row.saving_percent.map(|s| format!("{s:.1}")).unwrap_or_else(|| "-".into()),
        );
    }
    println!(
        "{:<10} {:>12.1} {:>12.1} {:>10}",
        "mean",
        cmp.mean_units_duty,
        cmp.mean_units_on,
        cmp.saving_percent.map(|s| format!("{s:.1}")).unwrap_or_else(|| "-".into()),
    );
    println!("saving std dev across replications: {:.2}", cmp.saving_std);
    Ok(())
}

fn cmd_sweep_attributes(args: SweepArgs) -> Result<(), CliError> {
    if args.replications == 0 {
        return Err(CliError::Config("--replications must be at least 1".into()));
    }
    let config = load_scenario(&args.common)?;
    let seed = seed_of(&args.common)?;
    let mut sets = Vec::new();
    for spec in &args.attributes {
        sets.push(AttributeSetSpec::parse(spec).map_err(|e| CliError::Config(e.to_string()))?);
    }
    let rows = engine::sweep_attribute_sets(&config, &sets, args.replications, seed, args.common.jobs);

    ensure_out_dir(&args.common.out)?;
    write(&args.common.out, "sweep.csv", &report::sweep_csv(&rows))?;

    println!("{:<30} {:>14} {:>14}", "attribute_set", "mean_accuracy", "std");
    for r in &rows {
        println!(
            "{:<30} {:>14} {:>14}",
            r.set_name,
            report::fmt_sig(r.mean_accuracy),
            report::fmt_sig(r.std_accuracy)
        );
    }
    Ok(())
}

fn cmd_rank_features(args: RankArgs) -> Result<(), CliError> {
    if args.replications == 0 {
        return Err(CliError::Config("--replications must be at least 1".into()));
    }
    let config = load_scenario(&args.common)?;
    let seed = seed_of(&args.common)?;
    let rows = trailsim::metrics::feature_importance(&config, args.replications, seed, args.common.jobs)
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    ensure_out_dir(&args.common.out)?;
    write(&args.common.out, "importance.csv", &report::importance_csv(&rows))?;

    print!("{}", report::importance_table(&rows));
    Ok(())
}
