mod config;
mod error;
mod experiments;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use cea_core::report::ExperimentReport;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::experiments::{catalog, Experiment};

const VERSION: &str = env!("CEA_VERSION");

#[derive(Parser)]
#[command(name = "cea", version = VERSION, about = "Contactomorphism experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the experiment catalog
    List,
    BracketCheck(RunArgs),
    CurvatureSweep(RunArgs),
    GeodesicSolve(RunArgs),
    CharacteristicsCompare(RunArgs),
    JacobiDemo(RunArgs),
    ExpDerivative(RunArgs),
    QuantoCheck(RunArgs),
    SubmersionCheck(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration file
    #[arg(long)]
    config: PathBuf,
    /// Override a config leaf by dotted path, e.g. model.nodes=[512]
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct Document<'a> {
    #[serde(flatten)]
    report: &'a ExperimentReport,
    config: &'a ExperimentConfig,
}

fn execute(exp: Experiment, args: &RunArgs) -> Result<ExperimentReport, CliError> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let cfg = ExperimentConfig::resolve(&text, &args.overrides)?;
    if let Some(name) = &cfg.experiment {
        if name != exp.name() {
            return Err(CliError::Config(format!(
                "config names experiment `{name}` but `{}` was requested",
                exp.name()
            )));
        }
    }
    fs::create_dir_all(&args.out)?;
    fs::write(
        args.out.join("config.json"),
        serde_json::to_string_pretty(&cfg).expect("config serializes"),
    )?;

    let mut report = experiments::run(exp, &cfg, &args.out)?;
    report.experiment = exp.name().to_string();
    report.config_hash = cfg.hash();
    report.version = VERSION.to_string();
    write_outputs(&args.out, &report, &cfg)?;
    Ok(report)
}

fn write_outputs(
    out: &Path,
    report: &ExperimentReport,
    cfg: &ExperimentConfig,
) -> Result<(), CliError> {
    let doc = Document {
        report,
        config: cfg,
    };
    fs::write(
        out.join("report.json"),
        serde_json::to_string_pretty(&doc).expect("report serializes"),
    )?;
    report.write_csv_file(out.join("metrics.csv"))?;
    fs::write(out.join("summary.txt"), report.summary())?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (exp, args) = match &cli.command {
        Command::List => {
            print!("{}", catalog());
            return ExitCode::SUCCESS;
        }
        Command::BracketCheck(a) => (Experiment::BracketCheck, a),
        Command::CurvatureSweep(a) => (Experiment::CurvatureSweep, a),
        Command::GeodesicSolve(a) => (Experiment::GeodesicSolve, a),
        Command::CharacteristicsCompare(a) => (Experiment::CharacteristicsCompare, a),
        Command::JacobiDemo(a) => (Experiment::JacobiDemo, a),
        Command::ExpDerivative(a) => (Experiment::ExpDerivative, a),
        Command::QuantoCheck(a) => (Experiment::QuantoCheck, a),
        Command::SubmersionCheck(a) => (Experiment::SubmersionCheck, a),
    };
    match execute(exp, args) {
        Ok(report) => {
            print!("{}", report.summary());
            if report.all_pass() {
                ExitCode::SUCCESS
            } else {
                eprintln!("failed flags: {}", report.failed_flags().join(","));
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code())
        }
    }
}
