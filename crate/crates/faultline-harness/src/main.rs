//! Command line interface for running and auditing campaigns.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use faultline_core::pipeline::{validate_pipeline, ComponentRegistry, IssueCode};
use faultline_harness::{campaign, config, report, store, HarnessError};

#[derive(Parser)]
#[command(
    name = "faultline",
    version,
    about = "Metamorphic fault attribution for component pipelines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a campaign or pipeline file without running anything.
    Validate {
        /// Campaign TOML (with [campaign]) or pipeline TOML (with [pipeline]).
        path: PathBuf,
    },
    /// Execute a campaign and write its artifacts.
    Run {
        /// Campaign TOML file.
        config: PathBuf,
        /// Override the campaign seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the worker thread count.
        #[arg(long)]
        jobs: Option<usize>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the report of a finished campaign.
    Report {
        /// Campaign output directory.
        dir: PathBuf,
        /// Print CSV instead of the aligned table.
        #[arg(long)]
        csv: bool,
    },
    /// Rebuild one run's trace from an event log and print it.
    Replay {
        /// Path to events.jsonl.
        log: PathBuf,
        /// Run id, e.g. ref-00003 or prt-00003-g1.
        run_id: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(error.exit_code())
        }
    }
}

fn dispatch(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Validate { path } => validate(path),
        Command::Run { config, seed, jobs, out } => run(config, seed, jobs, out),
        Command::Report { dir, csv } => {
            let summary = report::read_summary(&dir)?;
            if csv {
                print!("{}", report::render_csv(&summary)?);
            } else {
                print!("{}", report::render_table(&summary));
            }
            Ok(())
        }
        Command::Replay { log, run_id } => {
            let tree = store::replay(&log, &run_id)?;
            let mut json = serde_json::to_string_pretty(&tree)?;
            json.push('\n');
            print!("{json}");
            Ok(())
        }
    }
}

fn validate(path: PathBuf) -> Result<(), HarnessError> {
    let issues = match config::sniff_kind(&path)? {
        config::FileKind::Campaign => {
            let (plan, _) = config::load_campaign(&path, None, None, None)?;
            let report = validate_pipeline(&plan.pipeline, &plan.registry);
            (report.errors, report.warnings)
        }
        config::FileKind::Pipeline => {
            let spec = config::load_pipeline_file(&path)?;
            let report = validate_pipeline(&spec, &ComponentRegistry::new());
            // A bare pipeline file binds no components, so missing
            // component registrations are expected here.
            let errors = report
                .errors
                .into_iter()
                .filter(|issue| issue.code != IssueCode::MissingComponent)
                .collect();
            (errors, report.warnings)
        }
    };
    let (errors, warnings) = issues;
    for warning in &warnings {
        println!("warning: {warning}");
    }
    if errors.is_empty() {
        println!("ok: {} warnings, 0 errors", warnings.len());
        Ok(())
    } else {
        let lines: Vec<String> = errors.iter().map(|issue| format!("  {issue}")).collect();
        Err(HarnessError::Validation(lines.join("\n")))
    }
}

fn run(
    config_path: PathBuf,
    seed: Option<u64>,
    jobs: Option<usize>,
    out: Option<PathBuf>,
) -> Result<(), HarnessError> {
    let (plan, settings) = config::load_campaign(&config_path, seed, jobs, out)?;
    let outcome = campaign::run_campaign(&plan)?;
    let summary = report::write_outputs(&outcome, &settings.out)?;
    print!("{}", report::render_table(&summary));
    println!("artifacts: {}", settings.out.display());
    Ok(())
}
