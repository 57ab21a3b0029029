mod config;
mod manifest;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use loadcast_core::{Error, Result};

use crate::config::{ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(
    name = "loadcast",
    version,
    about = "Synthetic load forecasting experiments: SVR against a persistence baseline, \
             with residual diagnostics and feeder impact analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every phase end to end and write the run manifest.
    Run(PhaseArgs),
    /// Generate the synthetic hourly load series.
    Generate(PhaseArgs),
    /// Grid-search SVR hyperparameters and fit the final model.
    Train(PhaseArgs),
    /// Score the model and the persistence baseline on the test window.
    Evaluate(PhaseArgs),
    /// Write residual heatmap and autocorrelation diagnostics.
    Diagnose(PhaseArgs),
    /// Simulate feeder power flow under actual and forecast load.
    Gridsim(PhaseArgs),
}

#[derive(Args)]
struct PhaseArgs {
    /// Experiment config JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for artifacts (overrides the config).
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Global experiment seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Persistence baseline lag in hours (overrides the config).
    #[arg(long)]
    persistence_lag: Option<usize>,
    /// Held-out fraction of the series (overrides the config).
    #[arg(long)]
    test_fraction: Option<f64>,
}

impl PhaseArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::load(
            self.config.as_deref(),
            &Overrides {
                output_dir: self.output_dir.clone(),
                seed: self.seed,
                persistence_lag: self.persistence_lag,
                test_fraction: self.test_fraction,
            },
        )
    }
}

/// Stdout summary of a single-phase subcommand.
#[derive(Serialize)]
struct PhaseSummary<'a> {
    phase: &'a str,
    output_dir: &'a PathBuf,
    outputs: Vec<&'static str>,
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("LOADCAST_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .parse()
        .map_err(|_| Error::invalid(format!("LOADCAST_THREADS must be a positive integer, got {raw:?}")))?;
    if threads == 0 {
        return Err(Error::invalid("LOADCAST_THREADS must be a positive integer, got 0"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::invalid(format!("cannot configure the thread pool: {e}")))
}

fn dispatch(cli: &Cli) -> Result<()> {
    let (name, args) = match &cli.command {
        Command::Run(args) => ("run", args),
        Command::Generate(args) => ("generate", args),
        Command::Train(args) => ("train", args),
        Command::Evaluate(args) => ("evaluate", args),
        Command::Diagnose(args) => ("diagnose", args),
        Command::Gridsim(args) => ("gridsim", args),
    };
    let config = args.load()?;
    eprintln!("[loadcast] {name}: output dir {}", config.output_dir.display());

    let outputs = match &cli.command {
        Command::Run(_) => {
            let summary = pipeline::run_experiment(&config)?;
            print_json(&summary)?;
            return Ok(());
        }
        Command::Generate(_) => {
            let series = pipeline::run_generate(&config)?;
            eprintln!("[loadcast] generated {} hours", series.len());
            vec![pipeline::SERIES_FILE, pipeline::SERIES_META_FILE]
        }
        Command::Train(_) => {
            let outcome = pipeline::run_train(&config)?;
            eprintln!(
                "[loadcast] selected C={} epsilon={} gamma={}",
                outcome.best_params.c, outcome.best_params.epsilon, outcome.best_params.gamma
            );
            vec![pipeline::MODEL_FILE, pipeline::GRID_CSV_FILE, pipeline::GRID_SUMMARY_FILE]
        }
        Command::Evaluate(_) => {
            let outcome = pipeline::run_evaluate(&config)?;
            eprintln!(
                "[loadcast] test MAE: svr {:.3}, persistence {:.3}",
                outcome.svr.mae, outcome.persistence.mae
            );
            vec![
                pipeline::METRICS_SVR_FILE,
                pipeline::METRICS_PERSISTENCE_FILE,
                pipeline::COMPARISON_FILE,
            ]
        }
        Command::Diagnose(_) => {
            pipeline::run_diagnose(&config)?;
            vec![pipeline::HEATMAP_FILE, pipeline::ACF_FILE]
        }
        Command::Gridsim(_) => {
            let summary = pipeline::run_gridsim(&config)?;
            eprintln!(
                "[loadcast] {} of {} steps violate limits",
                summary.actual_violations, summary.n_steps
            );
            vec![pipeline::IMPACT_CSV_FILE, pipeline::IMPACT_SUMMARY_FILE]
        }
    };
    print_json(&PhaseSummary {
        phase: name,
        output_dir: &config.output_dir,
        outputs,
    })
}

fn exit_code(error: &Error) -> u8 {
    match error {
        Error::InvalidInput(_) | Error::DegenerateInput(_) | Error::Parse(_) => 2,
        Error::Io(_) | Error::Json(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = configure_threads().and_then(|()| dispatch(&cli));
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(exit_code(&error))
        }
    }
}
