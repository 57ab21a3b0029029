//! The experiment phases. Every phase reads its inputs from artifacts on
//! disk and writes its outputs back, so a full run and a chain of
//! subcommands produce byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use loadcast_core::diagnostics::{autocorrelation, residual_heatmap, ResidualSeries};
use loadcast_core::features::extract_features;
use loadcast_core::gridimpact::{build_kerber_feeder, impact_report, GridImpactSummary};
use loadcast_core::loadgen::{generate_profile, split_train_test, GeneratorConfig, PRNG_NAME};
use loadcast_core::metrics::{improvement_report, ImprovementReport, MetricsReport};
use loadcast_core::modelsel::{grid_search, make_splits, persistence_forecast, GridCellMean};
use loadcast_core::svr::{SvrModel, SvrParams, TrainingMeta};
use loadcast_core::timeseries::LoadSeries;
use loadcast_core::{Error, Result};

use crate::config::ExperimentConfig;
use crate::manifest::build_manifest;

pub const SERIES_FILE: &str = "series.csv";
pub const SERIES_META_FILE: &str = "series_meta.json";
pub const MODEL_FILE: &str = "model.json";
pub const GRID_CSV_FILE: &str = "grid_search.csv";
pub const GRID_SUMMARY_FILE: &str = "grid_summary.json";
pub const METRICS_SVR_FILE: &str = "metrics_svr.json";
pub const METRICS_PERSISTENCE_FILE: &str = "metrics_persistence.json";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const HEATMAP_FILE: &str = "residual_heatmap.csv";
pub const ACF_FILE: &str = "residual_acf.csv";
pub const IMPACT_CSV_FILE: &str = "grid_impact.csv";
pub const IMPACT_SUMMARY_FILE: &str = "impact_summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARTIAL_MARKER: &str = ".partial";

/// The nine primary artifacts of a full run, in production order.
pub const ARTIFACTS: [&str; 9] = [
    SERIES_FILE,
    MODEL_FILE,
    GRID_CSV_FILE,
    METRICS_SVR_FILE,
    METRICS_PERSISTENCE_FILE,
    COMPARISON_FILE,
    HEATMAP_FILE,
    ACF_FILE,
    IMPACT_CSV_FILE,
];

/// Metadata JSONs written alongside the artifacts.
pub const SIDECARS: [&str; 3] = [SERIES_META_FILE, GRID_SUMMARY_FILE, IMPACT_SUMMARY_FILE];

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::invalid(format!("cannot create {}: {e}", dir.display())))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Error::invalid(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(dir, name, &text)
}

/// Resolves an upstream artifact, naming the subcommand that produces it
/// when the file is missing.
fn require_artifact(dir: &Path, name: &str, producer: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(Error::invalid(format!(
            "missing artifact {}: produce it with `loadcast {producer}`",
            path.display()
        )));
    }
    Ok(path)
}

fn load_series(config: &ExperimentConfig) -> Result<LoadSeries> {
    let path = require_artifact(&config.output_dir, SERIES_FILE, "generate")?;
    LoadSeries::read_csv_file(&path)
}

fn load_model(config: &ExperimentConfig) -> Result<SvrModel> {
    let path = require_artifact(&config.output_dir, MODEL_FILE, "train")?;
    let model = SvrModel::read_json_file(&path)?;
    model.validate()?;
    Ok(model)
}

/// Test window plus the model's predictions on it, recomputed
/// identically by every phase that needs them.
fn test_predictions(
    config: &ExperimentConfig,
    series: &LoadSeries,
    model: &SvrModel,
) -> Result<(LoadSeries, Vec<f64>)> {
    let (_, test) = split_train_test(series, config.test_fraction)?;
    let x_test = extract_features(&test);
    let predicted = model.predict(&x_test)?;
    Ok((test, predicted))
}

#[derive(Serialize)]
struct SeriesMeta<'a> {
    config: &'a GeneratorConfig,
    prng: &'a str,
    n_hours: usize,
}

pub fn run_generate(config: &ExperimentConfig) -> Result<LoadSeries> {
    ensure_dir(&config.output_dir)?;
    let generator = config.effective_generator();
    let series = generate_profile(&generator)?;
    series.write_csv_file(&config.output_dir.join(SERIES_FILE))?;
    write_json(
        &config.output_dir,
        SERIES_META_FILE,
        &SeriesMeta {
            config: &generator,
            prng: PRNG_NAME,
            n_hours: series.len(),
        },
    )?;
    Ok(series)
}

#[derive(Serialize)]
struct GridSummaryArtifact<'a> {
    best_params: &'a SvrParams,
    best_mean_val_mse: f64,
    resolved_scale_gamma: Option<f64>,
    n_splits: usize,
    refit: &'a TrainingMeta,
    cell_means: &'a [GridCellMean],
    warnings: &'a [String],
}

pub struct TrainOutcome {
    pub best_params: SvrParams,
}

pub fn run_train(config: &ExperimentConfig) -> Result<TrainOutcome> {
    let series = load_series(config)?;
    let (train, _) = split_train_test(&series, config.test_fraction)?;
    let x = extract_features(&train);
    let timestamps = train.timestamps();
    let splits = make_splits(train.len(), config.n_splits)?;
    let result = grid_search(
        &x,
        train.values(),
        Some(&timestamps),
        &config.grid,
        &splits,
        &config.search_settings(),
    )?;
    for warning in &result.warnings {
        eprintln!("[loadcast] warning: {warning}");
    }

    write_text(&config.output_dir, GRID_CSV_FILE, &result.table_csv())?;
    write_json(
        &config.output_dir,
        GRID_SUMMARY_FILE,
        &GridSummaryArtifact {
            best_params: &result.best_params,
            best_mean_val_mse: result.best_mean_mse(),
            resolved_scale_gamma: result.resolved_scale_gamma,
            n_splits: config.n_splits,
            refit: &result.best_model.training_meta,
            cell_means: &result.cell_means,
            warnings: &result.warnings,
        },
    )?;
    result
        .best_model
        .write_json_file(&config.output_dir.join(MODEL_FILE))?;
    Ok(TrainOutcome { best_params: result.best_params })
}

#[derive(Serialize)]
struct MetricsArtifact<'a> {
    model: &'a str,
    #[serde(flatten)]
    report: &'a MetricsReport,
}

pub struct EvaluateOutcome {
    pub n_train: usize,
    pub n_test: usize,
    pub svr: MetricsReport,
    pub persistence: MetricsReport,
    pub improvement: ImprovementReport,
}

pub fn run_evaluate(config: &ExperimentConfig) -> Result<EvaluateOutcome> {
    let series = load_series(config)?;
    let model = load_model(config)?;
    let (test, predicted) = test_predictions(config, &series, &model)?;
    let timestamps = test.timestamps();

    let persistence_values =
        persistence_forecast(&series, config.persistence_lag_hours, &timestamps)?;
    let svr = MetricsReport::compute(test.values(), &predicted, &timestamps, &config.metric_config)?;
    let persistence = MetricsReport::compute(
        test.values(),
        &persistence_values,
        &timestamps,
        &config.metric_config,
    )?;
    let improvement = improvement_report(&persistence, &svr)?;

    write_json(
        &config.output_dir,
        METRICS_SVR_FILE,
        &MetricsArtifact { model: "svr", report: &svr },
    )?;
    write_json(
        &config.output_dir,
        METRICS_PERSISTENCE_FILE,
        &MetricsArtifact { model: "persistence", report: &persistence },
    )?;
    write_text(&config.output_dir, COMPARISON_FILE, &improvement.to_csv())?;
    Ok(EvaluateOutcome {
        n_train: series.len() - test.len(),
        n_test: test.len(),
        svr,
        persistence,
        improvement,
    })
}

pub fn run_diagnose(config: &ExperimentConfig) -> Result<()> {
    let series = load_series(config)?;
    let model = load_model(config)?;
    let (test, predicted) = test_predictions(config, &series, &model)?;

    let residuals = ResidualSeries::from_forecast(test.timestamps(), test.values(), &predicted)?;
    let heatmap = residual_heatmap(&residuals);
    write_text(&config.output_dir, HEATMAP_FILE, &heatmap.to_csv())?;
    let acf = autocorrelation(&residuals, config.diagnostics.max_lag)?;
    write_text(&config.output_dir, ACF_FILE, &acf.to_csv())?;
    Ok(())
}

pub fn run_gridsim(config: &ExperimentConfig) -> Result<GridImpactSummary> {
    let series = load_series(config)?;
    let model = load_model(config)?;
    let (test, predicted) = test_predictions(config, &series, &model)?;

    let net = build_kerber_feeder(config.gridimpact.n_loads, config.gridimpact.segment_length_m)?;
    let report = impact_report(
        &net,
        &test,
        &predicted,
        &config.gridimpact.allocation_weights(),
        &config.gridimpact.power_flow_config(),
    )?;
    write_text(&config.output_dir, IMPACT_CSV_FILE, &report.to_csv())?;
    write_json(&config.output_dir, IMPACT_SUMMARY_FILE, &report.summary)?;
    Ok(report.summary)
}

/// Headline numbers of a full run, printed as JSON on stdout.
#[derive(Serialize)]
pub struct ExperimentSummary {
    pub output_dir: PathBuf,
    pub config_sha256: String,
    pub manifest_sha256: String,
    pub n_train: usize,
    pub n_test: usize,
    pub best_params: SvrParams,
    pub svr_metrics: MetricsReport,
    pub persistence_metrics: MetricsReport,
    pub improvement: ImprovementReport,
    pub grid_impact: GridImpactSummary,
}

fn tag_phase(phase: &str, error: Error) -> Error {
    match error {
        Error::InvalidInput(m) => Error::InvalidInput(format!("{phase}: {m}")),
        Error::DegenerateInput(m) => Error::DegenerateInput(format!("{phase}: {m}")),
        Error::Parse(m) => Error::Parse(format!("{phase}: {m}")),
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{phase}: {io}"))),
        Error::Json(json) => {
            use serde::de::Error as _;
            Error::Json(serde_json::Error::custom(format!("{phase}: {json}")))
        }
    }
}

fn phase<T>(name: &str, result: Result<T>) -> Result<T> {
    result.map_err(|e| tag_phase(name, e))
}

/// Runs every phase in order and writes the manifest. A `.partial` marker
/// exists in the output directory for exactly as long as the run is
/// incomplete.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    ensure_dir(&config.output_dir)?;
    write_text(&config.output_dir, PARTIAL_MARKER, "run in progress\n")?;

    eprintln!("[loadcast] generate");
    phase("generate", run_generate(config))?;
    eprintln!("[loadcast] train");
    let train = phase("train", run_train(config))?;
    eprintln!("[loadcast] evaluate");
    let evaluate = phase("evaluate", run_evaluate(config))?;
    eprintln!("[loadcast] diagnose");
    phase("diagnose", run_diagnose(config))?;
    eprintln!("[loadcast] gridsim");
    let impact = phase("gridsim", run_gridsim(config))?;

    let manifest = build_manifest(config, &config.output_dir)?;
    manifest.write(&config.output_dir)?;
    fs::remove_file(config.output_dir.join(PARTIAL_MARKER))
        .map_err(|e| Error::invalid(format!("cannot clear the partial marker: {e}")))?;

    Ok(ExperimentSummary {
        output_dir: config.output_dir.clone(),
        config_sha256: config.sha256(),
        manifest_sha256: manifest.sha256(),
        n_train: evaluate.n_train,
        n_test: evaluate.n_test,
        best_params: train.best_params,
        svr_metrics: evaluate.svr,
        persistence_metrics: evaluate.persistence,
        improvement: evaluate.improvement,
        grid_impact: impact,
    })
}
