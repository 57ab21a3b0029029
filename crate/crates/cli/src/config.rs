//! Experiment configuration: one JSON document drives every phase, and
//! command-line flags override individual fields so the effective config
//! can always be serialized back out canonically.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use loadcast_core::features::PreprocessConfig;
use loadcast_core::loadgen::GeneratorConfig;
use loadcast_core::metrics::MetricConfig;
use loadcast_core::modelsel::{GridSpec, SearchSettings, DEFAULT_N_SPLITS};
use loadcast_core::svr::{DEFAULT_CACHE_MB, DEFAULT_MAX_ITER, DEFAULT_TOL};
use loadcast_core::{Error, Result};

/// SMO solver and preprocessing settings shared by every grid-search fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iter: u64,
    pub cache_mb: usize,
    pub preprocess: PreprocessConfig,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            cache_mb: DEFAULT_CACHE_MB,
            preprocess: PreprocessConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticsSection {
    pub max_lag: usize,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection {
            max_lag: loadcast_core::diagnostics::DEFAULT_MAX_LAG,
        }
    }
}

/// Feeder layout, MW-to-kW scaling, violation limits, and the per-bus
/// allocation of the system load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridImpactSection {
    pub n_loads: usize,
    pub segment_length_m: f64,
    pub mw_to_kw_scale: f64,
    pub undervoltage_limit_pu: f64,
    pub overload_limit_pct: f64,
    /// Per-load-bus weights summing to 1; omitted means uniform.
    pub allocation: Option<Vec<f64>>,
}

impl Default for GridImpactSection {
    fn default() -> Self {
        GridImpactSection {
            n_loads: loadcast_core::gridimpact::DEFAULT_FEEDER_LOADS,
            segment_length_m: loadcast_core::gridimpact::DEFAULT_SEGMENT_LENGTH_M,
            mw_to_kw_scale: 1.0,
            undervoltage_limit_pu: 0.95,
            overload_limit_pct: 100.0,
            allocation: None,
        }
    }
}

impl GridImpactSection {
    pub fn power_flow_config(&self) -> loadcast_core::gridimpact::GridImpactConfig {
        loadcast_core::gridimpact::GridImpactConfig {
            mw_to_kw_scale: self.mw_to_kw_scale,
            undervoltage_limit_pu: self.undervoltage_limit_pu,
            overload_limit_pct: self.overload_limit_pct,
        }
    }

    /// The configured allocation, or a uniform split over the load buses.
    pub fn allocation_weights(&self) -> Vec<f64> {
        match &self.allocation {
            Some(weights) => weights.clone(),
            None => vec![1.0 / self.n_loads as f64; self.n_loads],
        }
    }
}

/// The whole experiment in one document. Every field has a default, so
/// `{}` is a valid config.
///
/// All randomness flows from `global_seed`: the generator's own seed is
/// derived from it with a phase tag, and a `seed` given inside the
/// `generator` section is ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub generator: GeneratorConfig,
    pub test_fraction: f64,
    pub grid: GridSpec,
    pub solver: SolverSection,
    pub n_splits: usize,
    pub metric_config: MetricConfig,
    pub persistence_lag_hours: usize,
    pub diagnostics: DiagnosticsSection,
    pub gridimpact: GridImpactSection,
    pub output_dir: PathBuf,
    pub global_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            generator: GeneratorConfig::default(),
            test_fraction: 0.2,
            grid: GridSpec::default(),
            solver: SolverSection::default(),
            n_splits: DEFAULT_N_SPLITS,
            metric_config: MetricConfig::default(),
            persistence_lag_hours: 24,
            diagnostics: DiagnosticsSection::default(),
            gridimpact: GridImpactSection::default(),
            output_dir: PathBuf::from("loadcast_output"),
            global_seed: 42,
        }
    }
}

/// Command-line overrides; a set flag wins over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub persistence_lag: Option<usize>,
    pub test_fraction: Option<f64>,
}

impl ExperimentConfig {
    /// Loads the config file (or the defaults when no path is given) and
    /// applies the flag overrides.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut config = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| {
                    Error::invalid(format!("cannot read config {}: {e}", p.display()))
                })?;
                serde_json::from_str(&text).map_err(|e| {
                    Error::invalid(format!("malformed config {}: {e}", p.display()))
                })?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(dir) = &overrides.output_dir {
            config.output_dir = dir.clone();
        }
        if let Some(seed) = overrides.seed {
            config.global_seed = seed;
        }
        if let Some(lag) = overrides.persistence_lag {
            config.persistence_lag_hours = lag;
        }
        if let Some(fraction) = overrides.test_fraction {
            config.test_fraction = fraction;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.grid.validate()?;
        self.metric_config.validate()?;
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::invalid("test_fraction must lie in (0, 1)"));
        }
        if self.n_splits == 0 {
            return Err(Error::invalid("n_splits must be at least 1"));
        }
        if self.persistence_lag_hours == 0 {
            return Err(Error::invalid("persistence_lag_hours must be at least 1"));
        }
        if !(self.solver.tol.is_finite() && self.solver.tol > 0.0) {
            return Err(Error::invalid("solver tol must be positive"));
        }
        if self.solver.max_iter == 0 {
            return Err(Error::invalid("solver max_iter must be at least 1"));
        }
        if self.gridimpact.n_loads == 0 {
            return Err(Error::invalid("gridimpact.n_loads must be at least 1"));
        }
        if !(self.gridimpact.segment_length_m.is_finite() && self.gridimpact.segment_length_m > 0.0)
        {
            return Err(Error::invalid("gridimpact.segment_length_m must be positive"));
        }
        self.gridimpact.power_flow_config().validate()?;
        if let Some(weights) = &self.gridimpact.allocation {
            if weights.len() != self.gridimpact.n_loads {
                return Err(Error::invalid(format!(
                    "gridimpact.allocation has {} weights for {} load buses",
                    weights.len(),
                    self.gridimpact.n_loads
                )));
            }
        }
        Ok(())
    }

    /// The generator section with its seed replaced by the phase seed
    /// derived from `global_seed`.
    pub fn effective_generator(&self) -> GeneratorConfig {
        GeneratorConfig {
            seed: loadcast_core::loadgen::phase_seed(self.global_seed, "generate"),
            ..self.generator.clone()
        }
    }

    /// Grid-search settings assembled from the solver and metric sections.
    pub fn search_settings(&self) -> SearchSettings {
        SearchSettings {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            cache_mb: self.solver.cache_mb,
            preprocess: self.solver.preprocess.clone(),
            metric: self.metric_config.clone(),
        }
    }

    /// Canonical serialized form; its hash identifies the experiment.
    pub fn canonical_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        text
    }

    pub fn sha256(&self) -> String {
        hex_digest(self.canonical_json().as_bytes())
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}
