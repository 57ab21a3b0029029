//! Expanding-window cross-validation, hyperparameter grid search, and the
//! persistence baseline.

use std::ops::Range;

use chrono::{DateTime, Duration, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, PreprocessConfig, Preprocessor};
use crate::metrics::{MetricConfig, MetricsReport};
use crate::svr::{train_svr, SvrModel, SvrParams, DEFAULT_CACHE_MB, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::timeseries::LoadSeries;

/// One expanding-window fold: a contiguous training prefix and the
/// validation block immediately after it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Range<usize>,
    pub validation: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSeriesSplits {
    pub n_samples: usize,
    pub n_splits: usize,
    pub folds: Vec<Fold>,
}

pub const DEFAULT_N_SPLITS: usize = 5;

/// Expanding-window splits: block size v = ⌊n/(k+1)⌋, fold j trains on
/// [0, (j+1)·v) and validates on the next block, with any remainder
/// appended to the last validation block.
pub fn make_splits(n_samples: usize, n_splits: usize) -> Result<TimeSeriesSplits> {
    if n_splits == 0 {
        return Err(Error::invalid("n_splits must be at least 1"));
    }
    if n_samples < 2 * (n_splits + 1) {
        return Err(Error::invalid(format!(
            "need at least {} samples for {} splits, got {}",
            2 * (n_splits + 1),
            n_splits,
            n_samples
        )));
    }
    let v = n_samples / (n_splits + 1);
    let folds = (0..n_splits)
        .map(|j| {
            let boundary = (j + 1) * v;
            let val_end = if j + 1 == n_splits { n_samples } else { boundary + v };
            Fold {
                train: 0..boundary,
                validation: boundary..val_end,
            }
        })
        .collect();
    Ok(TimeSeriesSplits {
        n_samples,
        n_splits,
        folds,
    })
}

/// A gamma entry: either a concrete value or the symbolic scale rule
/// 1/(p·Var(X)) evaluated on the preprocessed training matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GammaRepr", into = "GammaRepr")]
pub enum GammaValue {
    Scale,
    Value(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum GammaRepr {
    Text(String),
    Number(f64),
}

impl TryFrom<GammaRepr> for GammaValue {
    type Error = String;

    fn try_from(repr: GammaRepr) -> std::result::Result<Self, String> {
        match repr {
            GammaRepr::Text(s) if s == "scale" => Ok(GammaValue::Scale),
            GammaRepr::Text(s) => Err(format!("unknown gamma keyword `{s}` (expected \"scale\")")),
            GammaRepr::Number(v) => Ok(GammaValue::Value(v)),
        }
    }
}

impl From<GammaValue> for GammaRepr {
    fn from(g: GammaValue) -> Self {
        match g {
            GammaValue::Scale => GammaRepr::Text("scale".into()),
            GammaValue::Value(v) => GammaRepr::Number(v),
        }
    }
}

/// Hyperparameter search space, expanded as a full cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub c_values: Vec<f64>,
    pub epsilon_values: Vec<f64>,
    pub gamma_values: Vec<GammaValue>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            c_values: vec![1.0, 10.0, 100.0],
            epsilon_values: vec![0.1, 0.5, 1.0],
            gamma_values: vec![GammaValue::Scale, GammaValue::Value(0.01), GammaValue::Value(0.1)],
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.c_values.is_empty() || self.epsilon_values.is_empty() || self.gamma_values.is_empty()
        {
            return Err(Error::invalid("grid value lists must be non-empty"));
        }
        if self.c_values.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::invalid("grid c values must be positive"));
        }
        if self
            .epsilon_values
            .iter()
            .any(|e| !(e.is_finite() && *e >= 0.0))
        {
            return Err(Error::invalid("grid epsilon values must be nonnegative"));
        }
        for g in &self.gamma_values {
            if let GammaValue::Value(v) = g {
                if !(v.is_finite() && *v > 0.0) {
                    return Err(Error::invalid("grid gamma values must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.c_values.len() * self.epsilon_values.len() * self.gamma_values.len()
    }
}

/// Solver and scoring settings shared by every grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSettings {
    pub tol: f64,
    pub max_iter: u64,
    pub cache_mb: usize,
    pub preprocess: PreprocessConfig,
    /// Used only for the reported per-cell composite metric; selection is
    /// always by validation MSE.
    pub metric: MetricConfig,
}

impl Default for SearchSettings {
    fn default() -> Self {
        SearchSettings {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            cache_mb: DEFAULT_CACHE_MB,
            preprocess: PreprocessConfig::default(),
            metric: MetricConfig::default(),
        }
    }
}

/// One (cell, fold) score row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCellScore {
    pub c: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub fold: usize,
    pub val_mse: f64,
    /// Present when timestamps were supplied to the search.
    pub val_composite: Option<f64>,
}

/// Per-cell means across folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCellMean {
    pub c: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub mean_val_mse: f64,
    pub mean_val_composite: Option<f64>,
}

pub struct GridSearchResult {
    /// One row per (cell, fold), cell-major in ascending (c, ε, γ) order.
    pub table: Vec<GridCellScore>,
    /// One row per cell, same order as `table`.
    pub cell_means: Vec<GridCellMean>,
    pub best_params: SvrParams,
    /// Refit of `best_params` on the full training set.
    pub best_model: SvrModel,
    /// The concrete value a symbolic "scale" gamma resolved to, if any
    /// was present in the grid.
    pub resolved_scale_gamma: Option<f64>,
    /// Non-fatal solver convergence shortfalls, one per affected fit.
    pub warnings: Vec<String>,
}

impl GridSearchResult {
    pub fn best_mean_mse(&self) -> f64 {
        self.cell_means
            .iter()
            .map(|m| m.mean_val_mse)
            .fold(f64::INFINITY, f64::min)
    }

    /// CSV with one row per (cell, fold): `c,epsilon,gamma,fold,val_mse`.
    pub fn table_csv(&self) -> String {
        let mut out = String::from("c,epsilon,gamma,fold,val_mse\n");
        for row in &self.table {
            out.push_str(&format!(
                "{},{},{},{},{:.6}\n",
                row.c, row.epsilon, row.gamma, row.fold, row.val_mse
            ));
        }
        out
    }
}

/// The scale rule: 1/(p·Var) with Var the pooled population variance of
/// all entries of the preprocessed design matrix.
fn resolve_scale_gamma(x: &FeatureMatrix, preprocess: &PreprocessConfig) -> Result<f64> {
    let design = Preprocessor::fit(preprocess, x)?.apply(x)?;
    let data = design.data();
    let total = data.len() as f64;
    let mean = data.iter().sum::<f64>() / total;
    let var = data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / total;
    let gamma = 1.0 / (design.n_cols() as f64 * var);
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::degenerate(format!(
            "scale gamma is undefined: design-matrix variance {var}"
        )));
    }
    Ok(gamma)
}

/// Exhaustive grid search over `grid` using the provided expanding-window
/// splits. Every cell is scored on each fold by validation MSE; the best
/// cell (minimal mean MSE, ties broken lexicographically by ascending
/// (c, ε, γ)) is refit on the full training set.
///
/// `timestamps`, when given, must align with the rows of `x` and enables
/// the reported per-cell composite metric. Solver non-convergence in any
/// fit is reported through `warnings`, never as an error.
pub fn grid_search(
    x: &FeatureMatrix,
    y: &[f64],
    timestamps: Option<&[DateTime<Utc>]>,
    grid: &GridSpec,
    splits: &TimeSeriesSplits,
    settings: &SearchSettings,
) -> Result<GridSearchResult> {
    grid.validate()?;
    settings.metric.validate()?;
    if x.n_rows() != y.len() {
        return Err(Error::invalid(format!(
            "feature rows ({}) and targets ({}) differ",
            x.n_rows(),
            y.len()
        )));
    }
    if splits.n_samples != y.len() {
        return Err(Error::invalid(format!(
            "splits cover {} samples but the training set has {}",
            splits.n_samples,
            y.len()
        )));
    }
    if let Some(ts) = timestamps {
        if ts.len() != y.len() {
            return Err(Error::invalid(format!(
                "timestamps ({}) and targets ({}) differ",
                ts.len(),
                y.len()
            )));
        }
    }

    let needs_scale = grid
        .gamma_values
        .iter()
        .any(|g| matches!(g, GammaValue::Scale));
    let resolved_scale_gamma = if needs_scale {
        Some(resolve_scale_gamma(x, &settings.preprocess)?)
    } else {
        None
    };

    let mut cells: Vec<(f64, f64, f64)> = Vec::with_capacity(grid.n_cells());
    for &c in &grid.c_values {
        for &eps in &grid.epsilon_values {
            for g in &grid.gamma_values {
                let gamma = match g {
                    GammaValue::Scale => resolved_scale_gamma.unwrap(),
                    GammaValue::Value(v) => *v,
                };
                cells.push((c, eps, gamma));
            }
        }
    }
    cells.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.total_cmp(&b.2))
    });

    let params_for = |(c, eps, gamma): (f64, f64, f64)| SvrParams {
        c,
        epsilon: eps,
        gamma,
        tol: settings.tol,
        max_iter: settings.max_iter,
        cache_mb: settings.cache_mb,
        preprocess: settings.preprocess.clone(),
    };

    let tasks: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|ci| (0..splits.folds.len()).map(move |fi| (ci, fi)))
        .collect();

    struct TaskOutcome {
        mse: f64,
        composite: Option<f64>,
        warning: Option<String>,
    }

    let outcomes: Vec<TaskOutcome> = tasks
        .par_iter()
        .map(|&(ci, fi)| -> Result<TaskOutcome> {
            let cell = cells[ci];
            let fold = &splits.folds[fi];
            let x_train = x.slice_rows(fold.train.clone())?;
            let y_train = &y[fold.train.clone()];
            let model = train_svr(&x_train, y_train, &params_for(cell))?;

            let x_val = x.slice_rows(fold.validation.clone())?;
            let y_val = &y[fold.validation.clone()];
            let predicted = model.predict(&x_val)?;
            let mse = y_val
                .iter()
                .zip(&predicted)
                .map(|(a, p)| (a - p) * (a - p))
                .sum::<f64>()
                / y_val.len() as f64;
            let composite = match timestamps {
                Some(ts) => Some(
                    MetricsReport::compute(
                        y_val,
                        &predicted,
                        &ts[fold.validation.clone()],
                        &settings.metric,
                    )?
                    .composite,
                ),
                None => None,
            };
            let warning = (!model.training_meta.converged).then(|| {
                format!(
                    "cell (c={}, epsilon={}, gamma={}) fold {fi}: solver stopped at iteration cap {} with duality gap {:.3e}",
                    cell.0, cell.1, cell.2, model.training_meta.iterations,
                    model.training_meta.final_duality_gap
                )
            });
            Ok(TaskOutcome {
                mse,
                composite,
                warning,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n_folds = splits.folds.len();
    let mut table = Vec::with_capacity(tasks.len());
    let mut cell_means = Vec::with_capacity(cells.len());
    let mut warnings: Vec<String> = Vec::new();
    for (ci, &(c, eps, gamma)) in cells.iter().enumerate() {
        let rows = &outcomes[ci * n_folds..(ci + 1) * n_folds];
        for (fi, outcome) in rows.iter().enumerate() {
            table.push(GridCellScore {
                c,
                epsilon: eps,
                gamma,
                fold: fi,
                val_mse: outcome.mse,
                val_composite: outcome.composite,
            });
            if let Some(w) = &outcome.warning {
                warnings.push(w.clone());
            }
        }
        let mean_val_mse = rows.iter().map(|o| o.mse).sum::<f64>() / n_folds as f64;
        let mean_val_composite = timestamps
            .is_some()
            .then(|| rows.iter().filter_map(|o| o.composite).sum::<f64>() / n_folds as f64);
        cell_means.push(GridCellMean {
            c,
            epsilon: eps,
            gamma,
            mean_val_mse,
            mean_val_composite,
        });
    }

    let mut best_idx = 0;
    for (i, mean) in cell_means.iter().enumerate() {
        if mean.mean_val_mse < cell_means[best_idx].mean_val_mse {
            best_idx = i;
        }
    }
    let best_cell = cells[best_idx];
    let best_params = params_for(best_cell);
    let best_model = train_svr(x, y, &best_params)?;
    if !best_model.training_meta.converged {
        warnings.push(format!(
            "refit (c={}, epsilon={}, gamma={}): solver stopped at iteration cap {} with duality gap {:.3e}",
            best_cell.0,
            best_cell.1,
            best_cell.2,
            best_model.training_meta.iterations,
            best_model.training_meta.final_duality_gap
        ));
    }

    Ok(GridSearchResult {
        table,
        cell_means,
        best_params,
        best_model,
        resolved_scale_gamma,
        warnings,
    })
}

/// Persistence baseline: the forecast for time t is the observed value at
/// t − lag_hours. `observed` must contain every referenced hour; for test
/// evaluation that means the full series, so references that land inside
/// the test window resolve to observed test values (a rolling forecast,
/// not a recursive one).
pub fn persistence_forecast(
    observed: &LoadSeries,
    lag_hours: usize,
    horizon: &[DateTime<Utc>],
) -> Result<Vec<f64>> {
    if lag_hours == 0 {
        return Err(Error::invalid("persistence lag must be at least 1 hour"));
    }
    horizon
        .iter()
        .map(|&t| {
            let reference = t - Duration::hours(lag_hours as i64);
            observed
                .index_of(reference)
                .map(|idx| observed.value(idx))
                .ok_or_else(|| {
                    Error::invalid(format!(
                        "persistence reference {reference} (lag {lag_hours}h before {t}) is outside the observed series"
                    ))
                })
        })
        .collect()
}
