//! Forecast-error metrics: the three standard ones plus the asymmetric,
//! peak-weighted, and composite domain metrics, and the model-vs-baseline
//! improvement report.
//!
//! Error convention everywhere: e = actual − predicted, so positive errors
//! are under-predictions. The weighted metrics divide by n rather than by
//! the weight sum; that keeps them equal to MAE when the weight is 1 and
//! monotone in the weight.

use std::collections::BTreeSet;

use chrono::{DateTime, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weights and hour sets for the domain metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    /// Multiplier on under-prediction errors (≥ 1).
    pub under_penalty: f64,
    /// Hours of day treated as peak (each in 0..=23).
    pub peak_hours: BTreeSet<u8>,
    /// Multiplier on peak-hour errors (≥ 1).
    pub peak_weight: f64,
    /// Convex weights (asymmetric, time-weighted) of the composite metric.
    pub composite_weights: (f64, f64),
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            under_penalty: 2.0,
            peak_hours: [6, 7, 8, 9, 17, 18, 19, 20, 21, 22].into_iter().collect(),
            peak_weight: 2.0,
            composite_weights: (0.5, 0.5),
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.under_penalty.is_finite() && self.under_penalty >= 1.0) {
            return Err(Error::invalid("under_penalty must be >= 1"));
        }
        if !(self.peak_weight.is_finite() && self.peak_weight >= 1.0) {
            return Err(Error::invalid("peak_weight must be >= 1"));
        }
        if let Some(h) = self.peak_hours.iter().find(|&&h| h > 23) {
            return Err(Error::invalid(format!("peak hour {h} outside 0..=23")));
        }
        let (wa, wt) = self.composite_weights;
        if !(wa.is_finite() && wt.is_finite() && wa >= 0.0 && wt >= 0.0) {
            return Err(Error::invalid("composite weights must be non-negative"));
        }
        if (wa + wt - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "composite weights must sum to 1, got {wa} + {wt}"
            )));
        }
        Ok(())
    }
}

fn check_lengths(actual: &[f64], predicted: &[f64]) -> Result<()> {
    if actual.is_empty() {
        return Err(Error::invalid("metrics need at least one sample"));
    }
    if actual.len() != predicted.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} actual vs {} predicted",
            actual.len(),
            predicted.len()
        )));
    }
    Ok(())
}

/// (mse, mae, rmse) with e = actual − predicted.
pub fn standard_metrics(actual: &[f64], predicted: &[f64]) -> Result<(f64, f64, f64)> {
    check_lengths(actual, predicted)?;
    let n = actual.len() as f64;
    let mut sq = 0.0;
    let mut abs = 0.0;
    for (a, p) in actual.iter().zip(predicted) {
        let e = a - p;
        sq += e * e;
        abs += e.abs();
    }
    let mse = sq / n;
    Ok((mse, abs / n, mse.sqrt()))
}

/// Mean |e| with under-predictions (predicted < actual) weighted by `alpha`.
pub fn asymmetric_error(actual: &[f64], predicted: &[f64], alpha: f64) -> Result<f64> {
    check_lengths(actual, predicted)?;
    if !(alpha.is_finite() && alpha >= 1.0) {
        return Err(Error::invalid("alpha must be >= 1"));
    }
    let sum: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| {
            let w = if p < a { alpha } else { 1.0 };
            w * (a - p).abs()
        })
        .sum();
    Ok(sum / actual.len() as f64)
}

/// Mean |e| with samples in `peak_hours` weighted by `beta`.
pub fn time_weighted_error(
    actual: &[f64],
    predicted: &[f64],
    timestamps: &[DateTime<Utc>],
    peak_hours: &BTreeSet<u8>,
    beta: f64,
) -> Result<f64> {
    check_lengths(actual, predicted)?;
    if timestamps.len() != actual.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} samples vs {} timestamps",
            actual.len(),
            timestamps.len()
        )));
    }
    if !(beta.is_finite() && beta >= 1.0) {
        return Err(Error::invalid("beta must be >= 1"));
    }
    let sum: f64 = actual
        .iter()
        .zip(predicted)
        .zip(timestamps)
        .map(|((a, p), ts)| {
            let w = if peak_hours.contains(&(ts.hour() as u8)) {
                beta
            } else {
                1.0
            };
            w * (a - p).abs()
        })
        .sum();
    Ok(sum / actual.len() as f64)
}

/// Convex combination w_a·asym + w_t·tw.
pub fn composite_metric(asym: f64, tw: f64, w_a: f64, w_t: f64) -> Result<f64> {
    if !(w_a.is_finite() && w_t.is_finite() && w_a >= 0.0 && w_t >= 0.0) {
        return Err(Error::invalid("composite weights must be non-negative"));
    }
    if (w_a + w_t - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!(
            "composite weights must sum to 1, got {w_a} + {w_t}"
        )));
    }
    Ok(w_a * asym + w_t * tw)
}

/// The six-metric bundle for one model on one evaluation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mse: f64,
    pub mae: f64,
    pub rmse: f64,
    pub asymmetric: f64,
    pub time_weighted: f64,
    pub composite: f64,
    pub n: usize,
    pub config: MetricConfig,
}

impl MetricsReport {
    pub fn compute(
        actual: &[f64],
        predicted: &[f64],
        timestamps: &[DateTime<Utc>],
        config: &MetricConfig,
    ) -> Result<Self> {
        config.validate()?;
        let (mse, mae, rmse) = standard_metrics(actual, predicted)?;
        let asymmetric = asymmetric_error(actual, predicted, config.under_penalty)?;
        let time_weighted = time_weighted_error(
            actual,
            predicted,
            timestamps,
            &config.peak_hours,
            config.peak_weight,
        )?;
        let (w_a, w_t) = config.composite_weights;
        let composite = composite_metric(asymmetric, time_weighted, w_a, w_t)?;
        Ok(MetricsReport {
            mse,
            mae,
            rmse,
            asymmetric,
            time_weighted,
            composite,
            n: actual.len(),
            config: config.clone(),
        })
    }

    /// The six metrics as (name, value) in report order.
    pub fn named_values(&self) -> [(&'static str, f64); 6] {
        [
            ("mse", self.mse),
            ("mae", self.mae),
            ("rmse", self.rmse),
            ("asymmetric", self.asymmetric),
            ("time_weighted", self.time_weighted),
            ("composite", self.composite),
        ]
    }
}

/// One metric's baseline-vs-model comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricImprovement {
    pub metric: String,
    pub baseline: f64,
    pub model: f64,
    /// 100·(baseline − model)/baseline; positive when the model is better.
    pub reduction_pct: f64,
}

/// Per-metric improvement of a model over a baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementReport {
    pub rows: Vec<MetricImprovement>,
}

/// Compares two reports computed with the same config on the same window.
pub fn improvement_report(
    baseline: &MetricsReport,
    model: &MetricsReport,
) -> Result<ImprovementReport> {
    if baseline.config != model.config {
        return Err(Error::invalid(
            "improvement report requires identical metric configs",
        ));
    }
    if baseline.n != model.n {
        return Err(Error::invalid(format!(
            "improvement report requires identical sample counts ({} vs {})",
            baseline.n, model.n
        )));
    }
    let rows = baseline
        .named_values()
        .iter()
        .zip(model.named_values())
        .map(|((name, base), (_, model_value))| MetricImprovement {
            metric: name.to_string(),
            baseline: *base,
            model: model_value,
            reduction_pct: 100.0 * (base - model_value) / base,
        })
        .collect();
    Ok(ImprovementReport { rows })
}

impl ImprovementReport {
    /// Comparison CSV in the canonical layout
    /// `metric,svr,persistence,reduction_pct` (model column first).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,svr,persistence,reduction_pct\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6}\n",
                row.metric, row.model, row.baseline, row.reduction_pct
            ));
        }
        out
    }
}
