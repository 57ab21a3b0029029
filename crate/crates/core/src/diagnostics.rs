//! Residual structure analysis: day-of-week × hour aggregation and the
//! residual autocorrelation function with large-sample confidence bands.
//!
//! Residuals follow the crate-wide convention actual − predicted, so a
//! positive cell mean marks systematic under-prediction.

use std::fmt::Write as _;

use chrono::{DateTime, Datelike, Timelike, Utc};

use crate::error::{Error, Result};

/// Default highest lag examined by the autocorrelation analysis.
pub const DEFAULT_MAX_LAG: usize = 50;

/// Timestamps with aligned residual values.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSeries {
    timestamps: Vec<DateTime<Utc>>,
    residuals: Vec<f64>,
}

impl ResidualSeries {
    pub fn new(timestamps: Vec<DateTime<Utc>>, residuals: Vec<f64>) -> Result<Self> {
        if timestamps.len() != residuals.len() {
            return Err(Error::invalid(format!(
                "length mismatch: {} timestamps vs {} residuals",
                timestamps.len(),
                residuals.len()
            )));
        }
        if residuals.is_empty() {
            return Err(Error::invalid("residual series must be non-empty"));
        }
        if let Some(idx) = residuals.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite residual at index {idx}"
            )));
        }
        Ok(ResidualSeries {
            timestamps,
            residuals,
        })
    }

    /// Builds residuals actual − predicted from aligned forecast data.
    pub fn from_forecast(
        timestamps: Vec<DateTime<Utc>>,
        actual: &[f64],
        predicted: &[f64],
    ) -> Result<Self> {
        if actual.len() != predicted.len() {
            return Err(Error::invalid(format!(
                "length mismatch: {} actual vs {} predicted",
                actual.len(),
                predicted.len()
            )));
        }
        let residuals = actual.iter().zip(predicted).map(|(a, p)| a - p).collect();
        ResidualSeries::new(timestamps, residuals)
    }

    pub fn len(&self) -> usize {
        self.residuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residuals.is_empty()
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn timestamps(&self) -> &[DateTime<Utc>] {
        &self.timestamps
    }
}

/// One cell of the heatmap: mean residual and sample count.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HeatmapCell {
    pub mean_residual: f64,
    pub count: usize,
}

impl HeatmapCell {
    /// A cell is empty when no sample fell on its (day, hour) slot; its
    /// mean is stored as 0 but must not be read as one.
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

/// 7 × 24 grid of residual means indexed by (day_of_week 0=Mon, hour).
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapGrid {
    cells: Vec<HeatmapCell>,
}

impl HeatmapGrid {
    pub fn cell(&self, day_of_week: usize, hour: usize) -> &HeatmapCell {
        &self.cells[day_of_week * 24 + hour]
    }

    /// Total number of aggregated samples.
    pub fn total_count(&self) -> usize {
        self.cells.iter().map(|c| c.count).sum()
    }

    /// Count-weighted average of the cell means; equals the overall
    /// residual mean up to rounding.
    pub fn weighted_mean(&self) -> f64 {
        let total = self.total_count();
        if total == 0 {
            return 0.0;
        }
        self.cells
            .iter()
            .map(|c| c.mean_residual * c.count as f64)
            .sum::<f64>()
            / total as f64
    }

    /// CSV with one row per (day_of_week, hour): header
    /// `day_of_week,hour,mean_residual,count`, 168 data rows. Empty cells
    /// leave the mean field blank.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("day_of_week,hour,mean_residual,count\n");
        for dow in 0..7 {
            for hour in 0..24 {
                let cell = self.cell(dow, hour);
                if cell.is_empty() {
                    let _ = writeln!(out, "{dow},{hour},,0");
                } else {
                    let _ = writeln!(
                        out,
                        "{dow},{hour},{:.6},{}",
                        cell.mean_residual, cell.count
                    );
                }
            }
        }
        out
    }
}

/// Aggregates residuals into the 7 × 24 day-of-week × hour grid.
pub fn residual_heatmap(r: &ResidualSeries) -> HeatmapGrid {
    let mut sums = vec![0.0f64; 168];
    let mut counts = vec![0usize; 168];
    for (ts, value) in r.timestamps().iter().zip(r.residuals()) {
        let idx = ts.weekday().num_days_from_monday() as usize * 24 + ts.hour() as usize;
        sums[idx] += value;
        counts[idx] += 1;
    }
    let cells = sums
        .into_iter()
        .zip(counts)
        .map(|(sum, count)| HeatmapCell {
            mean_residual: if count == 0 { 0.0 } else { sum / count as f64 },
            count,
        })
        .collect();
    HeatmapGrid { cells }
}

/// Autocorrelation values for lags 0..=max_lag with a white-noise band.
#[derive(Debug, Clone, PartialEq)]
pub struct AcfResult {
    acf: Vec<f64>,
    confidence_halfwidth: f64,
    n: usize,
}

impl AcfResult {
    /// ρ_k for k in 0..=max_lag; ρ_0 is exactly 1.
    pub fn acf(&self) -> &[f64] {
        &self.acf
    }

    pub fn max_lag(&self) -> usize {
        self.acf.len() - 1
    }

    /// Large-sample white-noise band halfwidth, 1.96/√n.
    pub fn confidence_halfwidth(&self) -> f64 {
        self.confidence_halfwidth
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// CSV with header `lag,acf,conf_halfwidth` and max_lag+1 rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lag,acf,conf_halfwidth\n");
        for (lag, rho) in self.acf.iter().enumerate() {
            let _ = writeln!(out, "{lag},{rho:.6},{:.6}", self.confidence_halfwidth);
        }
        out
    }
}

/// Biased (1/n-normalized) sample autocorrelation:
/// ρ_k = Σ_{t}(r_t − r̄)(r_{t+k} − r̄) / Σ_t(r_t − r̄)².
///
/// Requires n > max_lag and non-constant residuals. The biased estimator
/// keeps |ρ_k| ≤ 1 and matches conventional ACF plots.
pub fn autocorrelation(r: &ResidualSeries, max_lag: usize) -> Result<AcfResult> {
    let n = r.len();
    if max_lag == 0 {
        return Err(Error::invalid("max_lag must be at least 1"));
    }
    if n <= max_lag {
        return Err(Error::degenerate(format!(
            "autocorrelation needs more samples ({n}) than max_lag ({max_lag})"
        )));
    }
    let values = r.residuals();
    let mean = values.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let denom: f64 = centered.iter().map(|c| c * c).sum();
    if denom <= 0.0 {
        return Err(Error::degenerate(
            "constant residuals have no autocorrelation",
        ));
    }
    let mut acf = Vec::with_capacity(max_lag + 1);
    acf.push(1.0);
    for k in 1..=max_lag {
        let num: f64 = centered[..n - k]
            .iter()
            .zip(&centered[k..])
            .map(|(a, b)| a * b)
            .sum();
        acf.push(num / denom);
    }
    Ok(AcfResult {
        acf,
        confidence_halfwidth: 1.96 / (n as f64).sqrt(),
        n,
    })
}

/// Counts lags 1..=max_lag whose |ρ_k| exceeds the confidence halfwidth;
/// the series is "white" when at most ⌈0.1·max_lag⌉ lags exceed it.
pub fn whiteness_summary(a: &AcfResult) -> (usize, bool) {
    let exceed = a.acf[1..]
        .iter()
        .filter(|rho| rho.abs() > a.confidence_halfwidth)
        .count();
    let allowed = (a.max_lag() + 9) / 10;
    (exceed, exceed <= allowed)
}
