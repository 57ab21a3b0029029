//! Calendar feature extraction and the fitted preprocessing chain.
//!
//! The pipeline order is fixed: extract calendar features, standardize to
//! zero mean and unit variance, then expand polynomially on the
//! standardized values. The same fitted objects serve training and
//! prediction, and they serialize into the model artifact so a saved model
//! carries everything needed to map raw features into its input space.

use std::collections::HashSet;
use std::ops::Range;

use chrono::{DateTime, Datelike, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::LoadSeries;

/// Names of the columns produced by [`extract_features`], in order.
pub const CALENDAR_FEATURE_NAMES: [&str; 9] = [
    "hour",
    "day_of_week",
    "day_of_year",
    "month",
    "is_weekend",
    "sin_hour",
    "cos_hour",
    "sin_doy",
    "cos_doy",
];

/// Row-major numeric matrix with named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFeatureMatrix", into = "RawFeatureMatrix")]
pub struct FeatureMatrix {
    column_names: Vec<String>,
    n_rows: usize,
    data: Vec<f64>,
}

/// Wire form of [`FeatureMatrix`]; conversion enforces the invariants.
#[derive(Serialize, Deserialize)]
struct RawFeatureMatrix {
    column_names: Vec<String>,
    n_rows: usize,
    data: Vec<f64>,
}

impl From<FeatureMatrix> for RawFeatureMatrix {
    fn from(m: FeatureMatrix) -> Self {
        RawFeatureMatrix {
            column_names: m.column_names,
            n_rows: m.n_rows,
            data: m.data,
        }
    }
}

impl TryFrom<RawFeatureMatrix> for FeatureMatrix {
    type Error = Error;

    fn try_from(raw: RawFeatureMatrix) -> Result<Self> {
        FeatureMatrix::new(raw.column_names, raw.n_rows, raw.data)
    }
}

impl FeatureMatrix {
    /// Builds a matrix from row-major data. Column names must be unique
    /// and non-empty, every entry finite, and `data.len() = n_rows·p`.
    pub fn new(column_names: Vec<String>, n_rows: usize, data: Vec<f64>) -> Result<Self> {
        if column_names.is_empty() {
            return Err(Error::invalid("feature matrix needs at least one column"));
        }
        let mut seen = HashSet::new();
        for name in &column_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::invalid(format!("duplicate column name `{name}`")));
            }
        }
        if data.len() != n_rows * column_names.len() {
            return Err(Error::invalid(format!(
                "data length {} does not match {} rows x {} columns",
                data.len(),
                n_rows,
                column_names.len()
            )));
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite entry at row {}, column {}",
                idx / column_names.len(),
                idx % column_names.len()
            )));
        }
        Ok(FeatureMatrix {
            column_names,
            n_rows,
            data,
        })
    }

    pub fn from_rows(column_names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let p = column_names.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::invalid(format!(
                "row of length {} does not match {p} columns",
                bad.len()
            )));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        FeatureMatrix::new(column_names, rows.len(), data)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols() + col]
    }

    /// Row-major backing slice.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_cols())
    }

    /// Copy of the rows in `range`, keeping column names.
    pub fn slice_rows(&self, range: Range<usize>) -> Result<FeatureMatrix> {
        if range.start >= range.end || range.end > self.n_rows {
            return Err(Error::invalid(format!(
                "row range {range:?} out of bounds for {} rows",
                self.n_rows
            )));
        }
        let p = self.n_cols();
        FeatureMatrix::new(
            self.column_names.clone(),
            range.end - range.start,
            self.data[range.start * p..range.end * p].to_vec(),
        )
    }

    fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().skip(j).step_by(self.n_cols()).copied()
    }
}

/// Extracts the nine calendar/cyclic columns from a series' timestamps:
/// hour (0–23), day_of_week (0=Mon..6=Sun), day_of_year (1–366), month
/// (1–12), is_weekend (0/1), sin/cos of hour over 24 h, sin/cos of
/// day-of-year over 365.25 d.
pub fn extract_features(series: &LoadSeries) -> FeatureMatrix {
    let names = CALENDAR_FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    let mut data = Vec::with_capacity(series.len() * CALENDAR_FEATURE_NAMES.len());
    for idx in 0..series.len() {
        push_calendar_row(series.timestamp(idx), &mut data);
    }
    FeatureMatrix::new(names, series.len(), data).expect("calendar features are always finite")
}

/// Calendar row for a single timestamp, appended to `out`.
pub fn push_calendar_row(ts: DateTime<Utc>, out: &mut Vec<f64>) {
    use std::f64::consts::TAU;
    let hour = ts.hour() as f64;
    let dow = ts.weekday().num_days_from_monday() as f64;
    let doy = ts.ordinal() as f64;
    let month = ts.month() as f64;
    let is_weekend = if dow >= 5.0 { 1.0 } else { 0.0 };
    out.extend_from_slice(&[
        hour,
        dow,
        doy,
        month,
        is_weekend,
        (TAU * hour / 24.0).sin(),
        (TAU * hour / 24.0).cos(),
        (TAU * doy / 365.25).sin(),
        (TAU * doy / 365.25).cos(),
    ]);
}

/// Per-column affine map to zero mean and unit variance, fitted once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    means: Vec<f64>,
    stddevs: Vec<f64>,
}

impl Standardizer {
    /// Fits per-column mean and population standard deviation on `x`
    /// (n ≥ 2). Columns with vanishing variance store a stddev of 1 so the
    /// transform maps them to zero instead of dividing by zero.
    pub fn fit(x: &FeatureMatrix) -> Result<Self> {
        let n = x.n_rows();
        if n < 2 {
            return Err(Error::invalid(format!(
                "standardizer needs at least 2 rows, got {n}"
            )));
        }
        let mut means = Vec::with_capacity(x.n_cols());
        let mut stddevs = Vec::with_capacity(x.n_cols());
        for j in 0..x.n_cols() {
            let mean = x.column(j).sum::<f64>() / n as f64;
            let var = x.column(j).map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let std = var.sqrt();
            means.push(mean);
            stddevs.push(if std <= 1e-12 * (1.0 + mean.abs()) { 1.0 } else { std });
        }
        Ok(Standardizer { means, stddevs })
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn stddevs(&self) -> &[f64] {
        &self.stddevs
    }

    /// Applies (x − mean)/stddev columnwise. The column count must match
    /// the fitted matrix.
    pub fn apply(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        if x.n_cols() != self.means.len() {
            return Err(Error::invalid(format!(
                "standardizer fitted on {} columns, input has {}",
                self.means.len(),
                x.n_cols()
            )));
        }
        let p = x.n_cols();
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(idx, v)| {
                let j = idx % p;
                (v - self.means[j]) / self.stddevs[j]
            })
            .collect();
        FeatureMatrix::new(x.column_names().to_vec(), x.n_rows(), data)
    }

    /// Inverse map x·stddev + mean, undoing [`Standardizer::apply`].
    pub fn invert(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        if x.n_cols() != self.means.len() {
            return Err(Error::invalid(format!(
                "standardizer fitted on {} columns, input has {}",
                self.means.len(),
                x.n_cols()
            )));
        }
        let p = x.n_cols();
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(idx, v)| {
                let j = idx % p;
                v * self.stddevs[j] + self.means[j]
            })
            .collect();
        FeatureMatrix::new(x.column_names().to_vec(), x.n_rows(), data)
    }
}

/// Polynomial feature expansion with a deterministic column order.
///
/// Degree-d monomials are enumerated as non-decreasing index multisets in
/// lexicographic order, degree 1 first, so the degree-2 default yields the
/// p originals followed by the p(p+1)/2 products x_i·x_j with i ≤ j. No
/// constant column is emitted; the regressor's bias plays that role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawExpander", into = "RawExpander")]
pub struct PolynomialExpander {
    degree: u32,
    include_interactions: bool,
    input_names: Vec<String>,
    output_names: Vec<String>,
    #[serde(skip)]
    monomials: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct RawExpander {
    degree: u32,
    include_interactions: bool,
    input_names: Vec<String>,
    output_names: Vec<String>,
}

impl From<PolynomialExpander> for RawExpander {
    fn from(e: PolynomialExpander) -> Self {
        RawExpander {
            degree: e.degree,
            include_interactions: e.include_interactions,
            input_names: e.input_names,
            output_names: e.output_names,
        }
    }
}

impl TryFrom<RawExpander> for PolynomialExpander {
    type Error = Error;

    fn try_from(raw: RawExpander) -> Result<Self> {
        let rebuilt = PolynomialExpander::new(raw.degree, raw.include_interactions, raw.input_names)?;
        if rebuilt.output_names != raw.output_names {
            return Err(Error::invalid(
                "expander output names do not match its configuration",
            ));
        }
        Ok(rebuilt)
    }
}

impl PolynomialExpander {
    pub fn new(degree: u32, include_interactions: bool, input_names: Vec<String>) -> Result<Self> {
        if degree < 1 {
            return Err(Error::invalid("polynomial degree must be at least 1"));
        }
        if input_names.is_empty() {
            return Err(Error::invalid("expander needs at least one input column"));
        }
        let p = input_names.len();
        let mut monomials = Vec::new();
        for d in 1..=degree as usize {
            let mut prefix = Vec::with_capacity(d);
            push_monomials(p, d, include_interactions, &mut prefix, &mut monomials);
        }
        let output_names = monomials
            .iter()
            .map(|m| {
                m.iter()
                    .map(|&j| input_names[j].as_str())
                    .collect::<Vec<_>>()
                    .join("*")
            })
            .collect();
        Ok(PolynomialExpander {
            degree,
            include_interactions,
            input_names,
            output_names,
            monomials,
        })
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn output_names(&self) -> &[String] {
        &self.output_names
    }

    pub fn expand(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        if x.n_cols() != self.input_names.len() {
            return Err(Error::invalid(format!(
                "expander configured for {} columns, input has {}",
                self.input_names.len(),
                x.n_cols()
            )));
        }
        let mut data = Vec::with_capacity(x.n_rows() * self.monomials.len());
        for row in x.rows() {
            for monomial in &self.monomials {
                data.push(monomial.iter().map(|&j| row[j]).product());
            }
        }
        FeatureMatrix::new(self.output_names.clone(), x.n_rows(), data)
    }
}

/// Appends all non-decreasing index multisets of size `remaining` over
/// `p` columns; with interactions disabled, only pure powers survive.
fn push_monomials(
    p: usize,
    degree: usize,
    include_interactions: bool,
    prefix: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if prefix.len() == degree {
        if include_interactions || prefix.iter().all(|&j| j == prefix[0]) {
            out.push(prefix.clone());
        }
        return;
    }
    let lo = prefix.last().copied().unwrap_or(0);
    for j in lo..p {
        prefix.push(j);
        push_monomials(p, degree, include_interactions, prefix, out);
        prefix.pop();
    }
}

/// Configuration of the preprocessing chain applied before the kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub standardize: bool,
    pub poly_degree: u32,
    pub include_interactions: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            standardize: true,
            poly_degree: 2,
            include_interactions: true,
        }
    }
}

impl PreprocessConfig {
    /// Pass-through configuration: no scaling, no expansion.
    pub fn identity() -> Self {
        PreprocessConfig {
            standardize: false,
            poly_degree: 1,
            include_interactions: true,
        }
    }
}

/// The fitted preprocessing chain: standardize, then expand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    config: PreprocessConfig,
    input_names: Vec<String>,
    standardizer: Option<Standardizer>,
    expander: Option<PolynomialExpander>,
}

impl Preprocessor {
    /// Fits the chain described by `config` on `x` (n ≥ 2).
    pub fn fit(config: &PreprocessConfig, x: &FeatureMatrix) -> Result<Self> {
        if config.poly_degree < 1 {
            return Err(Error::invalid("poly_degree must be at least 1"));
        }
        let standardizer = config.standardize.then(|| Standardizer::fit(x)).transpose()?;
        let expander = (config.poly_degree > 1)
            .then(|| {
                PolynomialExpander::new(
                    config.poly_degree,
                    config.include_interactions,
                    x.column_names().to_vec(),
                )
            })
            .transpose()?;
        Ok(Preprocessor {
            config: config.clone(),
            input_names: x.column_names().to_vec(),
            standardizer,
            expander,
        })
    }

    pub fn config(&self) -> &PreprocessConfig {
        &self.config
    }

    pub fn input_names(&self) -> &[String] {
        &self.input_names
    }

    /// Maps raw features into the fitted design space. Column names must
    /// match the fitting matrix exactly.
    pub fn apply(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        if x.column_names() != self.input_names.as_slice() {
            return Err(Error::invalid(format!(
                "input columns {:?} do not match fitted columns {:?}",
                x.column_names(),
                self.input_names
            )));
        }
        let staged = match &self.standardizer {
            Some(s) => s.apply(x)?,
            None => x.clone(),
        };
        match &self.expander {
            Some(e) => e.expand(&staged),
            None => Ok(staged),
        }
    }
}
