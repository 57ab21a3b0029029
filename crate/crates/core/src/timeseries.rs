//! Hourly load time series and its CSV form.
//!
//! `LoadSeries` is the currency every other module trades in: a run of
//! strictly consecutive, hour-aligned UTC timestamps with one load value
//! (MW) per hour. Storing the start instant plus a value vector makes the
//! constant-step invariant structural rather than checked.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use chrono::{DateTime, Duration, SecondsFormat, Utc};

use crate::error::{Error, Result};

/// CSV header for serialized series.
pub const SERIES_CSV_HEADER: &str = "timestamp,load_mw";

/// Uniformly hourly load values in MW.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadSeries {
    start: DateTime<Utc>,
    values: Vec<f64>,
}

impl LoadSeries {
    /// Builds a series starting at `start` with one value per hour.
    ///
    /// `start` must be hour-aligned UTC; `values` must be non-empty and
    /// finite.
    pub fn new(start: DateTime<Utc>, values: Vec<f64>) -> Result<Self> {
        if !is_hour_aligned(start) {
            return Err(Error::invalid(format!(
                "series start {start} is not hour-aligned"
            )));
        }
        if values.is_empty() {
            return Err(Error::invalid("series must contain at least one value"));
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "series value at index {idx} is not finite"
            )));
        }
        Ok(LoadSeries { start, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn timestamp(&self, idx: usize) -> DateTime<Utc> {
        self.start + Duration::hours(idx as i64)
    }

    /// All timestamps, materialized in order.
    pub fn timestamps(&self) -> Vec<DateTime<Utc>> {
        (0..self.len()).map(|i| self.timestamp(i)).collect()
    }

    /// Index of `ts` if it falls exactly on one of the series' hours.
    pub fn index_of(&self, ts: DateTime<Utc>) -> Option<usize> {
        let delta = ts.signed_duration_since(self.start);
        let seconds = delta.num_seconds();
        if seconds < 0 || seconds % 3600 != 0 || delta.subsec_nanos() != 0 {
            return None;
        }
        let idx = (seconds / 3600) as usize;
        (idx < self.len()).then_some(idx)
    }

    /// Contiguous sub-series over `range` (half-open indices).
    pub fn window(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::invalid(format!(
                "window {range:?} out of bounds for series of length {}",
                self.len()
            )));
        }
        LoadSeries::new(
            self.timestamp(range.start),
            self.values[range.clone()].to_vec(),
        )
    }

    /// Serializes to `timestamp,load_mw` CSV with ISO-8601 UTC timestamps
    /// and six-decimal load values.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.len() * 34 + SERIES_CSV_HEADER.len() + 1);
        out.push_str(SERIES_CSV_HEADER);
        out.push('\n');
        for (i, v) in self.values.iter().enumerate() {
            let ts = self.timestamp(i).to_rfc3339_opts(SecondsFormat::Secs, true);
            let _ = writeln!(out, "{ts},{v:.6}");
        }
        out
    }

    /// Parses the CSV form produced by [`LoadSeries::to_csv`], validating
    /// the hourly step.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(|l| l.trim_end_matches('\r'));
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty series CSV".into()))?;
        if header != SERIES_CSV_HEADER {
            return Err(Error::Parse(format!(
                "expected header `{SERIES_CSV_HEADER}`, found `{header}`"
            )));
        }
        let mut start: Option<DateTime<Utc>> = None;
        let mut values = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let lineno = lineno + 2;
            if line.is_empty() {
                continue;
            }
            let (ts_str, value_str) = line.split_once(',').ok_or_else(|| {
                Error::Parse(format!("line {lineno}: expected `timestamp,load_mw`"))
            })?;
            let ts = DateTime::parse_from_rfc3339(ts_str)
                .map_err(|e| Error::Parse(format!("line {lineno}: bad timestamp: {e}")))?
                .with_timezone(&Utc);
            let value: f64 = value_str
                .parse()
                .map_err(|e| Error::Parse(format!("line {lineno}: bad load value: {e}")))?;
            if !value.is_finite() {
                return Err(Error::Parse(format!("line {lineno}: non-finite load value")));
            }
            match start {
                None => start = Some(ts),
                Some(s) => {
                    let expected = s + Duration::hours(values.len() as i64);
                    if ts != expected {
                        return Err(Error::Parse(format!(
                            "line {lineno}: expected timestamp {expected}, found {ts} \
                             (series must advance in exact 1-hour steps)"
                        )));
                    }
                }
            }
            values.push(value);
        }
        let start = start.ok_or_else(|| Error::Parse("series CSV contains no rows".into()))?;
        LoadSeries::new(start, values)
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read_csv_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv(&text)
    }
}

fn is_hour_aligned(ts: DateTime<Utc>) -> bool {
    ts.timestamp() % 3600 == 0 && ts.timestamp_subsec_nanos() == 0
}
