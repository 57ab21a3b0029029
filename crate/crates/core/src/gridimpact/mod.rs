//! Operational grid impact of forecast error.
//!
//! Maps system-level load (actual and forecast) onto a small radial
//! low-voltage feeder, solves a power flow for both at every timestep,
//! and compares the violation verdicts: a missed violation is a real
//! limit breach the forecast failed to predict, a false alarm the
//! reverse.

mod powerflow;

pub use powerflow::{
    power_mismatch_pu, run_power_flow, PowerFlowResult, MAX_SWEEP_ITERATIONS, SWEEP_TOLERANCE_PU,
};

use chrono::{DateTime, SecondsFormat, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::LoadSeries;

/// Overhead-line constants for a rural 4×70 mm² feeder segment.
pub const OVERHEAD_RESISTANCE_OHM_PER_KM: f64 = 0.568;
pub const OVERHEAD_REACTANCE_OHM_PER_KM: f64 = 0.26;
pub const OVERHEAD_AMPACITY_A: f64 = 270.0;

/// Default feeder layout: fourteen load buses spaced 30 m apart.
pub const DEFAULT_FEEDER_LOADS: usize = 14;
pub const DEFAULT_SEGMENT_LENGTH_M: f64 = 30.0;

/// Default lagging power factor for feeder loads.
pub const DEFAULT_POWER_FACTOR: f64 = 0.95;

/// Line-to-line nominal voltage of the feeder, kV.
pub const DEFAULT_NOMINAL_VOLTAGE_KV: f64 = 0.4;

/// Power base used for per-unit mismatch reporting, kVA.
pub const S_BASE_KVA: f64 = 100.0;

/// One feeder segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from_bus: usize,
    pub to_bus: usize,
    pub resistance_ohm: f64,
    pub reactance_ohm: f64,
    pub ampacity_a: f64,
}

/// A constant-power load attached to a bus. `active_kw` is the nominal
/// draw; power flows usually override it per timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusLoad {
    pub bus: usize,
    pub active_kw: f64,
    pub power_factor: f64,
}

/// A radial network rooted at slack bus 0. Construction validates the
/// tree shape and precomputes the sweep traversal order.
#[derive(Debug, Clone)]
pub struct NetworkModel {
    nominal_voltage_kv: f64,
    n_buses: usize,
    lines: Vec<Line>,
    loads: Vec<BusLoad>,
    /// (parent, child, line index) triples in root-to-leaf order.
    sweep_order: Vec<(usize, usize, usize)>,
}

impl NetworkModel {
    pub fn new(
        nominal_voltage_kv: f64,
        n_buses: usize,
        lines: Vec<Line>,
        loads: Vec<BusLoad>,
    ) -> Result<Self> {
        if !(nominal_voltage_kv.is_finite() && nominal_voltage_kv > 0.0) {
            return Err(Error::invalid("nominal voltage must be positive"));
        }
        if n_buses == 0 {
            return Err(Error::invalid("a network needs at least the slack bus"));
        }
        if lines.len() != n_buses - 1 {
            return Err(Error::invalid(format!(
                "a radial network with {} buses needs exactly {} lines, got {}",
                n_buses,
                n_buses - 1,
                lines.len()
            )));
        }
        for line in &lines {
            if line.from_bus >= n_buses || line.to_bus >= n_buses {
                return Err(Error::invalid(format!(
                    "line {}-{} references a bus outside 0..{}",
                    line.from_bus, line.to_bus, n_buses
                )));
            }
            if line.from_bus == line.to_bus {
                return Err(Error::invalid(format!(
                    "line at bus {} connects a bus to itself",
                    line.from_bus
                )));
            }
            if !(line.resistance_ohm.is_finite() && line.resistance_ohm >= 0.0) {
                return Err(Error::invalid("line resistance must be nonnegative"));
            }
            if !(line.reactance_ohm.is_finite() && line.reactance_ohm >= 0.0) {
                return Err(Error::invalid("line reactance must be nonnegative"));
            }
            if !(line.ampacity_a.is_finite() && line.ampacity_a > 0.0) {
                return Err(Error::invalid("line ampacity must be positive"));
            }
        }
        for load in &loads {
            if load.bus == 0 || load.bus >= n_buses {
                return Err(Error::invalid(format!(
                    "load bus {} must be a non-slack bus below {}",
                    load.bus, n_buses
                )));
            }
            if !(load.power_factor > 0.0 && load.power_factor <= 1.0) {
                return Err(Error::invalid(format!(
                    "power factor {} must lie in (0, 1]",
                    load.power_factor
                )));
            }
            if !(load.active_kw.is_finite() && load.active_kw >= 0.0) {
                return Err(Error::invalid("nominal load must be finite and nonnegative"));
            }
        }

        // Breadth-first walk from the slack bus; with exactly n−1 edges,
        // reaching every bus proves the network is a tree.
        let mut adjacency = vec![Vec::new(); n_buses];
        for (idx, line) in lines.iter().enumerate() {
            adjacency[line.from_bus].push((line.to_bus, idx));
            adjacency[line.to_bus].push((line.from_bus, idx));
        }
        let mut visited = vec![false; n_buses];
        let mut sweep_order = Vec::with_capacity(lines.len());
        let mut queue = std::collections::VecDeque::from([0usize]);
        visited[0] = true;
        while let Some(bus) = queue.pop_front() {
            for &(next, line_idx) in &adjacency[bus] {
                if !visited[next] {
                    visited[next] = true;
                    sweep_order.push((bus, next, line_idx));
                    queue.push_back(next);
                }
            }
        }
        if visited.iter().any(|v| !v) {
            return Err(Error::invalid(
                "network is not radial: some buses are unreachable from the slack bus",
            ));
        }

        Ok(NetworkModel {
            nominal_voltage_kv,
            n_buses,
            lines,
            loads,
            sweep_order,
        })
    }

    pub fn nominal_voltage_kv(&self) -> f64 {
        self.nominal_voltage_kv
    }

    pub fn n_buses(&self) -> usize {
        self.n_buses
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn loads(&self) -> &[BusLoad] {
        &self.loads
    }

    pub(crate) fn sweep_order(&self) -> &[(usize, usize, usize)] {
        &self.sweep_order
    }

    /// Line-to-neutral phase voltage at the slack bus, volts.
    pub fn phase_voltage_v(&self) -> f64 {
        self.nominal_voltage_kv * 1000.0 / 3.0f64.sqrt()
    }
}

/// Builds a chain feeder: the slack bus followed by `n_loads` load buses
/// in series, every segment `segment_length_m` of overhead line, every
/// load at the default power factor.
pub fn build_kerber_feeder(n_loads: usize, segment_length_m: f64) -> Result<NetworkModel> {
    if n_loads == 0 {
        return Err(Error::invalid("a feeder needs at least one load bus"));
    }
    if !(segment_length_m.is_finite() && segment_length_m > 0.0) {
        return Err(Error::invalid("segment length must be positive"));
    }
    let length_km = segment_length_m / 1000.0;
    let lines = (0..n_loads)
        .map(|i| Line {
            from_bus: i,
            to_bus: i + 1,
            resistance_ohm: length_km * OVERHEAD_RESISTANCE_OHM_PER_KM,
            reactance_ohm: length_km * OVERHEAD_REACTANCE_OHM_PER_KM,
            ampacity_a: OVERHEAD_AMPACITY_A,
        })
        .collect();
    let loads = (1..=n_loads)
        .map(|bus| BusLoad {
            bus,
            active_kw: 0.0,
            power_factor: DEFAULT_POWER_FACTOR,
        })
        .collect();
    NetworkModel::new(DEFAULT_NOMINAL_VOLTAGE_KV, n_loads + 1, lines, loads)
}

/// Scaling and violation thresholds for the impact study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridImpactConfig {
    /// Converts the system-level MW series into feeder kW totals.
    pub mw_to_kw_scale: f64,
    pub undervoltage_limit_pu: f64,
    pub overload_limit_pct: f64,
}

impl Default for GridImpactConfig {
    fn default() -> Self {
        GridImpactConfig {
            mw_to_kw_scale: 1.0,
            undervoltage_limit_pu: 0.95,
            overload_limit_pct: 100.0,
        }
    }
}

impl GridImpactConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mw_to_kw_scale.is_finite() && self.mw_to_kw_scale > 0.0) {
            return Err(Error::invalid("mw_to_kw_scale must be positive"));
        }
        if !(self.undervoltage_limit_pu > 0.0 && self.undervoltage_limit_pu <= 1.0) {
            return Err(Error::invalid("undervoltage limit must lie in (0, 1]"));
        }
        if !(self.overload_limit_pct.is_finite() && self.overload_limit_pct > 0.0) {
            return Err(Error::invalid("overload limit must be positive"));
        }
        Ok(())
    }
}

/// Power-flow verdicts for one timestep, actual next to forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct StepImpact {
    pub timestamp: DateTime<Utc>,
    pub min_voltage_actual_pu: f64,
    pub min_voltage_forecast_pu: f64,
    pub max_loading_actual_pct: f64,
    pub max_loading_forecast_pct: f64,
    pub violation_actual: bool,
    pub violation_forecast: bool,
    pub converged_actual: bool,
    pub converged_forecast: bool,
}

/// Aggregate counts over the study window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridImpactSummary {
    pub n_steps: usize,
    pub actual_violations: usize,
    pub forecast_violations: usize,
    /// Actual violations the forecast did not predict.
    pub missed_violations: usize,
    /// Forecast violations that did not materialize.
    pub false_alarms: usize,
    /// Steps where either power flow failed to converge.
    pub non_converged_steps: usize,
}

#[derive(Debug, Clone)]
pub struct GridImpactReport {
    pub steps: Vec<StepImpact>,
    pub summary: GridImpactSummary,
}

impl GridImpactReport {
    /// CSV with one row per timestep:
    /// `timestamp,min_v_actual,min_v_forecast,max_loading_actual,max_loading_forecast,violation_actual,violation_forecast`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "timestamp,min_v_actual,min_v_forecast,max_loading_actual,max_loading_forecast,violation_actual,violation_forecast\n",
        );
        for step in &self.steps {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},{},{}\n",
                step.timestamp.to_rfc3339_opts(SecondsFormat::Secs, true),
                step.min_voltage_actual_pu,
                step.min_voltage_forecast_pu,
                step.max_loading_actual_pct,
                step.max_loading_forecast_pct,
                step.violation_actual,
                step.violation_forecast,
            ));
        }
        out
    }
}

/// Runs the paired power flows for every timestep: the system-level MW
/// values are scaled to feeder kW, split across the load buses by the
/// fixed allocation weights, and solved once with actual and once with
/// forecast load. Negative system values clamp to zero before scaling.
///
/// Non-convergence at a step is recorded on that step and in the summary;
/// it does not abort the study.
pub fn impact_report(
    net: &NetworkModel,
    actual: &LoadSeries,
    forecast_mw: &[f64],
    allocation: &[f64],
    config: &GridImpactConfig,
) -> Result<GridImpactReport> {
    config.validate()?;
    if forecast_mw.len() != actual.len() {
        return Err(Error::invalid(format!(
            "forecast has {} values but the actual series has {}",
            forecast_mw.len(),
            actual.len()
        )));
    }
    if forecast_mw.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("forecast values must be finite"));
    }
    if allocation.len() != net.loads().len() {
        return Err(Error::invalid(format!(
            "allocation has {} weights but the network has {} loads",
            allocation.len(),
            net.loads().len()
        )));
    }
    if allocation.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid("allocation weights must be finite and nonnegative"));
    }
    let weight_sum: f64 = allocation.iter().sum();
    if (weight_sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "allocation weights sum to {weight_sum}, expected 1"
        )));
    }

    let solve = |mw: f64| -> Result<PowerFlowResult> {
        let total_kw = mw.max(0.0) * config.mw_to_kw_scale;
        let bus_loads: Vec<f64> = allocation.iter().map(|w| w * total_kw).collect();
        run_power_flow(net, &bus_loads)
    };

    let steps: Vec<StepImpact> = (0..actual.len())
        .into_par_iter()
        .map(|i| -> Result<StepImpact> {
            let flow_actual = solve(actual.value(i))?;
            let flow_forecast = solve(forecast_mw[i])?;
            let min_v_a = flow_actual.min_voltage();
            let min_v_f = flow_forecast.min_voltage();
            let max_l_a = flow_actual.max_loading();
            let max_l_f = flow_forecast.max_loading();
            Ok(StepImpact {
                timestamp: actual.timestamp(i),
                min_voltage_actual_pu: min_v_a,
                min_voltage_forecast_pu: min_v_f,
                max_loading_actual_pct: max_l_a,
                max_loading_forecast_pct: max_l_f,
                violation_actual: min_v_a < config.undervoltage_limit_pu
                    || max_l_a > config.overload_limit_pct,
                violation_forecast: min_v_f < config.undervoltage_limit_pu
                    || max_l_f > config.overload_limit_pct,
                converged_actual: flow_actual.converged,
                converged_forecast: flow_forecast.converged,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut summary = GridImpactSummary {
        n_steps: steps.len(),
        actual_violations: 0,
        forecast_violations: 0,
        missed_violations: 0,
        false_alarms: 0,
        non_converged_steps: 0,
    };
    for step in &steps {
        summary.actual_violations += step.violation_actual as usize;
        summary.forecast_violations += step.violation_forecast as usize;
        summary.missed_violations += (step.violation_actual && !step.violation_forecast) as usize;
        summary.false_alarms += (step.violation_forecast && !step.violation_actual) as usize;
        summary.non_converged_steps +=
            (!step.converged_actual || !step.converged_forecast) as usize;
    }

    Ok(GridImpactReport { steps, summary })
}
