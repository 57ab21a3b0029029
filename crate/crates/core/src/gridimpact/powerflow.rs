//! Backward/forward-sweep power flow for radial feeders.
//!
//! Balanced positive-sequence model solved per phase in volts: the
//! backward pass accumulates branch currents from the leaves toward the
//! slack bus, the forward pass propagates voltage drops back out, and the
//! two alternate until voltages settle.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gridimpact::{NetworkModel, S_BASE_KVA};

/// Sweep convergence threshold on the largest per-iteration voltage
/// change, in per-unit.
pub const SWEEP_TOLERANCE_PU: f64 = 1e-10;

/// Iteration cap for the sweep.
pub const MAX_SWEEP_ITERATIONS: usize = 100;

/// Solved operating point of one power flow.
#[derive(Debug, Clone)]
pub struct PowerFlowResult {
    /// Voltage magnitude at each bus, per-unit of nominal; the slack bus
    /// is exactly 1.0.
    pub bus_voltages: Vec<f64>,
    /// Complex phase voltages in volts, aligned with `bus_voltages`.
    pub bus_voltages_complex: Vec<Complex64>,
    /// Current magnitude per line in amperes, in the model's line order.
    pub line_currents: Vec<f64>,
    /// Line current as a percent of each line's ampacity.
    pub line_loading: Vec<f64>,
    /// Total three-phase resistive losses, kW.
    pub losses_kw: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl PowerFlowResult {
    pub fn min_voltage(&self) -> f64 {
        self.bus_voltages.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_loading(&self) -> f64 {
        self.line_loading.iter().copied().fold(0.0, f64::max)
    }
}

/// Runs the sweep with the given active power drawn at each load entry of
/// the model (kW, one value per entry in model order); reactive power
/// follows each entry's power factor, lagging. Loads are constant-power.
///
/// Non-convergence within the iteration cap is not an error: the result
/// carries `converged = false` and the last iterate.
pub fn run_power_flow(net: &NetworkModel, bus_loads_kw: &[f64]) -> Result<PowerFlowResult> {
    if bus_loads_kw.len() != net.loads().len() {
        return Err(Error::invalid(format!(
            "expected {} load values, got {}",
            net.loads().len(),
            bus_loads_kw.len()
        )));
    }
    if bus_loads_kw.iter().any(|kw| !(kw.is_finite() && *kw >= 0.0)) {
        return Err(Error::invalid("bus loads must be finite and nonnegative"));
    }

    let n = net.n_buses();
    let v_base = net.phase_voltage_v();

    // Per-phase complex power drawn at each bus, VA.
    let mut s_phase = vec![Complex64::new(0.0, 0.0); n];
    for (load, &kw) in net.loads().iter().zip(bus_loads_kw) {
        let p = kw * 1000.0 / 3.0;
        let q = p * (1.0 - load.power_factor * load.power_factor).sqrt() / load.power_factor;
        s_phase[load.bus] += Complex64::new(p, q);
    }

    let z: Vec<Complex64> = net
        .lines()
        .iter()
        .map(|l| Complex64::new(l.resistance_ohm, l.reactance_ohm))
        .collect();

    let mut v = vec![Complex64::new(v_base, 0.0); n];
    let mut branch = vec![Complex64::new(0.0, 0.0); net.lines().len()];
    let mut injected = vec![Complex64::new(0.0, 0.0); n];
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..MAX_SWEEP_ITERATIONS {
        iterations += 1;

        // Backward: load currents at the buses, then branch currents
        // summed from the leaves in.
        for i in 0..n {
            injected[i] = if s_phase[i] == Complex64::new(0.0, 0.0) {
                Complex64::new(0.0, 0.0)
            } else {
                (s_phase[i] / v[i]).conj()
            };
        }
        for &(parent, child, line_idx) in net.sweep_order().iter().rev() {
            branch[line_idx] = injected[child];
            injected[parent] += branch[line_idx];
        }

        // Forward: voltage drops from the slack bus out.
        let mut max_delta = 0.0f64;
        for &(parent, child, line_idx) in net.sweep_order() {
            let next = v[parent] - z[line_idx] * branch[line_idx];
            max_delta = max_delta.max((next - v[child]).norm() / v_base);
            v[child] = next;
        }

        if !max_delta.is_finite() {
            break;
        }
        if max_delta < SWEEP_TOLERANCE_PU {
            converged = true;
            break;
        }
    }

    let bus_voltages: Vec<f64> = v.iter().map(|vi| vi.norm() / v_base).collect();
    let line_currents: Vec<f64> = branch.iter().map(|i| i.norm()).collect();
    let line_loading: Vec<f64> = line_currents
        .iter()
        .zip(net.lines())
        .map(|(i, l)| 100.0 * i / l.ampacity_a)
        .collect();
    let losses_kw = branch
        .iter()
        .zip(net.lines())
        .map(|(i, l)| 3.0 * i.norm_sqr() * l.resistance_ohm / 1000.0)
        .sum();

    Ok(PowerFlowResult {
        bus_voltages,
        bus_voltages_complex: v,
        line_currents,
        line_loading,
        losses_kw,
        converged,
        iterations,
    })
}

/// Largest complex power mismatch across the non-slack buses, per-unit of
/// the 100 kVA base: branch currents are recovered from the solved
/// voltages through each line's impedance and balanced against the loads.
/// Requires every line impedance to be nonzero.
pub fn power_mismatch_pu(
    net: &NetworkModel,
    bus_loads_kw: &[f64],
    result: &PowerFlowResult,
) -> Result<f64> {
    if bus_loads_kw.len() != net.loads().len() {
        return Err(Error::invalid(format!(
            "expected {} load values, got {}",
            net.loads().len(),
            bus_loads_kw.len()
        )));
    }
    let n = net.n_buses();
    let v = &result.bus_voltages_complex;
    if v.len() != n {
        return Err(Error::invalid("result does not match the network"));
    }

    // Net current flowing out of each bus along its lines.
    let mut outflow = vec![Complex64::new(0.0, 0.0); n];
    for &(parent, child, line_idx) in net.sweep_order() {
        let line = &net.lines()[line_idx];
        let z = Complex64::new(line.resistance_ohm, line.reactance_ohm);
        if z.norm() == 0.0 {
            return Err(Error::invalid(
                "power mismatch is undefined for zero-impedance lines",
            ));
        }
        let current = (v[parent] - v[child]) / z;
        outflow[parent] += current;
        outflow[child] -= current;
    }

    let mut s_load = vec![Complex64::new(0.0, 0.0); n];
    for (load, &kw) in net.loads().iter().zip(bus_loads_kw) {
        let p = kw * 1000.0;
        let q = p * (1.0 - load.power_factor * load.power_factor).sqrt() / load.power_factor;
        s_load[load.bus] += Complex64::new(p, q);
    }

    let mut worst = 0.0f64;
    for bus in 1..n {
        // Power leaving bus `bus` into the network must be the negative
        // of the load drawn there.
        let s_net = 3.0 * v[bus] * outflow[bus].conj();
        worst = worst.max((s_net + s_load[bus]).norm());
    }
    Ok(worst / (S_BASE_KVA * 1000.0))
}
