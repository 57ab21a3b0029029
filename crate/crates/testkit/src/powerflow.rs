//! Newton-Raphson reference power flow for very small networks.
//!
//! Full Ybus formulation with a finite-difference Jacobian, solved per
//! phase in actual volts and watts. Intended for cross-checking a faster
//! solver on networks of a handful of buses.

use num_complex::Complex64;

use crate::qp::solve_linear;

pub struct NrNetwork {
    /// Per-phase line-to-neutral slack voltage, volts.
    pub slack_voltage: f64,
    /// (from, to, resistance, reactance) per phase in ohms; bus 0 is the
    /// slack.
    pub lines: Vec<(usize, usize, f64, f64)>,
    /// Per-phase (P watts, Q vars) drawn at bus i+1.
    pub loads: Vec<(f64, f64)>,
}

/// Solves for all bus voltages (slack first). Panics if Newton iteration
/// fails to reach a 1e-5 W mismatch within 80 steps, which for the tiny
/// well-conditioned test networks would indicate a malformed instance.
pub fn solve_newton(net: &NrNetwork) -> Vec<Complex64> {
    let n = net.loads.len() + 1;
    let mut ybus = vec![Complex64::new(0.0, 0.0); n * n];
    for &(f, t, r, x) in &net.lines {
        let y = Complex64::new(1.0, 0.0) / Complex64::new(r, x);
        ybus[f * n + f] += y;
        ybus[t * n + t] += y;
        ybus[f * n + t] -= y;
        ybus[t * n + f] -= y;
    }

    let slack = Complex64::new(net.slack_voltage, 0.0);
    // Unknowns: (Re, Im) of each non-slack bus voltage.
    let m = 2 * (n - 1);
    let mut state: Vec<f64> = Vec::with_capacity(m);
    for _ in 1..n {
        state.push(net.slack_voltage);
        state.push(0.0);
    }

    let mismatch = |state: &[f64]| -> Vec<f64> {
        let mut v = vec![slack; n];
        for i in 1..n {
            v[i] = Complex64::new(state[2 * (i - 1)], state[2 * (i - 1) + 1]);
        }
        let mut f = Vec::with_capacity(m);
        for i in 1..n {
            let injected: Complex64 = (0..n).map(|j| ybus[i * n + j] * v[j]).sum();
            let s = v[i] * injected.conj();
            let (p, q) = net.loads[i - 1];
            let residual = s + Complex64::new(p, q);
            f.push(residual.re);
            f.push(residual.im);
        }
        f
    };

    for _ in 0..80 {
        let f0 = mismatch(&state);
        let worst = f0.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if worst < 1e-5 {
            let mut v = vec![slack; n];
            for i in 1..n {
                v[i] = Complex64::new(state[2 * (i - 1)], state[2 * (i - 1) + 1]);
            }
            return v;
        }
        let mut jac = vec![0.0; m * m];
        let h = 1e-5 * net.slack_voltage;
        for col in 0..m {
            let mut bumped = state.clone();
            bumped[col] += h;
            let f1 = mismatch(&bumped);
            for row in 0..m {
                jac[row * m + col] = (f1[row] - f0[row]) / h;
            }
        }
        let mut rhs: Vec<f64> = f0.iter().map(|v| -v).collect();
        if !solve_linear(&mut jac, &mut rhs, m) {
            panic!("singular Jacobian in reference power flow");
        }
        for (s, d) in state.iter_mut().zip(&rhs) {
            *s += d;
        }
    }
    panic!("reference power flow did not converge");
}
