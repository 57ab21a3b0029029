//! Sequential minimal optimization for the ε-insensitive dual.
//!
//! The dual variable for point i is β_i = α⁺_i − α⁻_i with the two
//! one-sided multipliers stored separately (each in [0, C]). The solver
//! keeps o_i = Σ_j β_j·K_ij incrementally up to date, repeatedly picks the
//! maximal-violating pair of multiplier slots, and moves mass λ along the
//! equality constraint until the first-order violation falls under the
//! working tolerance. The working tolerance then tightens by 10× until the
//! duality gap certificate is met, the iteration cap is reached, or the
//! tolerance floor is hit.

use super::kernel::KernelCache;

/// Bound snap width relative to C: multipliers closer to a box edge than
/// this land exactly on it, which also enforces a minimum useful step.
const SNAP_REL: f64 = 1e-12;

/// Tightening stops once the working tolerance would drop below this.
const TOL_FLOOR: f64 = 1e-12;

pub(crate) struct SmoProblem<'a> {
    /// Row-major design matrix, n×dim.
    pub points: &'a [f64],
    pub dim: usize,
    pub targets: &'a [f64],
    pub c: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub tol: f64,
    pub max_iter: u64,
    pub cache_mb: usize,
}

pub(crate) struct SmoSolution {
    /// β_i = α⁺_i − α⁻_i per training point.
    pub beta: Vec<f64>,
    pub bias: f64,
    pub iterations: u64,
    pub converged: bool,
    pub kkt_violation: f64,
    pub dual_objective: f64,
    pub duality_gap: f64,
    pub solved_tol: f64,
}

/// One multiplier slot: the α⁺ or α⁻ half of a training point.
#[derive(Clone, Copy, PartialEq)]
struct SlotId {
    point: usize,
    plus: bool,
}

struct State<'a> {
    prob: &'a SmoProblem<'a>,
    alpha_plus: Vec<f64>,
    alpha_minus: Vec<f64>,
    /// o_i = Σ_j β_j·K_ij, maintained incrementally.
    o: Vec<f64>,
    cache: KernelCache<'a>,
    iterations: u64,
}

/// Result of one maximal-violating-pair scan.
struct Scan {
    up: Option<SlotId>,
    low: Option<SlotId>,
    /// Largest ascent-direction slot value (lower bound on the bias).
    up_val: f64,
    /// Smallest descent-direction slot value (upper bound on the bias).
    low_val: f64,
}

impl Scan {
    fn violation(&self) -> f64 {
        if self.up.is_some() && self.low.is_some() {
            self.up_val - self.low_val
        } else {
            0.0
        }
    }
}

pub(crate) fn solve(prob: &SmoProblem) -> SmoSolution {
    let n = prob.targets.len();
    let mut state = State {
        prob,
        alpha_plus: vec![0.0; n],
        alpha_minus: vec![0.0; n],
        o: vec![0.0; n],
        cache: KernelCache::new(prob.points, prob.dim, prob.gamma, prob.cache_mb),
        iterations: 0,
    };

    let mut tol_cur = prob.tol;
    let mut scan = state.optimize_at(tol_cur);
    loop {
        let bias = state.bias(&scan);
        let (dual, primal) = state.objectives(bias);
        let gap = primal - dual;
        let gap_target = 1e-6_f64.max(1e-6 * dual.abs());
        let converged = gap <= gap_target;
        if converged || state.iterations >= prob.max_iter || tol_cur <= TOL_FLOOR {
            return SmoSolution {
                beta: state.beta(),
                bias,
                iterations: state.iterations,
                converged,
                kkt_violation: scan.violation(),
                dual_objective: dual,
                duality_gap: gap,
                solved_tol: tol_cur,
            };
        }
        tol_cur *= 0.1;
        scan = state.optimize_at(tol_cur);
    }
}

impl<'a> State<'a> {
    /// Pair updates until the maximal violation is within `tol` or the
    /// iteration cap is hit. Returns the final scan.
    fn optimize_at(&mut self, tol: f64) -> Scan {
        loop {
            let scan = self.scan();
            let (up, low) = match (scan.up, scan.low) {
                (Some(u), Some(l)) => (u, l),
                _ => return scan,
            };
            if scan.violation() <= tol || self.iterations >= self.prob.max_iter {
                return scan;
            }
            self.update_pair(up, low, scan.violation());
            self.iterations += 1;
        }
    }

    /// Maximal-violating-pair selection over the 2n multiplier slots.
    ///
    /// A slot's value is the bias that would make its point's KKT
    /// condition tight: y−o−ε for the α⁺ slot, y−o+ε for the α⁻ slot.
    /// Slots that can still grow β (α⁺ below C, α⁻ above 0) bound the
    /// bias from below; slots that can shrink β bound it from above.
    fn scan(&self) -> Scan {
        let c = self.prob.c;
        let eps = self.prob.epsilon;
        let mut out = Scan {
            up: None,
            low: None,
            up_val: f64::NEG_INFINITY,
            low_val: f64::INFINITY,
        };
        for i in 0..self.alpha_plus.len() {
            let vp = self.prob.targets[i] - self.o[i] - eps;
            let vm = self.prob.targets[i] - self.o[i] + eps;
            if self.alpha_plus[i] < c && vp > out.up_val {
                out.up_val = vp;
                out.up = Some(SlotId { point: i, plus: true });
            }
            if self.alpha_minus[i] > 0.0 && vm > out.up_val {
                out.up_val = vm;
                out.up = Some(SlotId { point: i, plus: false });
            }
            if self.alpha_plus[i] > 0.0 && vp < out.low_val {
                out.low_val = vp;
                out.low = Some(SlotId { point: i, plus: true });
            }
            if self.alpha_minus[i] < c && vm < out.low_val {
                out.low_val = vm;
                out.low = Some(SlotId { point: i, plus: false });
            }
        }
        out
    }

    /// Moves λ of dual mass: +λ of β at the up slot, −λ at the low slot,
    /// keeping Σβ fixed. The unconstrained optimum λ* = violation/(2−2K₁₂)
    /// is clipped to the box headroom of both slots.
    fn update_pair(&mut self, up: SlotId, low: SlotId, violation: f64) {
        let c = self.prob.c;
        let row_up = self.cache.row(up.point);
        let k12 = row_up[low.point];
        let quad = (2.0 - 2.0 * k12).max(1e-12);

        let room_up = if up.plus {
            c - self.alpha_plus[up.point]
        } else {
            self.alpha_minus[up.point]
        };
        let room_low = if low.plus {
            self.alpha_plus[low.point]
        } else {
            c - self.alpha_minus[low.point]
        };
        let lambda = (violation / quad).min(room_up).min(room_low);

        if up.plus {
            self.alpha_plus[up.point] += lambda;
        } else {
            self.alpha_minus[up.point] -= lambda;
        }
        if low.plus {
            self.alpha_plus[low.point] -= lambda;
        } else {
            self.alpha_minus[low.point] += lambda;
        }
        self.snap(up.point);
        self.snap(low.point);

        if up.point != low.point {
            let row_low = self.cache.row(low.point);
            for ((o, ku), kl) in self.o.iter_mut().zip(row_up.iter()).zip(row_low.iter()) {
                *o += lambda * (ku - kl);
            }
        }
        // Same-point pairs only shrink α⁺ and α⁻ together; β and o are
        // unchanged.
    }

    fn snap(&mut self, i: usize) {
        let width = SNAP_REL * self.prob.c;
        for a in [&mut self.alpha_plus[i], &mut self.alpha_minus[i]] {
            if *a < width {
                *a = 0.0;
            } else if *a > self.prob.c - width {
                *a = self.prob.c;
            }
        }
    }

    /// Bias from free slots when any exist (their KKT conditions pin it
    /// exactly), otherwise the midpoint of the scan-derived bounds.
    fn bias(&self, scan: &Scan) -> f64 {
        let c = self.prob.c;
        let eps = self.prob.epsilon;
        let mut sum = 0.0;
        let mut count = 0u64;
        for i in 0..self.alpha_plus.len() {
            if self.alpha_plus[i] > 0.0 && self.alpha_plus[i] < c {
                sum += self.prob.targets[i] - self.o[i] - eps;
                count += 1;
            }
            if self.alpha_minus[i] > 0.0 && self.alpha_minus[i] < c {
                sum += self.prob.targets[i] - self.o[i] + eps;
                count += 1;
            }
        }
        if count > 0 {
            return sum / count as f64;
        }
        match (scan.up_val.is_finite(), scan.low_val.is_finite()) {
            (true, true) => 0.5 * (scan.up_val + scan.low_val),
            (true, false) => scan.up_val,
            (false, true) => scan.low_val,
            (false, false) => 0.0,
        }
    }

    /// Dual and primal objectives, both O(n) given the maintained o.
    fn objectives(&self, bias: f64) -> (f64, f64) {
        let c = self.prob.c;
        let eps = self.prob.epsilon;
        let mut quad = 0.0;
        let mut abs_sum = 0.0;
        let mut y_dot = 0.0;
        let mut hinge = 0.0;
        for i in 0..self.alpha_plus.len() {
            let beta = self.alpha_plus[i] - self.alpha_minus[i];
            quad += beta * self.o[i];
            abs_sum += self.alpha_plus[i] + self.alpha_minus[i];
            y_dot += self.prob.targets[i] * beta;
            let slack = (self.prob.targets[i] - self.o[i] - bias).abs() - eps;
            if slack > 0.0 {
                hinge += slack;
            }
        }
        let dual = -0.5 * quad - eps * abs_sum + y_dot;
        let primal = 0.5 * quad + c * hinge;
        (dual, primal)
    }

    fn beta(&self) -> Vec<f64> {
        self.alpha_plus
            .iter()
            .zip(&self.alpha_minus)
            .map(|(p, m)| p - m)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve_simple(points: &[f64], dim: usize, y: &[f64], c: f64, eps: f64, gamma: f64) -> SmoSolution {
        solve(&SmoProblem {
            points,
            dim,
            targets: y,
            c,
            epsilon: eps,
            gamma,
            tol: 1e-3,
            max_iter: 1_000_000,
            cache_mb: 16,
        })
    }

    #[test]
    fn constant_targets_need_no_support_vectors() {
        let points = [0.0, 1.0, 2.0, 3.0];
        let y = [5.0; 4];
        let sol = solve_simple(&points, 1, &y, 10.0, 1.0, 0.5);
        assert!(sol.converged);
        assert_eq!(sol.iterations, 0);
        assert!(sol.beta.iter().all(|&b| b == 0.0));
        assert!((sol.bias - 5.0).abs() < 1e-12);
        assert_eq!(sol.dual_objective, 0.0);
    }

    #[test]
    fn two_point_problem_matches_hand_solution() {
        // Points x=0 and x=1, targets ∓5, γ=ln 2 so K₁₂=1/2, ε=0, C=100.
        // With β=(−t, t) the dual is −t²/2 + 10t, maximized at t=10 with
        // value 50; both o_i then equal y_i, so the bias is 0.
        let gamma = 2.0f64.ln();
        let points = [0.0, 1.0];
        let y = [-5.0, 5.0];
        let sol = solve_simple(&points, 1, &y, 100.0, 0.0, gamma);
        assert!(sol.converged);
        assert!((sol.beta[0] + 10.0).abs() < 1e-4, "beta0 = {}", sol.beta[0]);
        assert!((sol.beta[1] - 10.0).abs() < 1e-4);
        assert!(sol.bias.abs() < 1e-4);
        assert!((sol.dual_objective - 50.0).abs() < 1e-3);
    }

    #[test]
    fn equality_constraint_holds_throughout() {
        let points: Vec<f64> = (0..30).map(|i| (i as f64) * 0.37).collect();
        let y: Vec<f64> = points.iter().map(|x| (x * 0.9).sin() * 3.0).collect();
        let sol = solve_simple(&points, 1, &y, 5.0, 0.1, 0.8);
        let sum: f64 = sol.beta.iter().sum();
        assert!(sum.abs() < 1e-9, "Σβ = {sum}");
        assert!(sol.beta.iter().all(|b| b.abs() <= 5.0 + 1e-12));
    }

    #[test]
    fn gap_certificate_is_nonnegative_and_small() {
        let points: Vec<f64> = (0..40).map(|i| (i as f64) * 0.21).collect();
        let y: Vec<f64> = points.iter().map(|x| x.cos() * 2.0 + 0.3 * x).collect();
        let sol = solve_simple(&points, 1, &y, 10.0, 0.05, 1.0);
        assert!(sol.converged);
        assert!(sol.duality_gap >= -1e-9);
        assert!(sol.duality_gap <= 1e-6_f64.max(1e-6 * sol.dual_objective.abs()));
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let points: Vec<f64> = (0..50).map(|i| (i as f64) * 0.13).collect();
        let y: Vec<f64> = points.iter().map(|x| (x * 1.7).sin() * 4.0).collect();
        let sol = solve(&SmoProblem {
            points: &points,
            dim: 1,
            targets: &y,
            c: 50.0,
            epsilon: 0.01,
            gamma: 1.0,
            tol: 1e-3,
            max_iter: 3,
            cache_mb: 16,
        });
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 3);
    }
}
