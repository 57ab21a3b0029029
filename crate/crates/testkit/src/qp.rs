//! Dense reference solver for the ε-insensitive SVR dual.
//!
//! Accelerated projected gradient ascent on the 2n slot variables
//! (α⁺, α⁻), with exact projection onto the box-and-hyperplane feasible
//! set by bisection. Slow but transparent: every quantity is computed
//! from first principles on the dense kernel matrix.

/// exp(−gamma·‖x−z‖²).
pub fn rbf(x: &[f64], z: &[f64], gamma: f64) -> f64 {
    let dist: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * dist).exp()
}

/// Dense n×n kernel matrix, row-major.
pub fn rbf_matrix(points: &[Vec<f64>], gamma: f64) -> Vec<f64> {
    let n = points.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            k[i * n + j] = rbf(&points[i], &points[j], gamma);
        }
    }
    k
}

pub struct QpSolution {
    /// β_i = α⁺_i − α⁻_i.
    pub beta: Vec<f64>,
    /// (Kβ)_i, the decision values without bias.
    pub offsets: Vec<f64>,
    /// Midpoint of the KKT bias interval.
    pub bias: f64,
    pub bias_lo: f64,
    pub bias_hi: f64,
    pub dual_objective: f64,
    /// Primal − dual with the primal-minimizing bias.
    pub duality_gap: f64,
    pub iterations: u64,
    pub converged: bool,
}

/// Uniform box constraint on both slot families.
pub fn solve_svr_dual(k: &[f64], y: &[f64], c: f64, epsilon: f64) -> QpSolution {
    let cs = vec![c; y.len()];
    solve_svr_dual_weighted(k, y, &cs, &cs, epsilon)
}

/// Per-slot upper bounds, as needed for duplicate-point equivalence
/// checks where one deduplicated point carries the mass of several.
pub fn solve_svr_dual_weighted(
    k: &[f64],
    y: &[f64],
    c_plus: &[f64],
    c_minus: &[f64],
    epsilon: f64,
) -> QpSolution {
    let n = y.len();
    assert_eq!(k.len(), n * n, "kernel matrix must be n x n");
    assert_eq!(c_plus.len(), n);
    assert_eq!(c_minus.len(), n);
    let ub: Vec<f64> = c_plus.iter().chain(c_minus.iter()).copied().collect();

    let lipschitz = 2.1 * power_iteration_max_eigen(k, n).max(1.0) + 1e-9;
    let mut a = vec![0.0; 2 * n];
    let mut u = a.clone();
    let mut t = 1.0f64;
    let mut grad = vec![0.0; 2 * n];
    let mut iterations = 0u64;
    let mut converged = false;

    let max_iter = 400_000u64;
    while iterations < max_iter {
        iterations += 1;
        let kb_u = apply_kernel(k, n, &u);
        for i in 0..n {
            grad[i] = kb_u[i] + epsilon - y[i];
            grad[n + i] = -kb_u[i] + epsilon + y[i];
        }
        let v: Vec<f64> = u
            .iter()
            .zip(&grad)
            .map(|(ui, g)| ui - g / lipschitz)
            .collect();
        let a_new = project(&v, &ub);

        // Gradient-based adaptive restart: drop momentum when the last
        // step opposes the descent direction.
        let along: f64 = grad
            .iter()
            .zip(a_new.iter().zip(&a))
            .map(|(g, (new, old))| g * (new - old))
            .sum();
        if along > 0.0 {
            t = 1.0;
            u.copy_from_slice(&a_new);
        } else {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let momentum = (t - 1.0) / t_next;
            for s in 0..2 * n {
                u[s] = a_new[s] + momentum * (a_new[s] - a[s]);
            }
            t = t_next;
        }
        a = a_new;

        if iterations % 256 == 0 {
            let (dual, gap) = evaluate(k, n, y, c_plus, c_minus, epsilon, &a).1;
            if gap <= 1e-9_f64.max(1e-11 * dual.abs()) {
                converged = true;
                break;
            }
        }
        // Periodically try to finish exactly: classify the active set the
        // iterates have settled into, solve the reduced KKT system, and
        // accept the result if it satisfies every optimality condition.
        if iterations % 1024 == 0 {
            if let Some(beta) = polish(k, n, y, c_plus, c_minus, epsilon, &a) {
                let mut polished = vec![0.0; 2 * n];
                for i in 0..n {
                    polished[i] = beta[i].max(0.0);
                    polished[n + i] = (-beta[i]).max(0.0);
                }
                let (dual, gap) = evaluate(k, n, y, c_plus, c_minus, epsilon, &polished).1;
                if gap <= 1e-9_f64.max(1e-11 * dual.abs()) {
                    a = polished;
                    converged = true;
                    break;
                }
            }
        }
    }

    let (state, (dual, gap)) = evaluate(k, n, y, c_plus, c_minus, epsilon, &a);
    if gap <= 1e-9_f64.max(1e-11 * dual.abs()) {
        converged = true;
    }
    let (beta, offsets, bias_lo, bias_hi) = state;
    let bias = match (bias_lo.is_finite(), bias_hi.is_finite()) {
        (true, true) => 0.5 * (bias_lo + bias_hi),
        (true, false) => bias_lo,
        (false, true) => bias_hi,
        (false, false) => 0.0,
    };
    QpSolution {
        beta,
        offsets,
        bias,
        bias_lo,
        bias_hi,
        dual_objective: dual,
        duality_gap: gap,
        iterations,
        converged,
    }
}

type EvalState = (Vec<f64>, Vec<f64>, f64, f64);

/// Returns ((beta, offsets, bias_lo, bias_hi), (dual, gap)).
fn evaluate(
    k: &[f64],
    n: usize,
    y: &[f64],
    c_plus: &[f64],
    c_minus: &[f64],
    epsilon: f64,
    a: &[f64],
) -> (EvalState, (f64, f64)) {
    let beta: Vec<f64> = (0..n).map(|i| a[i] - a[n + i]).collect();
    let offsets = matvec(k, n, &beta);

    let slot_sum: f64 = a.iter().sum();
    let quad: f64 = beta.iter().zip(&offsets).map(|(b, o)| b * o).sum();
    let y_dot: f64 = y.iter().zip(&beta).map(|(yi, b)| yi * b).sum();
    let dual = -0.5 * quad - epsilon * slot_sum + y_dot;

    let residuals: Vec<f64> = y.iter().zip(&offsets).map(|(yi, o)| yi - o).collect();
    let bias_star = minimize_primal_bias(&residuals, c_plus, c_minus, epsilon);
    let primal = 0.5 * quad + hinge_cost(&residuals, c_plus, c_minus, epsilon, bias_star);
    let gap = primal - dual;

    let tol_bound = 1e-7
        * c_plus
            .iter()
            .chain(c_minus.iter())
            .fold(0.0f64, |m, &c| m.max(c));
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for i in 0..n {
        let vp = residuals[i] - epsilon;
        let vm = residuals[i] + epsilon;
        if a[i] < c_plus[i] - tol_bound {
            lo = lo.max(vp);
        }
        if a[i] > tol_bound {
            hi = hi.min(vp);
        }
        if a[n + i] > tol_bound {
            lo = lo.max(vm);
        }
        if a[n + i] < c_minus[i] - tol_bound {
            hi = hi.min(vm);
        }
    }

    ((beta, offsets, lo, hi), (dual, gap))
}

fn hinge_cost(residuals: &[f64], c_plus: &[f64], c_minus: &[f64], epsilon: f64, bias: f64) -> f64 {
    let mut cost = 0.0;
    for (i, r) in residuals.iter().enumerate() {
        cost += c_plus[i] * (r - bias - epsilon).max(0.0);
        cost += c_minus[i] * (bias - r - epsilon).max(0.0);
    }
    cost
}

/// Ternary search over the convex piecewise-linear hinge cost.
fn minimize_primal_bias(residuals: &[f64], c_plus: &[f64], c_minus: &[f64], epsilon: f64) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for r in residuals {
        lo = lo.min(r - epsilon - 1.0);
        hi = hi.max(r + epsilon + 1.0);
    }
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        let f1 = hinge_cost(residuals, c_plus, c_minus, epsilon, m1);
        let f2 = hinge_cost(residuals, c_plus, c_minus, epsilon, m2);
        if f1 <= f2 {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Clone, Copy, PartialEq)]
enum PointState {
    Zero,
    PlusBound,
    MinusBound,
    FreePlus,
    FreeMinus,
}

/// Attempts an exact finish from the current iterate: freeze bounded and
/// zero coefficients, solve the equality-constrained system for the free
/// ones and the bias, and accept only if all KKT conditions check out.
fn polish(
    k: &[f64],
    n: usize,
    y: &[f64],
    c_plus: &[f64],
    c_minus: &[f64],
    epsilon: f64,
    a: &[f64],
) -> Option<Vec<f64>> {
    let max_c = c_plus
        .iter()
        .chain(c_minus.iter())
        .fold(0.0f64, |m, &c| m.max(c));
    let tol_cls = 1e-5 * max_c;

    let mut states = Vec::with_capacity(n);
    let mut beta = vec![0.0; n];
    let mut free = Vec::new();
    for i in 0..n {
        let b = a[i] - a[n + i];
        let state = if b > c_plus[i] - tol_cls {
            beta[i] = c_plus[i];
            PointState::PlusBound
        } else if b < -(c_minus[i] - tol_cls) {
            beta[i] = -c_minus[i];
            PointState::MinusBound
        } else if b.abs() < tol_cls {
            PointState::Zero
        } else if b > 0.0 {
            free.push(i);
            PointState::FreePlus
        } else {
            free.push(i);
            PointState::FreeMinus
        };
        states.push(state);
    }

    let nf = free.len();
    let fixed_sum: f64 = beta.iter().sum();
    if nf == 0 {
        if fixed_sum.abs() > 1e-9 * (1.0 + max_c) {
            return None;
        }
    } else {
        // Unknowns: β at the free points, then the bias.
        let m = nf + 1;
        let mut mat = vec![0.0; m * m];
        let mut rhs = vec![0.0; m];
        for (r, &i) in free.iter().enumerate() {
            for (cidx, &j) in free.iter().enumerate() {
                mat[r * m + cidx] = k[i * n + j];
            }
            mat[r * m + nf] = 1.0;
            let eps_side = match states[i] {
                PointState::FreePlus => epsilon,
                _ => -epsilon,
            };
            let fixed_part: f64 = (0..n)
                .filter(|j| !matches!(states[*j], PointState::FreePlus | PointState::FreeMinus))
                .map(|j| k[i * n + j] * beta[j])
                .sum();
            rhs[r] = y[i] - eps_side - fixed_part;
        }
        for cidx in 0..nf {
            mat[nf * m + cidx] = 1.0;
        }
        rhs[nf] = -fixed_sum;
        if !solve_linear(&mut mat, &mut rhs, m) {
            return None;
        }
        for (r, &i) in free.iter().enumerate() {
            beta[i] = rhs[r];
            if beta[i] < -c_minus[i] - 1e-12 || beta[i] > c_plus[i] + 1e-12 {
                return None;
            }
        }
    }

    // Full KKT verification against a bias consistent with the candidate.
    let kb = matvec(k, n, &beta);
    let residuals: Vec<f64> = y.iter().zip(&kb).map(|(yi, o)| yi - o).collect();
    let bias = minimize_primal_bias(&residuals, c_plus, c_minus, epsilon);
    let slack = 1e-7 * (1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    for i in 0..n {
        let r = residuals[i] - bias;
        let ok = match states[i] {
            PointState::Zero => r.abs() <= epsilon + slack,
            PointState::PlusBound => r >= epsilon - slack,
            PointState::MinusBound => r <= -epsilon + slack,
            PointState::FreePlus => (r - epsilon).abs() <= slack,
            PointState::FreeMinus => (r + epsilon).abs() <= slack,
        };
        if !ok {
            return None;
        }
    }
    Some(beta)
}

/// Gaussian elimination with partial pivoting on a row-major m×m system.
/// Overwrites its inputs; the solution lands in `rhs`. Returns false when
/// the matrix is numerically singular.
pub(crate) fn solve_linear(mat: &mut [f64], rhs: &mut [f64], m: usize) -> bool {
    for col in 0..m {
        let mut pivot = col;
        for r in (col + 1)..m {
            if mat[r * m + col].abs() > mat[pivot * m + col].abs() {
                pivot = r;
            }
        }
        if mat[pivot * m + col].abs() < 1e-12 {
            return false;
        }
        if pivot != col {
            for cidx in 0..m {
                mat.swap(col * m + cidx, pivot * m + cidx);
            }
            rhs.swap(col, pivot);
        }
        let diag = mat[col * m + col];
        for r in (col + 1)..m {
            let factor = mat[r * m + col] / diag;
            if factor == 0.0 {
                continue;
            }
            for cidx in col..m {
                mat[r * m + cidx] -= factor * mat[col * m + cidx];
            }
            rhs[r] -= factor * rhs[col];
        }
    }
    for col in (0..m).rev() {
        let mut acc = rhs[col];
        for cidx in (col + 1)..m {
            acc -= mat[col * m + cidx] * rhs[cidx];
        }
        rhs[col] = acc / mat[col * m + col];
    }
    true
}

fn matvec(k: &[f64], n: usize, x: &[f64]) -> Vec<f64> {
    (0..n)
        .map(|i| k[i * n..(i + 1) * n].iter().zip(x).map(|(kij, xj)| kij * xj).sum())
        .collect()
}

/// Kβ for slot vector a (β_i = a_i − a_{n+i}).
fn apply_kernel(k: &[f64], n: usize, a: &[f64]) -> Vec<f64> {
    let beta: Vec<f64> = (0..n).map(|i| a[i] - a[n + i]).collect();
    matvec(k, n, &beta)
}

/// Euclidean projection onto {0 ≤ a ≤ ub} ∩ {Σ_plus a − Σ_minus a = 0},
/// by bisection on the hyperplane multiplier.
fn project(v: &[f64], ub: &[f64]) -> Vec<f64> {
    let n = v.len() / 2;
    let mut span = 1.0f64;
    for (x, u) in v.iter().zip(ub) {
        span = span.max(x.abs() + u);
    }
    let balance = |theta: f64| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            s += (v[i] - theta).clamp(0.0, ub[i]);
            s -= (v[n + i] + theta).clamp(0.0, ub[n + i]);
        }
        s
    };
    let mut lo = -span;
    let mut hi = span;
    for _ in 0..160 {
        let mid = 0.5 * (lo + hi);
        if balance(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let theta = 0.5 * (lo + hi);
    let mut out = Vec::with_capacity(2 * n);
    for i in 0..n {
        out.push((v[i] - theta).clamp(0.0, ub[i]));
    }
    for i in 0..n {
        out.push((v[n + i] + theta).clamp(0.0, ub[n + i]));
    }
    out
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
pub fn power_iteration_max_eigen(k: &[f64], n: usize) -> f64 {
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.013 * i as f64).collect();
    let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    for _ in 0..300 {
        let w = matvec(k, n, &v);
        let nw = norm(&w);
        if nw < 1e-300 {
            return 0.0;
        }
        v = w.into_iter().map(|x| x / nw).collect();
    }
    let w = matvec(k, n, &v);
    v.iter().zip(&w).map(|(a, b)| a * b).sum()
}

/// Smallest eigenvalue of a symmetric matrix via cyclic Jacobi rotations.
pub fn min_eigen_symmetric(matrix: &[f64], n: usize) -> f64 {
    let mut a = matrix.to_vec();
    for _ in 0..60 {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p * n + q] * a[p * n + q])
            .sum();
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-18 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..n {
                    let arp = a[r * n + p];
                    let arq = a[r * n + q];
                    a[r * n + p] = c * arp - s * arq;
                    a[r * n + q] = s * arp + c * arq;
                }
                for r in 0..n {
                    let apr = a[p * n + r];
                    let aqr = a[q * n + r];
                    a[p * n + r] = c * apr - s * aqr;
                    a[q * n + r] = s * apr + c * aqr;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).fold(f64::INFINITY, f64::min)
}

/// Dual and primal objective for an externally produced (β, bias),
/// splitting β into slots minimally (α⁺ = max(β,0), α⁻ = max(−β,0)).
pub fn certificate(
    k: &[f64],
    y: &[f64],
    c_plus: &[f64],
    c_minus: &[f64],
    epsilon: f64,
    beta: &[f64],
    bias: f64,
) -> (f64, f64) {
    let n = y.len();
    let offsets = matvec(k, n, beta);
    let quad: f64 = beta.iter().zip(&offsets).map(|(b, o)| b * o).sum();
    let abs_sum: f64 = beta.iter().map(|b| b.abs()).sum();
    let y_dot: f64 = y.iter().zip(beta).map(|(yi, b)| yi * b).sum();
    let dual = -0.5 * quad - epsilon * abs_sum + y_dot;
    let residuals: Vec<f64> = y.iter().zip(&offsets).map(|(yi, o)| yi - o).collect();
    let primal = 0.5 * quad + hinge_cost(&residuals, c_plus, c_minus, epsilon, bias);
    (dual, primal)
}

/// Decision function Σ β_i·K(x_i, q) + bias.
pub fn predict(points: &[Vec<f64>], beta: &[f64], bias: f64, gamma: f64, query: &[f64]) -> f64 {
    points
        .iter()
        .zip(beta)
        .map(|(p, b)| b * rbf(p, query, gamma))
        .sum::<f64>()
        + bias
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_lands_on_the_feasible_set() {
        let v = [3.0, -1.0, 0.4, 2.0, 2.0, 0.1];
        let ub = [1.5, 1.5, 1.5, 1.5, 1.5, 1.5];
        let a = project(&v, &ub);
        let n = 3;
        let sum: f64 = a[..n].iter().sum::<f64>() - a[n..].iter().sum::<f64>();
        assert!(sum.abs() < 1e-9, "hyperplane residual {sum}");
        for (x, u) in a.iter().zip(&ub) {
            assert!(*x >= 0.0 && *x <= *u + 1e-12);
        }
    }

    #[test]
    fn interior_two_point_problem_has_known_solution() {
        // K₁₂ = 1/2, y = (−5, 5), ε = 0, C = 100: optimum β = (−10, 10),
        // dual objective 50, bias 0.
        let k = vec![1.0, 0.5, 0.5, 1.0];
        let y = [-5.0, 5.0];
        let sol = solve_svr_dual(&k, &y, 100.0, 0.0);
        assert!(sol.converged, "gap = {}", sol.duality_gap);
        assert!((sol.beta[0] + 10.0).abs() < 1e-5);
        assert!((sol.beta[1] - 10.0).abs() < 1e-5);
        assert!((sol.dual_objective - 50.0).abs() < 1e-6);
        assert!(sol.bias.abs() < 1e-5);
    }

    #[test]
    fn box_clipped_two_point_problem_matches_hand_solution() {
        // Same geometry with C = 4: both coefficients clip to the box,
        // dual objective −½·16 + 40 = 32, and the bias interval is
        // [−3, 3] with zero duality gap anywhere inside it.
        let k = vec![1.0, 0.5, 0.5, 1.0];
        let y = [-5.0, 5.0];
        let sol = solve_svr_dual(&k, &y, 4.0, 0.0);
        assert!(sol.converged);
        assert!((sol.beta[0] + 4.0).abs() < 1e-6);
        assert!((sol.beta[1] - 4.0).abs() < 1e-6);
        assert!((sol.dual_objective - 32.0).abs() < 1e-7);
        assert!((sol.bias_lo + 3.0).abs() < 1e-5);
        assert!((sol.bias_hi - 3.0).abs() < 1e-5);
        assert!(sol.duality_gap.abs() < 1e-7);
    }

    #[test]
    fn constant_targets_solve_to_zero_coefficients() {
        let points: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.5]).collect();
        let k = rbf_matrix(&points, 0.7);
        let y = [3.0; 6];
        let sol = solve_svr_dual(&k, &y, 10.0, 0.25);
        assert!(sol.converged);
        assert!(sol.beta.iter().all(|b| b.abs() < 1e-9));
        assert!((sol.bias - 3.0).abs() < 1e-9);
        assert!(sol.dual_objective.abs() < 1e-9);
    }

    #[test]
    fn eigen_helpers_match_hand_values() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3.
        let m = vec![2.0, 1.0, 1.0, 2.0];
        assert!((power_iteration_max_eigen(&m, 2) - 3.0).abs() < 1e-9);
        assert!((min_eigen_symmetric(&m, 2) - 1.0).abs() < 1e-9);
        let points: Vec<Vec<f64>> = (0..8).map(|i| vec![(i as f64).sqrt()]).collect();
        let k = rbf_matrix(&points, 1.3);
        assert!(min_eigen_symmetric(&k, 8) >= -1e-10);
    }

    #[test]
    fn certificate_gap_vanishes_at_the_reported_optimum() {
        let points: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 * 0.3, (i % 3) as f64]).collect();
        let k = rbf_matrix(&points, 0.6);
        let y: Vec<f64> = (0..10).map(|i| (i as f64 * 0.7).sin() * 2.0 + 1.0).collect();
        let sol = solve_svr_dual(&k, &y, 5.0, 0.05);
        assert!(sol.converged);
        let cs = vec![5.0; 10];
        let (dual, primal) = certificate(&k, &y, &cs, &cs, 0.05, &sol.beta, sol.bias);
        assert!((dual - sol.dual_objective).abs() < 1e-8);
        assert!(primal - dual >= -1e-9);
        assert!(primal - dual < 1e-6);
    }
}
