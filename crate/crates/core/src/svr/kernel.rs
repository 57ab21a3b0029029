//! RBF kernel evaluation and the kernel-row cache behind the solver.

use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{Error, Result};

/// exp(−gamma·‖x−z‖²); symmetric in its arguments, in (0, 1].
pub fn rbf_kernel(x: &[f64], z: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != z.len() {
        return Err(Error::invalid(format!(
            "kernel arguments differ in dimension: {} vs {}",
            x.len(),
            z.len()
        )));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::invalid("gamma must be positive and finite"));
    }
    Ok(rbf(x, z, gamma))
}

/// Hot-path kernel without argument checks; callers guarantee equal dims.
pub(crate) fn rbf(x: &[f64], z: &[f64], gamma: f64) -> f64 {
    let mut dist = 0.0;
    for (a, b) in x.iter().zip(z) {
        let d = a - b;
        dist += d * d;
    }
    (-gamma * dist).exp()
}

/// Kernel rows over a fixed point set, cached under a byte budget.
///
/// When the full n×n matrix fits the budget it is precomputed once
/// (exploiting symmetry); otherwise rows are computed on demand and kept
/// in an LRU map sized to the budget. Rows are shared as `Rc` slices so
/// the solver can hold two at once while the cache mutates.
pub(crate) struct KernelCache<'a> {
    points: &'a [f64],
    dim: usize,
    n: usize,
    gamma: f64,
    mode: Mode,
}

enum Mode {
    Full(Vec<Rc<[f64]>>),
    Lru {
        rows: HashMap<usize, Slot>,
        clock: u64,
        capacity: usize,
    },
}

struct Slot {
    row: Rc<[f64]>,
    last_used: u64,
}

impl<'a> KernelCache<'a> {
    pub fn new(points: &'a [f64], dim: usize, gamma: f64, cache_mb: usize) -> Self {
        let n = points.len() / dim;
        debug_assert_eq!(points.len(), n * dim);
        let budget_bytes = cache_mb.saturating_mul(1 << 20);
        let full_bytes = n.saturating_mul(n).saturating_mul(8);
        let mode = if full_bytes <= budget_bytes {
            Mode::Full(precompute_full(points, dim, n, gamma))
        } else {
            let capacity = (budget_bytes / (n * 8)).max(2);
            Mode::Lru {
                rows: HashMap::with_capacity(capacity + 1),
                clock: 0,
                capacity,
            }
        };
        KernelCache {
            points,
            dim,
            n,
            gamma,
            mode,
        }
    }

    /// Row i of the kernel matrix: K(x_i, x_j) for all j.
    pub fn row(&mut self, i: usize) -> Rc<[f64]> {
        match &mut self.mode {
            Mode::Full(rows) => rows[i].clone(),
            Mode::Lru {
                rows,
                clock,
                capacity,
            } => {
                *clock += 1;
                if let Some(slot) = rows.get_mut(&i) {
                    slot.last_used = *clock;
                    return slot.row.clone();
                }
                if rows.len() >= *capacity {
                    // Deterministic eviction: oldest stamp, ties broken by
                    // smallest index (map iteration order is arbitrary).
                    let victim = rows
                        .iter()
                        .map(|(&idx, slot)| (slot.last_used, idx))
                        .min()
                        .map(|(_, idx)| idx)
                        .expect("capacity >= 2 implies a victim exists");
                    rows.remove(&victim);
                }
                let row: Rc<[f64]> = compute_row(self.points, self.dim, self.n, self.gamma, i).into();
                rows.insert(
                    i,
                    Slot {
                        row: row.clone(),
                        last_used: *clock,
                    },
                );
                row
            }
        }
    }
}

fn compute_row(points: &[f64], dim: usize, n: usize, gamma: f64, i: usize) -> Vec<f64> {
    let xi = &points[i * dim..(i + 1) * dim];
    let mut row = Vec::with_capacity(n);
    for j in 0..n {
        row.push(rbf(xi, &points[j * dim..(j + 1) * dim], gamma));
    }
    row[i] = 1.0;
    row
}

fn precompute_full(points: &[f64], dim: usize, n: usize, gamma: f64) -> Vec<Rc<[f64]>> {
    let mut rows: Vec<Rc<[f64]>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = vec![0.0; n];
        for (j, prior) in rows.iter().enumerate().take(i) {
            row[j] = prior[i];
        }
        row[i] = 1.0;
        let xi = &points[i * dim..(i + 1) * dim];
        for (j, slot) in row.iter_mut().enumerate().skip(i + 1) {
            *slot = rbf(xi, &points[j * dim..(j + 1) * dim], gamma);
        }
        rows.push(row.into());
    }
    rows
}
