//! Test-only oracles and instance generators.
//!
//! Everything here is an independent reference implementation: a dense
//! projected-gradient solver for the SVR dual, a Newton-Raphson power-flow
//! solver, and a tiny self-contained RNG for generating random instances.
//! None of it shares code with the library under test, so agreement
//! between the two is meaningful evidence.

pub mod instances;
pub mod powerflow;
pub mod qp;

pub use instances::{random_svr_instance, SvrInstance, TinyRng};
pub use powerflow::{solve_newton, NrNetwork};
pub use qp::{predict, rbf, rbf_matrix, solve_svr_dual, solve_svr_dual_weighted, QpSolution};
