//! Manual timing probe for the solver on realistic training sizes.
//!
//! Run with `cargo test -p loadcast-core --test solver_probe -- --ignored
//! --nocapture` to see per-fit wall time, iteration counts, and
//! convergence flags before committing to a grid-search budget.

use std::time::Instant;

use loadcast_core::features::{extract_features, Preprocessor};
use loadcast_core::loadgen::{generate_profile, split_train_test, GeneratorConfig};
use loadcast_core::svr::{train_svr, SvrParams};

#[test]
#[ignore]
fn timing_probe() {
    let series = generate_profile(&GeneratorConfig::default()).unwrap();
    let (train, _) = split_train_test(&series, 0.2).unwrap();
    let x = extract_features(&train);
    let y = train.values();

    let probe_params = SvrParams::new(10.0, 0.1, 1.0);
    let full_pre = Preprocessor::fit(&probe_params.preprocess, &x).unwrap();
    let design = full_pre.apply(&x).unwrap();
    let p = design.n_cols() as f64;
    let total = design.data().len() as f64;
    let mean = design.data().iter().sum::<f64>() / total;
    let var = design
        .data()
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / total;
    let gamma = 1.0 / (p * var);
    println!("n_train={} p={} pooled_var={var:.4} gamma={gamma:.6}", y.len(), p as usize);

    for &n in &[1564usize, 3128, 7820] {
        let xs = x.slice_rows(0..n).unwrap();
        let ys = &y[..n];
        for &(c, eps) in &[(10.0, 0.1), (100.0, 0.01)] {
            let params = SvrParams::new(c, eps, gamma);
            let t0 = Instant::now();
            let model = train_svr(&xs, ys, &params).unwrap();
            let dt = t0.elapsed().as_secs_f64();
            let m = &model.training_meta;
            println!(
                "n={n} c={c} eps={eps}: {dt:.2}s iters={} converged={} gap={:.3e} kkt={:.3e} svs={} tol={:.1e}",
                m.iterations, m.converged, m.final_duality_gap, m.final_kkt_violation,
                m.support_vector_count, m.solved_tol
            );
        }
    }
}
