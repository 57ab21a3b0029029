//! ε-insensitive support vector regression with an RBF kernel.
//!
//! Training fits the preprocessing pipeline on the raw feature matrix,
//! solves the dual problem with a sequential-minimal-optimization solver,
//! and keeps only the points with nonzero dual coefficients. A trained
//! model is a plain serializable value: predictions and the duality-gap
//! certificate can be recomputed from it alone.

mod kernel;
mod smo;

pub use kernel::rbf_kernel;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, PreprocessConfig, Preprocessor};

/// Bumped when the serialized model layout changes incompatibly.
pub const MODEL_FORMAT_VERSION: u32 = 1;

pub const DEFAULT_TOL: f64 = 1e-3;
pub const DEFAULT_MAX_ITER: u64 = 1_000_000;
pub const DEFAULT_CACHE_MB: usize = 512;

/// Hyperparameters and solver settings for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrParams {
    /// Box constraint on each dual coefficient.
    pub c: f64,
    /// Half-width of the zero-loss tube around the targets.
    pub epsilon: f64,
    /// RBF kernel width.
    pub gamma: f64,
    /// Initial KKT violation tolerance; the solver tightens it further
    /// until the duality-gap certificate is met.
    pub tol: f64,
    /// Cap on pair updates across all tolerance levels.
    pub max_iter: u64,
    /// Kernel cache budget in mebibytes.
    pub cache_mb: usize,
    pub preprocess: PreprocessConfig,
}

impl SvrParams {
    pub fn new(c: f64, epsilon: f64, gamma: f64) -> Self {
        SvrParams {
            c,
            epsilon,
            gamma,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            cache_mb: DEFAULT_CACHE_MB,
            preprocess: PreprocessConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::invalid(format!("c must be positive, got {}", self.c)));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::invalid(format!(
                "epsilon must be nonnegative, got {}",
                self.epsilon
            )));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::invalid(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::invalid(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        if self.preprocess.poly_degree == 0 {
            return Err(Error::invalid("poly_degree must be at least 1"));
        }
        Ok(())
    }
}

/// Solver outcome recorded alongside the fitted coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub iterations: u64,
    /// True when the duality-gap certificate was met.
    pub converged: bool,
    pub support_vector_count: usize,
    /// Maximal first-order KKT violation at exit.
    pub final_kkt_violation: f64,
    pub final_duality_gap: f64,
    pub dual_objective: f64,
    /// Working tolerance in effect when the solver stopped.
    pub solved_tol: f64,
}

/// A trained model: the preprocessing pipeline fitted on the training
/// features, the support vectors in preprocessed coordinates, and their
/// dual coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub format_version: u32,
    pub params: SvrParams,
    pub preprocessing: Preprocessor,
    /// Support vectors in preprocessed coordinates, one row each.
    pub support_vectors: FeatureMatrix,
    /// Positions of the support vectors in the training set.
    pub support_indices: Vec<usize>,
    /// β_i = α⁺_i − α⁻_i for each support vector, in (−C, 0) ∪ (0, C].
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    pub training_meta: TrainingMeta,
}

/// Trains on raw (unpreprocessed) features and targets.
///
/// Reaching the iteration cap is not an error: the model is still usable
/// and `training_meta.converged` records the shortfall.
pub fn train_svr(x: &FeatureMatrix, y: &[f64], params: &SvrParams) -> Result<SvrModel> {
    params.validate()?;
    if x.n_rows() != y.len() {
        return Err(Error::invalid(format!(
            "feature rows ({}) and targets ({}) differ",
            x.n_rows(),
            y.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if let Some(bad) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite target value {bad}")));
    }

    let preprocessing = Preprocessor::fit(&params.preprocess, x)?;
    let design = preprocessing.apply(x)?;

    let solution = smo::solve(&smo::SmoProblem {
        points: design.data(),
        dim: design.n_cols(),
        targets: y,
        c: params.c,
        epsilon: params.epsilon,
        gamma: params.gamma,
        tol: params.tol,
        max_iter: params.max_iter,
        cache_mb: params.cache_mb,
    });

    let mut support_rows: Vec<Vec<f64>> = Vec::new();
    let mut support_indices = Vec::new();
    let mut dual_coefs = Vec::new();
    for (i, &beta) in solution.beta.iter().enumerate() {
        if beta != 0.0 {
            support_rows.push(design.row(i).to_vec());
            support_indices.push(i);
            dual_coefs.push(beta);
        }
    }
    let support_vectors = FeatureMatrix::from_rows(design.column_names().to_vec(), &support_rows)?;
    let support_vector_count = dual_coefs.len();

    Ok(SvrModel {
        format_version: MODEL_FORMAT_VERSION,
        params: params.clone(),
        preprocessing,
        support_vectors,
        support_indices,
        dual_coefs,
        bias: solution.bias,
        training_meta: TrainingMeta {
            iterations: solution.iterations,
            converged: solution.converged,
            support_vector_count,
            final_kkt_violation: solution.kkt_violation,
            final_duality_gap: solution.duality_gap,
            dual_objective: solution.dual_objective,
            solved_tol: solution.solved_tol,
        },
    })
}

impl SvrModel {
    /// Predicts targets for raw feature rows.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        let design = self.preprocessing.apply(x)?;
        Ok(self
            .decision_offsets(&design)
            .into_iter()
            .map(|o| o + self.bias)
            .collect())
    }

    /// Σ_j β_j·K(sv_j, x_i) for each row of `design`, without the bias.
    fn decision_offsets(&self, design: &FeatureMatrix) -> Vec<f64> {
        design
            .rows()
            .map(|row| {
                self.support_vectors
                    .rows()
                    .zip(&self.dual_coefs)
                    .map(|(sv, beta)| beta * kernel::rbf(sv, row, self.params.gamma))
                    .sum()
            })
            .collect()
    }

    /// Recomputes the duality gap on the training set the model was fitted
    /// to. At an exact optimum this is 0; it is nonnegative up to rounding
    /// for any dual-feasible solution.
    pub fn duality_gap(&self, x: &FeatureMatrix, y: &[f64]) -> Result<f64> {
        if x.n_rows() != y.len() {
            return Err(Error::invalid(format!(
                "feature rows ({}) and targets ({}) differ",
                x.n_rows(),
                y.len()
            )));
        }
        if let Some(&bad) = self.support_indices.iter().find(|&&i| i >= y.len()) {
            return Err(Error::invalid(format!(
                "support index {bad} out of range for {} training rows",
                y.len()
            )));
        }
        let design = self.preprocessing.apply(x)?;
        let offsets = self.decision_offsets(&design);

        let mut quad = 0.0;
        let mut abs_sum = 0.0;
        let mut y_dot = 0.0;
        for (&idx, &beta) in self.support_indices.iter().zip(&self.dual_coefs) {
            quad += beta * offsets[idx];
            abs_sum += beta.abs();
            y_dot += beta * y[idx];
        }
        let dual = -0.5 * quad - self.params.epsilon * abs_sum + y_dot;

        let mut hinge = 0.0;
        for (o, &target) in offsets.iter().zip(y) {
            let slack = (target - o - self.bias).abs() - self.params.epsilon;
            if slack > 0.0 {
                hinge += slack;
            }
        }
        let primal = 0.5 * quad + self.params.c * hinge;
        Ok(primal - dual)
    }

    /// Structural checks applied when loading a serialized model.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model format version {} (expected {})",
                self.format_version, MODEL_FORMAT_VERSION
            )));
        }
        self.params.validate()?;
        if self.support_vectors.n_rows() != self.dual_coefs.len()
            || self.support_indices.len() != self.dual_coefs.len()
        {
            return Err(Error::invalid(format!(
                "support vectors ({}), indices ({}) and coefficients ({}) differ in count",
                self.support_vectors.n_rows(),
                self.support_indices.len(),
                self.dual_coefs.len()
            )));
        }
        let bound = self.params.c * (1.0 + 1e-9);
        if self.dual_coefs.iter().any(|b| !b.is_finite() || b.abs() > bound) {
            return Err(Error::invalid("dual coefficient outside [-c, c]"));
        }
        if !self.bias.is_finite() {
            return Err(Error::invalid("bias is not finite"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: SvrModel = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn write_json_file(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read_json_file(path: &std::path::Path) -> Result<Self> {
        SvrModel::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix_1d(values: &[f64]) -> FeatureMatrix {
        let rows: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
        FeatureMatrix::from_rows(vec!["x".into()], &rows).unwrap()
    }

    fn raw_params(c: f64, epsilon: f64, gamma: f64) -> SvrParams {
        SvrParams {
            preprocess: PreprocessConfig::identity(),
            ..SvrParams::new(c, epsilon, gamma)
        }
    }

    #[test]
    fn constant_targets_fit_with_zero_support_vectors() {
        let x = matrix_1d(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        let y = [7.25; 5];
        let model = train_svr(&x, &y, &raw_params(10.0, 0.5, 1.0)).unwrap();
        assert!(model.training_meta.converged);
        assert_eq!(model.training_meta.support_vector_count, 0);
        assert_eq!(model.support_vectors.n_rows(), 0);
        assert!((model.bias - 7.25).abs() < 1e-12);
        let preds = model.predict(&x).unwrap();
        assert!(preds.iter().all(|p| (p - 7.25).abs() < 1e-12));
    }

    #[test]
    fn predictions_track_a_smooth_target_within_epsilon() {
        let xs: Vec<f64> = (0..60).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x * 1.3).sin() * 2.0 + 0.5).collect();
        let x = matrix_1d(&xs);
        let model = train_svr(&x, &ys, &raw_params(50.0, 0.05, 2.0)).unwrap();
        assert!(model.training_meta.converged);
        let preds = model.predict(&x).unwrap();
        // Converged fits keep every training residual within the tube
        // plus a small solver slack.
        for (p, t) in preds.iter().zip(&ys) {
            assert!((p - t).abs() <= 0.05 + 1e-3, "residual {}", (p - t).abs());
        }
    }

    #[test]
    fn translating_targets_shifts_predictions_and_bias_only() {
        let xs: Vec<f64> = (0..30).map(|i| i as f64 * 0.2).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.cos()).collect();
        let shifted: Vec<f64> = ys.iter().map(|v| v + 100.0).collect();
        let x = matrix_1d(&xs);
        let params = raw_params(25.0, 0.01, 1.5);
        let a = train_svr(&x, &ys, &params).unwrap();
        let b = train_svr(&x, &shifted, &params).unwrap();
        // Individual coefficients are only determined up to the solver's
        // convergence slack, but the fitted function is stable: the two
        // models must agree up to the constant shift.
        assert!((b.bias - a.bias - 100.0).abs() < 1e-6);
        let pa = a.predict(&x).unwrap();
        let pb = b.predict(&x).unwrap();
        for (u, v) in pa.iter().zip(&pb) {
            assert!((v - u - 100.0).abs() < 1e-6, "shift drift {}", v - u - 100.0);
        }
    }

    #[test]
    fn gap_certificate_is_nonnegative_and_meets_target() {
        let xs: Vec<f64> = (0..40).map(|i| i as f64 * 0.15).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.4 * x + (x * 2.0).sin()).collect();
        let x = matrix_1d(&xs);
        let model = train_svr(&x, &ys, &raw_params(20.0, 0.1, 1.0)).unwrap();
        let gap = model.duality_gap(&x, &ys).unwrap();
        assert!(gap >= -1e-9, "gap = {gap}");
        let target = 1e-6_f64.max(1e-6 * model.training_meta.dual_objective.abs());
        assert!(gap <= target, "gap = {gap}, target = {target}");
    }

    #[test]
    fn training_applies_the_preprocessing_pipeline() {
        let rows: Vec<Vec<f64>> = (0..24)
            .map(|i| vec![i as f64, (i % 7) as f64])
            .collect();
        let x = FeatureMatrix::from_rows(vec!["a".into(), "b".into()], &rows).unwrap();
        let y: Vec<f64> = (0..24).map(|i| (i as f64 * 0.3).sin()).collect();
        let model = train_svr(&x, &y, &SvrParams::new(10.0, 0.05, 0.1)).unwrap();
        // Degree-2 expansion of 2 standardized columns: a, b, a², a·b, b².
        assert_eq!(model.support_vectors.n_cols(), 5);
        let preds = model.predict(&x).unwrap();
        assert_eq!(preds.len(), 24);
        assert!(preds.iter().all(|p| p.is_finite()));
    }

    #[test]
    fn iteration_cap_is_reported_not_fatal() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x * 3.0).sin()).collect();
        let x = matrix_1d(&xs);
        let mut params = raw_params(100.0, 0.001, 2.0);
        params.max_iter = 5;
        let model = train_svr(&x, &ys, &params).unwrap();
        assert!(!model.training_meta.converged);
        assert_eq!(model.training_meta.iterations, 5);
        assert!(model.predict(&x).is_ok());
    }

    #[test]
    fn model_json_round_trip_is_bit_exact() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.25).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
        let x = matrix_1d(&xs);
        let model = train_svr(&x, &ys, &raw_params(5.0, 0.02, 1.0)).unwrap();
        let restored = SvrModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(restored.bias.to_bits(), model.bias.to_bits());
        assert_eq!(restored.dual_coefs.len(), model.dual_coefs.len());
        for (a, b) in restored.dual_coefs.iter().zip(&model.dual_coefs) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(restored.support_indices, model.support_indices);
        let before = model.predict(&x).unwrap();
        let after = restored.predict(&x).unwrap();
        for (a, b) in before.iter().zip(&after) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn unsupported_format_version_is_rejected() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * 0.1).collect();
        let x = matrix_1d(&xs);
        let mut model = train_svr(&x, &ys, &raw_params(5.0, 0.1, 0.5)).unwrap();
        model.format_version = 99;
        let text = serde_json::to_string(&model).unwrap();
        let err = SvrModel::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("format version"));
    }

    #[test]
    fn invalid_params_are_rejected() {
        let x = matrix_1d(&[0.0, 1.0, 2.0]);
        let y = [1.0, 2.0, 3.0];
        for params in [
            raw_params(0.0, 0.1, 1.0),
            raw_params(1.0, -0.1, 1.0),
            raw_params(1.0, 0.1, 0.0),
            raw_params(f64::NAN, 0.1, 1.0),
        ] {
            assert!(train_svr(&x, &y, &params).is_err());
        }
        let mut zero_iter = raw_params(1.0, 0.1, 1.0);
        zero_iter.max_iter = 0;
        assert!(train_svr(&x, &y, &zero_iter).is_err());
    }

    #[test]
    fn mismatched_rows_and_targets_are_rejected() {
        let x = matrix_1d(&[0.0, 1.0, 2.0]);
        assert!(train_svr(&x, &[1.0, 2.0], &raw_params(1.0, 0.1, 1.0)).is_err());
        assert!(train_svr(&x, &[1.0, f64::INFINITY, 3.0], &raw_params(1.0, 0.1, 1.0)).is_err());
    }
}
