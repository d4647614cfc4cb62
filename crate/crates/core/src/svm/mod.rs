//! Class-weighted linear soft-margin SVM.

pub mod smo;
pub mod weighting;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::features::{FeatureSpace, FeatureVector, Vocabulary};
use crate::io::{read_json, write_atomic, SCHEMA_VERSION};
use crate::text::Sentence;

pub use weighting::{class_weights, weighting_registry, Balanced, ClassWeights, Uniform, WeightingScheme};

/// Model format version; the bias term is not regularized.
pub const MODEL_VERSION: &str = "1.0-unregularized-bias";

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub c: f64,
    pub weights: ClassWeights,
    /// Allowed gap between the returned and the optimal primal objective.
    pub tolerance: f64,
    /// Cap on pair updates, with each polishing pass counted as one.
    pub max_iterations: usize,
    pub seed: u64,
    /// Keep the per-iteration dual objective in the report.
    pub record_trace: bool,
}

impl TrainOptions {
    pub fn new(c: f64, weights: ClassWeights) -> Self {
        TrainOptions {
            c,
            weights,
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            seed: 0,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    #[serde(serialize_with = "crate::g17::serialize")]
    pub objective: f64,
    #[serde(serialize_with = "crate::g17::serialize")]
    pub duality_gap: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip)]
    pub trace: Vec<f64>,
}

/// Weighted primal objective `½‖w‖² + C Σ weight(yᵢ) max(0, 1 − yᵢ(w·xᵢ + b))`.
pub fn objective(
    weights: &[f64],
    bias: f64,
    vectors: &[FeatureVector],
    labels: &[f64],
    c: f64,
    class_weights: ClassWeights,
) -> f64 {
    let reg = 0.5 * weights.iter().map(|w| w * w).sum::<f64>();
    let loss: f64 = vectors
        .iter()
        .zip(labels)
        .map(|(x, &y)| class_weights.for_sign(y) * (1.0 - y * (x.dot(weights) + bias)).max(0.0))
        .sum();
    reg + c * loss
}

/// Minimizes the weighted soft-margin objective over `(w, b)`.
///
/// Returns the weights (length `n_features`), the bias and a report whose
/// `objective` is the primal value at the returned point. Running out of
/// iterations is reported through `converged = false`.
pub fn train_weights(
    vectors: &[FeatureVector],
    labels: &[f64],
    n_features: usize,
    opts: &TrainOptions,
) -> Result<(Vec<f64>, f64, TrainReport)> {
    let refs: Vec<&FeatureVector> = vectors.iter().collect();
    train_weights_ref(&refs, labels, n_features, opts)
}

/// [`train_weights`] over borrowed vectors, e.g. a cross-validation fold.
pub fn train_weights_ref(
    vectors: &[&FeatureVector],
    labels: &[f64],
    n_features: usize,
    opts: &TrainOptions,
) -> Result<(Vec<f64>, f64, TrainReport)> {
    if vectors.len() != labels.len() {
        return Err(Error::InvalidData(format!(
            "{} vectors but {} labels",
            vectors.len(),
            labels.len()
        )));
    }
    if !(opts.c > 0.0) || !opts.c.is_finite() {
        return Err(Error::InvalidParameter(format!("C must be positive, got {}", opts.c)));
    }
    if !(opts.weights.positive > 0.0 && opts.weights.negative > 0.0) {
        return Err(Error::InvalidParameter("class weights must be positive".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y > 0.0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass { n_pos, n_neg });
    }
    if let Some(bad) = vectors.iter().flat_map(|v| &v.entries).find(|e| e.0 >= n_features) {
        return Err(Error::InvalidData(format!(
            "feature column {} outside 0..{n_features}",
            bad.0
        )));
    }

    let problem = smo::Problem {
        x: vectors.to_vec(),
        y: labels.iter().map(|&y| if y > 0.0 { 1.0 } else { -1.0 }).collect(),
        upper: labels.iter().map(|&y| opts.c * opts.weights.for_sign(y)).collect(),
        n_features,
    };
    let sol = smo::solve(
        &problem,
        &smo::SolverOptions {
            tolerance: opts.tolerance,
            max_iterations: opts.max_iterations,
            seed: opts.seed,
            record_trace: opts.record_trace,
        },
    );
    let report = TrainReport {
        objective: sol.primal,
        duality_gap: (sol.primal - sol.dual).max(0.0),
        iterations: sol.iterations,
        converged: sol.converged,
        trace: sol.trace,
    };
    Ok((sol.weights, sol.bias, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub element_kind: String,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    pub class_weights: ClassWeights,
    pub feature_space: FeatureSpace,
    pub seed: u64,
    pub report: Option<TrainReport>,
    pub trace_path: Option<String>,
}

impl LinearModel {
    pub fn train(
        element_kind: &str,
        feature_space: FeatureSpace,
        vectors: &[FeatureVector],
        labels: &[f64],
        opts: &TrainOptions,
    ) -> Result<Self> {
        let (weights, bias, report) =
            train_weights(vectors, labels, feature_space.n_features(), opts)?;
        Ok(LinearModel {
            element_kind: element_kind.to_string(),
            weights,
            bias,
            c: opts.c,
            class_weights: opts.weights,
            feature_space,
            seed: opts.seed,
            report: Some(report),
            trace_path: None,
        })
    }

    pub fn margin(&self, v: &FeatureVector) -> f64 {
        v.dot(&self.weights) + self.bias
    }

    /// Label and margin; a margin of exactly zero is negative.
    pub fn predict(&self, sentence: &Sentence) -> (Label, f64) {
        let m = self.margin(&self.feature_space.vectorize(sentence));
        (if m > 0.0 { Label::Positive } else { Label::Negative }, m)
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            schema_version: SCHEMA_VERSION,
            version: MODEL_VERSION.to_string(),
            element_kind: self.element_kind.clone(),
            c: self.c,
            class_weights: self.class_weights,
            bias: self.bias,
            binary_features: self.feature_space.binary,
            seed: self.seed,
            training: self.report.clone(),
            trace_path: self.trace_path.clone(),
            feature_space: Vocabulary(self.feature_space.clone()),
            weights: self.weights.clone(),
        }
    }

    pub fn from_file(file: ModelFile) -> Result<Self> {
        let mut space = file.feature_space.0;
        space.binary = file.binary_features;
        if file.weights.len() != space.n_features() {
            return Err(Error::InvalidData(format!(
                "model has {} weights for {} features",
                file.weights.len(),
                space.n_features()
            )));
        }
        Ok(LinearModel {
            element_kind: file.element_kind,
            weights: file.weights,
            bias: file.bias,
            c: file.c,
            class_weights: file.class_weights,
            feature_space: space,
            seed: file.seed,
            report: file.training,
            trace_path: file.trace_path,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_file())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_file(read_json(path)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub version: String,
    pub element_kind: String,
    #[serde(rename = "C", serialize_with = "crate::g17::serialize")]
    pub c: f64,
    pub class_weights: ClassWeights,
    #[serde(serialize_with = "crate::g17::serialize")]
    pub bias: f64,
    pub binary_features: bool,
    pub seed: u64,
    pub training: Option<TrainReport>,
    pub trace_path: Option<String>,
    pub feature_space: Vocabulary,
    #[serde(serialize_with = "crate::g17::vec::serialize")]
    pub weights: Vec<f64>,
}
