//! Per-class loss multipliers.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::{Named, Registry};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    #[serde(serialize_with = "crate::g17::serialize")]
    pub positive: f64,
    #[serde(serialize_with = "crate::g17::serialize")]
    pub negative: f64,
}

impl ClassWeights {
    pub const UNIFORM: ClassWeights = ClassWeights {
        positive: 1.0,
        negative: 1.0,
    };

    pub fn for_sign(&self, y: f64) -> f64 {
        if y > 0.0 {
            self.positive
        } else {
            self.negative
        }
    }
}

pub trait WeightingScheme: Named + Send + Sync {
    /// Weights for a training set with the given class counts. Both counts
    /// are positive.
    fn compute(&self, n_pos: usize, n_neg: usize) -> ClassWeights;
}

/// `N / (2 · N_c)`: each class contributes the same total weight.
pub struct Balanced;

impl Named for Balanced {
    fn name(&self) -> &'static str {
        "balanced"
    }
}

impl WeightingScheme for Balanced {
    fn compute(&self, n_pos: usize, n_neg: usize) -> ClassWeights {
        let n = (n_pos + n_neg) as f64;
        ClassWeights {
            positive: n / (2.0 * n_pos as f64),
            negative: n / (2.0 * n_neg as f64),
        }
    }
}

pub struct Uniform;

impl Named for Uniform {
    fn name(&self) -> &'static str {
        "uniform"
    }
}

impl WeightingScheme for Uniform {
    fn compute(&self, _n_pos: usize, _n_neg: usize) -> ClassWeights {
        ClassWeights::UNIFORM
    }
}

pub fn weighting_registry() -> Registry<dyn WeightingScheme> {
    let mut r: Registry<dyn WeightingScheme> = Registry::new("class weighting");
    r.register(Arc::new(Balanced));
    r.register(Arc::new(Uniform));
    r
}

/// Weights for the given counts under `scheme`; both classes must occur.
pub fn class_weights(n_pos: usize, n_neg: usize, scheme: &dyn WeightingScheme) -> Result<ClassWeights> {
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass { n_pos, n_neg });
    }
    Ok(scheme.compute(n_pos, n_neg))
}
