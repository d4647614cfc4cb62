//! Choosing the regularization parameter C by stratified k-fold cross
//! validation and an interval-refinement grid search.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::io::write_bytes_atomic;
use crate::registry::{Named, Registry};
use crate::svm::{class_weights, train_weights_ref, TrainOptions, WeightingScheme};

/// Confusion counts on one held-out fold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Quality of a fold's predictions; `None` when undefined on that fold.
pub trait SelectionMetric: Named + Send + Sync {
    fn score(&self, c: &Confusion) -> Option<f64>;
}

/// Recall on the positive class.
pub struct Recall;

impl Named for Recall {
    fn name(&self) -> &'static str {
        "recall"
    }
}

impl SelectionMetric for Recall {
    fn score(&self, c: &Confusion) -> Option<f64> {
        let positives = c.tp + c.fn_;
        (positives > 0).then(|| c.tp as f64 / positives as f64)
    }
}

/// Fraction of held-out instances classified correctly.
pub struct Accuracy;

impl Named for Accuracy {
    fn name(&self) -> &'static str {
        "accuracy"
    }
}

impl SelectionMetric for Accuracy {
    fn score(&self, c: &Confusion) -> Option<f64> {
        let n = c.total();
        (n > 0).then(|| (c.tp + c.tn) as f64 / n as f64)
    }
}

pub fn metric_registry() -> Registry<dyn SelectionMetric> {
    let mut r: Registry<dyn SelectionMetric> = Registry::new("selection metric");
    r.register(Arc::new(Recall));
    r.register(Arc::new(Accuracy));
    r
}

/// Accepts the long spelling `recall_positive` as well.
pub fn metric_by_name(name: &str) -> Result<Arc<dyn SelectionMetric>> {
    let name = if name == "recall_positive" { "recall" } else { name };
    metric_registry().get(name)
}

/// Splits instance indices into `k` folds.
///
/// Positives and negatives are shuffled separately and dealt round-robin,
/// positives first, so fold sizes differ by at most one and so do the
/// per-fold positive counts. Each fold is returned sorted.
pub fn kfold_split(labels: &[f64], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let n = labels.len();
    if k < 2 || n < k {
        return Err(Error::TooFewInstances { n, k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<usize> = (0..n).filter(|&i| labels[i] > 0.0).collect();
    let mut neg: Vec<usize> = (0..n).filter(|&i| labels[i] <= 0.0).collect();
    if pos.len() < k || neg.len() < k {
        log::warn!(
            "{} positives and {} negatives cannot fill {k} stratified folds; some folds lack a class",
            pos.len(),
            neg.len()
        );
    }
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (slot, idx) in pos.into_iter().chain(neg).enumerate() {
        folds[slot % k].push(idx);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub c: f64,
    /// One entry per fold; `None` where the metric is undefined.
    pub fold_metrics: Vec<Option<f64>>,
    /// Mean over the defined fold values.
    pub mean: f64,
}

impl CvResult {
    pub fn from_folds(c: f64, fold_metrics: Vec<Option<f64>>) -> Result<Self> {
        let defined: Vec<f64> = fold_metrics.iter().flatten().copied().collect();
        if defined.is_empty() {
            return Err(Error::InvalidData(format!(
                "selection metric is undefined on every fold at C={c}"
            )));
        }
        let mean = defined.iter().sum::<f64>() / defined.len() as f64;
        Ok(CvResult {
            c,
            fold_metrics,
            mean,
        })
    }
}

/// Anything that can score a candidate C. The grid search only sees this.
pub trait CvEvaluator {
    fn evaluate(&self, c: f64) -> Result<CvResult>;
}

impl<F> CvEvaluator for F
where
    F: Fn(f64) -> Result<CvResult>,
{
    fn evaluate(&self, c: f64) -> Result<CvResult> {
        self(c)
    }
}

/// k-fold cross validation of the weighted SVM over fixed folds.
pub struct CrossValidator<'a> {
    pub vectors: &'a [FeatureVector],
    pub labels: &'a [f64],
    pub n_features: usize,
    pub folds: Vec<Vec<usize>>,
    pub metric: Arc<dyn SelectionMetric>,
    pub weighting: Arc<dyn WeightingScheme>,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl<'a> CrossValidator<'a> {
    pub fn new(
        vectors: &'a [FeatureVector],
        labels: &'a [f64],
        n_features: usize,
        config: &GridSearchConfig,
        weighting: Arc<dyn WeightingScheme>,
    ) -> Result<Self> {
        Ok(CrossValidator {
            vectors,
            labels,
            n_features,
            folds: kfold_split(labels, config.k, config.seed)?,
            metric: metric_by_name(&config.metric)?,
            weighting,
            tolerance: config.tolerance,
            max_iterations: config.max_iterations,
            seed: config.seed,
        })
    }

    /// Trains on all folds but `fold` and counts outcomes on `fold`.
    pub fn confusion(&self, c: f64, fold: usize) -> Result<Confusion> {
        let mut held_out = vec![false; self.labels.len()];
        for &i in &self.folds[fold] {
            held_out[i] = true;
        }
        let train: Vec<usize> = (0..self.labels.len()).filter(|&i| !held_out[i]).collect();
        let xs: Vec<&FeatureVector> = train.iter().map(|&i| &self.vectors[i]).collect();
        let ys: Vec<f64> = train.iter().map(|&i| self.labels[i]).collect();
        let n_pos = ys.iter().filter(|&&y| y > 0.0).count();
        let weights = class_weights(n_pos, ys.len() - n_pos, self.weighting.as_ref())?;
        let opts = TrainOptions {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            seed: self.seed,
            ..TrainOptions::new(c, weights)
        };
        let (w, b, report) = train_weights_ref(&xs, &ys, self.n_features, &opts)?;
        if !report.converged {
            log::warn!(
                "fold {fold} at C={c}: stopped after {} iterations with gap {:e}",
                report.iterations,
                report.duality_gap
            );
        }
        let mut conf = Confusion::default();
        for &i in &self.folds[fold] {
            let positive = self.vectors[i].dot(&w) + b > 0.0;
            match (positive, self.labels[i] > 0.0) {
                (true, true) => conf.tp += 1,
                (true, false) => conf.fp += 1,
                (false, false) => conf.tn += 1,
                (false, true) => conf.fn_ += 1,
            }
        }
        Ok(conf)
    }
}

impl CvEvaluator for CrossValidator<'_> {
    fn evaluate(&self, c: f64) -> Result<CvResult> {
        let fold_metrics = (0..self.folds.len())
            .map(|f| self.confusion(c, f).map(|conf| self.metric.score(&conf)))
            .collect::<Result<Vec<_>>>()?;
        CvResult::from_folds(c, fold_metrics)
    }
}

/// Coarse stage of the search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CoarseGrid {
    /// 0.001, 0.01, ..., 1000 inside the range, plus the upper end.
    Decades,
    /// Every multiple of `step` inside the range, plus the upper end.
    Linear { step: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSearchConfig {
    /// Exclusive lower end of the C range.
    pub c_low: f64,
    /// Inclusive upper end of the C range.
    pub c_high: f64,
    pub k: usize,
    pub metric: String,
    pub refinement_decimals: u32,
    pub seed: u64,
    pub coarse: CoarseGrid,
    /// Solver tolerance used inside cross validation.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for GridSearchConfig {
    fn default() -> Self {
        GridSearchConfig {
            c_low: 1e-4,
            c_high: 1000.0,
            k: 10,
            metric: "recall".into(),
            refinement_decimals: 4,
            seed: 0,
            coarse: CoarseGrid::Decades,
            tolerance: crate::svm::DEFAULT_TOLERANCE,
            max_iterations: crate::svm::DEFAULT_MAX_ITERATIONS,
        }
    }
}

impl GridSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_low > 0.0 && self.c_low < self.c_high && self.c_high.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "C range ({}, {}] must satisfy 0 < low < high",
                self.c_low, self.c_high
            )));
        }
        if self.k < 2 {
            return Err(Error::InvalidParameter(format!("k={} must be at least 2", self.k)));
        }
        if self.refinement_decimals < 1 {
            return Err(Error::InvalidParameter("refinement_decimals must be at least 1".into()));
        }
        if let CoarseGrid::Linear { step } = self.coarse {
            if !(step > 0.0) {
                return Err(Error::InvalidParameter(format!("coarse step {step} must be positive")));
            }
        }
        metric_by_name(&self.metric)?;
        Ok(())
    }

    fn in_range(&self, c: f64) -> bool {
        c > self.c_low && c <= self.c_high
    }

    fn coarse_points(&self) -> Vec<f64> {
        let mut points: Vec<f64> = match self.coarse {
            CoarseGrid::Decades => (-3..=3).map(|e| 10f64.powi(e)).collect(),
            CoarseGrid::Linear { step } => {
                let first = (self.c_low / step).floor() as i64 + 1;
                let last = (self.c_high / step).floor() as i64;
                (first..=last).map(|i| self.round(i as f64 * step)).collect()
            }
        };
        points.retain(|&c| self.in_range(c));
        points.push(self.c_high);
        points
    }

    fn round(&self, c: f64) -> f64 {
        let scale = 10f64.powi(self.refinement_decimals as i32);
        (c * scale).round() / scale
    }

    fn finest_step(&self) -> f64 {
        10f64.powi(-(self.refinement_decimals as i32))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub stage: usize,
    #[serde(rename = "C", serialize_with = "crate::g17::serialize")]
    pub c: f64,
    #[serde(serialize_with = "serialize_folds")]
    pub fold_metrics: Vec<Option<f64>>,
    #[serde(serialize_with = "crate::g17::serialize")]
    pub mean: f64,
}

fn serialize_folds<S: serde::Serializer>(v: &[Option<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        match x {
            Some(x) => seq.serialize_element(
                &serde_json::value::RawValue::from_string(crate::g17::format(*x))
                    .expect("valid number"),
            )?,
            None => seq.serialize_element(&Option::<f64>::None)?,
        }
    }
    seq.end()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub best_c: f64,
    pub best_mean: f64,
    /// Every evaluation, ordered by stage then C.
    pub trace: Vec<TraceEntry>,
}

impl GridSearchResult {
    /// One JSON object per line.
    pub fn trace_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.trace {
            out.push_str(&serde_json::to_string(e).expect("trace entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_trace(&self, path: &Path) -> Result<()> {
        write_bytes_atomic(path, self.trace_jsonl().as_bytes())
    }
}

fn key(c: f64) -> i64 {
    (c * 1e9).round() as i64
}

struct Search<'a> {
    evaluator: &'a dyn CvEvaluator,
    config: &'a GridSearchConfig,
    seen: BTreeMap<i64, f64>,
    trace: Vec<TraceEntry>,
    best: Option<(f64, f64)>,
}

impl Search<'_> {
    /// Evaluates the not-yet-seen candidates in ascending order.
    fn stage(&mut self, stage: usize, mut candidates: Vec<f64>) -> Result<()> {
        candidates.retain(|&c| self.config.in_range(c));
        candidates.sort_by(f64::total_cmp);
        candidates.dedup_by_key(|c| key(*c));
        for c in candidates {
            if self.seen.contains_key(&key(c)) {
                continue;
            }
            let r = self.evaluator.evaluate(c)?;
            self.seen.insert(key(c), r.mean);
            let better = match self.best {
                None => true,
                Some((bc, bm)) => r.mean > bm + 1e-12 || ((r.mean - bm).abs() <= 1e-12 && c < bc),
            };
            if better {
                self.best = Some((c, r.mean));
            }
            self.trace.push(TraceEntry {
                stage,
                c,
                fold_metrics: r.fold_metrics,
                mean: r.mean,
            });
        }
        Ok(())
    }

    fn best_c(&self) -> f64 {
        self.best.expect("at least one evaluation").0
    }
}

/// Finds the C with the highest mean cross-validation metric.
///
/// Stage 0 evaluates the coarse grid. From the decade grid, stage 1 scans
/// the two decades around the best point at the spacing of each decade
/// (e.g. 0.1..0.9 and 2..9 around 1). Every later stage divides the spacing
/// by ten and evaluates the 18 points `best ± j·spacing`, j = 1..9, until
/// the spacing would drop below `10^-refinement_decimals`. Ties go to the
/// smaller C; points already evaluated are not repeated.
pub fn grid_search_c(evaluator: &dyn CvEvaluator, config: &GridSearchConfig) -> Result<GridSearchResult> {
    config.validate()?;
    let mut search = Search {
        evaluator,
        config,
        seen: BTreeMap::new(),
        trace: Vec::new(),
        best: None,
    };
    search.stage(0, config.coarse_points())?;

    let finest = config.finest_step() * (1.0 - 1e-9);
    let mut stage = 1;
    let mut spacing = match config.coarse {
        CoarseGrid::Linear { step } => step,
        CoarseGrid::Decades => {
            let center = search.best_c();
            let right = 10f64.powf(center.log10().floor());
            let left = right / 10.0;
            let mut candidates = Vec::new();
            for j in 1..=9 {
                if right >= finest {
                    candidates.push(config.round(center + j as f64 * right));
                }
                if left >= finest {
                    candidates.push(config.round(center - j as f64 * left));
                }
            }
            search.stage(stage, candidates)?;
            stage += 1;
            let best = search.best_c();
            if best < center {
                left
            } else {
                right
            }
        }
    };

    loop {
        spacing /= 10.0;
        if spacing < finest {
            break;
        }
        let center = search.best_c();
        let candidates = (1..=9)
            .flat_map(|j| {
                let d = j as f64 * spacing;
                [config.round(center - d), config.round(center + d)]
            })
            .collect();
        search.stage(stage, candidates)?;
        stage += 1;
    }

    let (best_c, best_mean) = search.best.expect("coarse grid is never empty");
    Ok(GridSearchResult {
        best_c,
        best_mean,
        trace: search.trace,
    })
}
