//! The steps behind each subcommand, callable without the binary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::corpus::{
    build_gold_standard, read_review_records, DataElementQuery, ReferenceSummary, SelectionRules,
    TrainingCorpus,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, extract_sentences, read_gold, ArticlePredictions, EvalReport, PredictionsFile};
use crate::features::{fit_feature_space, FeatureSpace, FeatureVector};
use crate::io::read_json;
use crate::select::{grid_search_c, CrossValidator, GridSearchConfig, GridSearchResult};
use crate::svm::{class_weights, weighting_registry, LinearModel, TrainOptions};
use crate::text::Document;

/// `.txt` files directly inside `dir`, sorted by name.
pub fn article_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "txt") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Every article in `dir`, keyed by file stem.
pub fn load_articles(dir: &Path) -> Result<BTreeMap<String, Document>> {
    article_files(dir)?
        .iter()
        .map(|p| Document::from_file(p).map(|d| (d.id.clone(), d)))
        .collect()
}

pub struct CorpusBuild {
    pub corpus: TrainingCorpus,
    pub summaries: Vec<ReferenceSummary>,
}

impl CorpusBuild {
    pub fn summary_text(&self) -> String {
        let c = &self.corpus;
        let mut out = format!(
            "element_kind={} alpha={} beta={} min_match_floor={} seed={}\n",
            c.element_kind, c.alpha, c.beta, c.min_match_floor, c.seed
        );
        let width = self
            .summaries
            .iter()
            .map(|s| s.reference_id.len())
            .max()
            .unwrap_or(0)
            .max("reference".len());
        let _ = writeln!(
            out,
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>8}",
            "reference", "sentences", "positive", "negative", "excluded"
        );
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "{:<width$}  {:>9}  {:>9}  {:>9}  {:>8}",
                s.reference_id, s.sentences, s.positives, s.negatives, s.excluded
            );
        }
        let _ = writeln!(
            out,
            "total: {} positive, {} negative",
            c.positives.len(),
            c.negatives.len()
        );
        out
    }
}

pub fn build_corpus(
    reviews: &Path,
    articles: &Path,
    rules: SelectionRules,
    element_kind: &str,
    seed: u64,
) -> Result<CorpusBuild> {
    rules.validate()?;
    let records = read_review_records(reviews)?;
    let queries = records
        .iter()
        .filter(|r| r.element_kind == element_kind)
        .map(DataElementQuery::from_record)
        .collect::<Result<Vec<_>>>()?;
    let documents = load_articles(articles)?;
    let (mut corpus, summaries) = build_gold_standard(&queries, &documents, rules, element_kind)?;
    corpus.seed = seed;
    Ok(CorpusBuild { corpus, summaries })
}

/// Feature space fitted on the corpus, plus its vectors and ±1 labels in
/// serialization order.
pub struct TrainingData {
    pub space: FeatureSpace,
    pub vectors: Vec<FeatureVector>,
    pub labels: Vec<f64>,
}

pub fn training_data(corpus: &TrainingCorpus, binary: bool) -> Result<TrainingData> {
    let space = fit_feature_space(corpus, binary)?;
    let instances = corpus.instances();
    Ok(TrainingData {
        vectors: instances.iter().map(|i| space.vectorize(&i.sentence)).collect(),
        labels: instances.iter().map(|i| i.label.sign()).collect(),
        space,
    })
}

pub fn select_model(data: &TrainingData, grid: &GridSearchConfig, weighting: &str) -> Result<GridSearchResult> {
    grid.validate()?;
    let scheme = weighting_registry().get(weighting)?;
    let cv = CrossValidator::new(&data.vectors, &data.labels, data.space.n_features(), grid, scheme)?;
    grid_search_c(&cv, grid)
}

pub struct TrainSettings<'a> {
    pub c: f64,
    pub weighting: &'a str,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

pub fn train_model(corpus: &TrainingCorpus, data: TrainingData, s: &TrainSettings) -> Result<LinearModel> {
    let scheme = weighting_registry().get(s.weighting)?;
    let n_pos = data.labels.iter().filter(|&&y| y > 0.0).count();
    let weights = class_weights(n_pos, data.labels.len() - n_pos, scheme.as_ref())?;
    let opts = TrainOptions {
        tolerance: s.tolerance,
        max_iterations: s.max_iterations,
        seed: s.seed,
        ..TrainOptions::new(s.c, weights)
    };
    let model = LinearModel::train(&corpus.element_kind, data.space, &data.vectors, &data.labels, &opts)?;
    if let Some(r) = model.report.as_ref().filter(|r| !r.converged) {
        log::warn!(
            "training stopped after {} iterations with duality gap {:e}",
            r.iterations,
            r.duality_gap
        );
    }
    Ok(model)
}

/// Candidates for each readable article. Unreadable files are skipped with
/// a warning; it is an error only when every file fails.
pub fn extract(model: &LinearModel, files: &[PathBuf], seed: u64) -> Result<PredictionsFile> {
    let mut articles = Vec::new();
    let mut last_err = None;
    for path in files {
        match Document::from_file(path) {
            Ok(doc) => articles.push(ArticlePredictions {
                candidates: extract_sentences(model, &doc),
                article_id: doc.id,
            }),
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                last_err = Some(e);
            }
        }
    }
    match last_err {
        Some(e) if articles.is_empty() => Err(e),
        _ => Ok(PredictionsFile::new(seed, articles)),
    }
}

pub fn evaluate_files(predictions: &Path, gold: &Path) -> Result<EvalReport> {
    let preds: PredictionsFile = read_json(predictions)?;
    let mut report = evaluate(&preds.predicted_sets(), &read_gold(gold)?)?;
    report.seed = Some(preds.seed);
    Ok(report)
}

/// Numbered sentences of one article, for writing gold files by hand.
pub fn annotate(doc: &Document) -> String {
    let mut out = String::new();
    for s in &doc.sentences {
        let text = s.text.split_whitespace().collect::<Vec<_>>().join(" ");
        let _ = writeln!(out, "{:>4}  {text}", s.index);
    }
    out
}
