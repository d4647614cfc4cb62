//! Per-article precision/recall against index-based gold labels.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::io::{read_json, write_atomic, SCHEMA_VERSION};
use crate::svm::LinearModel;
use crate::text::Document;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleResult {
    pub article_id: String,
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    #[serde(serialize_with = "crate::g17::option::serialize")]
    pub recall: Option<f64>,
    #[serde(serialize_with = "crate::g17::option::serialize")]
    pub precision: Option<f64>,
}

impl ArticleResult {
    pub fn from_counts(article_id: impl Into<String>, tp: usize, fp: usize, fn_: usize) -> Self {
        ArticleResult {
            article_id: article_id.into(),
            true_positive: tp,
            false_positive: fp,
            false_negative: fn_,
            recall: ratio(tp, tp + fn_),
            precision: ratio(tp, tp + fp),
        }
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn score_article(
    predicted: &BTreeSet<usize>,
    gold: &BTreeSet<usize>,
    article_id: &str,
) -> ArticleResult {
    let tp = predicted.intersection(gold).count();
    ArticleResult::from_counts(article_id, tp, predicted.len() - tp, gold.len() - tp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub n_articles: usize,
    #[serde(serialize_with = "crate::g17::option::serialize")]
    pub macro_recall: Option<f64>,
    #[serde(serialize_with = "crate::g17::option::serialize")]
    pub macro_precision: Option<f64>,
    #[serde(serialize_with = "crate::g17::option::serialize")]
    pub micro_recall: Option<f64>,
    #[serde(serialize_with = "crate::g17::option::serialize")]
    pub micro_precision: Option<f64>,
    /// Sentences read per relevant sentence found, `1 / macro_precision`.
    #[serde(serialize_with = "crate::g17::option::serialize")]
    pub reading_burden: Option<f64>,
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Macro rates average the defined per-article rates; micro rates come
/// from summed counts.
pub fn aggregate(results: &[ArticleResult]) -> Result<AggregateReport> {
    if results.is_empty() {
        return Err(Error::NoResults);
    }
    let tp: usize = results.iter().map(|r| r.true_positive).sum();
    let fp: usize = results.iter().map(|r| r.false_positive).sum();
    let fn_: usize = results.iter().map(|r| r.false_negative).sum();
    let macro_precision = mean_defined(results.iter().map(|r| r.precision));
    Ok(AggregateReport {
        n_articles: results.len(),
        macro_recall: mean_defined(results.iter().map(|r| r.recall)),
        macro_precision,
        micro_recall: ratio(tp, tp + fn_),
        micro_precision: ratio(tp, tp + fp),
        reading_burden: macro_precision.filter(|&p| p > 0.0).map(|p| 1.0 / p),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub index: usize,
    #[serde(serialize_with = "crate::g17::serialize")]
    pub margin: f64,
    pub text: String,
}

/// Sentences the model labels positive, by margin descending (ties by
/// index).
pub fn extract_sentences(model: &LinearModel, article: &Document) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = article
        .sentences
        .iter()
        .filter_map(|s| match model.predict(s) {
            (Label::Positive, margin) => Some(Candidate {
                index: s.index,
                margin,
                text: s.text.clone(),
            }),
            (Label::Negative, _) => None,
        })
        .collect();
    out.sort_by(|a, b| b.margin.total_cmp(&a.margin).then(a.index.cmp(&b.index)));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticlePredictions {
    pub article_id: String,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionsFile {
    pub schema_version: u32,
    pub seed: u64,
    pub articles: Vec<ArticlePredictions>,
}

impl PredictionsFile {
    pub fn new(seed: u64, mut articles: Vec<ArticlePredictions>) -> Self {
        articles.sort_by(|a, b| a.article_id.cmp(&b.article_id));
        PredictionsFile {
            schema_version: SCHEMA_VERSION,
            seed,
            articles,
        }
    }

    pub fn predicted_sets(&self) -> BTreeMap<String, BTreeSet<usize>> {
        self.articles
            .iter()
            .map(|a| {
                (
                    a.article_id.clone(),
                    a.candidates.iter().map(|c| c.index).collect(),
                )
            })
            .collect()
    }

    /// Numbered candidate list per article.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for a in &self.articles {
            let _ = writeln!(out, "{} ({} candidates)", a.article_id, a.candidates.len());
            for c in &a.candidates {
                let _ = writeln!(out, "  [{}] {:+.4}  {}", c.index, c.margin, one_line(&c.text));
            }
        }
        out
    }
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Gold sentence indices per article id.
pub type Gold = BTreeMap<String, BTreeSet<usize>>;

/// Reads `{article_id: [indices], ...}`; a top-level `schema_version` key
/// is skipped.
pub fn read_gold(path: &Path) -> Result<Gold> {
    let raw: BTreeMap<String, serde_json::Value> = read_json(path)?;
    let mut gold = Gold::new();
    for (id, value) in raw {
        if id == "schema_version" {
            continue;
        }
        let indices: BTreeSet<usize> = serde_json::from_value(value).map_err(|e| {
            Error::InvalidData(format!("{}: gold entry `{id}`: {e}", path.display()))
        })?;
        gold.insert(id, indices);
    }
    Ok(gold)
}

pub fn write_gold(path: &Path, gold: &Gold) -> Result<()> {
    let mut map = serde_json::Map::new();
    map.insert("schema_version".into(), SCHEMA_VERSION.into());
    for (id, indices) in gold {
        map.insert(id.clone(), serde_json::to_value(indices).expect("indices serialize"));
    }
    write_atomic(path, &map)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    /// Seed of the run that produced the predictions, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub articles: Vec<ArticleResult>,
    pub aggregate: AggregateReport,
}

/// Scores every gold article; articles without predictions count as
/// predicting nothing. Predicted ids missing from the gold are an error.
pub fn evaluate(predicted: &BTreeMap<String, BTreeSet<usize>>, gold: &Gold) -> Result<EvalReport> {
    let unknown: Vec<&str> = predicted
        .keys()
        .filter(|id| !gold.contains_key(*id))
        .map(String::as_str)
        .collect();
    if !unknown.is_empty() {
        return Err(Error::InvalidData(format!(
            "predictions for articles absent from the gold file: {}",
            unknown.join(", ")
        )));
    }
    let empty = BTreeSet::new();
    let articles: Vec<ArticleResult> = gold
        .iter()
        .map(|(id, g)| score_article(predicted.get(id).unwrap_or(&empty), g, id))
        .collect();
    let aggregate = aggregate(&articles)?;
    Ok(EvalReport {
        schema_version: SCHEMA_VERSION,
        seed: None,
        articles,
        aggregate,
    })
}

/// Rounds `num / den` to `decimals` places, ties to even, without going
/// through floating point.
pub fn round_ratio(num: u64, den: u64, decimals: u32) -> String {
    assert!(den > 0, "zero denominator");
    let scale = 10u128.pow(decimals);
    let scaled = num as u128 * scale;
    let (den, mut q) = (den as u128, scaled / den as u128);
    let twice_rem = 2 * (scaled % den);
    if twice_rem > den || (twice_rem == den && q % 2 == 1) {
        q += 1;
    }
    let int = q / scale;
    if decimals == 0 {
        return int.to_string();
    }
    format!("{int}.{:0width$}", q % scale, width = decimals as usize)
}

fn display_rate(num: usize, den: usize) -> String {
    if den == 0 {
        "-".to_string()
    } else {
        round_ratio(num as u64, den as u64, 2)
    }
}

fn display_f64(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
}

impl EvalReport {
    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self)
    }

    /// Aligned text table; rates rounded to two decimals for display.
    pub fn to_table(&self) -> String {
        let header = ["Article Id", "TP", "FN", "FP", "Recall", "Precision"];
        let rows: Vec<[String; 6]> = self
            .articles
            .iter()
            .map(|r| {
                [
                    r.article_id.clone(),
                    r.true_positive.to_string(),
                    r.false_negative.to_string(),
                    r.false_positive.to_string(),
                    display_rate(r.true_positive, r.true_positive + r.false_negative),
                    display_rate(r.true_positive, r.true_positive + r.false_positive),
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for row in &rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut out = String::new();
        let mut line = |cells: [&str; 6]| {
            let mut s = format!("{:<w$}", cells[0], w = widths[0]);
            for (cell, w) in cells.iter().zip(widths).skip(1) {
                let _ = write!(s, "  {cell:>w$}");
            }
            out.push_str(s.trim_end());
            out.push('\n');
        };
        line(header);
        for row in &rows {
            line([&row[0], &row[1], &row[2], &row[3], &row[4], &row[5]]);
        }

        let a = &self.aggregate;
        let _ = writeln!(out);
        let _ = writeln!(out, "articles         {}", a.n_articles);
        let _ = writeln!(out, "macro recall     {}", display_f64(a.macro_recall));
        let _ = writeln!(out, "macro precision  {}", display_f64(a.macro_precision));
        let _ = writeln!(out, "micro recall     {}", display_f64(a.micro_recall));
        let _ = writeln!(out, "micro precision  {}", display_f64(a.micro_precision));
        let _ = writeln!(out, "reading burden   {}", display_f64(a.reading_burden));
        out
    }
}
