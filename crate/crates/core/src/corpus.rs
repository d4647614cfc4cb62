//! Gold-standard construction: label reference sentences as positive or
//! negative for a data element by their overlap with the review's value.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_json, write_atomic, SCHEMA_VERSION};
use crate::similarity::{rank_sentences, ScoredSentence, SCORE_EPSILON};
use crate::text::{segment_value_text, Document, Sentence};

pub const DEFAULT_ALPHA: f64 = 0.2;
pub const DEFAULT_BETA: f64 = 0.005;

/// One row of the machine-readable review tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub review_id: String,
    pub reference_id: String,
    pub element_kind: String,
    pub value_text: String,
}

/// Versioned review table as written by the tools.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReviewsFile {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub records: Vec<ReviewRecord>,
}

/// Reads either a bare array of records or a [`ReviewsFile`]. A record that
/// does not parse is reported by position.
pub fn read_review_records(path: &Path) -> Result<Vec<ReviewRecord>> {
    let value: serde_json::Value = read_json(path)?;
    let items = match value {
        serde_json::Value::Array(items) => items,
        serde_json::Value::Object(mut map) => match map.remove("records") {
            Some(serde_json::Value::Array(items)) => items,
            _ => {
                return Err(Error::InvalidData(format!(
                    "{}: expected a `records` array",
                    path.display()
                )))
            }
        },
        _ => {
            return Err(Error::InvalidData(format!(
                "{}: expected an array of review records",
                path.display()
            )))
        }
    };
    items
        .into_iter()
        .enumerate()
        .map(|(i, item)| {
            serde_json::from_value(item).map_err(|e| {
                Error::InvalidData(format!("{}: review record {i}: {e}", path.display()))
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct DataElementQuery {
    pub review_id: String,
    pub reference_id: String,
    pub element_kind: String,
    pub query_sentences: Vec<Sentence>,
}

impl DataElementQuery {
    pub fn from_record(record: &ReviewRecord) -> Result<Self> {
        let id = format!("{}/{}", record.review_id, record.reference_id);
        let query_sentences = segment_value_text(&id, &record.value_text);
        if query_sentences.is_empty() {
            return Err(Error::EmptyQuery(format!(
                "{} value for review {} reference {}",
                record.element_kind, record.review_id, record.reference_id
            )));
        }
        Ok(DataElementQuery {
            review_id: record.review_id.clone(),
            reference_id: record.reference_id.clone(),
            element_kind: record.element_kind.clone(),
            query_sentences,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LabeledInstance {
    pub sentence: Sentence,
    pub label: Label,
    pub element_kind: String,
    /// Overlap score that decided the label.
    pub source_score: f64,
    pub review_id: String,
    pub reference_id: String,
}

/// Thresholds on the overlap score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionRules {
    /// Largest allowed gap below the top score for a positive.
    pub alpha: f64,
    /// Largest score a negative may have (inclusive).
    pub beta: f64,
    /// Documents whose top score does not exceed this yield no positives.
    pub min_match_floor: f64,
}

impl Default for SelectionRules {
    fn default() -> Self {
        SelectionRules {
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            min_match_floor: 0.0,
        }
    }
}

impl SelectionRules {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("min_match_floor", self.min_match_floor),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!("{name}={v} is outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Sentences within `alpha` of the top score, in rank order. `ranked` must
/// be sorted best first.
pub fn select_positives<'a>(
    ranked: &[ScoredSentence<'a>],
    alpha: f64,
    min_match_floor: f64,
) -> Vec<ScoredSentence<'a>> {
    let Some(top) = ranked.first().map(|s| s.score) else {
        return Vec::new();
    };
    if top <= min_match_floor {
        return Vec::new();
    }
    ranked
        .iter()
        .take_while(|s| top - s.score <= alpha + SCORE_EPSILON)
        .copied()
        .collect()
}

/// Sentences scoring at most `beta`, skipping any in `positives`.
pub fn select_negatives<'a>(
    ranked: &[ScoredSentence<'a>],
    beta: f64,
    positives: &[ScoredSentence<'a>],
) -> Vec<ScoredSentence<'a>> {
    let taken: BTreeSet<usize> = positives.iter().map(|p| p.sentence.index).collect();
    ranked
        .iter()
        .filter(|s| s.score <= beta + SCORE_EPSILON && !taken.contains(&s.sentence.index))
        .copied()
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainingCorpus {
    pub element_kind: String,
    pub alpha: f64,
    pub beta: f64,
    pub min_match_floor: f64,
    pub seed: u64,
    /// Sorted by (review_id, reference_id, sentence index).
    pub positives: Vec<LabeledInstance>,
    pub negatives: Vec<LabeledInstance>,
}

impl TrainingCorpus {
    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All instances in serialization order.
    pub fn instances(&self) -> Vec<&LabeledInstance> {
        let mut all: Vec<&LabeledInstance> =
            self.positives.iter().chain(self.negatives.iter()).collect();
        all.sort_by(|a, b| instance_order(a, b));
        all
    }

    pub fn to_file(&self) -> CorpusFile {
        CorpusFile {
            schema_version: SCHEMA_VERSION,
            element_kind: self.element_kind.clone(),
            alpha: self.alpha,
            beta: self.beta,
            min_match_floor: self.min_match_floor,
            seed: self.seed,
            instances: self
                .instances()
                .into_iter()
                .map(|i| InstanceRecord {
                    doc_id: i.sentence.doc_id.clone(),
                    sentence_index: i.sentence.index,
                    text: i.sentence.text.clone(),
                    label: i.label,
                    score: i.source_score,
                    review_id: i.review_id.clone(),
                })
                .collect(),
        }
    }

    pub fn from_file(file: CorpusFile) -> Self {
        let mut positives = Vec::new();
        let mut negatives = Vec::new();
        for r in file.instances {
            let instance = LabeledInstance {
                sentence: Sentence::new(r.doc_id.clone(), r.sentence_index, r.text),
                label: r.label,
                element_kind: file.element_kind.clone(),
                source_score: r.score,
                review_id: r.review_id,
                reference_id: r.doc_id,
            };
            match r.label {
                Label::Positive => positives.push(instance),
                Label::Negative => negatives.push(instance),
            }
        }
        TrainingCorpus {
            element_kind: file.element_kind,
            alpha: file.alpha,
            beta: file.beta,
            min_match_floor: file.min_match_floor,
            seed: file.seed,
            positives,
            negatives,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_file())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(Self::from_file(read_json(path)?))
    }
}

fn instance_order(a: &LabeledInstance, b: &LabeledInstance) -> std::cmp::Ordering {
    (&a.review_id, &a.reference_id, a.sentence.index).cmp(&(
        &b.review_id,
        &b.reference_id,
        b.sentence.index,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusFile {
    pub schema_version: u32,
    pub element_kind: String,
    #[serde(serialize_with = "crate::g17::serialize")]
    pub alpha: f64,
    #[serde(serialize_with = "crate::g17::serialize")]
    pub beta: f64,
    #[serde(serialize_with = "crate::g17::serialize")]
    pub min_match_floor: f64,
    pub seed: u64,
    pub instances: Vec<InstanceRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub doc_id: String,
    pub sentence_index: usize,
    pub text: String,
    pub label: Label,
    #[serde(serialize_with = "crate::g17::serialize")]
    pub score: f64,
    pub review_id: String,
}

/// Per-reference label counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceSummary {
    pub reference_id: String,
    pub sentences: usize,
    pub positives: usize,
    pub negatives: usize,
    pub excluded: usize,
}

/// Labels every referenced document and merges the results.
///
/// Each query sentence ranks the reference's sentences independently. A
/// sentence is positive when any query sentence selects it, negative when
/// its best score over all query sentences for that reference is within
/// `beta`, and left out otherwise. Queries of another element kind are
/// ignored.
pub fn build_gold_standard(
    queries: &[DataElementQuery],
    documents: &BTreeMap<String, Document>,
    rules: SelectionRules,
    element_kind: &str,
) -> Result<(TrainingCorpus, Vec<ReferenceSummary>)> {
    rules.validate()?;
    let queries: Vec<&DataElementQuery> = queries
        .iter()
        .filter(|q| q.element_kind == element_kind)
        .collect();

    let missing: BTreeSet<&str> = queries
        .iter()
        .filter(|q| !documents.contains_key(&q.reference_id))
        .map(|q| q.reference_id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingDocuments(
            missing.into_iter().map(str::to_string).collect(),
        ));
    }

    let mut by_reference: BTreeMap<&str, Vec<&DataElementQuery>> = BTreeMap::new();
    for q in &queries {
        by_reference.entry(q.reference_id.as_str()).or_default().push(q);
    }

    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    let mut summaries = Vec::new();

    for (reference_id, mut refs) in by_reference {
        refs.sort_by(|a, b| a.review_id.cmp(&b.review_id));
        let doc = &documents[reference_id];
        let n = doc.len();
        let mut max_score = vec![0.0f64; n];
        // sentence index -> (best selecting score, first selecting review)
        let mut chosen: BTreeMap<usize, (f64, &str)> = BTreeMap::new();

        for q in &refs {
            for qs in &q.query_sentences {
                let ranked = rank_sentences(&qs.term_set, doc)?;
                for s in &ranked {
                    let slot = &mut max_score[s.sentence.index];
                    *slot = slot.max(s.score);
                }
                for p in select_positives(&ranked, rules.alpha, rules.min_match_floor) {
                    chosen
                        .entry(p.sentence.index)
                        .and_modify(|e| e.0 = e.0.max(p.score))
                        .or_insert((p.score, q.review_id.as_str()));
                }
            }
        }

        let first_review = refs[0].review_id.as_str();
        let mut summary = ReferenceSummary {
            reference_id: reference_id.to_string(),
            sentences: n,
            positives: 0,
            negatives: 0,
            excluded: 0,
        };
        for sentence in &doc.sentences {
            let (label, score, review) = if let Some(&(score, review)) = chosen.get(&sentence.index) {
                (Label::Positive, score, review)
            } else if max_score[sentence.index] <= rules.beta + SCORE_EPSILON {
                (Label::Negative, max_score[sentence.index], first_review)
            } else {
                summary.excluded += 1;
                continue;
            };
            let instance = LabeledInstance {
                sentence: sentence.clone(),
                label,
                element_kind: element_kind.to_string(),
                source_score: score,
                review_id: review.to_string(),
                reference_id: reference_id.to_string(),
            };
            match label {
                Label::Positive => {
                    summary.positives += 1;
                    positives.push(instance);
                }
                Label::Negative => {
                    summary.negatives += 1;
                    negatives.push(instance);
                }
            }
        }
        summaries.push(summary);
    }

    positives.sort_by(instance_order);
    negatives.sort_by(instance_order);
    let corpus = TrainingCorpus {
        element_kind: element_kind.to_string(),
        alpha: rules.alpha,
        beta: rules.beta,
        min_match_floor: rules.min_match_floor,
        seed: 0,
        positives,
        negatives,
    };
    Ok((corpus, summaries))
}
