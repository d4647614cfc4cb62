//! Word n-gram (n = 1..=3) vocabulary and sparse sentence vectors.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::de::{Deserializer, MapAccess, Visitor};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

use crate::corpus::TrainingCorpus;
use crate::error::{Error, Result};
use crate::text::Sentence;

pub const MAX_NGRAM: usize = 3;

/// All 1-, 2- and 3-grams of `tokens`, terms joined by a single space.
pub fn ngrams<S: AsRef<str>>(tokens: &[S]) -> impl Iterator<Item = String> + '_ {
    (1..=MAX_NGRAM).flat_map(move |n| {
        tokens.windows(n).map(|w| {
            w.iter()
                .map(AsRef::as_ref)
                .collect::<Vec<&str>>()
                .join(" ")
        })
    })
}

/// Sparse vector: `(column, value)` pairs with strictly increasing columns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureVector {
    pub entries: Vec<(usize, f64)>,
}

impl FeatureVector {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| v * dense[i]).sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.entries.iter().map(|&(_, v)| v * v).sum()
    }

    pub fn dot_sparse(&self, other: &FeatureVector) -> f64 {
        let (mut a, mut b) = (self.entries.iter().peekable(), other.entries.iter().peekable());
        let mut sum = 0.0;
        while let (Some(&&(i, x)), Some(&&(j, y))) = (a.peek(), b.peek()) {
            match i.cmp(&j) {
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
                std::cmp::Ordering::Equal => {
                    sum += x * y;
                    a.next();
                    b.next();
                }
            }
        }
        sum
    }
}

/// N-gram vocabulary with columns assigned in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpace {
    terms: Vec<String>,
    index: HashMap<String, usize>,
    /// Record presence (1) instead of occurrence counts.
    pub binary: bool,
}

impl FeatureSpace {
    pub fn from_terms(terms: BTreeSet<String>, binary: bool) -> Self {
        let terms: Vec<String> = terms.into_iter().collect();
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        FeatureSpace {
            terms,
            index,
            binary,
        }
    }

    pub fn fit<'a, I>(token_lists: I, binary: bool) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut seen = false;
        let mut terms = BTreeSet::new();
        for tokens in token_lists {
            seen = true;
            terms.extend(ngrams(tokens));
        }
        if !seen {
            return Err(Error::EmptyCorpus);
        }
        Ok(Self::from_terms(terms, binary))
    }

    pub fn n_features(&self) -> usize {
        self.terms.len()
    }

    pub fn column(&self, ngram: &str) -> Option<usize> {
        self.index.get(ngram).copied()
    }

    pub fn term(&self, column: usize) -> Option<&str> {
        self.terms.get(column).map(String::as_str)
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn vectorize_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> FeatureVector {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for g in ngrams(tokens) {
            if let Some(col) = self.column(&g) {
                *counts.entry(col).or_insert(0.0) += 1.0;
            }
        }
        if self.binary {
            counts.values_mut().for_each(|v| *v = 1.0);
        }
        FeatureVector {
            entries: counts.into_iter().collect(),
        }
    }

    pub fn vectorize(&self, sentence: &Sentence) -> FeatureVector {
        self.vectorize_tokens(&sentence.tokens)
    }
}

/// Vocabulary over every instance of the corpus, positives and negatives.
pub fn fit_feature_space(corpus: &TrainingCorpus, binary: bool) -> Result<FeatureSpace> {
    FeatureSpace::fit(
        corpus
            .positives
            .iter()
            .chain(&corpus.negatives)
            .map(|i| i.sentence.tokens.as_slice()),
        binary,
    )
}

/// Serialized as a JSON object `ngram -> column`, in column order.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary(pub FeatureSpace);

impl Serialize for Vocabulary {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.terms.len()))?;
        for (i, t) in self.0.terms.iter().enumerate() {
            map.serialize_entry(t, &i)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Vec<(String, usize)>;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a map from n-gram to column index")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut m: A) -> std::result::Result<Self::Value, A::Error> {
                let mut out = Vec::with_capacity(m.size_hint().unwrap_or(0));
                while let Some(entry) = m.next_entry::<String, usize>()? {
                    out.push(entry);
                }
                Ok(out)
            }
        }
        let mut pairs = d.deserialize_map(V)?;
        pairs.sort_by_key(|p| p.1);
        let n = pairs.len();
        if pairs.iter().enumerate().any(|(i, p)| p.1 != i) {
            return Err(serde::de::Error::custom(format!(
                "column indices are not a bijection onto 0..{n}"
            )));
        }
        let terms: Vec<String> = pairs.into_iter().map(|p| p.0).collect();
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(Vocabulary(FeatureSpace {
            terms,
            index,
            binary: false,
        }))
    }
}
