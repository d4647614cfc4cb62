//! Seeded synthetic reviews and articles with planted data-element
//! sentences, for end-to-end runs without real full texts.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ReviewRecord, ReviewsFile};
use crate::error::{Error, Result};
use crate::eval::{write_gold, Gold};
use crate::io::{write_atomic, write_bytes_atomic, SCHEMA_VERSION};
use crate::text::is_abbreviation;

/// Words that tend to appear in eligibility statements.
const CUE_WORDS: &[&str] = &[
    "eligible", "inclusion", "criteria", "included", "patients", "aged", "enrolled", "diagnosed",
    "adults", "older", "consecutive", "required",
];

const ONSETS: &[&str] = &[
    "b", "c", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr", "st",
    "pl", "gr",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_reviews: usize,
    pub refs_per_review: usize,
    pub sentences_per_article: usize,
    pub vocabulary_size: usize,
    /// Fraction of query terms replaced in the planted sentence.
    pub paraphrase_noise: f64,
    /// Unique terms per review-side value.
    pub query_terms: usize,
    /// Cue words per review-side value.
    pub cue_terms: usize,
    /// Chance that a filler sentence carries one cue word.
    pub filler_cue_rate: f64,
    /// Articles from unseen reviews, written separately for testing.
    pub n_test_articles: usize,
    pub element_kind: String,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_reviews: 30,
            refs_per_review: 3,
            sentences_per_article: 60,
            vocabulary_size: 2000,
            paraphrase_noise: 0.3,
            query_terms: 10,
            cue_terms: 5,
            filler_cue_rate: 0.1,
            n_test_articles: 20,
            element_kind: "inclusion_criteria".to_string(),
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(0.0..1.0).contains(&self.paraphrase_noise) {
            return bad(format!("paraphrase_noise={} is outside [0, 1)", self.paraphrase_noise));
        }
        if !(0.0..=1.0).contains(&self.filler_cue_rate) {
            return bad(format!("filler_cue_rate={} is outside [0, 1]", self.filler_cue_rate));
        }
        if self.sentences_per_article == 0 {
            return bad("sentences_per_article must be at least 1".into());
        }
        if self.query_terms == 0 || self.cue_terms > self.query_terms {
            return bad("need 0 < cue_terms <= query_terms".into());
        }
        if self.cue_terms > CUE_WORDS.len() {
            return bad(format!("at most {} cue terms", CUE_WORDS.len()));
        }
        if self.vocabulary_size < 4 * self.query_terms {
            return bad(format!(
                "vocabulary_size must be at least {}",
                4 * self.query_terms
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthArticle {
    pub id: String,
    pub sentences: Vec<String>,
    pub planted: usize,
}

impl SynthArticle {
    /// Sentences joined by single spaces; the segmenter recovers them.
    pub fn text(&self) -> String {
        let mut out = self.sentences.join(" ");
        out.push('\n');
        out
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub records: Vec<ReviewRecord>,
    pub articles: Vec<SynthArticle>,
    pub test_articles: Vec<SynthArticle>,
}

impl SynthData {
    pub fn gold(&self) -> Gold {
        gold_of(&self.articles)
    }

    pub fn test_gold(&self) -> Gold {
        gold_of(&self.test_articles)
    }
}

fn gold_of(articles: &[SynthArticle]) -> Gold {
    articles
        .iter()
        .map(|a| (a.id.clone(), BTreeSet::from([a.planted])))
        .collect()
}

fn vocabulary(rng: &mut ChaCha8Rng, size: usize) -> Vec<String> {
    let mut words = BTreeSet::new();
    let mut out = Vec::with_capacity(size);
    while out.len() < size {
        let syllables = rng.gen_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS.choose(rng).expect("onsets"));
            w.push_str(VOWELS.choose(rng).expect("vowels"));
        }
        if rng.gen_bool(0.3) {
            w.push(*[b'n', b'r', b's', b'l'].choose(rng).expect("codas") as char);
        }
        if is_abbreviation(&w) || CUE_WORDS.contains(&w.as_str()) || !words.insert(w.clone()) {
            continue;
        }
        out.push(w);
    }
    out
}

fn sentence_text(words: &[String]) -> String {
    let mut s = words.join(" ");
    if let Some(first) = s.get(..1) {
        let upper = first.to_uppercase();
        s.replace_range(..1, &upper);
    }
    s.push('.');
    s
}

struct Generator<'a> {
    spec: &'a SynthSpec,
    vocab: Vec<String>,
    rng: ChaCha8Rng,
}

impl Generator<'_> {
    fn distinct_vocab(&mut self, n: usize, avoid: &BTreeSet<String>) -> Vec<String> {
        let mut picked = BTreeSet::new();
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let w = &self.vocab[self.rng.gen_range(0..self.vocab.len())];
            if !avoid.contains(w) && picked.insert(w.clone()) {
                out.push(w.clone());
            }
        }
        out
    }

    /// Cue words, review topic words and random words, all distinct.
    fn query(&mut self, topic: &[String]) -> Vec<String> {
        let spec = self.spec;
        let mut terms: Vec<String> = CUE_WORDS
            .choose_multiple(&mut self.rng, spec.cue_terms)
            .map(|w| w.to_string())
            .collect();
        terms.extend(topic.iter().take(spec.query_terms - spec.cue_terms).cloned());
        let have: BTreeSet<String> = terms.iter().cloned().collect();
        let rest = spec.query_terms - terms.len();
        terms.extend(self.distinct_vocab(rest, &have));
        terms.shuffle(&mut self.rng);
        terms
    }

    /// The query with `floor(noise * n)` terms swapped for non-query words.
    fn planted(&mut self, query: &[String]) -> Vec<String> {
        let n = query.len();
        let replace = (self.spec.paraphrase_noise * n as f64).floor() as usize;
        let avoid: BTreeSet<String> = query.iter().cloned().collect();
        let fresh = self.distinct_vocab(replace, &avoid);
        let mut positions: Vec<usize> = (0..n).collect();
        positions.shuffle(&mut self.rng);
        let mut words = query.to_vec();
        for (&p, w) in positions.iter().zip(fresh) {
            words[p] = w;
        }
        words.shuffle(&mut self.rng);
        words
    }

    fn filler(&mut self, topic: &[String]) -> Vec<String> {
        let len = self.rng.gen_range(8..=16);
        let mut words: Vec<String> = (0..len)
            .map(|_| self.vocab[self.rng.gen_range(0..self.vocab.len())].clone())
            .collect();
        if !topic.is_empty() && self.rng.gen_bool(0.2) {
            let at = self.rng.gen_range(0..len);
            words[at] = topic[self.rng.gen_range(0..topic.len())].clone();
        }
        if self.rng.gen_bool(self.spec.filler_cue_rate) {
            let at = self.rng.gen_range(0..len);
            words[at] = CUE_WORDS.choose(&mut self.rng).expect("cues").to_string();
        }
        words
    }

    fn article(&mut self, id: String, query: &[String], topic: &[String]) -> SynthArticle {
        let n = self.spec.sentences_per_article;
        let planted = self.rng.gen_range(0..n);
        let sentences = (0..n)
            .map(|i| {
                let words = if i == planted {
                    self.planted(query)
                } else {
                    self.filler(topic)
                };
                sentence_text(&words)
            })
            .collect();
        SynthArticle {
            id,
            sentences,
            planted,
        }
    }

    fn topic(&mut self) -> Vec<String> {
        let n = self.spec.query_terms - self.spec.cue_terms;
        self.distinct_vocab(n.min(2), &BTreeSet::new())
    }
}

/// Generates the whole data set from `spec.seed`.
pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let vocab = vocabulary(&mut rng, spec.vocabulary_size);
    let mut g = Generator { spec, vocab, rng };

    let mut records = Vec::new();
    let mut articles = Vec::new();
    for r in 0..spec.n_reviews {
        let review_id = format!("review{:03}", r + 1);
        let topic = g.topic();
        for a in 0..spec.refs_per_review {
            let reference_id = format!("{review_id}_ref{}", a + 1);
            let query = g.query(&topic);
            articles.push(g.article(reference_id.clone(), &query, &topic));
            records.push(ReviewRecord {
                review_id: review_id.clone(),
                reference_id,
                element_kind: spec.element_kind.clone(),
                value_text: sentence_text(&query),
            });
        }
    }
    let mut test_articles = Vec::new();
    for t in 0..spec.n_test_articles {
        let topic = g.topic();
        let query = g.query(&topic);
        test_articles.push(g.article(format!("test{:03}", t + 1), &query, &topic));
    }
    Ok(SynthData {
        records,
        articles,
        test_articles,
    })
}

/// File names inside the output directory.
pub const REVIEWS_FILE: &str = "reviews.json";
pub const ARTICLES_DIR: &str = "articles";
pub const GOLD_FILE: &str = "gold.json";
pub const TEST_ARTICLES_DIR: &str = "heldout";
pub const TEST_GOLD_FILE: &str = "heldout_gold.json";
pub const SPEC_FILE: &str = "synth.json";

#[derive(Serialize)]
struct SpecFile<'a> {
    schema_version: u32,
    #[serde(flatten)]
    spec: &'a SynthSpec,
}

/// Writes the data set under `dir`.
pub fn write(data: &SynthData, spec: &SynthSpec, dir: &Path) -> Result<()> {
    write_atomic(
        &dir.join(SPEC_FILE),
        &SpecFile {
            schema_version: SCHEMA_VERSION,
            spec,
        },
    )?;
    write_atomic(
        &dir.join(REVIEWS_FILE),
        &ReviewsFile {
            schema_version: SCHEMA_VERSION,
            seed: Some(spec.seed),
            records: data.records.clone(),
        },
    )?;
    for (sub, articles) in [
        (ARTICLES_DIR, &data.articles),
        (TEST_ARTICLES_DIR, &data.test_articles),
    ] {
        for a in articles {
            write_bytes_atomic(&dir.join(sub).join(format!("{}.txt", a.id)), a.text().as_bytes())?;
        }
    }
    write_gold(&dir.join(GOLD_FILE), &data.gold())?;
    write_gold(&dir.join(TEST_GOLD_FILE), &data.test_gold())?;
    Ok(())
}

/// Number of query terms kept in a planted sentence.
pub fn kept_terms(query_terms: usize, noise: f64) -> usize {
    query_terms - (noise * query_terms as f64).floor() as usize
}
