//! Invariant checks shared by the property tests and the acceptance suite.
//! Each returns a description of the first violation.

use std::collections::BTreeSet;

use rand::Rng;
use revex::corpus::{select_negatives, select_positives};
use revex::similarity::{jac_mod, rank_sentences, SCORE_EPSILON};
use revex::text::{Document, Sentence, TermSet};

const ALPHABET: &[&str] = &[
    "age", "adult", "heart", "failure", "women", "men", "trial", "dose", "renal", "score", "class",
    "nyha", "older", "years", "40", "18",
];

pub fn random_term_set<R: Rng>(rng: &mut R, min: usize, max: usize) -> TermSet {
    let n = rng.gen_range(min..=max);
    (0..n)
        .map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())].to_string())
        .collect()
}

pub fn random_document<R: Rng>(rng: &mut R, max_sentences: usize) -> Document {
    let n = rng.gen_range(0..=max_sentences);
    let sentences = (0..n)
        .map(|i| {
            let words: Vec<String> = (0..rng.gen_range(0..8))
                .map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())].to_string())
                .collect();
            Sentence::new("doc", i, words.join(" "))
        })
        .collect();
    Document {
        id: "doc".into(),
        sentences,
    }
}

fn ensure(ok: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

/// Bound, self-similarity, disjointness and both monotonicity rules for
/// one non-empty query `sx` and candidate `sy`.
pub fn jac_mod_properties(sx: &TermSet, sy: &TermSet) -> Result<(), String> {
    let score = |y: &TermSet| jac_mod(sx, y).map_err(|e| e.to_string());
    let s = score(sy)?;
    ensure((0.0..=1.0).contains(&s), || format!("score {s} outside [0, 1]"))?;
    ensure(score(sx)? == 1.0, || "self-similarity is not 1".into())?;

    let disjoint: TermSet = sy.difference(sx).cloned().collect();
    ensure(score(&disjoint)? == 0.0, || "disjoint sets score above 0".into())?;

    for t in sx.difference(sy) {
        let mut grown = sy.clone();
        grown.insert(t.clone());
        let g = score(&grown)?;
        ensure(g > s, || format!("adding shared term `{t}` moved {s} to {g}"))?;
    }
    let mut grown = sy.clone();
    grown.insert("zz-not-a-query-term".into());
    ensure(score(&grown)? == s, || "adding a non-query term changed the score".into())?;
    Ok(())
}

/// Labels of each sentence index under (alpha, beta).
fn bands(query: &TermSet, doc: &Document, alpha: f64, beta: f64) -> Result<(BTreeSet<usize>, BTreeSet<usize>), String> {
    let ranked = rank_sentences(query, doc).map_err(|e| e.to_string())?;
    let pos = select_positives(&ranked, alpha, 0.0);
    let neg = select_negatives(&ranked, beta, &pos);
    Ok((
        pos.iter().map(|s| s.sentence.index).collect(),
        neg.iter().map(|s| s.sentence.index).collect(),
    ))
}

/// Partition, band bounds, ordering between bands, and monotonicity in
/// both thresholds (`alpha2 ≥ alpha`, `beta2 ≥ beta`).
pub fn selection_properties(
    query: &TermSet,
    doc: &Document,
    alpha: f64,
    beta: f64,
    alpha2: f64,
    beta2: f64,
) -> Result<(), String> {
    let ranked = rank_sentences(query, doc).map_err(|e| e.to_string())?;
    let seen: BTreeSet<usize> = ranked.iter().map(|s| s.sentence.index).collect();
    ensure(seen.len() == doc.len() && ranked.len() == doc.len(), || {
        "ranking is not a permutation".into()
    })?;
    for w in ranked.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let ordered = a.score > b.score + SCORE_EPSILON
            || ((a.score - b.score).abs() <= SCORE_EPSILON && a.sentence.index < b.sentence.index);
        ensure(ordered, || format!("rank order broken at {} / {}", a.sentence.index, b.sentence.index))?;
    }

    let score_of = |i: usize| ranked.iter().find(|s| s.sentence.index == i).unwrap().score;
    let (pos, neg) = bands(query, doc, alpha, beta)?;
    ensure(pos.is_disjoint(&neg), || "a sentence is both positive and negative".into())?;
    let excluded = doc.len() - pos.len() - neg.len();
    ensure(pos.len() + neg.len() + excluded == doc.len(), || "bands do not partition".into())?;
    ensure(pos.union(&neg).all(|i| *i < doc.len()), || "label outside the document".into())?;

    if let Some(top) = ranked.first().map(|s| s.score) {
        for &i in &pos {
            ensure(score_of(i) >= top - alpha - SCORE_EPSILON, || format!("positive {i} below band"))?;
        }
    }
    for &i in &neg {
        ensure(score_of(i) <= beta + SCORE_EPSILON, || format!("negative {i} above beta"))?;
        for &p in &pos {
            ensure(score_of(p) >= score_of(i), || format!("negative {i} outscores positive {p}"))?;
        }
    }

    let (pos_a2, _) = bands(query, doc, alpha2, beta)?;
    ensure(pos.is_subset(&pos_a2), || format!("alpha {alpha} -> {alpha2} dropped a positive"))?;
    let (pos_b2, neg_b2) = bands(query, doc, alpha, beta2)?;
    ensure(pos_b2 == pos, || "beta changed the positives".into())?;
    ensure(neg.is_subset(&neg_b2), || format!("beta {beta} -> {beta2} dropped a negative"))?;
    Ok(())
}
