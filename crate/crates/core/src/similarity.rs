//! Query-normalized overlap between term sets and sentence ranking.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::text::{Document, Sentence, TermSet};

/// Scores closer than this are treated as equal when ranking.
pub const SCORE_EPSILON: f64 = 1e-12;

/// Fraction of the query's terms that also occur in the candidate:
/// `|query ∩ candidate| / |query|`.
///
/// The denominator is the query alone, so the measure is asymmetric and a
/// long candidate sentence is not penalized for its extra terms.
pub fn jac_mod(query: &TermSet, candidate: &TermSet) -> Result<f64> {
    if query.is_empty() {
        return Err(Error::EmptyQuery("query term set".into()));
    }
    let (small, large) = if query.len() <= candidate.len() {
        (query, candidate)
    } else {
        (candidate, query)
    };
    let common = small.iter().filter(|t| large.contains(*t)).count();
    Ok(common as f64 / query.len() as f64)
}

#[derive(Debug, Clone, Copy)]
pub struct ScoredSentence<'a> {
    pub sentence: &'a Sentence,
    pub score: f64,
}

fn score_key(score: f64) -> i64 {
    (score / SCORE_EPSILON).round() as i64
}

/// Descending by score; scores equal to within [`SCORE_EPSILON`] fall back
/// to document order. Scores are bucketed first so the order stays total.
pub fn rank_order(a: &ScoredSentence<'_>, b: &ScoredSentence<'_>) -> Ordering {
    score_key(b.score)
        .cmp(&score_key(a.score))
        .then(a.sentence.index.cmp(&b.sentence.index))
}

/// Scores every sentence of `doc` against `query` and sorts them best first.
pub fn rank_sentences<'a>(query: &TermSet, doc: &'a Document) -> Result<Vec<ScoredSentence<'a>>> {
    if query.is_empty() {
        return Err(Error::EmptyQuery(format!("query against document {}", doc.id)));
    }
    let mut ranked = doc
        .sentences
        .iter()
        .map(|s| {
            jac_mod(query, &s.term_set).map(|score| ScoredSentence { sentence: s, score })
        })
        .collect::<Result<Vec<_>>>()?;
    // insertion order is document order, so a stable sort keeps ties stable too
    ranked.sort_by(rank_order);
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::term_set;

    fn set(v: &[&str]) -> TermSet {
        term_set(v)
    }

    #[test]
    fn identical_and_disjoint() {
        assert_eq!(jac_mod(&set(&["a", "b", "c"]), &set(&["a", "b", "c"])).unwrap(), 1.0);
        assert_eq!(jac_mod(&set(&["a", "b", "c"]), &set(&["x", "y"])).unwrap(), 0.0);
    }

    #[test]
    fn half_overlap_example() {
        let sx = set(&["men", "women", "postmenopausal", "40"]);
        let sy = set(&["men", "women", "were", "recruited"]);
        assert_eq!(jac_mod(&sx, &sy).unwrap(), 0.5);
        // denominator is the query only
        assert_eq!(jac_mod(&sy, &set(&["men"])).unwrap(), 0.25);
        assert_eq!(jac_mod(&set(&["men"]), &sy).unwrap(), 1.0);
    }

    #[test]
    fn empty_query_is_an_error() {
        assert!(matches!(
            jac_mod(&TermSet::new(), &set(&["a"])),
            Err(Error::EmptyQuery(_))
        ));
    }

    fn doc_with_scores(scores: &[f64]) -> Vec<(usize, f64)> {
        // sentence i shares round(score*10) of the 10 query terms
        let query: Vec<String> = (0..10).map(|i| format!("q{i}")).collect();
        let text: Vec<String> = scores
            .iter()
            .map(|s| {
                let k = (s * 10.0).round() as usize;
                let mut words: Vec<String> = query[..k].to_vec();
                words.push("filler".into());
                format!("{}.", words.join(" "))
            })
            .collect();
        let doc = Document::from_text("d", &text.join("\n\n"));
        let ranked = rank_sentences(&term_set(&query), &doc).unwrap();
        ranked.iter().map(|r| (r.sentence.index, r.score)).collect()
    }

    #[test]
    fn ties_break_by_document_order() {
        let order: Vec<usize> = doc_with_scores(&[0.2, 0.9, 0.2]).iter().map(|p| p.0).collect();
        assert_eq!(order, vec![1, 0, 2]);
    }

    #[test]
    fn empty_document_ranks_nothing() {
        let doc = Document::from_text("d", "");
        assert!(rank_sentences(&set(&["a"]), &doc).unwrap().is_empty());
    }

    #[test]
    fn verbatim_query_ranks_first() {
        let doc = Document::from_text(
            "d",
            "Heart failure is common. Adults aged 40 years or older were eligible. \
             Follow up lasted two years.",
        );
        let query = Sentence::new("q", 0, "Adults aged 40 years or older were eligible");
        let ranked = rank_sentences(&query.term_set, &doc).unwrap();
        // brute force: the best score over all sentences, computed independently
        let best = doc
            .sentences
            .iter()
            .map(|s| {
                let common = query.term_set.intersection(&s.term_set).count();
                (common as f64 / query.term_set.len() as f64, s.index)
            })
            .fold((f64::MIN, 0), |acc, x| if x.0 > acc.0 { x } else { acc });
        assert_eq!(ranked[0].sentence.index, best.1);
        assert_eq!(ranked[0].sentence.index, 1);
        assert_eq!(ranked[0].score, 1.0);
    }
}
