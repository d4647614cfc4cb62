//! Document ingestion, sentence segmentation and tokenization.
//!
//! Everything downstream (matching, features, extraction) sees text only
//! through [`Sentence::tokens`] and [`Sentence::term_set`], so the rules here
//! fix what a "term" is for the whole toolkit: a maximal run of lowercase
//! alphanumeric characters. No stemming, no stopword removal.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Set of unique terms of a sentence.
pub type TermSet = BTreeSet<String>;

const ABBREVIATION_DATA: &str = include_str!("../data/abbreviations.txt");

fn abbreviations() -> &'static [String] {
    static LIST: OnceLock<Vec<String>> = OnceLock::new();
    LIST.get_or_init(|| {
        ABBREVIATION_DATA
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect()
    })
}

/// Whether `word` (without its trailing period) is in the abbreviation list.
pub fn is_abbreviation(word: &str) -> bool {
    let dotted = format!("{}.", word.to_lowercase());
    abbreviations().iter().any(|a| *a == dotted)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub doc_id: String,
    pub index: usize,
    pub text: String,
    pub tokens: Vec<String>,
    pub term_set: TermSet,
}

impl Sentence {
    pub fn new(doc_id: impl Into<String>, index: usize, text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = tokenize(&text);
        let term_set = term_set(&tokens);
        Sentence {
            doc_id: doc_id.into(),
            index,
            text,
            tokens,
            term_set,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Sentence>,
}

impl Document {
    pub fn from_text(id: impl Into<String>, text: &str) -> Self {
        let id = id.into();
        let sentences = segment_sentences(text)
            .into_iter()
            .enumerate()
            .map(|(i, s)| Sentence::new(id.clone(), i, s))
            .collect();
        Document { id, sentences }
    }

    /// Reads a UTF-8 article; the file stem becomes the document id.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(Document::from_text(id, &text))
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '?' | '!')
}

fn is_closer(c: char) -> bool {
    matches!(c, ')' | ']' | '"' | '\'' | '\u{201d}' | '\u{2019}')
}

/// True when the text up to and including a period ends in a listed
/// abbreviation that starts at a word boundary.
fn ends_with_abbreviation(lowered_prefix: &str) -> bool {
    abbreviations().iter().any(|abbr| {
        lowered_prefix.ends_with(abbr.as_str())
            && lowered_prefix[..lowered_prefix.len() - abbr.len()]
                .chars()
                .next_back()
                .map_or(true, |c| !c.is_alphanumeric())
    })
}

/// Splits raw article text into trimmed sentence strings.
///
/// A sentence ends at a run of `.`, `?` or `!` (optionally followed by
/// closing brackets or quotes) when the next non-whitespace character is
/// uppercase or a digit, unless the period closes a listed abbreviation.
/// A blank line always ends a sentence.
pub fn segment_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;

    let push = |from: usize, to: usize, out: &mut Vec<String>| {
        let piece = text[from..to].trim();
        if !piece.is_empty() {
            out.push(piece.to_string());
        }
    };

    while i < chars.len() {
        let (pos, c) = chars[i];
        if c == '\n' {
            // blank line: newline, optional horizontal whitespace, newline
            let mut j = i + 1;
            while j < chars.len() && chars[j].1.is_whitespace() && chars[j].1 != '\n' {
                j += 1;
            }
            if j < chars.len() && chars[j].1 == '\n' {
                push(start, pos, &mut out);
                while j < chars.len() && chars[j].1.is_whitespace() {
                    j += 1;
                }
                start = chars.get(j).map_or(text.len(), |&(p, _)| p);
                i = j;
                continue;
            }
            i += 1;
            continue;
        }
        if !is_terminator(c) {
            i += 1;
            continue;
        }

        let mut j = i;
        while j < chars.len() && is_terminator(chars[j].1) {
            j += 1;
        }
        let run_end = j;
        while j < chars.len() && is_closer(chars[j].1) {
            j += 1;
        }
        let boundary = chars.get(j).map_or(text.len(), |&(p, _)| p);
        let mut k = j;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        let has_space = k > j;
        let next_starts = chars
            .get(k)
            .is_some_and(|&(_, n)| n.is_uppercase() || n.is_numeric());

        let single_period = run_end == i + 1 && c == '.';
        let abbreviated = single_period && {
            let prefix = text[start..chars[i].0 + 1].to_lowercase();
            ends_with_abbreviation(&prefix)
        };

        if has_space && next_starts && !abbreviated {
            push(start, boundary, &mut out);
            start = boundary;
        }
        i = j.max(i + 1);
    }
    push(start, text.len(), &mut out);
    out
}

/// Lowercases and splits on every run of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn term_set<S: AsRef<str>>(tokens: &[S]) -> TermSet {
    tokens.iter().map(|t| t.as_ref().to_string()).collect()
}

/// Splits a review-side value (often a numbered or bulleted list) into
/// query sentences: one per line item, each further segmented, with list
/// markers stripped and term-less pieces dropped.
pub fn segment_value_text(doc_id: &str, value: &str) -> Vec<Sentence> {
    let mut out = Vec::new();
    for line in value.lines() {
        let item = strip_list_marker(line.trim());
        for piece in segment_sentences(item) {
            let sentence = Sentence::new(doc_id, out.len(), piece);
            if !sentence.term_set.is_empty() {
                out.push(sentence);
            }
        }
    }
    out
}

fn strip_list_marker(line: &str) -> &str {
    let rest = line.trim_start_matches(['-', '*', '\u{2022}']);
    if rest.len() != line.len() {
        return rest.trim_start();
    }
    let digits = line.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let after = &line[digits..];
        if let Some(tail) = after.strip_prefix(['.', ')']) {
            if tail.is_empty() || tail.starts_with(char::is_whitespace) {
                return tail.trim_start();
            }
        }
    }
    line
}
