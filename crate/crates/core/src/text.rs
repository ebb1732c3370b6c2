//! Tokenization, sentence segmentation and in-line citation markers.
//!
//! Everything here is deterministic and locale-free: the same input yields
//! the same tokens and sentence spans on every platform.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{AttributedAnswer, Statement};

/// Tokenizer settings shared by the index, the lexical metrics and the mock scorer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Analyzer {
    pub lowercase: bool,
    pub stopwords: Vec<String>,
}

impl Default for Analyzer {
    fn default() -> Self {
        Self {
            lowercase: true,
            stopwords: Vec::new(),
        }
    }
}

impl Analyzer {
    /// Splits on every run of non-alphanumeric characters (Unicode-aware).
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(|t| {
                if self.lowercase {
                    t.to_lowercase()
                } else {
                    t.to_owned()
                }
            })
            .filter(|t| !self.stopwords.iter().any(|s| s == t))
            .collect()
    }
}

/// Words ending in a period that never close a sentence.
pub const ABBREVIATIONS: &[&str] = &[
    "al.", "approx.", "ca.", "cf.", "co.", "dr.", "e.g.", "etc.", "fig.", "i.e.", "inc.",
    "jr.", "ltd.", "mr.", "mrs.", "ms.", "no.", "prof.", "sr.", "st.", "vs.",
];

fn marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[(\d+)\]").unwrap())
}

fn strip_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\s*\[\d+\]").unwrap())
}

/// Collapses whitespace runs to single spaces and trims.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Removes every bracketed integer marker, then normalizes whitespace.
pub fn strip_markers(text: &str) -> String {
    normalize_whitespace(&strip_re().replace_all(text, ""))
}

fn is_abbreviation(text: &str, period: usize) -> bool {
    let head = &text[..=period];
    let word_start = head
        .char_indices()
        .rev()
        .find(|(_, c)| c.is_whitespace())
        .map(|(i, c)| i + c.len_utf8())
        .unwrap_or(0);
    let word = head[word_start..].to_lowercase();
    let word = word.trim_start_matches(|c: char| !c.is_alphanumeric());
    ABBREVIATIONS.contains(&word)
}

/// Byte offset just past any markers trailing a sentence terminator at `from`.
fn skip_trailing_markers(text: &str, mut from: usize) -> usize {
    loop {
        let rest = &text[from..];
        let trimmed = rest.trim_start();
        let ws = rest.len() - trimmed.len();
        match marker_re().find(trimmed) {
            Some(m) if m.start() == 0 => from += ws + m.end(),
            _ => return from,
        }
    }
}

/// Sentence spans of `text` as byte ranges, trimmed, markers kept in place.
///
/// A sentence ends after `.`, `?` or `!` (plus any citation markers that
/// immediately follow it) when the next non-space character is an uppercase
/// letter or a digit. A period closing an entry of [`ABBREVIATIONS`] does not
/// end a sentence.
pub fn sentence_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = 0;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if !matches!(c, '.' | '?' | '!') || i < start {
            continue;
        }
        let end = skip_trailing_markers(text, i + 1);
        let rest = &text[end..];
        let next = rest.trim_start();
        if next.len() == rest.len() || next.is_empty() {
            continue;
        }
        let leading = next.chars().next().unwrap();
        if !(leading.is_uppercase() || leading.is_ascii_digit()) {
            continue;
        }
        if c == '.' && is_abbreviation(text, i) {
            continue;
        }
        push_span(text, start, end, &mut spans);
        start = end + (rest.len() - next.len());
        while iter.peek().is_some_and(|(j, _)| *j < start) {
            iter.next();
        }
    }
    push_span(text, start, text.len(), &mut spans);
    spans
}

fn push_span(text: &str, start: usize, end: usize, spans: &mut Vec<(usize, usize)>) {
    let slice = &text[start..end];
    let lead = slice.len() - slice.trim_start().len();
    let trimmed = slice.trim();
    if !trimmed.is_empty() {
        spans.push((start + lead, start + lead + trimmed.len()));
    }
}

/// Splits text into sentence-level statements.
pub fn segment_statements(text: &str) -> Vec<String> {
    sentence_spans(text)
        .into_iter()
        .map(|(s, e)| normalize_whitespace(&text[s..e]))
        .collect()
}

/// Parses a generation with `[n]` markers (1-based into `passage_ids`) into
/// statements with citation sets. Out-of-range markers are dropped and
/// reported in the returned diagnostics.
pub fn parse_attributed_answer(
    text: &str,
    passage_ids: &[String],
) -> (AttributedAnswer, Vec<String>) {
    let mut statements: Vec<Statement> = Vec::new();
    let mut diagnostics = Vec::new();
    for (s, e) in sentence_spans(text) {
        let span = &text[s..e];
        let mut citations: Vec<String> = Vec::new();
        for cap in marker_re().captures_iter(span) {
            let raw = &cap[1];
            match raw.parse::<usize>() {
                Ok(n) if (1..=passage_ids.len()).contains(&n) => {
                    let id = &passage_ids[n - 1];
                    if !citations.contains(id) {
                        citations.push(id.clone());
                    }
                }
                _ => diagnostics.push(format!(
                    "citation marker [{raw}] out of range for {} passages",
                    passage_ids.len()
                )),
            }
        }
        let clean = strip_markers(span);
        if clean.is_empty() {
            // a span made only of markers belongs to the preceding sentence
            if let Some(prev) = statements.last_mut() {
                for id in citations {
                    if !prev.citations.contains(&id) {
                        prev.citations.push(id);
                    }
                }
            }
            continue;
        }
        statements.push(Statement {
            text: clean,
            citations,
        });
    }
    (
        AttributedAnswer {
            statements,
            raw_text: text.to_owned(),
        },
        diagnostics,
    )
}

/// Inserts ` [n]` markers before the terminal punctuation of `sentence`.
pub fn cite_sentence(sentence: &str, markers: &[usize]) -> String {
    if markers.is_empty() {
        return sentence.to_owned();
    }
    let body = sentence.trim_end_matches(['.', '?', '!']);
    let tail = &sentence[body.len()..];
    let marks: String = markers.iter().map(|n| format!("[{n}]")).collect();
    format!("{body} {marks}{tail}")
}
