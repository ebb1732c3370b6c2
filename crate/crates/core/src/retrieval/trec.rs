//! TREC run (`qid Q0 docid rank score tag`) and qrels (`qid 0 docid grade`) files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::ranked::RankedList;

pub type Qrels = BTreeMap<String, BTreeMap<String, i32>>;

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn parse_run(text: &str) -> Result<BTreeMap<String, RankedList>> {
    let mut raw: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let bad = |reason: &str| Error::Trec {
            format: "run",
            line: i + 1,
            reason: reason.to_owned(),
        };
        if fields.len() != 6 {
            return Err(bad("expected 6 fields"));
        }
        let score: f64 = fields[4].parse().map_err(|_| bad("score is not a number"))?;
        fields[3].parse::<usize>().map_err(|_| bad("rank is not an integer"))?;
        raw.entry(fields[0].to_owned())
            .or_default()
            .push((fields[2].to_owned(), score));
    }
    Ok(raw
        .into_iter()
        .map(|(qid, entries)| {
            let k = entries.len();
            (qid.clone(), RankedList::from_scores(qid, entries, k))
        })
        .collect())
}

pub fn read_run(path: &Path) -> Result<BTreeMap<String, RankedList>> {
    parse_run(&read(path)?)
}

pub fn parse_qrels(text: &str) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 4 {
            return Err(Error::Trec {
                format: "qrels",
                line: i + 1,
                reason: "expected 4 fields".into(),
            });
        }
        let grade: i32 = fields[3].parse().map_err(|_| Error::Trec {
            format: "qrels",
            line: i + 1,
            reason: "grade is not an integer".into(),
        })?;
        qrels
            .entry(fields[0].to_owned())
            .or_default()
            .insert(fields[2].to_owned(), grade);
    }
    Ok(qrels)
}

pub fn read_qrels(path: &Path) -> Result<Qrels> {
    parse_qrels(&read(path)?)
}

pub fn format_run<'a>(lists: impl IntoIterator<Item = &'a RankedList>, tag: &str) -> String {
    let mut out = String::new();
    for list in lists {
        for (rank, e) in list.entries().iter().enumerate() {
            writeln!(out, "{} Q0 {} {} {} {}", list.query_id, e.id, rank + 1, e.score, tag).unwrap();
        }
    }
    out
}

pub fn format_qrels(qrels: &Qrels) -> String {
    let mut out = String::new();
    for (qid, docs) in qrels {
        for (doc, grade) in docs {
            writeln!(out, "{qid} 0 {doc} {grade}").unwrap();
        }
    }
    out
}
