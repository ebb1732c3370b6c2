use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::text::Analyzer;

use super::ranked::RankedList;

pub const INDEX_FORMAT: &str = "attrib-bm25";
pub const INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 0.9, b: 0.4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

/// Immutable inverted index over a corpus.
///
/// Documents are numbered in ascending id order, so the serialized form is
/// byte-stable for a fixed corpus and analyzer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Index {
    format: String,
    version: u32,
    analyzer: Analyzer,
    params: Bm25Params,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    postings: BTreeMap<String, Vec<Posting>>,
}

impl Index {
    pub fn build(corpus: &Corpus, analyzer: &Analyzer, params: Bm25Params) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut doc_ids = Vec::with_capacity(corpus.len());
        let mut doc_lengths = Vec::with_capacity(corpus.len());
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        for (doc, passage) in corpus.iter().enumerate() {
            let tokens = analyzer.tokenize(&passage.text);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in &tokens {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for (term, tf) in tf {
                postings.entry(term).or_default().push(Posting {
                    doc: doc as u32,
                    tf,
                });
            }
            doc_ids.push(passage.id.clone());
            doc_lengths.push(tokens.len() as u32);
        }
        let avg_doc_length =
            doc_lengths.iter().map(|&l| l as f64).sum::<f64>() / doc_lengths.len() as f64;
        Ok(Self {
            format: INDEX_FORMAT.into(),
            version: INDEX_VERSION,
            analyzer: analyzer.clone(),
            params,
            doc_ids,
            doc_lengths,
            avg_doc_length,
            postings,
        })
    }

    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn analyzer(&self) -> &Analyzer {
        &self.analyzer
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_length(&self, id: &str) -> Option<u32> {
        self.doc_index(id).map(|i| self.doc_lengths[i])
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    fn doc_index(&self, id: &str) -> Option<usize> {
        self.doc_ids.binary_search_by(|d| d.as_str().cmp(id)).ok()
    }

    /// Non-negative idf: ln(1 + (N - df + 0.5) / (df + 0.5)), floored at zero.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.n_docs() as f64;
        let df = self.postings(term).len() as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln().max(0.0)
    }

    fn term_weight(&self, idf: f64, tf: u32, doc_len: u32) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = tf as f64;
        let norm = 1.0 - b + b * doc_len as f64 / self.avg_doc_length;
        (idf * tf * (k1 + 1.0) / (tf + k1 * norm)).max(0.0)
    }

    /// BM25 score of one document for a tokenized query.
    pub fn bm25_score(&self, query: &[String], doc_id: &str) -> Result<f64> {
        let doc = self
            .doc_index(doc_id)
            .ok_or_else(|| Error::UnknownPassage(doc_id.to_owned()))?;
        let doc_len = self.doc_lengths[doc];
        Ok(query
            .iter()
            .map(|t| {
                let postings = self.postings(t);
                match postings.binary_search_by_key(&(doc as u32), |p| p.doc) {
                    Ok(i) => self.term_weight(self.idf(t), postings[i].tf, doc_len),
                    Err(_) => 0.0,
                }
            })
            .sum())
    }

    /// Top-`k` documents with a positive score for `query`.
    pub fn search(&self, query_id: &str, query: &str, k: usize) -> RankedList {
        let tokens = self.analyzer.tokenize(query);
        let mut scores: BTreeMap<u32, f64> = BTreeMap::new();
        for t in &tokens {
            let postings = self.postings(t);
            if postings.is_empty() {
                continue;
            }
            let idf = self.idf(t);
            for p in postings {
                *scores.entry(p.doc).or_default() +=
                    self.term_weight(idf, p.tf, self.doc_lengths[p.doc as usize]);
            }
        }
        RankedList::from_scores(
            query_id,
            scores
                .into_iter()
                .filter(|(_, s)| *s > 0.0)
                .map(|(d, s)| (self.doc_ids[d as usize].clone(), s)),
            k,
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("index serializes")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let index: Index = serde_json::from_slice(bytes).map_err(|e| Error::IndexFormat(e.to_string()))?;
        if index.format != INDEX_FORMAT || index.version != INDEX_VERSION {
            return Err(Error::IndexFormat(format!(
                "expected {INDEX_FORMAT} v{INDEX_VERSION}, found {} v{}",
                index.format, index.version
            )));
        }
        Ok(index)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
