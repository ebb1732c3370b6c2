use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPassage {
    pub id: String,
    pub score: f64,
}

/// Descending score, then ascending id.
pub fn rank_order(a: &ScoredPassage, b: &ScoredPassage) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id))
}

/// Scored passage list, sorted by descending score with ascending-id tie-break,
/// free of duplicates and no longer than `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    entries: Vec<ScoredPassage>,
    pub k: usize,
}

impl RankedList {
    pub fn empty(query_id: impl Into<String>, k: usize) -> Self {
        Self {
            query_id: query_id.into(),
            entries: Vec::new(),
            k,
        }
    }

    /// Sorts, keeps the best score of any duplicate id, and truncates to `k`.
    pub fn from_scores<I, S>(query_id: impl Into<String>, scores: I, k: usize) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut entries: Vec<ScoredPassage> = scores
            .into_iter()
            .map(|(id, score)| ScoredPassage {
                id: id.into(),
                score,
            })
            .collect();
        entries.sort_by(rank_order);
        let mut seen = BTreeSet::new();
        entries.retain(|e| seen.insert(e.id.clone()));
        entries.truncate(k);
        Self {
            query_id: query_id.into(),
            entries,
            k,
        }
    }

    pub fn entries(&self) -> &[ScoredPassage] {
        &self.entries
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.id.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn score_of(&self, id: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.id == id).map(|e| e.score)
    }

    pub fn truncated(&self, k: usize) -> Self {
        let mut out = self.clone();
        out.entries.truncate(k);
        out.k = k;
        out
    }

    pub fn with_query_id(mut self, query_id: impl Into<String>) -> Self {
        self.query_id = query_id.into();
        self
    }

    /// Checks the ordering, uniqueness and capacity invariants.
    pub fn is_well_formed(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.entries.len() <= self.k
            && self.entries.iter().all(|e| seen.insert(e.id.as_str()))
            && self
                .entries
                .windows(2)
                .all(|w| rank_order(&w[0], &w[1]) == Ordering::Less)
    }
}
