//! Aggregation of per-query ranked lists into one support list.
//!
//! The individual methods expect normalized lists (see [`FusionInput::normalized`]);
//! [`fuse`] normalizes before dispatching. Lists are visited in a canonical
//! order (by label, i.e. `RankedList::query_id`), so output does not depend
//! on the order the lists were supplied in.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::modelio::Scorer;
use crate::retrieval::{rerank, RankedList};
use crate::MetricMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMethod {
    Sort,
    CombSum,
    CombMnz,
    Pm2,
    Rerank,
}

impl FusionMethod {
    pub const ALL: [FusionMethod; 5] = [
        FusionMethod::Sort,
        FusionMethod::CombSum,
        FusionMethod::CombMnz,
        FusionMethod::Pm2,
        FusionMethod::Rerank,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FusionMethod::Sort => "sort",
            FusionMethod::CombSum => "combsum",
            FusionMethod::CombMnz => "combmnz",
            FusionMethod::Pm2 => "pm2",
            FusionMethod::Rerank => "rerank",
        }
    }
}

impl fmt::Display for FusionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FusionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown fusion method `{s}` (expected sort|combsum|combmnz|pm2|rerank)")))
    }
}

pub const DEFAULT_PM2_LAMBDA: f64 = 0.5;

/// One ranked list per query (user query first by label), with PM2 vote weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionInput {
    pub query_id: String,
    lists: Vec<RankedList>,
    weights: Vec<f64>,
}

impl FusionInput {
    pub fn new(query_id: impl Into<String>, lists: Vec<RankedList>) -> Result<Self> {
        let weights = vec![1.0; lists.len()];
        Self::with_weights(query_id, lists, weights)
    }

    pub fn with_weights(query_id: impl Into<String>, lists: Vec<RankedList>, weights: Vec<f64>) -> Result<Self> {
        if lists.is_empty() {
            return Err(Error::Undefined("fusion over zero lists"));
        }
        if weights.len() != lists.len() || weights.iter().any(|w| w.is_nan() || *w <= 0.0) {
            return Err(Error::Config("fusion weights must be positive, one per list".into()));
        }
        let mut order: Vec<usize> = (0..lists.len()).collect();
        order.sort_by(|&a, &b| lists[a].query_id.cmp(&lists[b].query_id).then(a.cmp(&b)));
        Ok(Self {
            query_id: query_id.into(),
            lists: order.iter().map(|&i| lists[i].clone()).collect(),
            weights: order.iter().map(|&i| weights[i]).collect(),
        })
    }

    /// Same input with every list min-max normalized.
    pub fn normalized(&self) -> Self {
        Self {
            query_id: self.query_id.clone(),
            lists: self.lists.iter().map(normalize).collect(),
            weights: self.weights.clone(),
        }
    }

    /// Lists in canonical order.
    pub fn lists(&self) -> &[RankedList] {
        &self.lists
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Distinct candidate ids in ascending order.
    pub fn union(&self) -> BTreeSet<String> {
        self.lists.iter().flat_map(|l| l.ids()).collect()
    }

    fn per_doc(&self) -> BTreeMap<String, Vec<f64>> {
        let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for list in &self.lists {
            for e in list.entries() {
                out.entry(e.id.clone()).or_default().push(e.score);
            }
        }
        out
    }

    /// Number of lists that contain `id`.
    pub fn membership(&self, id: &str) -> usize {
        self.lists.iter().filter(|l| l.score_of(id).is_some()).count()
    }
}

/// Per-list min-max normalization to [0, 1]. A list whose scores are all
/// equal (including a single entry) maps every score to 1.0.
pub fn normalize(list: &RankedList) -> RankedList {
    let entries = list.entries();
    let (lo, hi) = entries
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e.score), hi.max(e.score)));
    let range = hi - lo;
    RankedList::from_scores(
        list.query_id.clone(),
        entries.iter().map(|e| {
            let s = if range > 0.0 { (e.score - lo) / range } else { 1.0 };
            (e.id.clone(), s)
        }),
        list.k,
    )
}

/// Union of all lists; a passage in several lists keeps its best normalized score.
pub fn fuse_sort(input: &FusionInput, k: usize) -> RankedList {
    RankedList::from_scores(
        input.query_id.clone(),
        input
            .per_doc()
            .into_iter()
            .map(|(id, s)| (id, s.into_iter().fold(f64::NEG_INFINITY, f64::max))),
        k,
    )
}

/// Sum of normalized scores over the lists containing each passage.
pub fn fuse_comb_sum(input: &FusionInput, k: usize) -> RankedList {
    RankedList::from_scores(
        input.query_id.clone(),
        input.per_doc().into_iter().map(|(id, s)| (id, s.iter().sum::<f64>())),
        k,
    )
}

/// CombSum multiplied by the number of lists containing the passage.
pub fn fuse_comb_mnz(input: &FusionInput, k: usize) -> RankedList {
    RankedList::from_scores(
        input.query_id.clone(),
        input
            .per_doc()
            .into_iter()
            .map(|(id, s)| (id, s.len() as f64 * s.iter().sum::<f64>())),
        k,
    )
}

/// Proportional diversification over aspects (one aspect per input list).
///
/// Seats are filled one at a time. Each aspect's quotient is
/// `votes / (2 * seats + 1)`; the aspect with the largest quotient claims the
/// seat and the candidate maximizing
/// `lambda * qt[i*] * rel(d|i*) + (1 - lambda) * sum_{i != i*} qt[i] * rel(d|i)`
/// takes it. Seats are then credited fractionally to every aspect in
/// proportion to the chosen passage's relevance there.
///
/// Ties on the candidate score fall to the larger total relevance, then the
/// smaller id; ties on the quotient fall to the larger vote, then canonical
/// list order. Candidates with zero relevance everywhere cannot win a
/// contested seat and fill any remaining seats last.
///
/// Output scores are rank-derived (`(n - pos) / n`) since PM2 produces an
/// order, not comparable scores.
pub fn fuse_pm2(input: &FusionInput, k: usize, lambda: f64) -> RankedList {
    let lists = input.lists();
    let votes = input.weights();
    let mut candidates: Vec<(String, Vec<f64>)> = input
        .union()
        .into_iter()
        .map(|id| {
            let rel = lists.iter().map(|l| l.score_of(&id).unwrap_or(0.0)).collect();
            (id, rel)
        })
        .collect();
    let mut seats = vec![0.0_f64; lists.len()];
    let mut picked: Vec<String> = Vec::new();
    while picked.len() < k && !candidates.is_empty() {
        let quotients: Vec<f64> = votes
            .iter()
            .zip(&seats)
            .map(|(v, s)| v / (2.0 * s + 1.0))
            .collect();
        let top = (0..lists.len())
            .max_by(|&a, &b| {
                quotients[a]
                    .total_cmp(&quotients[b])
                    .then(votes[a].total_cmp(&votes[b]))
                    .then(b.cmp(&a))
            })
            .expect("at least one aspect");
        let key = |rel: &[f64]| {
            let focused = quotients[top] * rel[top];
            let others: f64 = (0..rel.len()).filter(|&i| i != top).map(|i| quotients[i] * rel[i]).sum();
            (lambda * focused + (1.0 - lambda) * others, rel.iter().sum::<f64>())
        };
        let best = candidates
            .iter()
            .enumerate()
            .max_by(|(_, (ida, ra)), (_, (idb, rb))| {
                let (sa, ta) = key(ra);
                let (sb, tb) = key(rb);
                sa.total_cmp(&sb).then(ta.total_cmp(&tb)).then(idb.cmp(ida))
            })
            .map(|(i, _)| i)
            .expect("non-empty candidates");
        let (id, rel) = candidates.remove(best);
        let total: f64 = rel.iter().sum();
        if total > 0.0 {
            for (s, r) in seats.iter_mut().zip(&rel) {
                *s += r / total;
            }
        }
        picked.push(id);
    }
    let n = picked.len() as f64;
    RankedList::from_scores(
        input.query_id.clone(),
        picked
            .into_iter()
            .enumerate()
            .map(|(pos, id)| (id, (n - pos as f64) / n)),
        k,
    )
}

/// Rescores the deduplicated candidate union against the user query.
pub fn fuse_rerank(
    input: &FusionInput,
    query: &str,
    corpus: &Corpus,
    scorer: &dyn Scorer,
    k: usize,
) -> Result<RankedList> {
    let union = input.union();
    let pool = RankedList::from_scores(
        input.query_id.clone(),
        union.iter().map(|id| (id.clone(), 0.0)),
        union.len(),
    );
    Ok(rerank(&pool, query, corpus, scorer, union.len())?.truncated(k))
}

/// What the rerank method needs beyond the lists themselves.
pub struct RerankContext<'a> {
    pub query: &'a str,
    pub corpus: &'a Corpus,
    pub scorer: &'a dyn Scorer,
}

pub fn fuse(
    method: FusionMethod,
    input: &FusionInput,
    k: usize,
    pm2_lambda: f64,
    ctx: &RerankContext<'_>,
) -> Result<RankedList> {
    let input = &input.normalized();
    Ok(match method {
        FusionMethod::Sort => fuse_sort(input, k),
        FusionMethod::CombSum => fuse_comb_sum(input, k),
        FusionMethod::CombMnz => fuse_comb_mnz(input, k),
        FusionMethod::Pm2 => fuse_pm2(input, k, pm2_lambda),
        FusionMethod::Rerank => fuse_rerank(input, ctx.query, ctx.corpus, ctx.scorer, k)?,
    })
}

/// Per-metric maximum over separately evaluated lists.
pub fn max_oracle(per_list: &[(String, MetricMap)]) -> Result<MetricMap> {
    if per_list.is_empty() {
        return Err(Error::Undefined("max oracle over no evaluations"));
    }
    let mut out = MetricMap::new();
    for (_, metrics) in per_list {
        for (name, &v) in metrics {
            out.entry(name.clone())
                .and_modify(|m: &mut f64| *m = m.max(v))
                .or_insert(v);
        }
    }
    Ok(out)
}
