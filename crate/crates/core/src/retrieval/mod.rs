//! Lexical first-stage retrieval, gateway reranking and ranked-list metrics.

mod eval;
mod index;
mod ranked;
pub mod trec;

pub use eval::{eval_ranked_list, macro_average, ndcg};
pub use index::{Bm25Params, Index, Posting, INDEX_FORMAT, INDEX_VERSION};
pub use ranked::{rank_order, RankedList, ScoredPassage};

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::Result;
use crate::modelio::{ScorePair, ScoreTask, Scorer};

/// Candidate depths of the two-stage ranker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Depths {
    pub first_stage: usize,
    pub rerank: usize,
}

impl Default for Depths {
    fn default() -> Self {
        Self {
            first_stage: 100,
            rerank: 100,
        }
    }
}

/// Rescores the top `depth` entries against `query` through the scoring gateway.
/// Only the rescored entries are kept.
pub fn rerank(
    list: &RankedList,
    query: &str,
    corpus: &Corpus,
    scorer: &dyn Scorer,
    depth: usize,
) -> Result<RankedList> {
    let head = &list.entries()[..depth.min(list.len())];
    if head.is_empty() {
        return Ok(RankedList::empty(list.query_id.clone(), depth));
    }
    let pairs = head
        .iter()
        .map(|e| {
            Ok(ScorePair::new(
                ScoreTask::Rerank,
                query,
                corpus.require(&e.id)?.premise(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let results = scorer.score_pairs(&pairs).map_err(|e| e.with_query(&list.query_id))?;
    Ok(RankedList::from_scores(
        list.query_id.clone(),
        head.iter().zip(results).map(|(e, r)| (e.id.clone(), r.value)),
        depth,
    ))
}

/// First-stage search followed by reranking.
pub fn two_stage(
    index: &Index,
    corpus: &Corpus,
    scorer: &dyn Scorer,
    query_id: &str,
    query: &str,
    depths: Depths,
) -> Result<RankedList> {
    let first = index.search(query_id, query, depths.first_stage);
    rerank(&first, query, corpus, scorer, depths.rerank)
}
