use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::text::{cite_sentence, segment_statements, Analyzer};

use super::{batch_task, ChatModel, ChatRequest, Purpose, ScorePair, ScoreResult, ScoreTask, Scorer};

/// Fixture key for a request: the query id, suffixed `/subqueries` for
/// reformulation requests.
pub fn fixture_key(request: &ChatRequest) -> String {
    match request.meta.purpose {
        Purpose::Answer => request.meta.query_id.clone(),
        Purpose::Subqueries(_) => format!("{}/subqueries", request.meta.query_id),
    }
}

/// Replays fixture text keyed by query id.
#[derive(Debug, Clone, Default)]
pub struct ScriptedChat {
    fixtures: BTreeMap<String, String>,
}

impl ScriptedChat {
    pub fn new(fixtures: BTreeMap<String, String>) -> Self {
        Self { fixtures }
    }
}

impl ChatModel for ScriptedChat {
    fn id(&self) -> String {
        "scripted".into()
    }

    fn chat(&self, request: &ChatRequest) -> Result<String> {
        request.validate()?;
        let key = fixture_key(request);
        self.fixtures
            .get(&key)
            .cloned()
            .ok_or_else(|| Error::gateway(Some(&request.meta.query_id), format!("no fixture for `{key}`")))
    }
}

/// Answers by echoing the first sentence of each supplied passage with its
/// marker (`[1]`, `[2]`, ...). Without passages it restates the query; asked
/// for reformulations it emits leave-one-word-out variants of the query.
#[derive(Debug, Clone, Copy, Default)]
pub struct CiteEchoChat;

impl CiteEchoChat {
    fn answer(request: &ChatRequest) -> String {
        if request.meta.documents.is_empty() {
            let q = request.meta.query.trim().trim_end_matches(['?', '.', '!']);
            return if q.is_empty() { String::new() } else { format!("{q}.") };
        }
        request
            .meta
            .documents
            .iter()
            .enumerate()
            .filter_map(|(i, doc)| {
                segment_statements(doc)
                    .into_iter()
                    .next()
                    .map(|s| cite_sentence(&s, &[i + 1]))
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn reformulate(query: &str, m: usize) -> String {
        let words: Vec<&str> = query.split_whitespace().collect();
        if words.len() < 2 {
            return String::new();
        }
        (0..m.min(words.len()))
            .map(|skip| {
                words
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != skip)
                    .map(|(_, w)| *w)
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl ChatModel for CiteEchoChat {
    fn id(&self) -> String {
        "cite-echo".into()
    }

    fn chat(&self, request: &ChatRequest) -> Result<String> {
        request.validate()?;
        Ok(match request.meta.purpose {
            Purpose::Answer => Self::answer(request),
            Purpose::Subqueries(m) => Self::reformulate(&request.meta.query, m),
        })
    }
}

/// Scripted fixtures where present, cite-echo otherwise.
#[derive(Debug, Clone, Default)]
pub struct MockChat {
    scripted: ScriptedChat,
}

impl MockChat {
    pub fn new(fixtures: BTreeMap<String, String>) -> Self {
        Self {
            scripted: ScriptedChat::new(fixtures),
        }
    }
}

impl ChatModel for MockChat {
    fn id(&self) -> String {
        if self.scripted.fixtures.is_empty() {
            "cite-echo".into()
        } else {
            "scripted+cite-echo".into()
        }
    }

    fn chat(&self, request: &ChatRequest) -> Result<String> {
        request.validate()?;
        match self.scripted.fixtures.get(&fixture_key(request)) {
            Some(text) => Ok(text.clone()),
            None => CiteEchoChat.chat(request),
        }
    }
}

/// Token-set overlap scorer.
///
/// * `nli`: share of hypothesis tokens found in the premise (containment gives 1.0)
/// * `rerank`: share of query tokens found in the passage
/// * `similarity`: overlap precision/recall/F1 of candidate against reference; value is F1
#[derive(Debug, Clone, Default)]
pub struct LexicalScorer {
    pub analyzer: Analyzer,
}

impl LexicalScorer {
    fn set(&self, text: &str) -> BTreeSet<String> {
        self.analyzer.tokenize(text).into_iter().collect()
    }

    fn score_one(&self, pair: &ScorePair) -> ScoreResult {
        let a = self.set(&pair.a);
        let b = self.set(&pair.b);
        let shared = a.intersection(&b).count() as f64;
        let ratio = |n: usize| if n == 0 { 0.0 } else { shared / n as f64 };
        match pair.task {
            ScoreTask::Nli => ScoreResult::value(ratio(b.len())),
            ScoreTask::Rerank => ScoreResult::value(ratio(a.len())),
            ScoreTask::Similarity => {
                let p = ratio(a.len());
                let r = ratio(b.len());
                let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
                ScoreResult {
                    value: f,
                    aux: Some(BTreeMap::from([
                        ("precision".to_owned(), p),
                        ("recall".to_owned(), r),
                        ("f1".to_owned(), f),
                    ])),
                }
            }
        }
    }
}

impl Scorer for LexicalScorer {
    fn id(&self) -> String {
        "lexical".into()
    }

    fn score_pairs(&self, pairs: &[ScorePair]) -> Result<Vec<ScoreResult>> {
        batch_task(pairs)?;
        Ok(pairs.iter().map(|p| self.score_one(p)).collect())
    }
}
