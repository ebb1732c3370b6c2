//! Uniform access to generative and scoring models.
//!
//! Chat completions and pair scoring each go through one trait so pipelines
//! and metrics run unchanged against HTTP backends or the in-process mocks.

mod http;
mod mock;

pub use http::{HttpChat, HttpScorer, RetryPolicy, ENV_API_KEY, ENV_LLM_BASE, ENV_SCORER_BASE};
pub use mock::{CiteEchoChat, LexicalScorer, MockChat, ScriptedChat};

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }
}

/// What a chat request is for. Carried alongside the request, never sent.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Purpose {
    #[default]
    Answer,
    Subqueries(usize),
}

/// Request context for diagnostics and mocks; not part of the wire body.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RequestMeta {
    pub query_id: String,
    pub query: String,
    pub purpose: Purpose,
    /// Passage bodies presented to the model, in marker order.
    pub documents: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
    pub meta: RequestMeta,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<()> {
        if !self.messages.iter().any(|m| m.role == Role::User) {
            return Err(Error::gateway(
                Some(&self.meta.query_id),
                "chat request has no user message",
            ));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(Error::gateway(Some(&self.meta.query_id), "temperature must be >= 0"));
        }
        Ok(())
    }
}

pub trait ChatModel: Send + Sync {
    fn id(&self) -> String;
    fn chat(&self, request: &ChatRequest) -> Result<String>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreTask {
    /// `a` premise, `b` hypothesis.
    Nli,
    /// `a` query, `b` passage.
    Rerank,
    /// `a` candidate, `b` reference.
    Similarity,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScorePair {
    pub task: ScoreTask,
    pub a: String,
    pub b: String,
}

impl ScorePair {
    pub fn new(task: ScoreTask, a: impl Into<String>, b: impl Into<String>) -> Self {
        Self {
            task,
            a: a.into(),
            b: b.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResult {
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux: Option<BTreeMap<String, f64>>,
}

impl ScoreResult {
    pub fn value(value: f64) -> Self {
        Self { value, aux: None }
    }
}

pub trait Scorer: Send + Sync {
    fn id(&self) -> String;
    /// Results are positionally aligned with `pairs`; every pair shares one task.
    fn score_pairs(&self, pairs: &[ScorePair]) -> Result<Vec<ScoreResult>>;
}

/// The single task of a batch, or an error when tasks are mixed.
pub fn batch_task(pairs: &[ScorePair]) -> Result<Option<ScoreTask>> {
    let Some(first) = pairs.first() else {
        return Ok(None);
    };
    if pairs.iter().any(|p| p.task != first.task) {
        return Err(Error::gateway(None, "score batch mixes tasks"));
    }
    Ok(Some(first.task))
}

pub const DEFAULT_NLI_THRESHOLD: f64 = 0.5;

/// Entailment decision: true iff the entailment score reaches `threshold`.
pub fn nli_binary(scorer: &dyn Scorer, premise: &str, hypothesis: &str, threshold: f64) -> Result<bool> {
    let r = scorer.score_pairs(&[ScorePair::new(ScoreTask::Nli, premise, hypothesis)])?;
    let v = r
        .first()
        .ok_or_else(|| Error::gateway(None, "empty NLI response"))?
        .value;
    Ok(v >= threshold)
}

/// Chat and scoring backends used by a run.
#[derive(Clone)]
pub struct Gateway {
    pub chat: Arc<dyn ChatModel>,
    pub scorer: Arc<dyn Scorer>,
    pub nli_threshold: f64,
}

impl Gateway {
    pub fn new(chat: Arc<dyn ChatModel>, scorer: Arc<dyn Scorer>) -> Self {
        Self {
            chat,
            scorer,
            nli_threshold: DEFAULT_NLI_THRESHOLD,
        }
    }

    /// Cite-echo chat (with optional scripted fixtures) and the lexical scorer.
    pub fn mock(fixtures: BTreeMap<String, String>) -> Self {
        Self::new(
            Arc::new(MockChat::new(fixtures)),
            Arc::new(LexicalScorer::default()),
        )
    }

    pub fn backend_ids(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("chat".to_owned(), self.chat.id()),
            ("scorer".to_owned(), self.scorer.id()),
        ])
    }
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("chat", &self.chat.id())
            .field("scorer", &self.scorer.id())
            .field("nli_threshold", &self.nli_threshold)
            .finish()
    }
}

/// JSON body of `POST {base}/v1/score`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequestBody {
    pub task: ScoreTask,
    pub pairs: Vec<WirePair>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WirePair {
    pub a: String,
    pub b: String,
}

/// JSON response of `POST {base}/v1/score`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponseBody {
    pub results: Vec<ScoreResult>,
}

/// JSON body of `POST {base}/v1/chat/completions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequestBody {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponseBody {
    pub choices: Vec<ChatChoice>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatChoice {
    pub message: ChatChoiceMessage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatChoiceMessage {
    #[serde(default)]
    pub content: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(f64);

    impl Scorer for Fixed {
        fn id(&self) -> String {
            "fixed".into()
        }
        fn score_pairs(&self, pairs: &[ScorePair]) -> Result<Vec<ScoreResult>> {
            Ok(pairs.iter().map(|_| ScoreResult::value(self.0)).collect())
        }
    }

    #[test]
    fn nli_threshold_is_inclusive() {
        assert!(nli_binary(&Fixed(1.0), "p", "h", 0.5).unwrap());
        assert!(!nli_binary(&Fixed(0.0), "p", "h", 0.5).unwrap());
        assert!(nli_binary(&Fixed(0.5), "p", "h", 0.5).unwrap());
        assert!(!nli_binary(&Fixed(0.4999), "p", "h", 0.5).unwrap());
    }

    #[test]
    fn mixed_task_batches_are_rejected() {
        let pairs = [
            ScorePair::new(ScoreTask::Nli, "a", "b"),
            ScorePair::new(ScoreTask::Rerank, "a", "b"),
        ];
        assert!(batch_task(&pairs).is_err());
        assert_eq!(batch_task(&pairs[..1]).unwrap(), Some(ScoreTask::Nli));
        assert_eq!(batch_task(&[]).unwrap(), None);
    }

    #[test]
    fn request_needs_a_user_message() {
        let mut req = ChatRequest {
            messages: vec![ChatMessage::system("s")],
            temperature: 0.0,
            max_tokens: 16,
            seed: None,
            meta: RequestMeta::default(),
        };
        assert!(req.validate().is_err());
        req.messages.push(ChatMessage::user("u"));
        assert!(req.validate().is_ok());
    }

    #[test]
    fn wire_bodies_have_the_documented_shape() {
        let body = ChatRequestBody {
            model: "m".into(),
            messages: vec![ChatMessage::user("hi")],
            temperature: 0.0,
            max_tokens: 8,
            seed: Some(7),
        };
        assert_eq!(
            serde_json::to_string(&body).unwrap(),
            r#"{"model":"m","messages":[{"role":"user","content":"hi"}],"temperature":0.0,"max_tokens":8,"seed":7}"#
        );
        let score = ScoreRequestBody {
            task: ScoreTask::Nli,
            pairs: vec![WirePair {
                a: "p".into(),
                b: "h".into(),
            }],
        };
        assert_eq!(
            serde_json::to_string(&score).unwrap(),
            r#"{"task":"nli","pairs":[{"a":"p","b":"h"}]}"#
        );
    }
}
