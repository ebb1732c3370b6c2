use std::thread;
use std::time::Duration;

use crate::error::{Error, Result};

use super::{
    batch_task, ChatModel, ChatRequest, ChatRequestBody, ChatResponseBody, ScorePair,
    ScoreRequestBody, ScoreResponseBody, ScoreResult, Scorer, WirePair,
};

pub const ENV_LLM_BASE: &str = "ATTRIB_LLM_BASE";
pub const ENV_SCORER_BASE: &str = "ATTRIB_SCORER_BASE";
pub const ENV_API_KEY: &str = "ATTRIB_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: Duration::from_millis(250),
            timeout: Duration::from_secs(60),
        }
    }
}

enum Failure {
    Retryable(String),
    Fatal(String),
}

impl RetryPolicy {
    fn run<T>(&self, query_id: Option<&str>, mut call: impl FnMut() -> Result<T, Failure>) -> Result<T> {
        let mut backoff = self.initial_backoff;
        let mut last = String::new();
        for attempt in 1..=self.attempts.max(1) {
            match call() {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(msg)) => return Err(Error::gateway(query_id, msg)),
                Err(Failure::Retryable(msg)) => {
                    log::debug!("attempt {attempt} failed: {msg}");
                    last = msg;
                }
            }
            if attempt < self.attempts {
                thread::sleep(backoff);
                backoff *= 2;
            }
        }
        Err(Error::gateway(
            query_id,
            format!("giving up after {} attempts: {last}", self.attempts.max(1)),
        ))
    }
}

fn agent(policy: &RetryPolicy) -> ureq::Agent {
    ureq::AgentBuilder::new().timeout(policy.timeout).build()
}

fn post<T: serde::de::DeserializeOwned>(
    agent: &ureq::Agent,
    url: &str,
    api_key: Option<&str>,
    body: &impl serde::Serialize,
) -> Result<T, Failure> {
    let mut req = agent.post(url);
    if let Some(key) = api_key {
        req = req.set("Authorization", &format!("Bearer {key}"));
    }
    match req.send_json(body) {
        Ok(resp) => resp
            .into_json::<T>()
            .map_err(|e| Failure::Retryable(format!("bad response body from {url}: {e}"))),
        Err(ureq::Error::Status(code, resp)) => {
            let text = resp.into_string().unwrap_or_default();
            let msg = format!("{url} returned HTTP {code}: {text}");
            if code == 429 || code >= 500 {
                Err(Failure::Retryable(msg))
            } else {
                Err(Failure::Fatal(msg))
            }
        }
        Err(e) => Err(Failure::Retryable(format!("{url}: {e}"))),
    }
}

fn env_key() -> Option<String> {
    std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty())
}

/// Chat-completion client for `POST {base}/v1/chat/completions`.
#[derive(Debug, Clone)]
pub struct HttpChat {
    agent: ureq::Agent,
    base: String,
    model: String,
    api_key: Option<String>,
    retry: RetryPolicy,
}

impl HttpChat {
    pub fn new(base: &str, model: &str, api_key: Option<String>, retry: RetryPolicy) -> Self {
        Self {
            agent: agent(&retry),
            base: base.trim_end_matches('/').to_owned(),
            model: model.to_owned(),
            api_key,
            retry,
        }
    }

    /// Reads the base URL and bearer key from `ATTRIB_LLM_BASE` / `ATTRIB_API_KEY`.
    pub fn from_env(model: &str, retry: RetryPolicy) -> Option<Self> {
        let base = std::env::var(ENV_LLM_BASE).ok().filter(|b| !b.is_empty())?;
        Some(Self::new(&base, model, env_key(), retry))
    }
}

impl ChatModel for HttpChat {
    fn id(&self) -> String {
        format!("http:{}#{}", self.base, self.model)
    }

    fn chat(&self, request: &ChatRequest) -> Result<String> {
        request.validate()?;
        let body = ChatRequestBody {
            model: self.model.clone(),
            messages: request.messages.clone(),
            temperature: request.temperature,
            max_tokens: request.max_tokens,
            seed: request.seed,
        };
        let url = format!("{}/v1/chat/completions", self.base);
        self.retry.run(Some(&request.meta.query_id), || {
            let resp: ChatResponseBody = post(&self.agent, &url, self.api_key.as_deref(), &body)?;
            resp.choices
                .into_iter()
                .next()
                .map(|c| c.message.content.unwrap_or_default())
                .ok_or_else(|| Failure::Retryable("response has no choices".into()))
        })
    }
}

/// Scoring client for `POST {base}/v1/score`. Large inputs are split into
/// batches of at most `batch_size` pairs; a failed batch is retried whole.
#[derive(Debug, Clone)]
pub struct HttpScorer {
    agent: ureq::Agent,
    base: String,
    api_key: Option<String>,
    batch_size: usize,
    retry: RetryPolicy,
}

impl HttpScorer {
    pub const DEFAULT_BATCH_SIZE: usize = 64;

    pub fn new(base: &str, api_key: Option<String>, batch_size: usize, retry: RetryPolicy) -> Self {
        Self {
            agent: agent(&retry),
            base: base.trim_end_matches('/').to_owned(),
            api_key,
            batch_size: batch_size.max(1),
            retry,
        }
    }

    /// Reads the base URL and bearer key from `ATTRIB_SCORER_BASE` / `ATTRIB_API_KEY`.
    pub fn from_env(batch_size: usize, retry: RetryPolicy) -> Option<Self> {
        let base = std::env::var(ENV_SCORER_BASE).ok().filter(|b| !b.is_empty())?;
        Some(Self::new(&base, env_key(), batch_size, retry))
    }
}

impl Scorer for HttpScorer {
    fn id(&self) -> String {
        format!("http:{}", self.base)
    }

    fn score_pairs(&self, pairs: &[ScorePair]) -> Result<Vec<ScoreResult>> {
        let Some(task) = batch_task(pairs)? else {
            return Ok(Vec::new());
        };
        let url = format!("{}/v1/score", self.base);
        let mut out = Vec::with_capacity(pairs.len());
        for chunk in pairs.chunks(self.batch_size) {
            let body = ScoreRequestBody {
                task,
                pairs: chunk
                    .iter()
                    .map(|p| WirePair {
                        a: p.a.clone(),
                        b: p.b.clone(),
                    })
                    .collect(),
            };
            let results: Vec<ScoreResult> = self.retry.run(None, || {
                let resp: ScoreResponseBody = post(&self.agent, &url, self.api_key.as_deref(), &body)?;
                if resp.results.len() != chunk.len() {
                    return Err(Failure::Retryable(format!(
                        "expected {} results, got {}",
                        chunk.len(),
                        resp.results.len()
                    )));
                }
                resp.results
                    .into_iter()
                    .map(|mut r| {
                        if !r.value.is_finite() {
                            return Err(Failure::Retryable("non-finite score".into()));
                        }
                        r.value = r.value.clamp(0.0, 1.0);
                        Ok(r)
                    })
                    .collect()
            })?;
            out.extend(results);
        }
        Ok(out)
    }
}
