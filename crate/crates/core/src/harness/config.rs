use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{CorpusMapping, DatasetMapping};
use crate::error::{Error, Result};
use crate::modelio::{
    Gateway, HttpChat, HttpScorer, MockChat, RetryPolicy, ENV_API_KEY, ENV_LLM_BASE, ENV_SCORER_BASE,
    LexicalScorer,
};
use crate::pipelines::ScenarioConfig;
use crate::retrieval::{Bm25Params, Depths};
use crate::text::Analyzer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    /// Line-delimited JSON passages. Optional when the dataset carries passage text inline.
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    pub queries: PathBuf,
    #[serde(default)]
    pub qrels: Option<PathBuf>,
    #[serde(default)]
    pub fields: DatasetMapping,
    #[serde(default)]
    pub corpus_fields: CorpusMapping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSection {
    /// Prebuilt index (file or directory holding `index.json`); built in memory when absent.
    pub index: Option<PathBuf>,
    pub k1: f64,
    pub b: f64,
    pub stopwords: Vec<String>,
    pub first_stage: usize,
    pub rerank: usize,
    pub cutoffs: Vec<usize>,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        let p = Bm25Params::default();
        let d = Depths::default();
        Self {
            index: None,
            k1: p.k1,
            b: p.b,
            stopwords: Vec::new(),
            first_stage: d.first_stage,
            rerank: d.rerank,
            cutoffs: vec![1, 10],
        }
    }
}

impl RetrievalSection {
    pub fn params(&self) -> Bm25Params {
        Bm25Params { k1: self.k1, b: self.b }
    }

    pub fn analyzer(&self) -> Analyzer {
        Analyzer {
            stopwords: self.stopwords.clone(),
            ..Analyzer::default()
        }
    }

    pub fn depths(&self) -> Depths {
        Depths {
            first_stage: self.first_stage,
            rerank: self.rerank,
        }
    }

    pub fn index_file(&self) -> Option<PathBuf> {
        self.index.as_ref().map(|p| if p.is_dir() { p.join("index.json") } else { p.clone() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewaySection {
    /// Use the in-process cite-echo chat and lexical scorer.
    pub mock: bool,
    /// JSON object of scripted chat responses keyed by query id (or `{id}/subqueries`).
    pub fixtures: Option<PathBuf>,
    /// Defaults to `ATTRIB_LLM_BASE`.
    pub llm_base: Option<String>,
    /// Defaults to `ATTRIB_SCORER_BASE`.
    pub scorer_base: Option<String>,
    pub model: String,
    pub nli_threshold: f64,
    pub batch_size: usize,
    pub attempts: u32,
    pub initial_backoff_ms: u64,
    pub timeout_secs: u64,
}

impl Default for GatewaySection {
    fn default() -> Self {
        let r = RetryPolicy::default();
        Self {
            mock: false,
            fixtures: None,
            llm_base: None,
            scorer_base: None,
            model: "default".into(),
            nli_threshold: crate::modelio::DEFAULT_NLI_THRESHOLD,
            batch_size: HttpScorer::DEFAULT_BATCH_SIZE,
            attempts: r.attempts,
            initial_backoff_ms: r.initial_backoff.as_millis() as u64,
            timeout_secs: r.timeout.as_secs(),
        }
    }
}

impl GatewaySection {
    pub fn retry(&self) -> RetryPolicy {
        RetryPolicy {
            attempts: self.attempts,
            initial_backoff: Duration::from_millis(self.initial_backoff_ms),
            timeout: Duration::from_secs(self.timeout_secs),
        }
    }

    /// Scripted responses, or an empty map.
    pub fn load_fixtures(&self) -> Result<std::collections::BTreeMap<String, String>> {
        let Some(path) = &self.fixtures else {
            return Ok(Default::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("fixtures {}: {e}", path.display())))
    }

    pub fn build(&self) -> Result<Gateway> {
        let mut gateway = if self.mock {
            Gateway::new(
                Arc::new(MockChat::new(self.load_fixtures()?)),
                Arc::new(LexicalScorer::default()),
            )
        } else {
            let env = |name: &str| std::env::var(name).ok().filter(|v| !v.is_empty());
            let llm = self.llm_base.clone().or_else(|| env(ENV_LLM_BASE)).ok_or_else(|| {
                Error::Config(format!("no chat backend: set gateway.llm_base or {ENV_LLM_BASE}, or use mock"))
            })?;
            let scorer = self.scorer_base.clone().or_else(|| env(ENV_SCORER_BASE)).ok_or_else(|| {
                Error::Config(format!("no scoring backend: set gateway.scorer_base or {ENV_SCORER_BASE}, or use mock"))
            })?;
            let key = env(ENV_API_KEY);
            Gateway::new(
                Arc::new(HttpChat::new(&llm, &self.model, key.clone(), self.retry())),
                Arc::new(HttpScorer::new(&scorer, key, self.batch_size, self.retry())),
            )
        };
        gateway.nli_threshold = self.nli_threshold;
        Ok(gateway)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessSection {
    /// Concurrent queries.
    pub parallelism: usize,
    pub out: Option<PathBuf>,
    /// A run with a larger share of failed queries is marked failed.
    pub max_failure_rate: f64,
}

impl Default for HarnessSection {
    fn default() -> Self {
        Self {
            parallelism: 4,
            out: None,
            max_failure_rate: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    #[serde(default)]
    pub retrieval: RetrievalSection,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub gateway: GatewaySection,
    #[serde(default)]
    pub harness: HarnessSection,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl ExperimentConfig {
    /// Parses TOML; relative paths are taken relative to `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        resolve(base, &mut cfg.dataset.queries);
        for p in [
            &mut cfg.dataset.corpus,
            &mut cfg.dataset.qrels,
            &mut cfg.retrieval.index,
            &mut cfg.gateway.fixtures,
            &mut cfg.harness.out,
        ]
        .into_iter()
        .flatten()
        {
            resolve(base, p);
        }
        cfg.sync_depths();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Copies retrieval depths into the scenario settings.
    pub fn sync_depths(&mut self) {
        self.scenario.depths = self.retrieval.depths();
    }

    pub fn validate(&self) -> Result<()> {
        let must_exist = |p: &Path, what: &str| {
            if p.exists() {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} {} does not exist", p.display())))
            }
        };
        must_exist(&self.dataset.queries, "dataset")?;
        if let Some(p) = &self.dataset.corpus {
            must_exist(p, "corpus")?;
        }
        if let Some(p) = &self.dataset.qrels {
            must_exist(p, "qrels")?;
        }
        if let Some(p) = &self.retrieval.index {
            must_exist(p, "index")?;
        }
        if let Some(p) = &self.gateway.fixtures {
            must_exist(p, "fixtures")?;
        }
        self.scenario.validate()?;
        if !(0.0..=1.0).contains(&self.gateway.nli_threshold) {
            return Err(Error::Config("gateway.nli_threshold must lie in [0, 1]".into()));
        }
        if self.harness.parallelism == 0 {
            return Err(Error::Config("harness.parallelism must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.harness.max_failure_rate) {
            return Err(Error::Config("harness.max_failure_rate must lie in [0, 1]".into()));
        }
        if self.retrieval.cutoffs.contains(&0) {
            return Err(Error::Config("retrieval cutoffs must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form of every field except the
    /// output location, which does not affect results.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.harness.out = None;
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}
