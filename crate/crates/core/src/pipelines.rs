//! The attribution scenarios: closed-book generation (G), retrieve-then-generate
//! (RTG, with gold, vanilla and query-generation variants) and
//! generate-then-retrieve (GTR).

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{AttributedAnswer, Corpus, EvalQuery, Statement};
use crate::error::{Error, Result};
use crate::fusion::{fuse, FusionInput, FusionMethod, RerankContext, DEFAULT_PM2_LAMBDA};
use crate::modelio::{ChatMessage, ChatRequest, Gateway, Purpose, RequestMeta};
use crate::retrieval::{two_stage, Depths, Index, RankedList};
use crate::text::normalize_whitespace;

pub use crate::text::{parse_attributed_answer, segment_statements};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    G,
    RtgGold,
    RtgVanilla,
    RtgQueryGen,
    Gtr,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::G,
        Scenario::RtgGold,
        Scenario::RtgVanilla,
        Scenario::RtgQueryGen,
        Scenario::Gtr,
    ];

    /// Command-line spelling, e.g. `rtg-gold`.
    pub fn name(self) -> &'static str {
        match self {
            Scenario::G => "g",
            Scenario::RtgGold => "rtg-gold",
            Scenario::RtgVanilla => "rtg-vanilla",
            Scenario::RtgQueryGen => "rtg-query-gen",
            Scenario::Gtr => "gtr",
        }
    }

    pub fn is_rtg(self) -> bool {
        matches!(self, Scenario::RtgGold | Scenario::RtgVanilla | Scenario::RtgQueryGen)
    }

    pub fn needs_index(self) -> bool {
        matches!(self, Scenario::RtgVanilla | Scenario::RtgQueryGen | Scenario::Gtr)
    }

    /// Citation metrics are meaningless for closed-book answers.
    pub fn has_citations(self) -> bool {
        self != Scenario::G
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario `{s}` (expected g|rtg-gold|rtg-vanilla|rtg-query-gen|gtr)")))
    }
}

/// Versioned prompt templates shipped with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptSet {
    pub id: &'static str,
    pub g: &'static str,
    pub rtg: &'static str,
    pub query_gen: &'static str,
}

pub const PROMPTS_V1: PromptSet = PromptSet {
    id: "v1",
    g: include_str!("../prompts/v1/g.txt"),
    rtg: include_str!("../prompts/v1/rtg.txt"),
    query_gen: include_str!("../prompts/v1/query_gen.txt"),
};

pub fn prompt_set(id: &str) -> Result<PromptSet> {
    match id {
        "v1" => Ok(PROMPTS_V1),
        other => Err(Error::Config(format!("unknown prompt set `{other}`"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub k_docs: usize,
    pub m_subqueries: usize,
    pub fusion: FusionMethod,
    pub pm2_lambda: f64,
    pub k_per_statement: usize,
    pub prompt_set: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
    /// Set from the retrieval settings of an experiment.
    #[serde(skip)]
    pub depths: Depths,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::RtgVanilla,
            k_docs: 2,
            m_subqueries: 3,
            fusion: FusionMethod::Rerank,
            pm2_lambda: DEFAULT_PM2_LAMBDA,
            k_per_statement: 1,
            prompt_set: "v1".into(),
            temperature: 0.0,
            max_tokens: 512,
            seed: Some(0),
            depths: Depths::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scenario.is_rtg() && self.k_docs == 0 {
            return Err(Error::Config("k_docs must be at least 1".into()));
        }
        if self.scenario == Scenario::Gtr && self.k_per_statement == 0 {
            return Err(Error::Config("k_per_statement must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.pm2_lambda) {
            return Err(Error::Config("pm2_lambda must lie in [0, 1]".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(Error::Config("temperature must be >= 0".into()));
        }
        if self.depths.first_stage == 0 || self.depths.rerank == 0 {
            return Err(Error::Config("retrieval depths must be at least 1".into()));
        }
        prompt_set(&self.prompt_set)?;
        Ok(())
    }
}

/// Reformulations of one user query.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubqueryBatch {
    pub origin: String,
    pub queries: Vec<String>,
}

/// Everything a scenario run needs besides the query.
#[derive(Clone, Copy)]
pub struct Context<'a> {
    pub config: &'a ScenarioConfig,
    pub corpus: &'a Corpus,
    pub index: Option<&'a Index>,
    pub gateway: &'a Gateway,
}

impl<'a> Context<'a> {
    fn index(&self) -> Result<&'a Index> {
        self.index
            .ok_or_else(|| Error::Config(format!("scenario {} needs a retrieval index", self.config.scenario)))
    }

    fn prompts(&self) -> Result<PromptSet> {
        prompt_set(&self.config.prompt_set)
    }

    fn request(&self, prompt: String, meta: RequestMeta) -> ChatRequest {
        ChatRequest {
            messages: vec![ChatMessage::user(prompt)],
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
            seed: self.config.seed,
            meta,
        }
    }

    fn retrieve(&self, query_id: &str, query: &str) -> Result<RankedList> {
        two_stage(
            self.index()?,
            self.corpus,
            self.gateway.scorer.as_ref(),
            query_id,
            query,
            self.config.depths,
        )
        .map_err(|e| e.with_query(query_id))
    }
}

/// One scenario run for one query, as written to `predictions.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub query_id: String,
    pub scenario: Scenario,
    pub answer_raw: String,
    pub statements: Vec<Statement>,
    pub support: Vec<String>,
    /// GTR only: the passages retrieved for each statement.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub statement_support: Vec<Vec<String>>,
    pub subqueries: Vec<String>,
    pub diagnostics: Vec<String>,
}

impl PipelineOutput {
    pub fn answer(&self) -> AttributedAnswer {
        AttributedAnswer {
            statements: self.statements.clone(),
            raw_text: self.answer_raw.clone(),
        }
    }

    pub fn support_list(&self) -> RankedList {
        ids_as_list(&self.query_id, &self.support)
    }

    pub fn statement_support_lists(&self) -> Vec<RankedList> {
        self.statement_support
            .iter()
            .map(|ids| ids_as_list(&self.query_id, ids))
            .collect()
    }
}

/// Rank-preserving list from bare ids (scores descend from 1).
fn ids_as_list(query_id: &str, ids: &[String]) -> RankedList {
    let n = ids.len() as f64;
    RankedList::from_scores(
        query_id,
        ids.iter().enumerate().map(|(i, id)| (id.clone(), (n - i as f64) / n)),
        ids.len(),
    )
}

/// A scenario run plus the ranked lists behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub output: PipelineOutput,
    /// The supporting list P with its retrieval scores.
    pub support: RankedList,
    /// One list per retrieval query: the user query first (label `t000`),
    /// then each subquery (`t001`, ...).
    pub query_lists: Vec<RankedList>,
}

/// Label of the `t`-th retrieval list of a query (0 is the user query).
pub fn list_label(t: usize) -> String {
    format!("t{t:03}")
}

fn render(template: &str, vars: &[(&str, &str)]) -> String {
    vars.iter()
        .fold(template.to_owned(), |acc, (k, v)| acc.replace(&format!("{{{k}}}"), v))
}

fn empty_answer_note(answer: &AttributedAnswer, diagnostics: &mut Vec<String>) {
    if answer.statements.is_empty() {
        diagnostics.push("empty answer".into());
    }
}

/// Closed-book answer; carries no citations.
pub fn run_g(query: &EvalQuery, ctx: &Context<'_>) -> Result<PipelineRun> {
    let prompt = render(ctx.prompts()?.g, &[("query", &query.text)]);
    let meta = RequestMeta {
        query_id: query.id.clone(),
        query: query.text.clone(),
        purpose: Purpose::Answer,
        documents: Vec::new(),
    };
    let raw = ctx.gateway.chat.chat(&ctx.request(prompt, meta)).map_err(|e| e.with_query(&query.id))?;
    let (mut answer, mut diagnostics) = parse_attributed_answer(&raw, &[]);
    // closed-book markers point nowhere; the parse already dropped them
    for s in &mut answer.statements {
        s.citations.clear();
    }
    empty_answer_note(&answer, &mut diagnostics);
    Ok(PipelineRun {
        output: PipelineOutput {
            query_id: query.id.clone(),
            scenario: Scenario::G,
            answer_raw: raw,
            statements: answer.statements,
            support: Vec::new(),
            statement_support: Vec::new(),
            subqueries: Vec::new(),
            diagnostics,
        },
        support: RankedList::empty(query.id.clone(), 0),
        query_lists: Vec::new(),
    })
}

/// Strips list decoration such as `1.`, `2)` or `-` from a generated line.
fn clean_subquery(line: &str) -> String {
    let t = line.trim();
    let t = t.trim_start_matches(['-', '*', '•']).trim_start();
    let digits = t.chars().take_while(|c| c.is_ascii_digit()).count();
    let t = if digits > 0 && t[digits..].starts_with(['.', ')', ':']) {
        t[digits + 1..].trim_start()
    } else {
        t
    };
    normalize_whitespace(t.trim_matches('"'))
}

/// Asks the model for up to `m` reformulations of the query, one per line.
/// Lines are cleaned and deduplicated in order; unusable output yields an
/// empty batch and a diagnostic.
pub fn generate_subqueries(query: &EvalQuery, m: usize, ctx: &Context<'_>) -> Result<(SubqueryBatch, Vec<String>)> {
    let mut batch = SubqueryBatch {
        origin: query.id.clone(),
        queries: Vec::new(),
    };
    if m == 0 {
        return Ok((batch, Vec::new()));
    }
    let prompt = render(
        ctx.prompts()?.query_gen,
        &[("query", &query.text), ("m", &m.to_string())],
    );
    let meta = RequestMeta {
        query_id: query.id.clone(),
        query: query.text.clone(),
        purpose: Purpose::Subqueries(m),
        documents: Vec::new(),
    };
    let raw = ctx.gateway.chat.chat(&ctx.request(prompt, meta)).map_err(|e| e.with_query(&query.id))?;
    let mut seen = BTreeSet::new();
    for line in raw.lines() {
        let q = clean_subquery(line);
        if !q.is_empty() && seen.insert(q.clone()) {
            batch.queries.push(q);
        }
    }
    batch.queries.truncate(m);
    let mut diagnostics = Vec::new();
    if batch.queries.is_empty() {
        diagnostics.push("no usable subqueries; retrieving with the user query only".into());
    }
    Ok((batch, diagnostics))
}

/// Gold supporting list: every relevant gold passage, best grade first.
fn gold_support(query: &EvalQuery, corpus: &Corpus) -> Result<RankedList> {
    let mut gold: Vec<_> = query.gold_passages.iter().filter(|g| g.is_relevant()).collect();
    gold.sort_by(|a, b| b.grade.cmp(&a.grade).then(a.id.cmp(&b.id)));
    for g in &gold {
        if !corpus.contains(&g.id) {
            return Err(Error::UnknownPassage(g.id.clone()));
        }
    }
    Ok(RankedList::from_scores(
        query.id.clone(),
        gold.iter().map(|g| (g.id.clone(), g.grade as f64)),
        gold.len(),
    ))
}

/// Retrieve-then-generate. The supporting list is presented to the model as
/// `[1]..[k]` in rank order and the markers in the answer are mapped back
/// positionally.
pub fn run_rtg(query: &EvalQuery, ctx: &Context<'_>) -> Result<PipelineRun> {
    let cfg = ctx.config;
    let mut diagnostics = Vec::new();
    let mut subqueries = Vec::new();
    let mut query_lists = Vec::new();
    let support = match cfg.scenario {
        Scenario::RtgGold => {
            let p = gold_support(query, ctx.corpus)?;
            if p.is_empty() {
                return Err(Error::Skipped(query.id.clone(), "no relevant gold passages".into()));
            }
            p
        }
        Scenario::RtgVanilla => {
            let list = ctx.retrieve(&list_label(0), &query.text)?;
            query_lists.push(list.clone());
            list.truncated(cfg.k_docs).with_query_id(query.id.clone())
        }
        Scenario::RtgQueryGen => {
            let (batch, notes) = generate_subqueries(query, cfg.m_subqueries, ctx)?;
            diagnostics.extend(notes);
            let texts: Vec<&str> = std::iter::once(query.text.as_str())
                .chain(batch.queries.iter().map(String::as_str))
                .collect();
            for (t, text) in texts.iter().enumerate() {
                query_lists.push(ctx.retrieve(&list_label(t), text)?);
            }
            subqueries = batch.queries;
            let input = FusionInput::new(query.id.clone(), query_lists.clone())?;
            let rerank_ctx = RerankContext {
                query: &query.text,
                corpus: ctx.corpus,
                scorer: ctx.gateway.scorer.as_ref(),
            };
            fuse(cfg.fusion, &input, cfg.k_docs, cfg.pm2_lambda, &rerank_ctx)
                .map_err(|e| e.with_query(&query.id))?
        }
        other => return Err(Error::Config(format!("{other} is not a retrieve-then-generate scenario"))),
    };
    if support.is_empty() {
        diagnostics.push("retrieval returned no passages; generating without context".into());
    }
    let ids = support.ids();
    let passages = ids
        .iter()
        .map(|id| ctx.corpus.require(id))
        .collect::<Result<Vec<_>>>()?;
    let documents: String = passages
        .iter()
        .enumerate()
        .map(|(i, p)| match &p.title {
            Some(t) => format!("[{}] {t}\n{}\n", i + 1, p.text),
            None => format!("[{}] {}\n", i + 1, p.text),
        })
        .collect();
    let prompt = render(
        ctx.prompts()?.rtg,
        &[("query", &query.text), ("documents", documents.trim_end())],
    );
    let meta = RequestMeta {
        query_id: query.id.clone(),
        query: query.text.clone(),
        purpose: Purpose::Answer,
        documents: passages.iter().map(|p| p.text.clone()).collect(),
    };
    let raw = ctx.gateway.chat.chat(&ctx.request(prompt, meta)).map_err(|e| e.with_query(&query.id))?;
    let (answer, notes) = parse_attributed_answer(&raw, &ids);
    diagnostics.extend(notes);
    empty_answer_note(&answer, &mut diagnostics);
    Ok(PipelineRun {
        output: PipelineOutput {
            query_id: query.id.clone(),
            scenario: cfg.scenario,
            answer_raw: raw,
            statements: answer.statements,
            support: ids,
            statement_support: Vec::new(),
            subqueries,
            diagnostics,
        },
        support,
        query_lists,
    })
}

/// Generate-then-retrieve: the closed-book answer, with each statement
/// citing the top passages retrieved for it.
pub fn run_gtr(query: &EvalQuery, ctx: &Context<'_>) -> Result<PipelineRun> {
    let base = run_g(query, ctx)?;
    let mut out = base.output;
    out.scenario = Scenario::Gtr;
    let k = ctx.config.k_per_statement;
    let mut union: Vec<String> = Vec::new();
    for (i, s) in out.statements.iter_mut().enumerate() {
        let list = ctx
            .retrieve(&format!("{}#s{i}", query.id), &s.text)
            .map_err(|e| e.with_query(&query.id))?
            .truncated(k);
        if list.is_empty() {
            out.diagnostics.push(format!("statement {} retrieved no passages", i + 1));
        }
        s.citations = list.ids();
        for id in &s.citations {
            if !union.contains(id) {
                union.push(id.clone());
            }
        }
        out.statement_support.push(list.ids());
    }
    let support = ids_as_list(&query.id, &union);
    out.support = union;
    Ok(PipelineRun {
        output: out,
        support,
        query_lists: Vec::new(),
    })
}

/// Runs the configured scenario for one query.
pub fn run_scenario(query: &EvalQuery, ctx: &Context<'_>) -> Result<PipelineRun> {
    match ctx.config.scenario {
        Scenario::G => run_g(query, ctx),
        Scenario::Gtr => run_gtr(query, ctx),
        _ => run_rtg(query, ctx),
    }
}
