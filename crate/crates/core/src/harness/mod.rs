//! Experiment orchestration: per-query fan-out, scoring, aggregation and
//! the files a run leaves behind.

mod analysis;
mod config;
mod report;

pub use analysis::{
    correlate_with_annotations, evaluate_retrieval, pearson, Correlation, CorrelationTable, RetrievalRow,
    RetrievalTable, CORRELATED_METRICS,
};
pub use config::{DatasetSection, ExperimentConfig, GatewaySection, HarnessSection, RetrievalSection};
pub use report::{
    load_report, render_report, sweep_csv, Aggregate, QueryStatus, ReportFormat, RunMetadata, ScoreReport, Status,
};

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use crate::corpus::{load_corpus, load_dataset, Corpus, Dataset, EvalQuery};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::metrics::{citation_scores, correctness, CitationScores, Entailment, MetricRecord, Support};
use crate::modelio::Gateway;
use crate::pipelines::{run_scenario, Context, PipelineOutput, Scenario, ScenarioConfig};
use crate::retrieval::{trec, Index, RankedList};

/// Loaded inputs of an experiment.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub corpus: Corpus,
    pub dataset: Dataset,
    pub index: Option<Index>,
    pub gateway: Gateway,
}

impl Experiment {
    /// Loads data and builds the configured gateway.
    pub fn load(config: ExperimentConfig) -> Result<Self> {
        let gateway = config.gateway.build()?;
        Self::with_gateway(config, gateway)
    }

    /// Loads data and uses the given backends instead of the configured ones.
    pub fn with_gateway(config: ExperimentConfig, gateway: Gateway) -> Result<Self> {
        config.validate()?;
        let dataset = load_dataset(&config.dataset.queries, &config.dataset.fields)?;
        let mut corpus = match &config.dataset.corpus {
            Some(path) => load_corpus(path, &config.dataset.corpus_fields)?,
            None => Corpus::default(),
        };
        let added = corpus.extend_missing(dataset.inline_passages());
        if added > 0 {
            log::info!("added {added} inline gold passages to the corpus");
        }
        let index = match config.retrieval.index_file() {
            Some(path) => Some(Index::load(&path)?),
            None if !corpus.is_empty() => Some(Index::build(
                &corpus,
                &config.retrieval.analyzer(),
                config.retrieval.params(),
            )?),
            None => None,
        };
        Ok(Self {
            config,
            corpus,
            dataset,
            index,
            gateway,
        })
    }

    /// Runs the scenario over every query.
    pub fn run(&self, scenario: &ScenarioConfig, exec: &Executor) -> Result<RunOutput> {
        scenario.validate()?;
        if scenario.scenario.needs_index() && self.index.is_none() {
            return Err(Error::Config(format!("scenario {} needs a corpus or index", scenario.scenario)));
        }
        let ctx = Context {
            config: scenario,
            corpus: &self.corpus,
            index: self.index.as_ref(),
            gateway: &self.gateway,
        };
        let outcomes = exec.map(&self.dataset.queries, |q| run_query(q, &ctx));
        let mut config = self.config.clone();
        config.scenario = scenario.clone();
        Ok(RunOutput::collect(outcomes, scenario.scenario, &self.gateway, Some(&config)))
    }
}

/// Result of one query through pipeline and scoring.
#[derive(Debug, Clone)]
pub struct QueryOutcome {
    pub status: QueryStatus,
    pub prediction: Option<PipelineOutput>,
    pub record: Option<MetricRecord>,
    pub support: Option<RankedList>,
    pub query_lists: Vec<RankedList>,
}

impl QueryOutcome {
    fn failed(query_id: &str, status: Status, message: String) -> Self {
        Self {
            status: QueryStatus {
                query_id: query_id.to_owned(),
                status,
                message: Some(message),
            },
            prediction: None,
            record: None,
            support: None,
            query_lists: Vec::new(),
        }
    }
}

fn run_query(query: &EvalQuery, ctx: &Context<'_>) -> QueryOutcome {
    let run = match run_scenario(query, ctx) {
        Ok(run) => run,
        Err(Error::Skipped(_, reason)) => return QueryOutcome::failed(&query.id, Status::Skipped, reason),
        Err(e) => {
            log::warn!("query {} failed: {e}", query.id);
            return QueryOutcome::failed(&query.id, Status::Failed, e.with_query(&query.id).to_string());
        }
    };
    match score_prediction(&run.output, query, ctx.corpus, ctx.gateway) {
        Ok(record) => QueryOutcome {
            status: QueryStatus::ok(&query.id),
            prediction: Some(run.output),
            record: Some(record),
            support: Some(run.support),
            query_lists: run.query_lists,
        },
        Err(e) => {
            log::warn!("scoring query {} failed: {e}", query.id);
            QueryOutcome {
                prediction: Some(run.output),
                ..QueryOutcome::failed(&query.id, Status::Failed, e.with_query(&query.id).to_string())
            }
        }
    }
}

/// All applicable metrics for one prediction. Citation metrics are not
/// computed for closed-book answers.
pub fn score_prediction(
    pred: &PipelineOutput,
    query: &EvalQuery,
    corpus: &Corpus,
    gateway: &Gateway,
) -> Result<MetricRecord> {
    let mut skipped = Vec::new();
    let golds: Vec<String> = query.gold_texts().into_iter().filter(|t| !t.is_empty()).collect();
    let answer = pred.answer();
    let correctness = if golds.is_empty() {
        skipped.extend(crate::metrics::metric_names().into_iter().filter(|n| !CitationScores::NAMES.contains(&n.as_str())));
        None
    } else {
        Some(correctness(&answer.plain_text(), &golds, gateway.scorer.as_ref())?)
    };
    let citations = if pred.scenario.has_citations() {
        let nli = Entailment::new(gateway.scorer.as_ref(), gateway.nli_threshold);
        let shared;
        let per_statement;
        let support = if pred.scenario == Scenario::Gtr {
            per_statement = pred.statement_support_lists();
            Support::PerStatement(&per_statement)
        } else {
            shared = pred.support_list();
            Support::Shared(&shared)
        };
        let scores = citation_scores(&answer, support, &query.gold_citations(), corpus, &nli)?;
        skipped.extend(scores.skipped());
        Some(scores)
    } else {
        None
    };
    Ok(MetricRecord {
        query_id: pred.query_id.clone(),
        correctness,
        citations,
        skipped,
    })
}

/// Everything a run produced, ready to be written out.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: ScoreReport,
    pub predictions: Vec<PipelineOutput>,
    /// TREC run name → lists (`support`, then `t000`, `t001`, ...).
    pub runs: BTreeMap<String, Vec<RankedList>>,
}

impl RunOutput {
    pub fn collect(
        outcomes: Vec<QueryOutcome>,
        scenario: Scenario,
        gateway: &Gateway,
        config: Option<&ExperimentConfig>,
    ) -> Self {
        let mut predictions = Vec::new();
        let mut records = Vec::new();
        let mut statuses = Vec::new();
        let mut runs: BTreeMap<String, Vec<RankedList>> = BTreeMap::new();
        for o in outcomes {
            let qid = o.status.query_id.clone();
            statuses.push(o.status);
            predictions.extend(o.prediction);
            records.extend(o.record);
            if let Some(s) = o.support.filter(|_| scenario.is_rtg()) {
                runs.entry("support".into()).or_default().push(s.with_query_id(qid.clone()));
            }
            for list in o.query_lists {
                let label = list.query_id.clone();
                runs.entry(label).or_default().push(list.with_query_id(qid.clone()));
            }
        }
        let max_failure_rate = config.map_or(0.5, |c| c.harness.max_failure_rate);
        let report = ScoreReport::build(
            scenario,
            records,
            statuses,
            gateway.backend_ids(),
            config.map(|c| c.hash()),
            max_failure_rate,
        );
        Self {
            report,
            predictions,
            runs,
        }
    }

    /// Writes predictions, per-query metrics, the report (JSON, CSV, text) and
    /// TREC runs into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join("runs")).map_err(|e| Error::io(dir, e))?;
        let jsonl = |items: Vec<String>| {
            let mut s = items.join("\n");
            if !s.is_empty() {
                s.push('\n');
            }
            s
        };
        write(
            &dir.join("predictions.jsonl"),
            &jsonl(self.predictions.iter().map(to_json).collect()),
        )?;
        write(
            &dir.join("metrics.jsonl"),
            &jsonl(self.report.records.iter().map(to_json).collect()),
        )?;
        write(&dir.join("report.json"), &render_report(&self.report, ReportFormat::Json))?;
        write(&dir.join("summary.csv"), &render_report(&self.report, ReportFormat::Csv))?;
        write(&dir.join("summary.txt"), &render_report(&self.report, ReportFormat::Table))?;
        for (name, lists) in &self.runs {
            write(
                &dir.join("runs").join(format!("{name}.run")),
                &trec::format_run(lists, &format!("{}-{name}", self.report.metadata.scenario)),
            )?;
        }
        Ok(())
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("record serializes")
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Wall-clock facts about a run, kept apart from the deterministic report.
fn write_run_info(dir: &Path, started: f64, elapsed_ms: u128) -> Result<()> {
    let info = serde_json::json!({
        "started_unix": started,
        "finished_unix": unix_now(),
        "elapsed_ms": elapsed_ms,
    });
    write(&dir.join("run_info.json"), &format!("{info:#}\n"))
}

/// Loads the experiment, runs it and writes every output file into `out`.
pub fn run_experiment(config: &ExperimentConfig, out: &Path, exec: &Executor) -> Result<ScoreReport> {
    let experiment = Experiment::load(config.clone())?;
    run_loaded(&experiment, &config.scenario, out, exec)
}

/// Runs an already loaded experiment into `out`.
pub fn run_loaded(experiment: &Experiment, scenario: &ScenarioConfig, out: &Path, exec: &Executor) -> Result<ScoreReport> {
    let started = unix_now();
    let clock = Instant::now();
    let output = experiment.run(scenario, exec)?;
    output.write(out)?;
    write_run_info(out, started, clock.elapsed().as_millis())?;
    Ok(output.report)
}

/// One run per supporting-document count; each lands in `out/k{k}` and the
/// long-format curve in `out/sweep.csv`.
pub fn sweep_k(experiment: &Experiment, ks: &[usize], out: &Path, exec: &Executor) -> Result<Vec<(usize, ScoreReport)>> {
    let base = &experiment.config.scenario;
    if !base.scenario.is_rtg() {
        return Err(Error::Config(format!(
            "sweeping k needs a retrieve-then-generate scenario, not {}",
            base.scenario
        )));
    }
    if ks.is_empty() {
        return Err(Error::Config("no k values to sweep".into()));
    }
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let scenario = ScenarioConfig {
            k_docs: k,
            ..base.clone()
        };
        let report = run_loaded(experiment, &scenario, &out.join(format!("k{k}")), exec)?;
        rows.push((k, report));
    }
    write(&out.join("sweep.csv"), &sweep_csv(&rows))?;
    Ok(rows)
}

/// Scores an existing predictions file against the dataset.
pub fn evaluate_predictions(
    predictions: &[PipelineOutput],
    queries: &[EvalQuery],
    corpus: &Corpus,
    gateway: &Gateway,
    exec: &Executor,
) -> Result<RunOutput> {
    let by_id: BTreeMap<&str, &EvalQuery> = queries.iter().map(|q| (q.id.as_str(), q)).collect();
    let scenario = predictions.first().map(|p| p.scenario).ok_or(Error::Undefined("evaluation of no predictions"))?;
    if let Some(p) = predictions.iter().find(|p| p.scenario != scenario) {
        return Err(Error::Config(format!(
            "predictions mix scenarios {scenario} and {}",
            p.scenario
        )));
    }
    let outcomes = exec.map(predictions, |pred| {
        let Some(query) = by_id.get(pred.query_id.as_str()) else {
            return QueryOutcome::failed(&pred.query_id, Status::Skipped, "query not in dataset".into());
        };
        match score_prediction(pred, query, corpus, gateway) {
            Ok(record) => QueryOutcome {
                status: QueryStatus::ok(&pred.query_id),
                prediction: Some(pred.clone()),
                record: Some(record),
                support: None,
                query_lists: Vec::new(),
            },
            Err(e) => QueryOutcome::failed(&pred.query_id, Status::Failed, e.with_query(&pred.query_id).to_string()),
        }
    });
    Ok(RunOutput::collect(outcomes, scenario, gateway, None))
}

/// Reads a predictions file written by a run.
pub fn read_predictions(path: &Path) -> Result<Vec<PipelineOutput>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| Error::Json { line: i + 1, source }))
        .collect()
}
