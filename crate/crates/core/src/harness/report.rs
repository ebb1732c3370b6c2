use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{metric_names, MetricRecord};
use crate::pipelines::Scenario;
use crate::retrieval::macro_average;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Queries contributing to the mean.
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryStatus {
    pub query_id: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl QueryStatus {
    pub fn ok(query_id: &str) -> Self {
        Self {
            query_id: query_id.to_owned(),
            status: Status::Ok,
            message: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub scenario: Scenario,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub backends: BTreeMap<String, String>,
    pub n_queries: usize,
    pub n_scored: usize,
    pub n_skipped: usize,
    pub n_failed: usize,
    pub failed: bool,
}

/// Per-query records and their macro averages, keyed scenario → metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub metadata: RunMetadata,
    pub table: BTreeMap<String, BTreeMap<String, Aggregate>>,
    pub queries: Vec<QueryStatus>,
    pub records: Vec<MetricRecord>,
}

impl ScoreReport {
    /// Records and statuses are ordered by query id so the report does not
    /// depend on the order queries were processed in.
    pub fn build(
        scenario: Scenario,
        mut records: Vec<MetricRecord>,
        mut queries: Vec<QueryStatus>,
        backends: BTreeMap<String, String>,
        config_hash: Option<String>,
        max_failure_rate: f64,
    ) -> Self {
        records.sort_by(|a, b| a.query_id.cmp(&b.query_id));
        queries.sort_by(|a, b| a.query_id.cmp(&b.query_id));
        let flat: Vec<_> = records.iter().map(MetricRecord::flat).collect();
        let averages = macro_average(&flat)
            .into_iter()
            .map(|(k, (mean, n))| (k, Aggregate { mean, n }))
            .collect();
        let count = |s: Status| queries.iter().filter(|q| q.status == s).count();
        let n_failed = count(Status::Failed);
        let n_queries = queries.len();
        Self {
            metadata: RunMetadata {
                scenario,
                config_hash,
                backends,
                n_queries,
                n_scored: count(Status::Ok),
                n_skipped: count(Status::Skipped),
                n_failed,
                failed: n_queries > 0 && n_failed as f64 > max_failure_rate * n_queries as f64,
            },
            table: BTreeMap::from([(scenario.name().to_owned(), averages)]),
            queries,
            records,
        }
    }

    pub fn value(&self, metric: &str) -> Option<f64> {
        self.table
            .get(self.metadata.scenario.name())
            .and_then(|m| m.get(metric))
            .map(|a| a.mean)
    }
}

/// Known metrics in reporting order, then any others alphabetically.
fn ordered<'a>(names: impl IntoIterator<Item = &'a String>) -> Vec<String> {
    let present: Vec<&String> = names.into_iter().collect();
    let known = metric_names();
    let mut out: Vec<String> = known.iter().filter(|k| present.contains(k)).cloned().collect();
    let mut rest: Vec<String> = present.into_iter().filter(|p| !known.contains(p)).cloned().collect();
    rest.sort();
    rest.dedup();
    out.extend(rest);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(Self::Table),
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::Config(format!("unknown report format `{other}` (expected table|csv|json)"))),
        }
    }
}

pub fn render_report(report: &ScoreReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut s = String::from("scenario,metric,value,n\n");
            for (scenario, metrics) in &report.table {
                for name in ordered(metrics.keys()) {
                    let a = metrics[&name];
                    let _ = writeln!(s, "{scenario},{name},{},{}", a.mean, a.n);
                }
            }
            s
        }
        ReportFormat::Table => render_table(report),
    }
}

fn render_table(report: &ScoreReport) -> String {
    let m = &report.metadata;
    let mut s = format!(
        "{} queries: {} scored, {} skipped, {} failed{}\n\n",
        m.n_queries,
        m.n_scored,
        m.n_skipped,
        m.n_failed,
        if m.failed { "  [RUN FAILED]" } else { "" }
    );
    let scenarios: Vec<&String> = report.table.keys().collect();
    let metrics = ordered(report.table.values().flat_map(|t| t.keys()));
    let width = metrics.iter().map(String::len).max().unwrap_or(6).max(6);
    let _ = write!(s, "{:<width$}", "metric");
    for sc in &scenarios {
        let _ = write!(s, "  {:>14}", sc);
    }
    s.push('\n');
    for name in &metrics {
        let _ = write!(s, "{name:<width$}");
        for sc in &scenarios {
            match report.table[*sc].get(name) {
                Some(a) => {
                    let cell = format!("{:.2} ({})", 100.0 * a.mean, a.n);
                    let _ = write!(s, "  {cell:>14}");
                }
                None => {
                    let _ = write!(s, "  {:>14}", "");
                }
            }
        }
        s.push('\n');
    }
    s
}

/// Long-format curve: one `k,metric,value` row per metric per k.
pub fn sweep_csv(rows: &[(usize, ScoreReport)]) -> String {
    let mut s = String::from("k,metric,value\n");
    for (k, report) in rows {
        if let Some(metrics) = report.table.get(report.metadata.scenario.name()) {
            for name in ordered(metrics.keys()) {
                let _ = writeln!(s, "{k},{name},{}", metrics[&name].mean);
            }
        }
    }
    s
}

/// Reads `report.json` from a run directory (or the file itself).
pub fn load_report(path: &Path) -> Result<ScoreReport> {
    let file = if path.is_dir() { path.join("report.json") } else { path.to_owned() };
    let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json { line: 0, source })
}
