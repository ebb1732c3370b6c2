use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, EvalQuery};
use crate::error::{Error, Result};
use crate::fusion::max_oracle;
use crate::metrics::{autoais_cit, nli_citation_precision, nli_citation_recall, Entailment};
use crate::modelio::Gateway;
use crate::retrieval::{eval_ranked_list, macro_average, trec::Qrels, RankedList};
use crate::MetricMap;

use super::Aggregate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRow {
    pub name: String,
    pub metrics: BTreeMap<String, Aggregate>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievalTable {
    pub rows: Vec<RetrievalRow>,
    pub diagnostics: Vec<String>,
}

fn aggregate(maps: &[MetricMap]) -> BTreeMap<String, Aggregate> {
    macro_average(maps)
        .into_iter()
        .map(|(k, (mean, n))| (k, Aggregate { mean, n }))
        .collect()
}

/// Macro-averaged P/R/nDCG per named run. With several runs a `MAX` row
/// takes, per query and per metric, the best value any run achieved.
pub fn evaluate_retrieval(
    runs: &[(String, BTreeMap<String, RankedList>)],
    qrels: &Qrels,
    cutoffs: &[usize],
) -> Result<RetrievalTable> {
    if runs.is_empty() {
        return Err(Error::Undefined("retrieval evaluation of no runs"));
    }
    let mut table = RetrievalTable::default();
    let mut per_query: BTreeMap<&str, Vec<(String, MetricMap)>> = BTreeMap::new();
    for (name, lists) in runs {
        let mut maps = Vec::new();
        for (qid, list) in lists {
            let Some(judged) = qrels.get(qid) else {
                table.diagnostics.push(format!("{name}: query {qid} has no judgments; skipped"));
                continue;
            };
            let relevant: BTreeSet<String> = judged
                .iter()
                .filter(|(_, g)| **g >= 1)
                .map(|(d, _)| d.clone())
                .collect();
            let m = eval_ranked_list(&list.ids(), &relevant, cutoffs);
            per_query.entry(qid).or_default().push((name.clone(), m.clone()));
            maps.push(m);
        }
        table.rows.push(RetrievalRow {
            name: name.clone(),
            metrics: aggregate(&maps),
        });
    }
    if runs.len() > 1 {
        let best = per_query
            .values()
            .map(|evals| max_oracle(evals))
            .collect::<Result<Vec<_>>>()?;
        table.rows.push(RetrievalRow {
            name: "MAX".into(),
            metrics: aggregate(&best),
        });
    }
    Ok(table)
}

impl RetrievalTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("run,metric,value,n\n");
        for row in &self.rows {
            for (k, a) in &row.metrics {
                let _ = writeln!(s, "{},{k},{},{}", row.name, a.mean, a.n);
            }
        }
        s
    }

    pub fn to_text(&self) -> String {
        let metrics: BTreeSet<&String> = self.rows.iter().flat_map(|r| r.metrics.keys()).collect();
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(3).max(3);
        let mut s = format!("{:<width$}", "run");
        for m in &metrics {
            let _ = write!(s, "  {m:>8}");
        }
        s.push('\n');
        for row in &self.rows {
            let _ = write!(s, "{:<width$}", row.name);
            for m in &metrics {
                match row.metrics.get(*m) {
                    Some(a) => {
                        let _ = write!(s, "  {:>8.2}", 100.0 * a.mean);
                    }
                    None => {
                        let _ = write!(s, "  {:>8}", "");
                    }
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Product-moment correlation. `None` when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    if x.len() != y.len() {
        return Err(Error::Config(format!("pearson: {} vs {} values", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Undefined("pearson correlation of fewer than two points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)))
}

pub const CORRELATED_METRICS: [&str; 3] = ["autoais_cit", "nli_precision", "nli_recall"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub metric: String,
    /// `None` when undefined (zero variance).
    pub pearson: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub rows: Vec<Correlation>,
    /// Gold answers carrying an attributability label.
    pub n_annotated: usize,
}

/// Correlates citation metrics computed on gold answers with their binary
/// attributability labels. Answers where a metric is undefined are left out
/// of that metric's sample.
pub fn correlate_with_annotations(queries: &[EvalQuery], corpus: &Corpus, gateway: &Gateway) -> Result<CorrelationTable> {
    let nli = Entailment::new(gateway.scorer.as_ref(), gateway.nli_threshold);
    let mut samples: BTreeMap<&str, (Vec<f64>, Vec<f64>)> =
        CORRELATED_METRICS.iter().map(|m| (*m, Default::default())).collect();
    let mut n_annotated = 0;
    for q in queries {
        for gold in &q.gold_answers {
            let Some(label) = gold.attributable else { continue };
            n_annotated += 1;
            let label = if label { 1.0 } else { 0.0 };
            let answer = &gold.answer;
            let values = [
                if answer.statements.is_empty() { None } else { Some(autoais_cit(answer, corpus, &nli)?) },
                nli_citation_precision(answer, corpus, &nli)?,
                if answer.statements.is_empty() { None } else { Some(nli_citation_recall(answer, corpus, &nli)?) },
            ];
            for (metric, v) in CORRELATED_METRICS.iter().zip(values) {
                if let Some(v) = v {
                    let (xs, ys) = samples.get_mut(metric).expect("known metric");
                    xs.push(v);
                    ys.push(label);
                }
            }
        }
    }
    if n_annotated == 0 {
        return Err(Error::Config("dataset has no attributability annotations".into()));
    }
    let rows = CORRELATED_METRICS
        .iter()
        .map(|metric| {
            let (xs, ys) = &samples[metric];
            let pearson = match pearson(xs, ys) {
                Ok(r) => r,
                Err(Error::Undefined(_)) => None,
                Err(e) => return Err(e),
            };
            Ok(Correlation {
                metric: metric.to_string(),
                pearson,
                n: xs.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CorrelationTable { rows, n_annotated })
}
