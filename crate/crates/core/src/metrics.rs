//! Answer correctness and citation quality.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::corpus::{AttributedAnswer, Corpus};
use crate::error::{Error, Result};
use crate::modelio::{ScorePair, ScoreTask, Scorer, DEFAULT_NLI_THRESHOLD};
use crate::retrieval::RankedList;
use crate::text::Analyzer;
use crate::MetricMap;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

impl Prf {
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self { precision, recall, f }
    }
}

/// Length of the longest common subsequence of two token sequences.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

pub fn rouge_l_tokens(candidate: &[String], reference: &[String]) -> Prf {
    if candidate.is_empty() || reference.is_empty() {
        return Prf::default();
    }
    let lcs = lcs_len(candidate, reference) as f64;
    Prf::from_pr(lcs / candidate.len() as f64, lcs / reference.len() as f64)
}

/// Whole-answer ROUGE-L over analyzer tokens.
pub fn rouge_l(candidate: &str, reference: &str) -> Prf {
    let an = Analyzer::default();
    rouge_l_tokens(&an.tokenize(candidate), &an.tokenize(reference))
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for w in tokens.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// Sentence BLEU-4 with add-one smoothing on every order and the standard
/// brevity penalty.
pub fn bleu_tokens(candidate: &[String], reference: &[String]) -> f64 {
    if candidate.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let cand = ngram_counts(candidate, n);
        let refc = ngram_counts(reference, n);
        let total = candidate.len().saturating_sub(n - 1);
        let clipped: usize = cand
            .iter()
            .map(|(g, c)| (*c).min(refc.get(g).copied().unwrap_or(0)))
            .sum();
        log_sum += ((clipped as f64 + 1.0) / (total as f64 + 1.0)).ln();
    }
    let (c, r) = (candidate.len() as f64, reference.len() as f64);
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    bp * (log_sum / 4.0).exp()
}

pub fn bleu(candidate: &str, reference: &str) -> f64 {
    let an = Analyzer::default();
    bleu_tokens(&an.tokenize(candidate), &an.tokenize(reference))
}

/// Similarity triplets for `(candidate, reference)` pairs in one gateway batch.
pub fn similarity_batch(pairs: &[(&str, &str)], scorer: &dyn Scorer) -> Result<Vec<Prf>> {
    let request: Vec<ScorePair> = pairs
        .iter()
        .map(|(c, r)| ScorePair::new(ScoreTask::Similarity, *c, *r))
        .collect();
    let results = scorer.score_pairs(&request)?;
    if results.len() != pairs.len() {
        return Err(Error::gateway(None, "similarity response is misaligned"));
    }
    results
        .into_iter()
        .map(|r| {
            let aux = r
                .aux
                .ok_or_else(|| Error::gateway(None, "similarity response lacks precision/recall/f1"))?;
            let get = |k: &str| {
                aux.get(k)
                    .copied()
                    .ok_or_else(|| Error::gateway(None, format!("similarity response lacks `{k}`")))
            };
            Ok(Prf {
                precision: get("precision")?,
                recall: get("recall")?,
                f: get("f1")?,
            })
        })
        .collect()
}

pub fn similarity(candidate: &str, reference: &str, scorer: &dyn Scorer) -> Result<Prf> {
    Ok(similarity_batch(&[(candidate, reference)], scorer)?[0])
}

/// The gold-wise result with the largest `key`; the first gold wins ties.
pub fn best_over_candidates<T: Clone>(values: &[T], key: impl Fn(&T) -> f64) -> Result<T> {
    let mut best: Option<&T> = None;
    for v in values {
        if best.is_none_or(|b| key(v) > key(b)) {
            best = Some(v);
        }
    }
    best.cloned()
        .ok_or(Error::Undefined("best-over-candidates with no gold answers"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectnessScores {
    pub bleu: f64,
    pub rouge_l: Prf,
    pub similarity: Prf,
}

/// Correctness of `candidate` against every gold answer, keeping the best
/// gold per metric (triplets by f).
pub fn correctness(candidate: &str, golds: &[String], scorer: &dyn Scorer) -> Result<CorrectnessScores> {
    if golds.is_empty() {
        return Err(Error::Undefined("best-over-candidates with no gold answers"));
    }
    let an = Analyzer::default();
    let cand = an.tokenize(candidate);
    let refs: Vec<Vec<String>> = golds.iter().map(|g| an.tokenize(g)).collect();
    let bleus: Vec<f64> = refs.iter().map(|r| bleu_tokens(&cand, r)).collect();
    let rouges: Vec<Prf> = refs.iter().map(|r| rouge_l_tokens(&cand, r)).collect();
    let pairs: Vec<(&str, &str)> = golds.iter().map(|g| (candidate, g.as_str())).collect();
    let sims = similarity_batch(&pairs, scorer)?;
    Ok(CorrectnessScores {
        bleu: best_over_candidates(&bleus, |v| *v)?,
        rouge_l: best_over_candidates(&rouges, |p| p.f)?,
        similarity: best_over_candidates(&sims, |p| p.f)?,
    })
}

/// Binary entailment judgments with request deduplication.
///
/// Call [`prefetch`](Self::prefetch) with every pair a computation will need
/// so they go out as a single batch; later lookups hit the cache.
pub struct Entailment<'a> {
    scorer: &'a dyn Scorer,
    threshold: f64,
    cache: Mutex<HashMap<(String, String), bool>>,
}

impl<'a> Entailment<'a> {
    pub fn new(scorer: &'a dyn Scorer, threshold: f64) -> Self {
        Self {
            scorer,
            threshold,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_default_threshold(scorer: &'a dyn Scorer) -> Self {
        Self::new(scorer, DEFAULT_NLI_THRESHOLD)
    }

    pub fn prefetch(&self, pairs: impl IntoIterator<Item = (String, String)>) -> Result<()> {
        let missing: BTreeSet<(String, String)> = {
            let cache = self.cache.lock().expect("entailment cache poisoned");
            pairs.into_iter().filter(|p| !cache.contains_key(p)).collect()
        };
        if missing.is_empty() {
            return Ok(());
        }
        let request: Vec<ScorePair> = missing
            .iter()
            .map(|(p, h)| ScorePair::new(ScoreTask::Nli, p.as_str(), h.as_str()))
            .collect();
        let results = self.scorer.score_pairs(&request)?;
        if results.len() != request.len() {
            return Err(Error::gateway(None, "NLI response is misaligned"));
        }
        let mut cache = self.cache.lock().expect("entailment cache poisoned");
        for (pair, r) in missing.into_iter().zip(results) {
            cache.insert(pair, r.value >= self.threshold);
        }
        Ok(())
    }

    pub fn entails(&self, premise: &str, hypothesis: &str) -> Result<bool> {
        let key = (premise.to_owned(), hypothesis.to_owned());
        if let Some(v) = self.cache.lock().expect("entailment cache poisoned").get(&key) {
            return Ok(*v);
        }
        self.prefetch([key.clone()])?;
        Ok(self.cache.lock().expect("entailment cache poisoned")[&key])
    }

    /// Distinct pairs scored so far.
    pub fn calls(&self) -> usize {
        self.cache.lock().expect("entailment cache poisoned").len()
    }
}

fn premise(corpus: &Corpus, id: &str) -> Result<String> {
    Ok(corpus.require(id)?.premise())
}

fn concat(corpus: &Corpus, ids: &[String]) -> Result<String> {
    Ok(ids
        .iter()
        .map(|id| premise(corpus, id))
        .collect::<Result<Vec<_>>>()?
        .join("\n"))
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    values.sum::<f64>() / n as f64
}

fn require_statements(answer: &AttributedAnswer, metric: &'static str) -> Result<()> {
    if answer.statements.is_empty() {
        Err(Error::Undefined(metric))
    } else {
        Ok(())
    }
}

/// Share of statements entailed by at least one of their own citations.
pub fn autoais_cit(answer: &AttributedAnswer, corpus: &Corpus, nli: &Entailment<'_>) -> Result<f64> {
    require_statements(answer, "autoais_cit of an answer without statements")?;
    let mut pairs = Vec::new();
    for s in &answer.statements {
        for c in &s.citations {
            pairs.push((premise(corpus, c)?, s.text.clone()));
        }
    }
    nli.prefetch(pairs)?;
    let mut hits = Vec::with_capacity(answer.statements.len());
    for s in &answer.statements {
        let mut hit = false;
        for c in &s.citations {
            if nli.entails(&premise(corpus, c)?, &s.text)? {
                hit = true;
                break;
            }
        }
        hits.push(if hit { 1.0 } else { 0.0 });
    }
    Ok(mean(hits.into_iter()))
}

fn pssg_with<'s>(
    answer: &AttributedAnswer,
    corpus: &Corpus,
    nli: &Entailment<'_>,
    support_of: impl Fn(usize) -> &'s [String],
) -> Result<f64> {
    let mut pairs = Vec::new();
    for (i, s) in answer.statements.iter().enumerate() {
        for d in support_of(i) {
            pairs.push((premise(corpus, d)?, s.text.clone()));
        }
    }
    nli.prefetch(pairs)?;
    let mut hits = Vec::with_capacity(answer.statements.len());
    for (i, s) in answer.statements.iter().enumerate() {
        let mut hit = false;
        for d in support_of(i) {
            if nli.entails(&premise(corpus, d)?, &s.text)? {
                hit = true;
                break;
            }
        }
        hits.push(if hit { 1.0 } else { 0.0 });
    }
    Ok(mean(hits.into_iter()))
}

/// Share of statements entailed by any passage of the support list,
/// regardless of what was cited.
pub fn autoais_pssg(
    answer: &AttributedAnswer,
    support: &RankedList,
    corpus: &Corpus,
    nli: &Entailment<'_>,
) -> Result<f64> {
    require_statements(answer, "autoais_pssg of an answer without statements")?;
    if support.is_empty() {
        return Err(Error::Undefined("autoais_pssg with empty support"));
    }
    let ids = support.ids();
    pssg_with(answer, corpus, nli, |_| &ids)
}

/// Like [`autoais_pssg`] where each statement has its own support list
/// (statement `i` is checked against `supports[i]` only).
pub fn autoais_pssg_per_statement(
    answer: &AttributedAnswer,
    supports: &[RankedList],
    corpus: &Corpus,
    nli: &Entailment<'_>,
) -> Result<f64> {
    require_statements(answer, "autoais_pssg of an answer without statements")?;
    if supports.len() != answer.statements.len() {
        return Err(Error::Undefined("autoais_pssg with misaligned per-statement support"));
    }
    if supports.iter().all(|s| s.is_empty()) {
        return Err(Error::Undefined("autoais_pssg with empty support"));
    }
    let ids: Vec<Vec<String>> = supports.iter().map(|s| s.ids()).collect();
    pssg_with(answer, corpus, nli, |i| &ids[i])
}

/// Share of statements entailed by the concatenation of their citations.
pub fn nli_citation_recall(answer: &AttributedAnswer, corpus: &Corpus, nli: &Entailment<'_>) -> Result<f64> {
    require_statements(answer, "nli_citation_recall of an answer without statements")?;
    let mut pairs = Vec::new();
    for s in answer.statements.iter().filter(|s| !s.citations.is_empty()) {
        pairs.push((concat(corpus, &s.citations)?, s.text.clone()));
    }
    nli.prefetch(pairs)?;
    let mut hits = Vec::with_capacity(answer.statements.len());
    for s in &answer.statements {
        let hit = !s.citations.is_empty() && nli.entails(&concat(corpus, &s.citations)?, &s.text)?;
        hits.push(if hit { 1.0 } else { 0.0 });
    }
    Ok(mean(hits.into_iter()))
}

/// One minus the share of irrelevant citations. A citation is irrelevant
/// when it does not entail its statement alone while the remaining
/// citations of that statement (non-empty) still do. `None` when the answer
/// cites nothing.
pub fn nli_citation_precision(
    answer: &AttributedAnswer,
    corpus: &Corpus,
    nli: &Entailment<'_>,
) -> Result<Option<f64>> {
    let total = answer.citation_count();
    if total == 0 {
        return Ok(None);
    }
    let rest = |cits: &[String], j: usize| -> Vec<String> {
        cits.iter()
            .enumerate()
            .filter(|(k, _)| *k != j)
            .map(|(_, c)| c.clone())
            .collect()
    };
    let mut pairs = Vec::new();
    for s in &answer.statements {
        for (j, c) in s.citations.iter().enumerate() {
            pairs.push((premise(corpus, c)?, s.text.clone()));
            let others = rest(&s.citations, j);
            if !others.is_empty() {
                pairs.push((concat(corpus, &others)?, s.text.clone()));
            }
        }
    }
    nli.prefetch(pairs)?;
    let mut irrelevant = 0usize;
    for s in &answer.statements {
        for (j, c) in s.citations.iter().enumerate() {
            if nli.entails(&premise(corpus, c)?, &s.text)? {
                continue;
            }
            let others = rest(&s.citations, j);
            if !others.is_empty() && nli.entails(&concat(corpus, &others)?, &s.text)? {
                irrelevant += 1;
            }
        }
    }
    Ok(Some(1.0 - irrelevant as f64 / total as f64))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

/// Set overlap between generated and gold citation ids; a side with an
/// empty denominator is `None`.
pub fn citation_overlap(generated: &BTreeSet<String>, gold: &BTreeSet<String>) -> Overlap {
    let shared = generated.intersection(gold).count() as f64;
    let ratio = |n: usize| (n > 0).then(|| shared / n as f64);
    Overlap {
        precision: ratio(generated.len()),
        recall: ratio(gold.len()),
    }
}

/// Overlap of an answer's citations with another answer's.
pub fn answer_overlap(answer: &AttributedAnswer, gold: &AttributedAnswer) -> Overlap {
    let ids = |a: &AttributedAnswer| a.cited_ids().into_iter().collect::<BTreeSet<_>>();
    citation_overlap(&ids(answer), &ids(gold))
}

/// The passages a generated answer is judged against.
#[derive(Debug, Clone, Copy)]
pub enum Support<'a> {
    Shared(&'a RankedList),
    PerStatement(&'a [RankedList]),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CitationScores {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub autoais_cit: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub autoais_pssg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nli_precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nli_recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlap_precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlap_recall: Option<f64>,
}

impl CitationScores {
    pub const NAMES: [&'static str; 6] = [
        "autoais_cit",
        "autoais_pssg",
        "nli_precision",
        "nli_recall",
        "overlap_precision",
        "overlap_recall",
    ];

    fn fields(&self) -> [Option<f64>; 6] {
        [
            self.autoais_cit,
            self.autoais_pssg,
            self.nli_precision,
            self.nli_recall,
            self.overlap_precision,
            self.overlap_recall,
        ]
    }

    pub fn skipped(&self) -> Vec<String> {
        Self::NAMES
            .iter()
            .zip(self.fields())
            .filter(|(_, v)| v.is_none())
            .map(|(n, _)| n.to_string())
            .collect()
    }

    pub fn insert_into(&self, map: &mut MetricMap) {
        for (name, v) in Self::NAMES.iter().zip(self.fields()) {
            if let Some(v) = v {
                map.insert(name.to_string(), v);
            }
        }
    }
}

fn undefined_as_none(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Undefined(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Every citation metric for one answer; metrics undefined for this answer
/// are left as `None`. All NLI pairs are scored in one deduplicated batch.
pub fn citation_scores(
    answer: &AttributedAnswer,
    support: Support<'_>,
    gold_citations: &BTreeSet<String>,
    corpus: &Corpus,
    nli: &Entailment<'_>,
) -> Result<CitationScores> {
    prefetch_all(answer, support, corpus, nli)?;
    let overlap = citation_overlap(&answer.cited_ids().into_iter().collect(), gold_citations);
    Ok(CitationScores {
        autoais_cit: undefined_as_none(autoais_cit(answer, corpus, nli))?,
        autoais_pssg: undefined_as_none(match support {
            Support::Shared(list) => autoais_pssg(answer, list, corpus, nli),
            Support::PerStatement(lists) => autoais_pssg_per_statement(answer, lists, corpus, nli),
        })?,
        nli_precision: nli_citation_precision(answer, corpus, nli)?,
        nli_recall: undefined_as_none(nli_citation_recall(answer, corpus, nli))?,
        overlap_precision: overlap.precision,
        overlap_recall: overlap.recall,
    })
}

fn prefetch_all(answer: &AttributedAnswer, support: Support<'_>, corpus: &Corpus, nli: &Entailment<'_>) -> Result<()> {
    let mut pairs = BTreeSet::new();
    for (i, s) in answer.statements.iter().enumerate() {
        let h = &s.text;
        for (j, c) in s.citations.iter().enumerate() {
            pairs.insert((premise(corpus, c)?, h.clone()));
            let others: Vec<String> = s
                .citations
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != j)
                .map(|(_, c)| c.clone())
                .collect();
            if !others.is_empty() {
                pairs.insert((concat(corpus, &others)?, h.clone()));
            }
        }
        if !s.citations.is_empty() {
            pairs.insert((concat(corpus, &s.citations)?, h.clone()));
        }
        let list = match support {
            Support::Shared(l) => Some(l),
            Support::PerStatement(ls) => ls.get(i),
        };
        for d in list.map(|l| l.ids()).unwrap_or_default() {
            pairs.insert((premise(corpus, &d)?, h.clone()));
        }
    }
    nli.prefetch(pairs)
}

impl CorrectnessScores {
    pub fn insert_into(&self, map: &mut MetricMap) {
        map.insert("bleu".into(), self.bleu);
        for (prefix, prf) in [("rouge_l", self.rouge_l), ("similarity", self.similarity)] {
            map.insert(format!("{prefix}.precision"), prf.precision);
            map.insert(format!("{prefix}.recall"), prf.recall);
            map.insert(format!("{prefix}.f"), prf.f);
        }
    }
}

/// Flat metric names in reporting order.
pub fn metric_names() -> Vec<String> {
    let mut names = vec!["bleu".to_owned()];
    for prefix in ["rouge_l", "similarity"] {
        for part in ["precision", "recall", "f"] {
            names.push(format!("{prefix}.{part}"));
        }
    }
    names.extend(CitationScores::NAMES.iter().map(|s| s.to_string()));
    names
}

/// Per-query metric record as written to `metrics.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub query_id: String,
    pub correctness: Option<CorrectnessScores>,
    pub citations: Option<CitationScores>,
    pub skipped: Vec<String>,
}

impl MetricRecord {
    pub fn flat(&self) -> MetricMap {
        let mut map = BTreeMap::new();
        if let Some(c) = &self.correctness {
            c.insert_into(&mut map);
        }
        if let Some(c) = &self.citations {
            c.insert_into(&mut map);
        }
        map
    }
}
