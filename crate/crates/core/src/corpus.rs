//! Passages, queries with gold attributed answers, ingestion and dataset statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::text::{normalize_whitespace, parse_attributed_answer, strip_markers};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

impl Passage {
    /// Text used as an NLI premise: title and body, newline-joined.
    pub fn premise(&self) -> String {
        match &self.title {
            Some(t) if !t.is_empty() => format!("{t}\n{}", self.text),
            _ => self.text.clone(),
        }
    }
}

/// Id-keyed passage collection. Iteration order is ascending id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    passages: BTreeMap<String, Passage>,
}

impl Corpus {
    pub fn from_passages(passages: impl IntoIterator<Item = Passage>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (line, p) in passages.into_iter().enumerate() {
            if p.id.is_empty() {
                return Err(Error::MissingField {
                    line: line + 1,
                    field: "id".into(),
                });
            }
            if p.text.trim().is_empty() {
                return Err(Error::EmptyText {
                    line: line + 1,
                    id: p.id,
                });
            }
            if map.contains_key(&p.id) {
                return Err(Error::DuplicateId(p.id));
            }
            map.insert(p.id.clone(), p);
        }
        Ok(Self { passages: map })
    }

    pub fn get(&self, id: &str) -> Option<&Passage> {
        self.passages.get(id)
    }

    pub fn require(&self, id: &str) -> Result<&Passage> {
        self.get(id).ok_or_else(|| Error::UnknownPassage(id.to_owned()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.passages.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Passage> {
        self.passages.values()
    }

    /// Adds passages whose ids are not present yet. Returns how many were added.
    pub fn extend_missing(&mut self, passages: impl IntoIterator<Item = Passage>) -> usize {
        let mut added = 0;
        for p in passages {
            if !p.text.trim().is_empty() && !self.passages.contains_key(&p.id) {
                self.passages.insert(p.id.clone(), p);
                added += 1;
            }
        }
        added
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub text: String,
    pub citations: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributedAnswer {
    pub statements: Vec<Statement>,
    pub raw_text: String,
}

impl AttributedAnswer {
    /// Answer text with citation markers removed.
    pub fn plain_text(&self) -> String {
        self.statements
            .iter()
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Distinct cited passage ids in order of first citation.
    pub fn cited_ids(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.statements
            .iter()
            .flat_map(|s| s.citations.iter())
            .filter(|c| seen.insert(c.as_str()))
            .cloned()
            .collect()
    }

    pub fn citation_count(&self) -> usize {
        self.statements.iter().map(|s| s.citations.len()).sum()
    }

    pub fn is_unattributed(&self) -> bool {
        self.statements.iter().all(|s| s.citations.is_empty())
    }

    /// True when the statements reproduce `raw_text` up to whitespace and markers.
    pub fn is_consistent(&self) -> bool {
        self.plain_text() == strip_markers(&self.raw_text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldPassage {
    pub id: String,
    pub grade: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

impl GoldPassage {
    pub fn is_relevant(&self) -> bool {
        self.grade >= 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAnswer {
    pub answer: AttributedAnswer,
    pub informative: Option<bool>,
    pub attributable: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalQuery {
    pub id: String,
    pub text: String,
    pub gold_passages: Vec<GoldPassage>,
    pub gold_answers: Vec<GoldAnswer>,
}

impl EvalQuery {
    pub fn gold_ids(&self) -> Vec<String> {
        self.gold_passages.iter().map(|g| g.id.clone()).collect()
    }

    pub fn relevant_ids(&self) -> BTreeSet<String> {
        self.gold_passages
            .iter()
            .filter(|g| g.is_relevant())
            .map(|g| g.id.clone())
            .collect()
    }

    /// Union of citations over every gold answer.
    pub fn gold_citations(&self) -> BTreeSet<String> {
        self.gold_answers
            .iter()
            .flat_map(|g| g.answer.statements.iter())
            .flat_map(|s| s.citations.iter().cloned())
            .collect()
    }

    pub fn gold_texts(&self) -> Vec<String> {
        self.gold_answers.iter().map(|g| g.answer.plain_text()).collect()
    }
}

/// JSON field names used when reading a corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusMapping {
    pub id: String,
    pub text: String,
    pub title: Option<String>,
}

impl Default for CorpusMapping {
    fn default() -> Self {
        Self {
            id: "docid".into(),
            text: "text".into(),
            title: Some("title".into()),
        }
    }
}

/// JSON field names used when reading a dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetMapping {
    pub query_id: String,
    pub query: String,
    pub gold_passages: String,
    pub passage_id: String,
    pub passage_grade: String,
    pub passage_text: Option<String>,
    pub passage_title: Option<String>,
    pub answers: String,
    pub answer_text: String,
    pub informative: String,
    pub attributable: String,
}

impl Default for DatasetMapping {
    fn default() -> Self {
        Self {
            query_id: "query_id".into(),
            query: "query".into(),
            gold_passages: "gold_passages".into(),
            passage_id: "docid".into(),
            passage_grade: "rel".into(),
            passage_text: Some("text".into()),
            passage_title: Some("title".into()),
            answers: "answers".into(),
            answer_text: "text".into(),
            informative: "informative".into(),
            attributable: "attributable".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedCitation {
    pub query_id: String,
    pub answer_index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub queries: Vec<EvalQuery>,
    pub dropped_citations: Vec<DroppedCitation>,
    pub warnings: Vec<String>,
}

impl Dataset {
    /// Gold passages carrying inline text, as a corpus supplement.
    pub fn inline_passages(&self) -> Vec<Passage> {
        self.queries
            .iter()
            .flat_map(|q| q.gold_passages.iter())
            .filter_map(|g| {
                g.text.as_ref().map(|t| Passage {
                    id: g.id.clone(),
                    text: t.clone(),
                    title: g.title.clone(),
                })
            })
            .collect()
    }
}

fn read_lines(path: &Path) -> Result<impl Iterator<Item = (usize, std::io::Result<String>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l)))
}

fn parse_object(line_no: usize, line: &str) -> Result<Map<String, Value>> {
    match serde_json::from_str::<Value>(line) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(Error::MissingField {
            line: line_no,
            field: "<object>".into(),
        }),
        Err(source) => Err(Error::Json {
            line: line_no,
            source,
        }),
    }
}

/// Strings and numbers are both accepted as identifiers.
fn as_id(v: &Value) -> Option<String> {
    match v {
        Value::String(s) if !s.is_empty() => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn as_flag(v: Option<&Value>) -> Option<bool> {
    match v? {
        Value::Bool(b) => Some(*b),
        Value::Number(n) => n.as_f64().map(|x| x != 0.0),
        _ => None,
    }
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str, line: usize) -> Result<&'a Value> {
    obj.get(name).ok_or_else(|| Error::MissingField {
        line,
        field: name.to_owned(),
    })
}

/// Reads a line-delimited JSON corpus. Blank lines are ignored.
pub fn load_corpus(path: &Path, mapping: &CorpusMapping) -> Result<Corpus> {
    let mut passages = BTreeMap::new();
    for (line_no, line) in read_lines(path)? {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let obj = parse_object(line_no, &line)?;
        let id = as_id(field(&obj, &mapping.id, line_no)?).ok_or_else(|| Error::MissingField {
            line: line_no,
            field: mapping.id.clone(),
        })?;
        let text = field(&obj, &mapping.text, line_no)?
            .as_str()
            .map(normalize_whitespace)
            .ok_or_else(|| Error::MissingField {
                line: line_no,
                field: mapping.text.clone(),
            })?;
        if text.is_empty() {
            return Err(Error::EmptyText { line: line_no, id });
        }
        let title = mapping
            .title
            .as_ref()
            .and_then(|f| obj.get(f))
            .and_then(Value::as_str)
            .map(normalize_whitespace)
            .filter(|t| !t.is_empty());
        if passages.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        passages.insert(id.clone(), Passage { id, text, title });
    }
    Ok(Corpus { passages })
}

fn parse_gold_passage(v: &Value, mapping: &DatasetMapping, line: usize) -> Result<GoldPassage> {
    if let Some(id) = as_id(v) {
        return Ok(GoldPassage {
            id,
            grade: 1,
            text: None,
            title: None,
        });
    }
    let obj = v.as_object().ok_or_else(|| Error::MissingField {
        line,
        field: mapping.gold_passages.clone(),
    })?;
    let id = obj
        .get(&mapping.passage_id)
        .and_then(as_id)
        .ok_or_else(|| Error::MissingField {
            line,
            field: mapping.passage_id.clone(),
        })?;
    let grade = match obj.get(&mapping.passage_grade) {
        None | Some(Value::Null) => 1,
        Some(g) => g.as_i64().ok_or_else(|| Error::MissingField {
            line,
            field: mapping.passage_grade.clone(),
        })? as i32,
    };
    let text_of = |f: &Option<String>| {
        f.as_ref()
            .and_then(|f| obj.get(f))
            .and_then(Value::as_str)
            .map(normalize_whitespace)
            .filter(|t| !t.is_empty())
    };
    Ok(GoldPassage {
        id,
        grade,
        text: text_of(&mapping.passage_text),
        title: text_of(&mapping.passage_title),
    })
}

/// Parses one dataset record. Out-of-range citation markers are appended to `dropped`.
pub fn parse_query(
    obj: &Map<String, Value>,
    mapping: &DatasetMapping,
    line: usize,
    dropped: &mut Vec<DroppedCitation>,
) -> Result<EvalQuery> {
    let id = as_id(field(obj, &mapping.query_id, line)?).ok_or_else(|| Error::MissingField {
        line,
        field: mapping.query_id.clone(),
    })?;
    let text = field(obj, &mapping.query, line)?
        .as_str()
        .map(normalize_whitespace)
        .ok_or_else(|| Error::MissingField {
            line,
            field: mapping.query.clone(),
        })?;
    let gold_passages = match obj.get(&mapping.gold_passages) {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| parse_gold_passage(v, mapping, line))
            .collect::<Result<Vec<_>>>()?,
        Some(_) => {
            return Err(Error::MissingField {
                line,
                field: mapping.gold_passages.clone(),
            })
        }
    };
    let ids: Vec<String> = gold_passages.iter().map(|g| g.id.clone()).collect();
    let mut gold_answers = Vec::new();
    if let Some(Value::Array(items)) = obj.get(&mapping.answers) {
        for (index, item) in items.iter().enumerate() {
            let (raw, informative, attributable) = match item {
                Value::String(s) => (s.as_str(), None, None),
                Value::Object(a) => (
                    a.get(&mapping.answer_text)
                        .and_then(Value::as_str)
                        .ok_or_else(|| Error::MissingField {
                            line,
                            field: mapping.answer_text.clone(),
                        })?,
                    as_flag(a.get(&mapping.informative)),
                    as_flag(a.get(&mapping.attributable)),
                ),
                _ => {
                    return Err(Error::MissingField {
                        line,
                        field: mapping.answers.clone(),
                    })
                }
            };
            let (answer, diagnostics) = parse_attributed_answer(raw, &ids);
            dropped.extend(diagnostics.into_iter().map(|reason| DroppedCitation {
                query_id: id.clone(),
                answer_index: index,
                reason,
            }));
            gold_answers.push(GoldAnswer {
                answer,
                informative,
                attributable,
            });
        }
    }
    Ok(EvalQuery {
        id,
        text,
        gold_passages,
        gold_answers,
    })
}

/// Reads a line-delimited JSON dataset of queries with gold answers.
pub fn load_dataset(path: &Path, mapping: &DatasetMapping) -> Result<Dataset> {
    let mut dataset = Dataset::default();
    for (line_no, line) in read_lines(path)? {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let obj = parse_object(line_no, &line)?;
        let q = parse_query(&obj, mapping, line_no, &mut dataset.dropped_citations)?;
        dataset.queries.push(q);
    }
    if dataset.queries.is_empty() {
        let msg = format!("dataset {} contains no queries", path.display());
        log::warn!("{msg}");
        dataset.warnings.push(msg);
    }
    Ok(dataset)
}

/// Serializes a query back to a dataset record under `mapping`.
pub fn query_to_record(query: &EvalQuery, mapping: &DatasetMapping) -> Value {
    let passages: Vec<Value> = query
        .gold_passages
        .iter()
        .map(|g| {
            let mut m = Map::new();
            m.insert(mapping.passage_id.clone(), Value::from(g.id.clone()));
            m.insert(mapping.passage_grade.clone(), Value::from(g.grade));
            if let (Some(f), Some(t)) = (&mapping.passage_text, &g.text) {
                m.insert(f.clone(), Value::from(t.clone()));
            }
            if let (Some(f), Some(t)) = (&mapping.passage_title, &g.title) {
                m.insert(f.clone(), Value::from(t.clone()));
            }
            Value::Object(m)
        })
        .collect();
    let answers: Vec<Value> = query
        .gold_answers
        .iter()
        .map(|a| {
            let mut m = Map::new();
            m.insert(mapping.answer_text.clone(), Value::from(a.answer.raw_text.clone()));
            if let Some(f) = a.informative {
                m.insert(mapping.informative.clone(), Value::from(f));
            }
            if let Some(f) = a.attributable {
                m.insert(mapping.attributable.clone(), Value::from(f));
            }
            Value::Object(m)
        })
        .collect();
    let mut m = Map::new();
    m.insert(mapping.query_id.clone(), Value::from(query.id.clone()));
    m.insert(mapping.query.clone(), Value::from(query.text.clone()));
    m.insert(mapping.gold_passages.clone(), Value::Array(passages));
    m.insert(mapping.answers.clone(), Value::Array(answers));
    Value::Object(m)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_queries: usize,
    pub n_answers: usize,
    pub n_informative: usize,
    pub n_attributable: usize,
    pub avg_gold_passages: f64,
    pub avg_citations: f64,
}

pub fn dataset_stats(queries: &[EvalQuery]) -> DatasetStats {
    let answers: Vec<&GoldAnswer> = queries.iter().flat_map(|q| q.gold_answers.iter()).collect();
    let mean = |total: usize, n: usize| if n == 0 { 0.0 } else { total as f64 / n as f64 };
    DatasetStats {
        n_queries: queries.len(),
        n_answers: answers.len(),
        n_informative: answers.iter().filter(|a| a.informative == Some(true)).count(),
        n_attributable: answers.iter().filter(|a| a.attributable == Some(true)).count(),
        avg_gold_passages: mean(
            queries.iter().map(|q| q.gold_passages.len()).sum(),
            queries.len(),
        ),
        avg_citations: mean(
            answers.iter().map(|a| a.answer.cited_ids().len()).sum(),
            answers.len(),
        ),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnresolvedId {
    pub query_id: String,
    pub passage_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmptyAnswer {
    pub query_id: String,
    pub answer_index: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub unresolved_ids: Vec<UnresolvedId>,
    pub empty_answers: Vec<EmptyAnswer>,
    pub missing_gold: Vec<String>,
    #[serde(default)]
    pub dropped_citations: Vec<DroppedCitation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.unresolved_ids.is_empty()
            && self.empty_answers.is_empty()
            && self.missing_gold.is_empty()
            && self.dropped_citations.is_empty()
    }
}

/// Checks that gold passages and citations resolve in `corpus`.
pub fn validate(queries: &[EvalQuery], corpus: &Corpus) -> ValidationReport {
    let mut report = ValidationReport::default();
    for q in queries {
        if q.gold_answers.is_empty() {
            report.missing_gold.push(q.id.clone());
        }
        let mut ids: BTreeSet<&str> = q.gold_passages.iter().map(|g| g.id.as_str()).collect();
        for a in &q.gold_answers {
            ids.extend(a.answer.statements.iter().flat_map(|s| s.citations.iter().map(String::as_str)));
        }
        report.unresolved_ids.extend(
            ids.into_iter()
                .filter(|id| !corpus.contains(id))
                .map(|id| UnresolvedId {
                    query_id: q.id.clone(),
                    passage_id: id.to_owned(),
                }),
        );
        for (answer_index, a) in q.gold_answers.iter().enumerate() {
            if a.answer.statements.is_empty() {
                report.empty_answers.push(EmptyAnswer {
                    query_id: q.id.clone(),
                    answer_index,
                });
            }
        }
    }
    report
}
