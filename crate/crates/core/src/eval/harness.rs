use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use super::metrics::{accuracy, exact_match, f1, recall_at_k};
use crate::error::{Error, Result};
use crate::gateway::Gateway;
use crate::parallel::bounded_map;
use crate::query::{QueryConfig, QueryEngine};
use crate::store::VectorStore;

/// One line of an evaluation dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalQuestion {
    pub question_id: String,
    pub question: String,
    #[serde(rename = "answer")]
    pub gold_answer: String,
    #[serde(rename = "supporting_ids", default)]
    pub gold_passage_ids: BTreeSet<String>,
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    pub question_type: Option<String>,
}

impl EvalQuestion {
    pub fn validate(&self) -> Result<()> {
        if self.question_id.trim().is_empty() {
            return Err(Error::Input("question_id is empty".into()));
        }
        if self.question.trim().is_empty() {
            return Err(Error::Input(format!(
                "question {} has no text",
                self.question_id
            )));
        }
        if self.gold_answer.trim().is_empty() {
            return Err(Error::Input(format!(
                "question {} has no gold answer",
                self.question_id
            )));
        }
        Ok(())
    }
}

pub fn load_dataset(path: &Path) -> Result<Vec<EvalQuestion>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(BufReader::new(file)).map_err(|e| match e {
        Error::Input(msg) => Error::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_dataset(reader: impl BufRead) -> Result<Vec<EvalQuestion>> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Input(format!("line {}: {e}", n + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let q: EvalQuestion = serde_json::from_str(&line)
            .map_err(|e| Error::Input(format!("line {}: {e}", n + 1)))?;
        q.validate()
            .map_err(|e| Error::Input(format!("line {}: {e}", n + 1)))?;
        if !seen.insert(q.question_id.clone()) {
            return Err(Error::Input(format!(
                "line {}: duplicate question_id {}",
                n + 1,
                q.question_id
            )));
        }
        out.push(q);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub parallelism: usize,
    /// Drop failed questions from the aggregates instead of scoring them 0.
    pub exclude_failures: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            parallelism: 4,
            exclude_failures: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub question_id: String,
    pub question: String,
    pub gold_answer: String,
    pub prediction: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub question_type: Option<String>,
    pub em: f64,
    pub acc: f64,
    pub f1: f64,
    pub recall_at_k: f64,
    pub llm_calls: u32,
    pub retrieval_latency_ms: f64,
    pub selected_entry_ids: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Metric means scaled to [0, 100]; telemetry means unscaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub count: usize,
    pub failures: usize,
    pub em: f64,
    pub acc: f64,
    pub f1: f64,
    pub recall_at_k: f64,
    pub mean_llm_calls: f64,
    pub mean_retrieval_latency_ms: f64,
}

impl Aggregates {
    pub fn from_records<'a>(
        records: impl IntoIterator<Item = &'a QuestionRecord>,
        exclude_failures: bool,
    ) -> Self {
        let all: Vec<&QuestionRecord> = records.into_iter().collect();
        let failures = all.iter().filter(|r| r.error.is_some()).count();
        let used: Vec<&QuestionRecord> = all
            .into_iter()
            .filter(|r| !(exclude_failures && r.error.is_some()))
            .collect();
        let mean = |f: &dyn Fn(&QuestionRecord) -> f64| {
            if used.is_empty() {
                0.0
            } else {
                used.iter().map(|r| f(r)).sum::<f64>() / used.len() as f64
            }
        };
        Self {
            count: used.len(),
            failures,
            em: 100.0 * mean(&|r| r.em),
            acc: 100.0 * mean(&|r| r.acc),
            f1: 100.0 * mean(&|r| r.f1),
            recall_at_k: 100.0 * mean(&|r| r.recall_at_k),
            mean_llm_calls: mean(&|r| f64::from(r.llm_calls)),
            mean_retrieval_latency_ms: mean(&|r| r.retrieval_latency_ms),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
    pub os: String,
    pub arch: String,
    pub available_cpus: usize,
    pub parallelism: usize,
    pub backend: String,
    pub store_entries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub query: QueryConfig,
    pub options: EvalOptions,
    pub aggregate: Aggregates,
    pub per_type: BTreeMap<String, Aggregates>,
    pub metadata: RunMetadata,
    #[serde(skip)]
    pub records: Vec<QuestionRecord>,
}

impl EvalReport {
    /// Writes `report.json` and `per_question.jsonl` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let report_path = dir.join("report.json");
        let body = serde_json::to_string_pretty(self)
            .map_err(|e| Error::persistence(&report_path, e.to_string()))?;
        fs::write(&report_path, body + "\n").map_err(|e| Error::io(&report_path, e))?;

        let rows_path = dir.join("per_question.jsonl");
        let mut rows = std::io::BufWriter::new(
            fs::File::create(&rows_path).map_err(|e| Error::io(&rows_path, e))?,
        );
        for r in &self.records {
            let line = serde_json::to_string(r)
                .map_err(|e| Error::persistence(&rows_path, e.to_string()))?;
            writeln!(rows, "{line}").map_err(|e| Error::io(&rows_path, e))?;
        }
        rows.flush().map_err(|e| Error::io(&rows_path, e))
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn score_question(q: &EvalQuestion, engine: &QueryEngine<'_>) -> QuestionRecord {
    let k = engine.config().k;
    match engine.answer(&q.question) {
        Ok(result) => {
            let entries: Vec<_> = result.selected_context.iter().map(|h| &h.entry).collect();
            QuestionRecord {
                question_id: q.question_id.clone(),
                question: q.question.clone(),
                gold_answer: q.gold_answer.clone(),
                em: exact_match(&result.answer, &q.gold_answer),
                acc: accuracy(&result.answer, &q.gold_answer),
                f1: f1(&result.answer, &q.gold_answer),
                recall_at_k: recall_at_k(entries.iter().copied(), &q.gold_passage_ids, k),
                prediction: result.answer,
                question_type: q.question_type.clone(),
                llm_calls: result.llm_calls,
                retrieval_latency_ms: result.retrieval_latency.as_secs_f64() * 1000.0,
                selected_entry_ids: entries.iter().map(|e| e.entry_id.clone()).collect(),
                error: None,
            }
        }
        Err(e) => {
            warn!(question_id = %q.question_id, error = %e, "question failed");
            QuestionRecord {
                question_id: q.question_id.clone(),
                question: q.question.clone(),
                gold_answer: q.gold_answer.clone(),
                prediction: String::new(),
                question_type: q.question_type.clone(),
                em: 0.0,
                acc: 0.0,
                f1: 0.0,
                recall_at_k: 0.0,
                llm_calls: 0,
                retrieval_latency_ms: 0.0,
                selected_entry_ids: Vec::new(),
                error: Some(e.to_string()),
            }
        }
    }
}

/// Answers every question against `store` and aggregates the scores.
/// Records come back sorted by `question_id`.
pub fn run_eval(
    dataset: &[EvalQuestion],
    gateway: &Gateway,
    store: &VectorStore,
    query: QueryConfig,
    options: EvalOptions,
) -> Result<EvalReport> {
    let started = unix_now();
    let engine = QueryEngine::new(gateway, store, query.clone())?;
    info!(questions = dataset.len(), k = query.k, k_b = query.k_b, mode = %query.mode, "evaluating");
    let mut records = bounded_map(dataset, options.parallelism, |q| score_question(q, &engine));
    records.sort_by(|a, b| a.question_id.cmp(&b.question_id));

    let aggregate = Aggregates::from_records(&records, options.exclude_failures);
    let mut by_type: BTreeMap<String, Vec<&QuestionRecord>> = BTreeMap::new();
    for r in &records {
        if let Some(t) = &r.question_type {
            by_type.entry(t.clone()).or_default().push(r);
        }
    }
    let per_type = by_type
        .into_iter()
        .map(|(t, rs)| (t, Aggregates::from_records(rs, options.exclude_failures)))
        .collect();

    Ok(EvalReport {
        query,
        options,
        aggregate,
        per_type,
        metadata: RunMetadata {
            started_unix_s: started,
            finished_unix_s: unix_now(),
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            available_cpus: std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1),
            parallelism: options.parallelism,
            backend: gateway.describe(),
            store_entries: store.len(),
        },
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_parsing() {
        let raw = r#"{"question_id":"q1","question":"Who?","answer":"Bob","supporting_ids":["d1","d2"],"type":"bridge"}

{"question_id":"q2","question":"What?","answer":"yes"}
"#;
        let qs = parse_dataset(raw.as_bytes()).unwrap();
        assert_eq!(qs.len(), 2);
        assert_eq!(qs[0].gold_passage_ids.len(), 2);
        assert_eq!(qs[0].question_type.as_deref(), Some("bridge"));
        assert!(qs[1].gold_passage_ids.is_empty());
    }

    #[test]
    fn dataset_rejects_bad_rows() {
        let dup = "{\"question_id\":\"q\",\"question\":\"a\",\"answer\":\"b\"}\n".repeat(2);
        assert!(parse_dataset(dup.as_bytes())
            .unwrap_err()
            .to_string()
            .contains("duplicate"));
        let blank = r#"{"question_id":"q","question":"a","answer":"  "}"#;
        assert!(parse_dataset(blank.as_bytes()).is_err());
        assert!(parse_dataset("not json".as_bytes())
            .unwrap_err()
            .to_string()
            .contains("line 1"));
    }

    fn record(id: &str, em: f64, calls: u32, failed: bool) -> QuestionRecord {
        QuestionRecord {
            question_id: id.into(),
            question: String::new(),
            gold_answer: "x".into(),
            prediction: String::new(),
            question_type: None,
            em,
            acc: em,
            f1: em,
            recall_at_k: 0.5,
            llm_calls: calls,
            retrieval_latency_ms: 2.0,
            selected_entry_ids: Vec::new(),
            error: failed.then(|| "boom".into()),
        }
    }

    #[test]
    fn aggregates_scale_and_failures() {
        let rs = [
            record("a", 1.0, 1, false),
            record("b", 0.0, 1, false),
            record("c", 0.0, 0, true),
        ];
        let agg = Aggregates::from_records(&rs, false);
        assert_eq!(agg.count, 3);
        assert_eq!(agg.failures, 1);
        assert!((agg.em - 100.0 / 3.0).abs() < 1e-9);
        assert!((agg.recall_at_k - 50.0).abs() < 1e-9);
        let excl = Aggregates::from_records(&rs, true);
        assert_eq!(excl.count, 2);
        assert!((excl.em - 50.0).abs() < 1e-9);
        assert!((excl.mean_llm_calls - 1.0).abs() < 1e-9);
        let empty = Aggregates::from_records(&[], false);
        assert_eq!(empty.em, 0.0);
    }
}
