//! Online inference: retrieval, balanced context selection and answering.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use crate::error::{Error, Result};
use crate::gateway::prompts::{bindings, render_prompt, TemplateId};
use crate::gateway::{ChatRequest, Gateway, REASONING_MAX_TOKENS};
use crate::knowledge::{EntryKind, IndexEntry};
use crate::store::{SearchHit, VectorStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    #[default]
    SinglePass,
    Ircot,
}

impl FromStr for QueryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "single_pass" | "single" => Ok(QueryMode::SinglePass),
            "ircot" => Ok(QueryMode::Ircot),
            other => Err(Error::Config(format!("unknown query mode {other:?}"))),
        }
    }
}

impl fmt::Display for QueryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueryMode::SinglePass => "single_pass",
            QueryMode::Ircot => "ircot",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueryConfig {
    pub n_candidates: usize,
    pub k: usize,
    /// Cap on bridging facts in the selected context.
    pub k_b: usize,
    pub mode: QueryMode,
    pub ircot_steps: usize,
    pub ircot_per_step: usize,
}

impl Default for QueryConfig {
    fn default() -> Self {
        Self {
            n_candidates: 20,
            k: 10,
            k_b: 3,
            mode: QueryMode::SinglePass,
            ircot_steps: 3,
            ircot_per_step: 20,
        }
    }
}

impl QueryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n_candidates == 0 {
            return Err(Error::Config(
                "k and n_candidates must be at least 1".into(),
            ));
        }
        if self.k > self.n_candidates {
            return Err(Error::Config(format!(
                "k ({}) must not exceed n_candidates ({})",
                self.k, self.n_candidates
            )));
        }
        if self.k_b > self.k {
            return Err(Error::Config(format!(
                "k_b ({}) must not exceed k ({})",
                self.k_b, self.k
            )));
        }
        if self.ircot_steps == 0 || self.ircot_per_step == 0 {
            return Err(Error::Config(
                "ircot_steps and ircot_per_step must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReasoningStep {
    pub reasoning: String,
    pub search: String,
}

#[derive(Debug, Clone)]
pub struct QueryResult {
    pub answer: String,
    pub selected_context: Vec<SearchHit>,
    pub llm_calls: u32,
    pub retrieval_latency: Duration,
    pub steps_trace: Option<Vec<ReasoningStep>>,
}

/// Anything carrying an entry kind, so selection can run on bare kind sequences too.
pub trait HasKind {
    fn kind(&self) -> EntryKind;
}

impl HasKind for EntryKind {
    fn kind(&self) -> EntryKind {
        *self
    }
}

impl HasKind for IndexEntry {
    fn kind(&self) -> EntryKind {
        self.kind
    }
}

impl HasKind for SearchHit {
    fn kind(&self) -> EntryKind {
        self.entry.kind
    }
}

/// Greedy rank-order selection: take every AKU, take a bridging fact only
/// while fewer than `k_b` are selected, stop at `k` entries.
pub fn balanced_select<T: HasKind + Clone>(ranked: &[T], k: usize, k_b: usize) -> Vec<T> {
    let mut selected = Vec::with_capacity(k.min(ranked.len()));
    let mut bridging = 0;
    for item in ranked {
        if selected.len() == k {
            break;
        }
        match item.kind() {
            EntryKind::Aku => selected.push(item.clone()),
            EntryKind::Bridging if bridging < k_b => {
                selected.push(item.clone());
                bridging += 1;
            }
            EntryKind::Bridging => {}
        }
    }
    selected
}

/// `[1] first\n[2] second`, in the given order.
pub fn format_context<'a>(entries: impl IntoIterator<Item = &'a IndexEntry>) -> String {
    entries
        .into_iter()
        .enumerate()
        .map(|(i, e)| format!("[{}] {}", i + 1, e.text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Parses `Reasoning: ...` / `Search: ...` lines. `None` when there is no search line.
pub fn parse_step(output: &str) -> Option<ReasoningStep> {
    let mut reasoning = None;
    let mut search = None;
    for line in output.lines() {
        let line = line.trim().trim_start_matches(['*', '-', ' ']);
        if let Some(rest) = strip_label(line, "reasoning:") {
            reasoning.get_or_insert_with(|| rest.trim().trim_matches('*').trim().to_string());
        } else if let Some(rest) = strip_label(line, "search:") {
            search.get_or_insert_with(|| rest.trim().trim_matches(['*', '"']).trim().to_string());
        }
    }
    Some(ReasoningStep {
        reasoning: reasoning.unwrap_or_default(),
        search: search?,
    })
}

fn strip_label<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    let head = line.get(..label.len())?;
    head.eq_ignore_ascii_case(label)
        .then(|| &line[label.len()..])
}

pub fn is_done(search: &str) -> bool {
    let s = search.trim().trim_matches(|c: char| !c.is_alphanumeric());
    s.is_empty() || s.eq_ignore_ascii_case("done")
}

pub struct QueryEngine<'a> {
    gateway: &'a Gateway,
    store: &'a VectorStore,
    config: QueryConfig,
}

impl<'a> QueryEngine<'a> {
    pub fn new(gateway: &'a Gateway, store: &'a VectorStore, config: QueryConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            gateway,
            store,
            config,
        })
    }

    pub fn config(&self) -> &QueryConfig {
        &self.config
    }

    /// Embeds `query` with the indexing model and returns the top `n` entries.
    pub fn retrieve(&self, query: &str, n: usize) -> Result<Vec<SearchHit>> {
        if query.trim().is_empty() {
            return Err(Error::Input("query is empty".into()));
        }
        let vector = self.gateway.embed_one(query)?;
        self.store.search(&vector, n)
    }

    pub fn answer(&self, question: &str) -> Result<QueryResult> {
        match self.config.mode {
            QueryMode::SinglePass => self.answer_single(question),
            QueryMode::Ircot => self.answer_ircot(question),
        }
    }

    fn generate(&self, question: &str, context: &[SearchHit]) -> Result<String> {
        let prompt = render_prompt(
            TemplateId::AnswerGen,
            &bindings([
                ("context", format_context(context.iter().map(|h| &h.entry))),
                ("question", question.to_string()),
            ]),
        )?;
        Ok(self
            .gateway
            .chat_complete(&ChatRequest::answer(prompt))?
            .trim()
            .to_string())
    }

    /// One embedding, one search, one chat completion.
    pub fn answer_single(&self, question: &str) -> Result<QueryResult> {
        let start = Instant::now();
        let ranked = self.retrieve(question, self.config.n_candidates)?;
        let context = balanced_select(&ranked, self.config.k, self.config.k_b);
        let retrieval_latency = start.elapsed();
        let answer = self.generate(question, &context)?;
        Ok(QueryResult {
            answer,
            selected_context: context,
            llm_calls: 1,
            retrieval_latency,
            steps_trace: None,
        })
    }

    /// Interleaved reasoning and retrieval. Candidates from every step are
    /// pooled by entry id at their best score; the final answer sees the
    /// balanced selection over that pool.
    pub fn answer_ircot(&self, question: &str) -> Result<QueryResult> {
        let mut pool = CandidatePool::default();
        let mut latency = Duration::ZERO;
        let mut trace = Vec::new();
        let mut llm_calls = 0;
        let mut search = question.to_string();

        for step in 0..self.config.ircot_steps {
            latency += self.retrieve_into(&mut pool, &search)?;
            let start = Instant::now();
            let context = balanced_select(&pool.ranked(), self.config.k, self.config.k_b);
            latency += start.elapsed();
            let cot = if trace.is_empty() {
                "(none)".to_string()
            } else {
                trace
                    .iter()
                    .map(|s: &ReasoningStep| s.reasoning.as_str())
                    .collect::<Vec<_>>()
                    .join("\n")
            };
            let prompt = render_prompt(
                TemplateId::IrcotStep,
                &bindings([
                    ("question", question.to_string()),
                    ("context", format_context(context.iter().map(|h| &h.entry))),
                    ("cot_so_far", cot),
                ]),
            )?;
            let output = self
                .gateway
                .chat_complete(&ChatRequest::new(prompt, REASONING_MAX_TOKENS))?;
            llm_calls += 1;
            let Some(parsed) = parse_step(&output) else {
                warn!(step, "reasoning step has no Search line; treating as DONE");
                break;
            };
            let done = is_done(&parsed.search);
            search = parsed.search.clone();
            trace.push(parsed);
            if done {
                break;
            }
            if step + 1 == self.config.ircot_steps {
                // the final suggested query still feeds the answer context
                latency += self.retrieve_into(&mut pool, &search)?;
            }
        }

        let start = Instant::now();
        let context = balanced_select(&pool.ranked(), self.config.k, self.config.k_b);
        latency += start.elapsed();
        debug!(steps = trace.len(), pool = pool.len(), "ircot finished");
        let answer = self.generate(question, &context)?;
        Ok(QueryResult {
            answer,
            selected_context: context,
            llm_calls: llm_calls + 1,
            retrieval_latency: latency,
            steps_trace: Some(trace),
        })
    }
}

impl QueryEngine<'_> {
    fn retrieve_into(&self, pool: &mut CandidatePool, query: &str) -> Result<Duration> {
        let start = Instant::now();
        let hits = self.retrieve(query, self.config.ircot_per_step)?;
        pool.merge(hits);
        Ok(start.elapsed())
    }
}

/// Union of search hits keyed by entry id, keeping each entry's best score.
#[derive(Default)]
struct CandidatePool {
    hits: Vec<SearchHit>,
    by_id: HashMap<String, usize>,
}

impl CandidatePool {
    fn merge(&mut self, hits: Vec<SearchHit>) {
        for hit in hits {
            match self.by_id.get(&hit.entry.entry_id) {
                Some(&i) => {
                    if hit.score > self.hits[i].score {
                        self.hits[i].score = hit.score;
                    }
                }
                None => {
                    self.by_id
                        .insert(hit.entry.entry_id.clone(), self.hits.len());
                    self.hits.push(hit);
                }
            }
        }
    }

    /// Best score first; ties by first appearance.
    fn ranked(&self) -> Vec<SearchHit> {
        let mut ranked = self.hits.clone();
        ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
        ranked
    }

    fn len(&self) -> usize {
        self.hits.len()
    }
}
