//! Command-line front end for building, extending, querying and evaluating
//! IndexRAG indexes.

pub mod config;

use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use indexrag_core::eval::{load_dataset, run_eval, EvalOptions};
use indexrag_core::knowledge::{read_corpus, EntryKind};
use indexrag_core::{build_index, Gateway, Index, QueryEngine, QueryMode, Stage1Strategy};
use serde::Serialize;
use tracing::{info, warn};

use config::{build_gateway, process_env, require, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "indexrag",
    version,
    about = "Index-time cross-document reasoning for multi-hop RAG"
)]
pub struct Cli {
    /// Log more to stderr (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build an index from a corpus.
    Index(IndexArgs),
    /// Add documents to an existing index.
    Add(AddArgs),
    /// Answer one question against an index.
    Query(QueryArgs),
    /// Score a dataset against an index and write reports.
    Eval(EvalArgs),
    /// Print index statistics.
    Inspect(InspectArgs),
}

/// Options shared by every command.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON run configuration; flags take precedence over it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Index directory.
    #[arg(long, value_name = "DIR")]
    pub index: Option<PathBuf>,
    /// Scripted mock model instead of a live endpoint.
    #[arg(long, value_name = "FILE")]
    pub mock_script: Option<PathBuf>,
    #[arg(long)]
    pub chat_model: Option<String>,
    #[arg(long)]
    pub embed_model: Option<String>,
    /// Concurrent model requests.
    #[arg(long)]
    pub parallelism: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct IndexArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Corpus JSONL with doc_id, title, text.
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    /// Upper document-frequency bound for bridge entities.
    #[arg(long)]
    pub tau: Option<usize>,
    /// qa_extraction, summary or chunking.
    #[arg(long)]
    pub stage1: Option<Stage1Strategy>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct AddArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// JSONL with the documents to add.
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RetrievalArgs {
    /// Entries in the answer context.
    #[arg(long)]
    pub k: Option<usize>,
    /// Candidates retrieved before selection.
    #[arg(long)]
    pub n_candidates: Option<usize>,
    /// single_pass or ircot.
    #[arg(long)]
    pub mode: Option<QueryMode>,
    #[arg(long)]
    pub ircot_steps: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct QueryArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub retrieval: RetrievalArgs,
    /// Cap on bridging facts in the context.
    #[arg(long)]
    pub kb: Option<usize>,
    /// Print the result as JSON.
    #[arg(long)]
    pub json: bool,
    pub question: String,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub retrieval: RetrievalArgs,
    /// Dataset JSONL with question_id, question, answer, supporting_ids.
    #[arg(long, value_name = "FILE")]
    pub dataset: Option<PathBuf>,
    /// Report directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// One or more k_b values; several values write one report each.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub kb: Vec<usize>,
    /// Leave failed questions out of the aggregates instead of scoring them 0.
    #[arg(long)]
    pub exclude_failures: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Bridge entities to list, by document frequency.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
}

impl CommonArgs {
    fn apply(&self, config: &mut RunConfig) {
        if let Some(v) = &self.index {
            config.paths.index = Some(v.clone());
        }
        if let Some(v) = &self.mock_script {
            config.gateway.mock_script = Some(v.clone());
        }
        if let Some(v) = &self.chat_model {
            config.gateway.chat_model = v.clone();
        }
        if let Some(v) = &self.embed_model {
            config.gateway.embed_model = v.clone();
        }
        if let Some(v) = self.parallelism {
            config.index.parallelism = v;
            config.eval.parallelism = v;
        }
    }
}

impl RetrievalArgs {
    fn apply(&self, config: &mut RunConfig) {
        if let Some(v) = self.k {
            config.query.k = v;
        }
        if let Some(v) = self.n_candidates {
            config.query.n_candidates = v;
        }
        if let Some(v) = self.mode {
            config.query.mode = v;
        }
        if let Some(v) = self.ircot_steps {
            config.query.ircot_steps = v;
        }
    }
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Index(a) => &a.common,
            Command::Add(a) => &a.common,
            Command::Query(a) => &a.common,
            Command::Eval(a) => &a.common,
            Command::Inspect(a) => &a.common,
        }
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let common = self.common();
        let mut config = RunConfig::load(common.config.as_deref())?;
        common.apply(&mut config);
        match self {
            Command::Index(a) => {
                if let Some(v) = &a.corpus {
                    config.paths.corpus = Some(v.clone());
                }
                if let Some(v) = a.tau {
                    config.index.tau = v;
                }
                if let Some(v) = a.stage1 {
                    config.index.stage1_strategy = v;
                }
            }
            Command::Add(a) => {
                if let Some(v) = &a.corpus {
                    config.paths.corpus = Some(v.clone());
                }
            }
            Command::Query(a) => {
                a.retrieval.apply(&mut config);
                if let Some(v) = a.kb {
                    config.query.k_b = v;
                }
            }
            Command::Eval(a) => {
                a.retrieval.apply(&mut config);
                if let Some(v) = &a.dataset {
                    config.paths.dataset = Some(v.clone());
                }
                if let Some(v) = &a.out {
                    config.paths.out = Some(v.clone());
                }
                if !a.kb.is_empty() {
                    config.eval.kb_sweep = a.kb.clone();
                }
                if a.exclude_failures {
                    config.eval.exclude_failures = true;
                }
            }
            Command::Inspect(_) => {}
        }
        config.index.validate()?;
        config.query.validate()?;
        Ok(config)
    }
}

/// Runs `cli`, writing human-readable output to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let config = cli.command.resolve()?;
    match &cli.command {
        Command::Index(_) => cmd_index(&config, &gateway(&config)?, out),
        Command::Add(_) => cmd_add(&config, &gateway(&config)?, out),
        Command::Query(a) => cmd_query(&config, &gateway(&config)?, &a.question, a.json, out),
        Command::Eval(_) => cmd_eval(&config, &gateway(&config)?, out),
        Command::Inspect(a) => cmd_inspect(&config, a.top, out),
    }
}

fn gateway(config: &RunConfig) -> Result<Gateway> {
    build_gateway(&config.gateway, process_env)
}

fn load_index(config: &RunConfig) -> Result<Index> {
    let dir = require(&config.paths.index, "--index")?;
    Index::load(dir).with_context(|| format!("loading index {}", dir.display()))
}

fn percent(rate: f64) -> String {
    format!("{:.1}%", rate * 100.0)
}

fn list(items: &[String]) -> String {
    if items.is_empty() {
        "(none)".into()
    } else {
        items.join(", ")
    }
}

pub fn cmd_index(config: &RunConfig, gateway: &Gateway, out: &mut dyn Write) -> Result<()> {
    let corpus_path = require(&config.paths.corpus, "--corpus")?;
    let dir = require(&config.paths.index, "--index")?;
    let corpus = read_corpus(corpus_path)
        .with_context(|| format!("reading corpus {}", corpus_path.display()))?;
    info!(documents = corpus.len(), backend = %gateway.describe(), "building index");
    let outcome = build_index(&corpus, &config.index, gateway)?;
    for (doc_id, reason) in &outcome.skipped {
        warn!(doc_id = %doc_id, "skipped: {reason}");
    }
    outcome
        .index
        .save(dir)
        .with_context(|| format!("writing index {}", dir.display()))?;
    let s = &outcome.stats;
    writeln!(
        out,
        "indexed {} documents ({} skipped)",
        s.document_count,
        outcome.skipped.len()
    )?;
    writeln!(out, "atomic knowledge units: {}", s.aku_count)?;
    writeln!(out, "bridge entities: {}", s.bridge_entity_count)?;
    writeln!(out, "bridging facts: {}", s.bridging_fact_count)?;
    writeln!(out, "non-empty rate: {}", percent(s.non_empty_rate))?;
    writeln!(out, "index written to {}", dir.display())?;
    Ok(())
}

pub fn cmd_add(config: &RunConfig, gateway: &Gateway, out: &mut dyn Write) -> Result<()> {
    let docs_path = require(&config.paths.corpus, "--corpus")?;
    let dir = require(&config.paths.index, "--index")?;
    let docs = read_corpus(docs_path)
        .with_context(|| format!("reading documents {}", docs_path.display()))?;
    let mut index = load_index(config)?;
    for doc in &docs {
        let report = index.add_document(doc, gateway)?;
        writeln!(
            out,
            "added {} ({} units)",
            report.doc_id, report.units_added
        )?;
        writeln!(out, "  newly bridged: {}", list(&report.newly_bridged))?;
        writeln!(out, "  regenerated: {}", list(&report.regenerated))?;
        writeln!(out, "  no longer bridged: {}", list(&report.removed))?;
        writeln!(
            out,
            "  bridging facts: +{} -{}",
            report.bridging_added, report.bridging_removed
        )?;
    }
    index
        .save(dir)
        .with_context(|| format!("writing index {}", dir.display()))?;
    Ok(())
}

#[derive(Serialize)]
struct ContextRow<'a> {
    rank: usize,
    entry_id: &'a str,
    kind: EntryKind,
    score: f64,
    text: &'a str,
    provenance: Vec<&'a str>,
}

#[derive(Serialize)]
struct QueryOutput<'a> {
    question: &'a str,
    answer: &'a str,
    mode: QueryMode,
    llm_calls: u32,
    retrieval_latency_ms: f64,
    context: Vec<ContextRow<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    steps: Option<&'a [indexrag_core::query::ReasoningStep]>,
}

pub fn cmd_query(
    config: &RunConfig,
    gateway: &Gateway,
    question: &str,
    json: bool,
    out: &mut dyn Write,
) -> Result<()> {
    let index = load_index(config)?;
    let engine = QueryEngine::new(gateway, index.store(), config.query.clone())?;
    let result = engine.answer(question)?;
    let rows: Vec<ContextRow> = result
        .selected_context
        .iter()
        .enumerate()
        .map(|(i, h)| ContextRow {
            rank: i + 1,
            entry_id: &h.entry.entry_id,
            kind: h.entry.kind,
            score: h.score,
            text: &h.entry.text,
            provenance: h.entry.provenance.iter().map(String::as_str).collect(),
        })
        .collect();
    let output = QueryOutput {
        question,
        answer: &result.answer,
        mode: config.query.mode,
        llm_calls: result.llm_calls,
        retrieval_latency_ms: result.retrieval_latency.as_secs_f64() * 1000.0,
        context: rows,
        steps: result.steps_trace.as_deref(),
    };
    if json {
        writeln!(out, "{}", serde_json::to_string_pretty(&output)?)?;
        return Ok(());
    }
    writeln!(out, "answer: {}", output.answer)?;
    writeln!(out, "llm calls: {}", output.llm_calls)?;
    writeln!(
        out,
        "retrieval latency: {:.2} ms",
        output.retrieval_latency_ms
    )?;
    if let Some(steps) = output.steps {
        for (i, s) in steps.iter().enumerate() {
            writeln!(
                out,
                "step {}: {} [search: {}]",
                i + 1,
                s.reasoning,
                s.search
            )?;
        }
    }
    writeln!(out, "context:")?;
    for row in &output.context {
        writeln!(
            out,
            "  [{}] ({}, {:.4}) {}",
            row.rank, row.kind, row.score, row.text
        )?;
    }
    Ok(())
}

pub fn cmd_eval(config: &RunConfig, gateway: &Gateway, out: &mut dyn Write) -> Result<()> {
    let dataset_path = require(&config.paths.dataset, "--dataset")?;
    let out_dir = require(&config.paths.out, "--out")?;
    let dataset = load_dataset(dataset_path)
        .with_context(|| format!("reading dataset {}", dataset_path.display()))?;
    if dataset.is_empty() {
        bail!("dataset {} has no questions", dataset_path.display());
    }
    let index = load_index(config)?;
    let sweep = if config.eval.kb_sweep.is_empty() {
        vec![config.query.k_b]
    } else {
        config.eval.kb_sweep.clone()
    };
    let options = EvalOptions {
        parallelism: config.eval.parallelism,
        exclude_failures: config.eval.exclude_failures,
    };

    writeln!(
        out,
        "{:>4} {:>5} {:>7} {:>7} {:>7} {:>9} {:>9} {:>11} {:>8}",
        "k_b", "n", "EM", "Acc", "F1", "Recall@k", "LLM calls", "latency ms", "failed"
    )?;
    for &k_b in &sweep {
        let query = indexrag_core::QueryConfig {
            k_b,
            ..config.query.clone()
        };
        let report = run_eval(&dataset, gateway, index.store(), query, options)?;
        let dir = if sweep.len() > 1 {
            out_dir.join(format!("kb{k_b}"))
        } else {
            out_dir.to_path_buf()
        };
        report.write(&dir)?;
        let a = &report.aggregate;
        writeln!(
            out,
            "{:>4} {:>5} {:>7.1} {:>7.1} {:>7.1} {:>9.1} {:>9.2} {:>11.2} {:>8}",
            k_b,
            a.count,
            a.em,
            a.acc,
            a.f1,
            a.recall_at_k,
            a.mean_llm_calls,
            a.mean_retrieval_latency_ms,
            a.failures
        )?;
        for (kind, t) in &report.per_type {
            writeln!(
                out,
                "     {kind}: n={} EM {:.1} Acc {:.1} F1 {:.1}",
                t.count, t.em, t.acc, t.f1
            )?;
        }
    }
    writeln!(out, "reports written to {}", out_dir.display())?;
    Ok(())
}

pub fn cmd_inspect(config: &RunConfig, top: usize, out: &mut dyn Write) -> Result<()> {
    let index = load_index(config)?;
    let s = index.stats();
    let store = index.store();
    writeln!(out, "documents: {}", s.document_count)?;
    writeln!(out, "stage-1 strategy: {}", index.config().stage1_strategy)?;
    writeln!(out, "atomic knowledge units: {}", s.aku_count)?;
    writeln!(
        out,
        "bridge entities: {} (tau {})",
        s.bridge_entity_count,
        index.config().tau
    )?;
    writeln!(out, "bridging facts: {}", s.bridging_fact_count)?;
    writeln!(out, "non-empty rate: {}", percent(s.non_empty_rate))?;
    let dim = store
        .dimension()
        .map_or_else(|| "-".to_string(), |d| d.to_string());
    writeln!(out, "store entries: {} (dimension {dim})", store.len())?;

    let mut bridges: Vec<(String, usize)> = index
        .bridge_entities()
        .into_iter()
        .map(|(key, docs)| (key, docs.len()))
        .collect();
    bridges.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    if !bridges.is_empty() && top > 0 {
        writeln!(out, "top bridge entities:")?;
        for (key, df) in bridges.into_iter().take(top) {
            let facts = store
                .entries()
                .iter()
                .filter(|e| e.entity.as_deref() == Some(key.as_str()))
                .count();
            writeln!(out, "  {key} (df {df}, {facts} facts)")?;
        }
    }
    Ok(())
}

pub fn default_log_filter(verbose: u8) -> &'static str {
    match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("indexrag").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn precedence_flag_over_file_over_default() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.json");
        std::fs::write(
            &file,
            r#"{"index": {"tau": 6}, "query": {"k": 8, "k_b": 2}}"#,
        )
        .unwrap();
        let file = file.to_str().unwrap();

        let defaults = parse(&["query", "q"]).command.resolve().unwrap();
        let from_file = parse(&["query", "--config", file, "q"])
            .command
            .resolve()
            .unwrap();
        let from_flag = parse(&["query", "--config", file, "--kb", "0", "--k", "5", "q"])
            .command
            .resolve()
            .unwrap();
        assert_eq!((defaults.query.k, defaults.query.k_b), (10, 3));
        assert_eq!((from_file.query.k, from_file.query.k_b), (8, 2));
        assert_eq!((from_flag.query.k, from_flag.query.k_b), (5, 0));

        let tau = |args: &[&str]| parse(args).command.resolve().unwrap().index.tau;
        assert_eq!(tau(&["index"]), 10);
        assert_eq!(tau(&["index", "--config", file]), 6);
        assert_eq!(tau(&["index", "--config", file, "--tau", "3"]), 3);
    }

    #[test]
    fn kb_sweep_parses_lists() {
        let Command::Eval(args) = parse(&["eval", "--kb", "0,1,2,3,5"]).command else {
            panic!()
        };
        assert_eq!(args.kb, [0, 1, 2, 3, 5]);
        let config = Command::Eval(args).resolve().unwrap();
        assert_eq!(config.eval.kb_sweep, [0, 1, 2, 3, 5]);
    }

    #[test]
    fn invalid_combinations_are_rejected() {
        assert!(parse(&["query", "--k", "3", "--kb", "4", "q"])
            .command
            .resolve()
            .is_err());
        assert!(Cli::try_parse_from(["indexrag", "index", "--stage1", "bogus"]).is_err());
        assert!(Cli::try_parse_from(["indexrag", "query", "--mode", "ircot", "q"]).is_ok());
    }
}
