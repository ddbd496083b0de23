//! Stage 1: turning each document into retrievable units.

use serde_json::Value;
use tracing::warn;

use super::json::parse_lenient;
use crate::error::{Error, Result};
use crate::gateway::prompts::{bindings, render_prompt, TemplateId};
use crate::gateway::{ChatRequest, Gateway};
use crate::knowledge::{AtomicKnowledgeUnit, Document, IndexConfig, Stage1Strategy};

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Result {
    pub aku: AtomicKnowledgeUnit,
    pub raw_response: String,
}

/// Runs the configured strategy; chunking may yield several units per document.
pub fn run_stage1(
    doc: &Document,
    config: &IndexConfig,
    gateway: &Gateway,
    max_tokens: u32,
) -> Result<Vec<AtomicKnowledgeUnit>> {
    doc.validate()?;
    match config.stage1_strategy {
        Stage1Strategy::QaExtraction => Ok(vec![
            extract_qa(doc, gateway, config.max_doc_chars, max_tokens)?.aku,
        ]),
        Stage1Strategy::Summary => Ok(vec![
            extract_summary(doc, gateway, config.max_doc_chars, max_tokens)?.aku,
        ]),
        Stage1Strategy::Chunking => {
            chunk_document(doc, config.chunk_target_words, config.chunk_overlap_chars)
        }
    }
}

/// Title line (when present) plus body, cut to `max_chars` characters.
fn prompt_text(doc: &Document, max_chars: usize) -> String {
    let full = if doc.title.trim().is_empty() {
        doc.text.clone()
    } else {
        format!("{}\n{}", doc.title.trim(), doc.text)
    };
    match full.char_indices().nth(max_chars) {
        Some((cut, _)) => {
            warn!(doc_id = %doc.doc_id, max_chars, "document truncated before extraction");
            full[..cut].to_string()
        }
        None => full,
    }
}

pub fn extract_qa(
    doc: &Document,
    gateway: &Gateway,
    max_chars: usize,
    max_tokens: u32,
) -> Result<Stage1Result> {
    let prompt = render_prompt(
        TemplateId::Stage1Qa,
        &bindings([("text", prompt_text(doc, max_chars))]),
    )?;
    let raw = gateway.chat_complete(&ChatRequest::new(prompt, max_tokens))?;
    let fail = |reason: String| Error::Extraction {
        doc_id: doc.doc_id.clone(),
        reason,
    };
    let value = parse_lenient(&raw).map_err(fail)?;
    let (answers, entities) = parse_qa_payload(&value);
    let aku = AtomicKnowledgeUnit::new(doc.doc_id.clone(), answers, entities);
    if aku.facts.is_empty() {
        return Err(fail("response contains no question-answer pairs".into()));
    }
    Ok(Stage1Result {
        aku,
        raw_response: raw,
    })
}

pub fn extract_summary(
    doc: &Document,
    gateway: &Gateway,
    max_chars: usize,
    max_tokens: u32,
) -> Result<Stage1Result> {
    let prompt = render_prompt(
        TemplateId::Stage1Summary,
        &bindings([("text", prompt_text(doc, max_chars))]),
    )?;
    let raw = gateway.chat_complete(&ChatRequest::new(prompt, max_tokens))?;
    let summary = raw.trim();
    if summary.is_empty() {
        return Err(Error::Extraction {
            doc_id: doc.doc_id.clone(),
            reason: "empty summary".into(),
        });
    }
    let aku = AtomicKnowledgeUnit::new(doc.doc_id.clone(), vec![summary.to_string()], Vec::new());
    Ok(Stage1Result {
        aku,
        raw_response: raw,
    })
}

const ANSWER_KEYS: [&str; 3] = ["answer", "a", "ans"];

/// Pulls answers and entity names out of the extraction JSON. The payload
/// shape is not fixed, so any array of objects carrying an answer key counts
/// as QA pairs and any `entities` array as the entity list.
fn parse_qa_payload(value: &Value) -> (Vec<String>, Vec<String>) {
    let mut answers = Vec::new();
    let mut entities = Vec::new();
    match value {
        Value::Array(items) => collect_answers(items, &mut answers),
        Value::Object(map) => {
            for (key, v) in map {
                let Value::Array(items) = v else { continue };
                if key.to_ascii_lowercase().contains("entit") {
                    entities.extend(items.iter().filter_map(entity_name));
                } else {
                    collect_answers(items, &mut answers);
                }
            }
        }
        _ => {}
    }
    let answers = answers
        .into_iter()
        .map(|a| {
            let a = a.trim();
            a.strip_suffix('.').unwrap_or(a).trim().to_string()
        })
        .filter(|a| !a.is_empty())
        .collect();
    (answers, entities)
}

fn collect_answers(items: &[Value], out: &mut Vec<String>) {
    for item in items {
        let Value::Object(pair) = item else { continue };
        let answer = pair
            .iter()
            .find(|(k, _)| ANSWER_KEYS.contains(&k.to_ascii_lowercase().as_str()))
            .map(|(_, v)| v);
        match answer {
            Some(Value::String(s)) => out.push(s.clone()),
            Some(Value::Number(n)) => out.push(n.to_string()),
            Some(Value::Bool(b)) => out.push(b.to_string()),
            _ => {}
        }
    }
}

fn entity_name(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Object(map) => ["name", "entity", "text"]
            .iter()
            .find_map(|k| map.get(*k).and_then(Value::as_str))
            .map(str::to_string),
        _ => None,
    }
}

/// A chunk and the byte length of its leading overlap with the previous chunk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub text: String,
    pub overlap_len: usize,
}

impl Chunk {
    /// The part of the chunk not shared with its predecessor.
    pub fn fresh(&self) -> &str {
        &self.text[self.overlap_len..]
    }
}

/// Greedy word-window chunking. Segment boundaries fall on word starts every
/// `target_words` words; each chunk after the first is prefixed with the last
/// `overlap_chars` characters before its segment, widened left to a word start.
pub fn chunk_text(text: &str, target_words: usize, overlap_chars: usize) -> Result<Vec<Chunk>> {
    if target_words == 0 {
        return Err(Error::Input("target_words must be at least 1".into()));
    }
    let mut word_starts = Vec::new();
    let mut prev_ws = true;
    for (i, c) in text.char_indices() {
        let ws = c.is_whitespace();
        if !ws && prev_ws {
            word_starts.push(i);
        }
        prev_ws = ws;
    }
    if word_starts.is_empty() {
        return Err(Error::Input("cannot chunk empty text".into()));
    }

    let mut bounds: Vec<usize> = vec![0];
    bounds.extend(word_starts.iter().step_by(target_words).skip(1).copied());
    bounds.push(text.len());

    let mut chunks = Vec::with_capacity(bounds.len() - 1);
    let mut prev_chunk_start = 0;
    for w in bounds.windows(2) {
        let (start, end) = (w[0], w[1]);
        let mut from = start;
        if start > 0 && overlap_chars > 0 {
            from = text[..start]
                .char_indices()
                .rev()
                .nth(overlap_chars - 1)
                .map_or(0, |(i, _)| i);
            from = widen_to_word_start(text, from).max(prev_chunk_start);
        }
        chunks.push(Chunk {
            text: text[from..end].to_string(),
            overlap_len: start - from,
        });
        prev_chunk_start = from;
    }
    Ok(chunks)
}

fn widen_to_word_start(text: &str, mut pos: usize) -> usize {
    let starts_word = |p: usize| {
        p == 0
            || text[..p]
                .chars()
                .next_back()
                .is_some_and(char::is_whitespace)
            || text[p..].chars().next().is_some_and(char::is_whitespace)
    };
    while !starts_word(pos) {
        pos -= text[..pos].chars().next_back().map_or(1, char::len_utf8);
    }
    pos
}

pub fn chunk_document(
    doc: &Document,
    target_words: usize,
    overlap_chars: usize,
) -> Result<Vec<AtomicKnowledgeUnit>> {
    if doc.text.trim().is_empty() {
        return Err(Error::Input(format!(
            "document {} has empty text",
            doc.doc_id
        )));
    }
    Ok(chunk_text(&doc.text, target_words, overlap_chars)?
        .into_iter()
        .map(|c| AtomicKnowledgeUnit::new(doc.doc_id.clone(), vec![c.text], Vec::new()))
        .collect())
}
