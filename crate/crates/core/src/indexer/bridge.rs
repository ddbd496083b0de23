//! Stage 2: bridge-entity selection and bridging-fact generation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use tracing::{debug, warn};

use super::json::{parse_lenient, string_array};
use crate::error::Result;
use crate::gateway::prompts::{bindings, render_prompt, TemplateId};
use crate::gateway::{ChatRequest, Gateway};
use crate::knowledge::{AtomicKnowledgeUnit, BridgingFact, EntityTable, IndexConfig};

/// Bridge entity keys with their contributing documents in doc_id order.
pub type BridgeEntitySet = BTreeMap<String, Vec<String>>;

/// Entities whose document frequency lies in `[2, tau]`, bounds inclusive.
pub fn identify_bridge_entities(table: &EntityTable, tau: usize) -> BridgeEntitySet {
    table
        .iter()
        .filter(|(_, rec)| (2..=tau).contains(&rec.doc_ids.len()))
        .map(|(key, rec)| (key.to_string(), rec.doc_ids.iter().cloned().collect()))
        .collect()
}

pub fn is_bridge(df: usize, tau: usize) -> bool {
    (2..=tau).contains(&df)
}

/// Lowercased, whitespace-collapsed form used for entity matching.
pub(crate) fn fold(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// The facts of `aku` that mention `entity_key`, in extraction order.
pub fn collect_entity_facts<'a>(aku: &'a AtomicKnowledgeUnit, entity_key: &str) -> Vec<&'a str> {
    aku.facts
        .iter()
        .filter(|f| fold(f).contains(entity_key))
        .map(String::as_str)
        .collect()
}

/// Documents and facts that go into one bridging prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BridgeSources {
    /// (doc_id, matching facts), in doc_id order.
    pub sections: Vec<(String, Vec<String>)>,
}

impl BridgeSources {
    pub fn doc_ids(&self) -> BTreeSet<String> {
        self.sections.iter().map(|(d, _)| d.clone()).collect()
    }
}

/// Picks at most `max_source_docs` documents with the most matching facts
/// (ties by doc_id) and the first `max_facts_per_doc` matches of each.
/// Documents with no matching fact are dropped.
pub fn select_sources(
    entity_key: &str,
    doc_ids: &[String],
    units: &BTreeMap<String, Vec<AtomicKnowledgeUnit>>,
    config: &IndexConfig,
) -> BridgeSources {
    let mut candidates: Vec<(String, Vec<String>)> = doc_ids
        .iter()
        .filter_map(|doc_id| {
            let facts: Vec<String> = units
                .get(doc_id)?
                .iter()
                .flat_map(|aku| collect_entity_facts(aku, entity_key))
                .map(str::to_string)
                .collect();
            (!facts.is_empty()).then(|| (doc_id.clone(), facts))
        })
        .collect();
    candidates.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then_with(|| a.0.cmp(&b.0)));
    candidates.truncate(config.max_source_docs);
    candidates.sort_by(|a, b| a.0.cmp(&b.0));
    for (_, facts) in &mut candidates {
        facts.truncate(config.max_facts_per_doc);
    }
    BridgeSources {
        sections: candidates,
    }
}

/// Renders the per-document blocks bound to `{doc_sections}`.
pub fn format_doc_sections(sources: &BridgeSources) -> String {
    let mut out = String::new();
    for (i, (doc_id, facts)) in sources.sections.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "Document {} ({doc_id}):", i + 1);
        for fact in facts {
            let _ = writeln!(out, "- {fact}");
        }
    }
    out.trim_end().to_string()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BridgeOutcome {
    pub entity_key: String,
    pub facts: Vec<BridgingFact>,
    /// False when the entity was skipped (too few sources or an unusable response).
    pub generated: bool,
}

pub fn bridging_fact_id(entity_key: &str, i: usize) -> String {
    format!("bridge:{entity_key}:{i}")
}

/// One Stage-2 call for one bridge entity. Unusable responses and gateway
/// failures are logged and yield an empty outcome.
pub fn generate_bridging_facts(
    entity_key: &str,
    display: &str,
    doc_ids: &[String],
    units: &BTreeMap<String, Vec<AtomicKnowledgeUnit>>,
    config: &IndexConfig,
    gateway: &Gateway,
    max_tokens: u32,
) -> Result<BridgeOutcome> {
    let empty = |generated| BridgeOutcome {
        entity_key: entity_key.to_string(),
        facts: Vec::new(),
        generated,
    };
    let sources = select_sources(entity_key, doc_ids, units, config);
    if sources.sections.len() < 2 {
        debug!(
            entity = entity_key,
            "fewer than two documents with matching facts"
        );
        return Ok(empty(false));
    }
    let prompt = render_prompt(
        TemplateId::Stage2Bridge,
        &bindings([
            ("entity", display.to_string()),
            ("doc_sections", format_doc_sections(&sources)),
        ]),
    )?;
    let raw = match gateway.chat_complete(&ChatRequest::new(prompt, max_tokens)) {
        Ok(raw) => raw,
        Err(e) => {
            warn!(entity = entity_key, error = %e, "bridging generation failed; entity skipped");
            return Ok(empty(false));
        }
    };
    let texts = match parse_lenient(&raw).ok().as_ref().and_then(string_array) {
        Some(texts) => texts,
        None => {
            warn!(
                entity = entity_key,
                "unparseable bridging response; entity skipped"
            );
            return Ok(empty(false));
        }
    };
    let provenance = sources.doc_ids();
    let mut seen = BTreeSet::new();
    let facts = texts
        .into_iter()
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty() && seen.insert(t.clone()))
        .enumerate()
        .map(|(i, text)| BridgingFact {
            fact_id: bridging_fact_id(entity_key, i),
            entity: entity_key.to_string(),
            text,
            source_doc_ids: provenance.clone(),
        })
        .collect();
    Ok(BridgeOutcome {
        entity_key: entity_key.to_string(),
        facts,
        generated: true,
    })
}
