//! Corpus, extraction and index record types shared across the pipeline.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A source passage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
}

impl Document {
    pub fn new(
        doc_id: impl Into<String>,
        title: impl Into<String>,
        text: impl Into<String>,
    ) -> Self {
        Self {
            doc_id: doc_id.into(),
            title: title.into(),
            text: text.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.doc_id.trim().is_empty() {
            return Err(Error::Input("document has an empty doc_id".into()));
        }
        if self.text.trim().is_empty() {
            return Err(Error::Input(format!(
                "document {} has empty text",
                self.doc_id
            )));
        }
        Ok(())
    }
}

/// Per-document retrievable unit built from extracted facts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomicKnowledgeUnit {
    pub doc_id: String,
    pub facts: Vec<String>,
    pub merged_text: String,
    /// Display forms, deduplicated by normalized key, first mention wins.
    #[serde(default)]
    pub entities: Vec<String>,
}

impl AtomicKnowledgeUnit {
    /// Builds a unit, dropping blank facts and entities that normalize to nothing.
    pub fn new(doc_id: impl Into<String>, facts: Vec<String>, entities: Vec<String>) -> Self {
        let facts: Vec<String> = facts
            .into_iter()
            .map(|f| f.trim().to_string())
            .filter(|f| !f.is_empty())
            .collect();
        let merged_text = merge_facts(&facts);
        let mut seen = BTreeSet::new();
        let entities = entities
            .into_iter()
            .filter_map(|e| {
                let key = normalize_entity_key(&e).ok()?;
                seen.insert(key).then(|| e.trim().to_string())
            })
            .collect();
        Self {
            doc_id: doc_id.into(),
            facts,
            merged_text,
            entities,
        }
    }

    pub fn entity_keys(&self) -> BTreeSet<String> {
        self.entities
            .iter()
            .filter_map(|e| normalize_entity_key(e).ok())
            .collect()
    }
}

/// Canonical join of extracted facts: extraction order, `". "` separator.
pub fn merge_facts(facts: &[String]) -> String {
    facts.join(". ")
}

/// Cross-document statement generated for one bridge entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BridgingFact {
    pub fact_id: String,
    pub entity: String,
    pub text: String,
    pub source_doc_ids: BTreeSet<String>,
}

/// Trimmed, case-folded, whitespace-collapsed entity key.
pub fn normalize_entity_key(raw: &str) -> Result<String> {
    let key = raw
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ");
    if key.is_empty() {
        return Err(Error::InvalidEntity(raw.to_string()));
    }
    Ok(key)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub display: String,
    pub doc_ids: BTreeSet<String>,
}

/// Normalized entity key to the documents whose entity lists contain it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityTable {
    entries: BTreeMap<String, EntityRecord>,
}

impl EntityTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_akus<'a>(akus: impl IntoIterator<Item = &'a AtomicKnowledgeUnit>) -> Self {
        let mut table = Self::new();
        for aku in akus {
            table.add_unit(aku);
        }
        table
    }

    /// Registers every entity of `aku` under its document. Repeats are set-merged.
    pub fn add_unit(&mut self, aku: &AtomicKnowledgeUnit) {
        for display in &aku.entities {
            let Ok(key) = normalize_entity_key(display) else {
                continue;
            };
            let record = self.entries.entry(key).or_insert_with(|| EntityRecord {
                display: display.trim().to_string(),
                doc_ids: BTreeSet::new(),
            });
            record.doc_ids.insert(aku.doc_id.clone());
        }
    }

    pub fn get(&self, key: &str) -> Option<&EntityRecord> {
        self.entries.get(key)
    }

    pub fn document_frequency(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |r| r.doc_ids.len())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &EntityRecord)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// `df(e)`: number of distinct documents mentioning the entity; 0 when absent.
pub fn document_frequency(table: &EntityTable, entity_key: &str) -> usize {
    table.document_frequency(entity_key)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Aku,
    Bridging,
}

impl fmt::Display for EntryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntryKind::Aku => "aku",
            EntryKind::Bridging => "bridging",
        })
    }
}

/// One vector-store record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub entry_id: String,
    pub kind: EntryKind,
    pub text: String,
    pub embedding: Vec<f32>,
    pub provenance: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity: Option<String>,
}

impl IndexEntry {
    pub fn aku(
        entry_id: impl Into<String>,
        doc_id: &str,
        text: impl Into<String>,
        embedding: Vec<f32>,
    ) -> Self {
        Self {
            entry_id: entry_id.into(),
            kind: EntryKind::Aku,
            text: text.into(),
            embedding,
            provenance: BTreeSet::from([doc_id.to_string()]),
            entity: None,
        }
    }

    pub fn bridging(fact: &BridgingFact, embedding: Vec<f32>) -> Self {
        Self {
            entry_id: fact.fact_id.clone(),
            kind: EntryKind::Bridging,
            text: fact.text.clone(),
            embedding,
            provenance: fact.source_doc_ids.clone(),
            entity: Some(fact.entity.clone()),
        }
    }

    /// Kind/provenance consistency: aku has one source, bridging has at least two and an entity.
    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            EntryKind::Aku => self.provenance.len() == 1 && self.entity.is_none(),
            EntryKind::Bridging => self.provenance.len() >= 2 && self.entity.is_some(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Store(format!(
                "entry {} has provenance inconsistent with kind {}",
                self.entry_id, self.kind
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage1Strategy {
    #[default]
    QaExtraction,
    Summary,
    Chunking,
}

impl FromStr for Stage1Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "qa_extraction" | "qa" => Ok(Stage1Strategy::QaExtraction),
            "summary" => Ok(Stage1Strategy::Summary),
            "chunking" | "chunk" => Ok(Stage1Strategy::Chunking),
            other => Err(Error::Config(format!("unknown stage-1 strategy {other:?}"))),
        }
    }
}

impl fmt::Display for Stage1Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage1Strategy::QaExtraction => "qa_extraction",
            Stage1Strategy::Summary => "summary",
            Stage1Strategy::Chunking => "chunking",
        })
    }
}

/// Offline indexing parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndexConfig {
    /// Upper document-frequency bound for bridge entities (inclusive).
    pub tau: usize,
    pub max_source_docs: usize,
    pub max_facts_per_doc: usize,
    pub stage1_strategy: Stage1Strategy,
    pub chunk_target_words: usize,
    pub chunk_overlap_chars: usize,
    /// Documents longer than this are truncated before extraction.
    pub max_doc_chars: usize,
    /// Concurrent model calls during indexing.
    pub parallelism: usize,
    /// Output budget for extraction and bridging calls.
    pub indexing_max_tokens: u32,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            tau: 10,
            max_source_docs: 5,
            max_facts_per_doc: 8,
            stage1_strategy: Stage1Strategy::QaExtraction,
            chunk_target_words: 100,
            chunk_overlap_chars: 80,
            max_doc_chars: 32_000,
            parallelism: 4,
            indexing_max_tokens: 2048,
        }
    }
}

impl IndexConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau < 2 {
            return Err(Error::Config(format!(
                "tau must be at least 2, got {}",
                self.tau
            )));
        }
        if self.max_source_docs < 1 || self.max_facts_per_doc < 1 {
            return Err(Error::Config(
                "source-document and fact caps must be at least 1".into(),
            ));
        }
        if self.chunk_target_words < 1 {
            return Err(Error::Config(
                "chunk_target_words must be at least 1".into(),
            ));
        }
        if self.indexing_max_tokens < 1 {
            return Err(Error::Config(
                "indexing_max_tokens must be at least 1".into(),
            ));
        }
        if self.parallelism < 1 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        Ok(())
    }
}

/// Reads the line-JSON corpus format (`doc_id`, `title`, `text` per line).
/// Blank lines are ignored; duplicate ids are rejected.
pub fn read_corpus(path: &Path) -> Result<Vec<Document>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(BufReader::new(file)).map_err(|e| match e {
        Error::Input(reason) => Error::persistence(path, reason),
        other => other,
    })
}

pub fn parse_corpus(reader: impl BufRead) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut ids = BTreeSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Input(format!("line {}: {e}", lineno + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line)
            .map_err(|e| Error::Input(format!("line {}: {e}", lineno + 1)))?;
        doc.validate()
            .map_err(|e| Error::Input(format!("line {}: {e}", lineno + 1)))?;
        if !ids.insert(doc.doc_id.clone()) {
            return Err(Error::Input(format!(
                "line {}: duplicate doc_id {}",
                lineno + 1,
                doc.doc_id
            )));
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_corpus(path: &Path, docs: &[Document]) -> Result<()> {
    let mut out = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for doc in docs {
        let line = serde_json::to_string(doc).map_err(|e| Error::persistence(path, e))?;
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
