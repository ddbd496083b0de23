//! Offline indexing: Stage 1 extraction, Stage 2 bridging facts, and the
//! unified vector store they feed.
//!
//! An [`Index`] owns the extracted units, the entity table derived from
//! them, and the vector store. [`build_index`] constructs one from a corpus;
//! [`Index::add_document`] extends it, re-running Stage 2 only for the
//! entities the new document touches.

pub mod bridge;
mod json;
pub mod stage1;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use tracing::{info, warn};

pub use bridge::{
    collect_entity_facts, generate_bridging_facts, identify_bridge_entities, BridgeEntitySet,
    BridgeOutcome,
};
pub use stage1::{chunk_document, chunk_text, extract_qa, extract_summary, Chunk, Stage1Result};

use crate::error::{Error, Result};
use crate::gateway::Gateway;
use crate::knowledge::{
    AtomicKnowledgeUnit, BridgingFact, Document, EntityTable, EntryKind, IndexConfig, IndexEntry,
    Stage1Strategy,
};
use crate::parallel::bounded_map;
use crate::store::VectorStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexStats {
    pub document_count: usize,
    pub aku_count: usize,
    pub bridge_entity_count: usize,
    pub bridging_fact_count: usize,
    /// Share of bridge entities with at least one bridging fact; 0 when there are none.
    pub non_empty_rate: f64,
}

#[derive(Debug)]
pub struct BuildOutcome {
    pub index: Index,
    pub stats: IndexStats,
    /// Documents whose Stage 1 failed, with the reason.
    pub skipped: Vec<(String, String)>,
}

/// What one incremental addition changed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AddReport {
    pub doc_id: String,
    pub units_added: usize,
    /// Entities whose document frequency just reached 2.
    pub newly_bridged: Vec<String>,
    /// Existing bridge entities regenerated because the document mentions them.
    pub regenerated: Vec<String>,
    /// Entities pushed above tau, with their bridging facts dropped.
    pub removed: Vec<String>,
    pub bridging_added: usize,
    pub bridging_removed: usize,
}

#[derive(Debug, Clone)]
pub struct Index {
    config: IndexConfig,
    units: BTreeMap<String, Vec<AtomicKnowledgeUnit>>,
    entities: EntityTable,
    store: VectorStore,
}

const CONFIG_FILE: &str = "config.json";
const UNITS_FILE: &str = "units.jsonl";
const STORE_FILE: &str = "store.jsonl";
const STATS_FILE: &str = "stats.json";

fn aku_entry_id(strategy: Stage1Strategy, doc_id: &str, i: usize) -> String {
    match strategy {
        Stage1Strategy::Chunking => format!("aku:{doc_id}#{i}"),
        _ => format!("aku:{doc_id}"),
    }
}

impl Index {
    pub fn empty(config: IndexConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            units: BTreeMap::new(),
            entities: EntityTable::new(),
            store: VectorStore::new(),
        })
    }

    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    pub fn store(&self) -> &VectorStore {
        &self.store
    }

    pub fn entities(&self) -> &EntityTable {
        &self.entities
    }

    pub fn units(&self) -> &BTreeMap<String, Vec<AtomicKnowledgeUnit>> {
        &self.units
    }

    pub fn contains_document(&self, doc_id: &str) -> bool {
        self.units.contains_key(doc_id)
    }

    pub fn bridge_entities(&self) -> BridgeEntitySet {
        identify_bridge_entities(&self.entities, self.config.tau)
    }

    pub fn stats(&self) -> IndexStats {
        let bridges = self.bridge_entities();
        let with_facts: BTreeSet<&str> = self
            .store
            .entries()
            .iter()
            .filter(|e| e.kind == EntryKind::Bridging)
            .filter_map(|e| e.entity.as_deref())
            .filter(|e| bridges.contains_key(*e))
            .collect();
        IndexStats {
            document_count: self.units.len(),
            aku_count: self.store.count_kind(EntryKind::Aku),
            bridge_entity_count: bridges.len(),
            bridging_fact_count: self.store.count_kind(EntryKind::Bridging),
            non_empty_rate: if bridges.is_empty() {
                0.0
            } else {
                with_facts.len() as f64 / bridges.len() as f64
            },
        }
    }

    fn run_stage2(&self, entities: &[String], gateway: &Gateway) -> Vec<BridgeOutcome> {
        let bridges = self.bridge_entities();
        bounded_map(entities, self.config.parallelism, |key| {
            let display = self
                .entities
                .get(key)
                .map_or(key.as_str(), |r| r.display.as_str());
            let docs = bridges.get(key).cloned().unwrap_or_default();
            generate_bridging_facts(
                key,
                display,
                &docs,
                &self.units,
                &self.config,
                gateway,
                self.config.indexing_max_tokens,
            )
            .unwrap_or_else(|e| {
                warn!(entity = %key, error = %e, "bridging generation failed; entity skipped");
                BridgeOutcome {
                    entity_key: key.clone(),
                    facts: Vec::new(),
                    generated: false,
                }
            })
        })
    }

    /// Embeds units and facts in one batch, producing store entries.
    fn embed_entries(
        &self,
        units: &[(String, Vec<AtomicKnowledgeUnit>)],
        facts: &[BridgingFact],
        gateway: &Gateway,
    ) -> Result<Vec<IndexEntry>> {
        let strategy = self.config.stage1_strategy;
        let mut texts = Vec::new();
        let mut unit_ids = Vec::new();
        for (doc_id, doc_units) in units {
            for (i, aku) in doc_units.iter().enumerate() {
                unit_ids.push((aku_entry_id(strategy, doc_id, i), doc_id.as_str()));
                texts.push(aku.merged_text.clone());
            }
        }
        texts.extend(facts.iter().map(|f| f.text.clone()));
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let mut vectors = gateway.embed_batch(&texts)?.into_iter();
        let mut entries = Vec::with_capacity(texts.len());
        for ((id, doc_id), text) in unit_ids.into_iter().zip(&texts) {
            let v = vectors.next().expect("one vector per text");
            entries.push(IndexEntry::aku(id, doc_id, text.clone(), v));
        }
        for (fact, v) in facts.iter().zip(vectors) {
            entries.push(IndexEntry::bridging(fact, v));
        }
        Ok(entries)
    }

    /// Incremental addition. Stage 1 runs for `doc` only; Stage 2 reruns for
    /// entities of `doc` that are bridge entities afterwards. Entities pushed
    /// above tau lose their bridging facts. Nothing else changes.
    pub fn add_document(&mut self, doc: &Document, gateway: &Gateway) -> Result<AddReport> {
        doc.validate()?;
        if self.contains_document(&doc.doc_id) {
            return Err(Error::Input(format!(
                "document {} is already indexed",
                doc.doc_id
            )));
        }
        let new_units =
            stage1::run_stage1(doc, &self.config, gateway, self.config.indexing_max_tokens)?;
        let keys: BTreeSet<String> = new_units
            .iter()
            .flat_map(AtomicKnowledgeUnit::entity_keys)
            .collect();
        let before: BTreeMap<&String, usize> = keys
            .iter()
            .map(|k| (k, self.entities.document_frequency(k)))
            .collect();

        let previous_entities = self.entities.clone();
        for aku in &new_units {
            self.entities.add_unit(aku);
        }
        self.units.insert(doc.doc_id.clone(), new_units.clone());

        let tau = self.config.tau;
        let mut report = AddReport {
            doc_id: doc.doc_id.clone(),
            units_added: new_units.len(),
            ..Default::default()
        };
        let mut to_generate = Vec::new();
        for (key, df_before) in &before {
            let df_after = self.entities.document_frequency(key);
            if bridge::is_bridge(df_after, tau) {
                if *df_before < 2 {
                    report.newly_bridged.push((*key).clone());
                } else {
                    report.regenerated.push((*key).clone());
                }
                to_generate.push((*key).clone());
            } else if bridge::is_bridge(*df_before, tau) {
                report.removed.push((*key).clone());
            }
        }

        let stale: BTreeSet<String> = to_generate.iter().chain(&report.removed).cloned().collect();
        let is_stale = |e: &IndexEntry| {
            e.kind == EntryKind::Bridging && e.entity.as_ref().is_some_and(|k| stale.contains(k))
        };
        report.bridging_removed = self.store.entries().iter().filter(|e| is_stale(e)).count();

        let outcomes = self.run_stage2(&to_generate, gateway);
        let facts: Vec<BridgingFact> = outcomes.into_iter().flat_map(|o| o.facts).collect();
        let committed = self
            .embed_entries(&[(doc.doc_id.clone(), new_units)], &facts, gateway)
            .and_then(|entries| {
                let ids: BTreeSet<String> = entries.iter().map(|e| e.entry_id.clone()).collect();
                self.store.upsert(entries)?;
                Ok(ids)
            });
        let fresh_ids = match committed {
            Ok(ids) => ids,
            Err(e) => {
                self.units.remove(&doc.doc_id);
                self.entities = previous_entities;
                return Err(e);
            }
        };

        self.store
            .remove_where(|e| is_stale(e) && !fresh_ids.contains(&e.entry_id));
        report.bridging_added = facts.len();
        info!(
            doc_id = %doc.doc_id,
            newly_bridged = report.newly_bridged.len(),
            regenerated = report.regenerated.len(),
            removed = report.removed.len(),
            "document added"
        );
        Ok(report)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let config_path = dir.join(CONFIG_FILE);
        let config = serde_json::to_string_pretty(&self.config)
            .map_err(|e| Error::persistence(&config_path, e))?;
        std::fs::write(&config_path, config + "\n").map_err(|e| Error::io(&config_path, e))?;

        let units_path = dir.join(UNITS_FILE);
        let mut lines = String::new();
        for aku in self.units.values().flatten() {
            lines.push_str(
                &serde_json::to_string(aku).map_err(|e| Error::persistence(&units_path, e))?,
            );
            lines.push('\n');
        }
        std::fs::write(&units_path, lines).map_err(|e| Error::io(&units_path, e))?;

        self.store.save(&dir.join(STORE_FILE))?;
        write_stats(&dir.join(STATS_FILE), &self.stats())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let config_path = dir.join(CONFIG_FILE);
        let raw = std::fs::read_to_string(&config_path)
            .map_err(|e| Error::persistence(&config_path, e))?;
        let config: IndexConfig =
            serde_json::from_str(&raw).map_err(|e| Error::persistence(&config_path, e))?;
        config.validate()?;

        let units_path = dir.join(UNITS_FILE);
        let raw =
            std::fs::read_to_string(&units_path).map_err(|e| Error::persistence(&units_path, e))?;
        let mut units: BTreeMap<String, Vec<AtomicKnowledgeUnit>> = BTreeMap::new();
        for (i, line) in raw
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let aku: AtomicKnowledgeUnit = serde_json::from_str(line)
                .map_err(|e| Error::persistence(&units_path, format!("line {}: {e}", i + 1)))?;
            units.entry(aku.doc_id.clone()).or_default().push(aku);
        }
        let entities = EntityTable::from_akus(units.values().flatten());
        let store = VectorStore::load(&dir.join(STORE_FILE))?;
        Ok(Self {
            config,
            units,
            entities,
            store,
        })
    }
}

pub fn write_stats(path: &Path, stats: &IndexStats) -> Result<()> {
    let json = serde_json::to_string_pretty(stats).map_err(|e| Error::persistence(path, e))?;
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

/// Full offline build. Per-document and per-entity failures are logged and
/// skipped; the build fails only when no document extracts.
pub fn build_index(
    corpus: &[Document],
    config: &IndexConfig,
    gateway: &Gateway,
) -> Result<BuildOutcome> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::Input("corpus is empty".into()));
    }
    let mut ids = BTreeSet::new();
    for doc in corpus {
        doc.validate()?;
        if !ids.insert(doc.doc_id.as_str()) {
            return Err(Error::Input(format!("duplicate doc_id {}", doc.doc_id)));
        }
    }

    let mut index = Index::empty(config.clone())?;
    let extracted = bounded_map(corpus, config.parallelism, |doc| {
        stage1::run_stage1(doc, config, gateway, config.indexing_max_tokens)
    });
    let mut skipped = Vec::new();
    let mut new_units = Vec::new();
    for (doc, result) in corpus.iter().zip(extracted) {
        match result {
            Ok(units) => {
                for aku in &units {
                    index.entities.add_unit(aku);
                }
                index.units.insert(doc.doc_id.clone(), units.clone());
                new_units.push((doc.doc_id.clone(), units));
            }
            Err(e) => {
                warn!(doc_id = %doc.doc_id, error = %e, "stage 1 failed; document skipped");
                skipped.push((doc.doc_id.clone(), e.to_string()));
            }
        }
    }
    if new_units.is_empty() {
        return Err(Error::Input(format!(
            "no document extracted successfully ({} skipped)",
            skipped.len()
        )));
    }

    let bridge_keys: Vec<String> = index.bridge_entities().into_keys().collect();
    info!(bridge_entities = bridge_keys.len(), "stage 2 starting");
    let outcomes = index.run_stage2(&bridge_keys, gateway);
    let facts: Vec<BridgingFact> = outcomes.into_iter().flat_map(|o| o.facts).collect();
    let entries = index.embed_entries(&new_units, &facts, gateway)?;
    index.store.upsert(entries)?;
    let stats = index.stats();
    Ok(BuildOutcome {
        index,
        stats,
        skipped,
    })
}
