//! Synthetic inputs shared by the benchmarks.

use std::collections::BTreeSet;

use indexrag_core::gateway::MockRule;
use indexrag_core::knowledge::{EntryKind, IndexEntry};
use indexrag_core::{Document, MockScript, VectorStore};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn random_vector(rng: &mut StdRng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        if v.iter().any(|x| *x != 0.0) {
            return v;
        }
    }
}

/// A store of `n` entries, roughly one in four of them bridging facts.
pub fn random_store(n: usize, dim: usize, seed: u64) -> VectorStore {
    let mut rng = StdRng::seed_from_u64(seed);
    let entries = (0..n)
        .map(|i| {
            let embedding = random_vector(&mut rng, dim);
            if i % 4 == 3 {
                IndexEntry {
                    entry_id: format!("bridge:e{i}:0"),
                    kind: EntryKind::Bridging,
                    text: format!("bridging fact {i}"),
                    embedding,
                    provenance: BTreeSet::from([format!("d{i}"), format!("d{}", i + 1)]),
                    entity: Some(format!("e{i}")),
                }
            } else {
                IndexEntry {
                    entry_id: format!("aku:d{i}"),
                    kind: EntryKind::Aku,
                    text: format!("unit {i}"),
                    embedding,
                    provenance: BTreeSet::from([format!("d{i}")]),
                    entity: None,
                }
            }
        })
        .collect();
    let mut store = VectorStore::new();
    store.upsert(entries).expect("generated entries are valid");
    store
}

/// `n` documents, each naming two of `entities` shared names, with a mock
/// script answering every Stage 1 and Stage 2 prompt.
pub fn synthetic_corpus(n: usize, entities: usize, seed: u64) -> (Vec<Document>, MockScript) {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut docs = Vec::new();
    let mut rules = Vec::new();
    for i in 0..n {
        let a = rng.gen_range(0..entities);
        let b = rng.gen_range(0..entities);
        let text = format!("Record {i} connects Place{a} with Person{b}.");
        let payload = format!(
            r#"{{"qa_pairs": [{{"question": "?", "answer": "Record {i} mentions Place{a}"}}, {{"question": "?", "answer": "Record {i} mentions Person{b}"}}], "entities": ["Place{a}", "Person{b}"]}}"#
        );
        rules.push(MockRule::contains_all(
            ["Extract ALL factual information".to_string(), text.clone()],
            payload,
        ));
        docs.push(Document::new(format!("r{i:04}"), "", text));
    }
    rules.push(MockRule::contains(
        "generate bridging facts",
        r#"["Several records share this entity."]"#,
    ));
    (
        docs,
        MockScript {
            embedding_dim: 128,
            rules,
            fallback: None,
        },
    )
}
