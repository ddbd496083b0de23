//! Flat, exact cosine-similarity store holding AKU and bridging entries together.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knowledge::{EntryKind, IndexEntry};

pub const STORE_FORMAT: &str = "indexrag-vector-store";
pub const STORE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub entry: IndexEntry,
    pub score: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    dimension: Option<usize>,
    count: usize,
}

#[derive(Debug, Clone, Default)]
pub struct VectorStore {
    dim: Option<usize>,
    entries: Vec<IndexEntry>,
    // f64 copy of each embedding and its L2 norm, parallel to `entries`
    vectors: Vec<Vec<f64>>,
    norms: Vec<f64>,
    positions: HashMap<String, usize>,
}

fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|x| f64::from(*x)).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl VectorStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dimension(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in insertion order.
    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn get(&self, entry_id: &str) -> Option<&IndexEntry> {
        self.positions.get(entry_id).map(|&i| &self.entries[i])
    }

    pub fn count_kind(&self, kind: EntryKind) -> usize {
        self.entries.iter().filter(|e| e.kind == kind).count()
    }

    /// Inserts or replaces entries by `entry_id`. A replaced entry keeps its
    /// original insertion slot. The batch is validated before any write.
    pub fn upsert(&mut self, entries: Vec<IndexEntry>) -> Result<usize> {
        let mut dim = self.dim;
        let mut prepared = Vec::with_capacity(entries.len());
        for entry in entries {
            entry.validate()?;
            let d = entry.embedding.len();
            match dim {
                Some(expected) if expected != d => {
                    return Err(Error::Store(format!(
                        "entry {} has dimension {d}, store expects {expected}",
                        entry.entry_id
                    )))
                }
                _ => dim = Some(d),
            }
            if d == 0 {
                return Err(Error::Store(format!(
                    "entry {} has an empty embedding",
                    entry.entry_id
                )));
            }
            let vector = to_f64(&entry.embedding);
            let n = norm(&vector);
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::Store(format!(
                    "entry {} has a zero or non-finite embedding",
                    entry.entry_id
                )));
            }
            prepared.push((entry, vector, n));
        }
        let count = prepared.len();
        self.dim = dim;
        for (entry, vector, n) in prepared {
            match self.positions.get(&entry.entry_id) {
                Some(&i) => {
                    self.entries[i] = entry;
                    self.vectors[i] = vector;
                    self.norms[i] = n;
                }
                None => {
                    self.positions
                        .insert(entry.entry_id.clone(), self.entries.len());
                    self.entries.push(entry);
                    self.vectors.push(vector);
                    self.norms.push(n);
                }
            }
        }
        Ok(count)
    }

    /// Removes every entry matching `pred`, preserving the relative order of the rest.
    pub fn remove_where(&mut self, mut pred: impl FnMut(&IndexEntry) -> bool) -> usize {
        let keep: Vec<bool> = self.entries.iter().map(|e| !pred(e)).collect();
        let removed = keep.iter().filter(|k| !**k).count();
        if removed == 0 {
            return 0;
        }
        let mut flags = keep.iter();
        self.entries.retain(|_| *flags.next().unwrap());
        let mut flags = keep.iter();
        self.vectors.retain(|_| *flags.next().unwrap());
        let mut flags = keep.iter();
        self.norms.retain(|_| *flags.next().unwrap());
        self.positions = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.entry_id.clone(), i))
            .collect();
        removed
    }

    /// Exact top-`n` by cosine similarity; equal scores keep insertion order.
    pub fn search(&self, query: &[f32], n: usize) -> Result<Vec<SearchHit>> {
        if n == 0 {
            return Err(Error::Input("search needs n >= 1".into()));
        }
        let Some(dim) = self.dim else {
            return Ok(Vec::new());
        };
        if self.entries.is_empty() {
            return Ok(Vec::new());
        }
        if query.len() != dim {
            return Err(Error::Store(format!(
                "query has dimension {}, store expects {dim}",
                query.len()
            )));
        }
        let q = to_f64(query);
        let qn = norm(&q);
        if !(qn > 0.0 && qn.is_finite()) {
            return Err(Error::Store(
                "query vector has zero or non-finite norm".into(),
            ));
        }
        let mut scored: Vec<(f64, usize)> = self
            .vectors
            .iter()
            .zip(&self.norms)
            .enumerate()
            .map(|(i, (v, vn))| {
                let dot: f64 = q.iter().zip(v).map(|(a, b)| a * b).sum();
                ((dot / (qn * vn)).clamp(-1.0, 1.0), i)
            })
            .collect();
        let by_rank = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
            b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
        };
        let n = n.min(scored.len());
        if n < scored.len() {
            scored.select_nth_unstable_by(n - 1, by_rank);
            scored.truncate(n);
        }
        scored.sort_unstable_by(by_rank);
        Ok(scored
            .into_iter()
            .map(|(score, i)| SearchHit {
                entry: self.entries[i].clone(),
                score,
            })
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let header = Header {
            format: STORE_FORMAT.to_string(),
            version: STORE_VERSION,
            dimension: self.dim,
            count: self.entries.len(),
        };
        write_line(&mut out, path, &header)?;
        for entry in &self.entries {
            write_line(&mut out, path, entry)?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::persistence(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::persistence(path, "empty store file"))?
            .map_err(|e| Error::persistence(path, e))?;
        let header: Header = serde_json::from_str(&header_line)
            .map_err(|e| Error::persistence(path, format!("bad header: {e}")))?;
        if header.format != STORE_FORMAT {
            return Err(Error::persistence(
                path,
                format!("unknown format {:?}", header.format),
            ));
        }
        if header.version != STORE_VERSION {
            return Err(Error::persistence(
                path,
                format!("unsupported store version {}", header.version),
            ));
        }
        let mut entries = Vec::with_capacity(header.count);
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::persistence(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: IndexEntry = serde_json::from_str(&line)
                .map_err(|e| Error::persistence(path, format!("record {}: {e}", i + 1)))?;
            entries.push(entry);
        }
        if entries.len() != header.count {
            return Err(Error::persistence(
                path,
                format!(
                    "header declares {} entries, found {}",
                    header.count,
                    entries.len()
                ),
            ));
        }
        let mut store = VectorStore::new();
        store
            .upsert(entries)
            .map_err(|e| Error::persistence(path, e))?;
        if store.len() != header.count {
            return Err(Error::persistence(path, "duplicate entry ids"));
        }
        if header.dimension.is_some() && store.dim != header.dimension {
            return Err(Error::persistence(
                path,
                "record dimension disagrees with header",
            ));
        }
        Ok(store)
    }
}

fn write_line<T: Serialize>(out: &mut impl Write, path: &Path, value: &T) -> Result<()> {
    let line = serde_json::to_string(value).map_err(|e| Error::persistence(path, e))?;
    writeln!(out, "{line}").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::BridgingFact;
    use std::collections::BTreeSet;

    fn aku(id: &str, v: &[f32]) -> IndexEntry {
        IndexEntry::aku(id, id, format!("text {id}"), v.to_vec())
    }

    fn bridge(id: &str, v: &[f32]) -> IndexEntry {
        let fact = BridgingFact {
            fact_id: id.into(),
            entity: "e".into(),
            text: format!("bridge {id}"),
            source_doc_ids: BTreeSet::from(["a".to_string(), "b".to_string()]),
        };
        IndexEntry::bridging(&fact, v.to_vec())
    }

    #[test]
    fn upsert_replaces_by_id() {
        let mut s = VectorStore::new();
        s.upsert(vec![
            aku("a", &[1.0, 0.0]),
            aku("b", &[0.0, 1.0]),
            aku("c", &[1.0, 1.0]),
        ])
        .unwrap();
        s.upsert(vec![aku("b", &[1.0, 0.5])]).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.get("b").unwrap().embedding, vec![1.0, 0.5]);
        assert_eq!(s.entries()[1].entry_id, "b");
    }

    #[test]
    fn dimension_mismatch_is_rejected_atomically() {
        let mut s = VectorStore::new();
        s.upsert(vec![aku("a", &[1.0, 0.0])]).unwrap();
        let err = s.upsert(vec![aku("b", &[1.0, 0.0]), aku("c", &[1.0, 0.0, 0.0])]);
        assert!(matches!(err, Err(Error::Store(_))));
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn zero_vectors_are_rejected() {
        let mut s = VectorStore::new();
        assert!(s.upsert(vec![aku("z", &[0.0, 0.0])]).is_err());
        s.upsert(vec![aku("a", &[1.0, 0.0])]).unwrap();
        assert!(matches!(s.search(&[0.0, 0.0], 1), Err(Error::Store(_))));
    }

    #[test]
    fn orthonormal_search() {
        let mut s = VectorStore::new();
        s.upsert(vec![aku("e1", &[1.0, 0.0]), aku("e2", &[0.0, 1.0])])
            .unwrap();
        let hits = s.search(&[1.0, 0.0], 1).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].entry.entry_id, "e1");
        assert_eq!(hits[0].score, 1.0);
    }

    #[test]
    fn mixed_kinds_share_one_ranking() {
        let mut s = VectorStore::new();
        s.upsert(vec![aku("a", &[1.0, 0.0]), bridge("b", &[0.9, 0.1])])
            .unwrap();
        let hits = s.search(&[0.8, 0.2], 5).unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].entry.kind, EntryKind::Bridging);
        assert_eq!(hits[1].entry.kind, EntryKind::Aku);
    }

    #[test]
    fn ties_keep_insertion_order() {
        let mut s = VectorStore::new();
        s.upsert(vec![
            aku("x", &[0.0, 1.0]),
            aku("p", &[1.0, 0.0]),
            aku("q", &[2.0, 0.0]),
        ])
        .unwrap();
        let ids: Vec<_> = s
            .search(&[1.0, 0.0], 3)
            .unwrap()
            .into_iter()
            .map(|h| h.entry.entry_id)
            .collect();
        assert_eq!(ids, ["p", "q", "x"]);
    }

    #[test]
    fn empty_store_and_bad_n() {
        let s = VectorStore::new();
        assert!(s.search(&[1.0], 3).unwrap().is_empty());
        assert!(s.search(&[1.0], 0).is_err());
    }

    #[test]
    fn remove_where_keeps_order() {
        let mut s = VectorStore::new();
        s.upsert(vec![
            aku("a", &[1.0]),
            bridge("b", &[1.0]),
            aku("c", &[1.0]),
        ])
        .unwrap();
        assert_eq!(s.remove_where(|e| e.kind == EntryKind::Bridging), 1);
        let ids: Vec<_> = s.entries().iter().map(|e| e.entry_id.as_str()).collect();
        assert_eq!(ids, ["a", "c"]);
        assert_eq!(s.get("c").unwrap().entry_id, "c");
        assert!(s.get("b").is_none());
    }

    #[test]
    fn load_missing_and_corrupt_files() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            VectorStore::load(&dir.path().join("nope.jsonl")),
            Err(Error::Persistence { .. })
        ));
        let bad = dir.path().join("bad.jsonl");
        std::fs::write(
            &bad,
            "{\"format\":\"indexrag-vector-store\",\"version\":99,\"dimension\":2,\"count\":0}\n",
        )
        .unwrap();
        assert!(matches!(
            VectorStore::load(&bad),
            Err(Error::Persistence { .. })
        ));
        std::fs::write(&bad, "not json\n").unwrap();
        assert!(matches!(
            VectorStore::load(&bad),
            Err(Error::Persistence { .. })
        ));
    }

    #[test]
    fn round_trip_preserves_entries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        let mut s = VectorStore::new();
        s.upsert(vec![
            aku("a", &[0.1, 0.7, -0.3]),
            bridge("b", &[0.5, 0.5, 0.5]),
            aku("c", &[1e-7, 3.0, 2.5]),
        ])
        .unwrap();
        s.save(&path).unwrap();
        let loaded = VectorStore::load(&path).unwrap();
        assert_eq!(loaded.entries(), s.entries());
        let q = [0.3, 0.2, 0.1];
        assert_eq!(loaded.search(&q, 3).unwrap(), s.search(&q, 3).unwrap());
    }
}
