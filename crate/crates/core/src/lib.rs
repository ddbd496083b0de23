//! IndexRAG: multi-hop retrieval-augmented generation with cross-document
//! reasoning moved to indexing time.
//!
//! Offline, each document becomes an atomic knowledge unit (AKU) plus an
//! entity list; entities shared by a few documents get LLM-written bridging
//! facts. Both kinds of entry live in one flat vector store. Online, a query
//! is answered with one retrieval, balanced context selection and a single
//! model call, or optionally with an iterative reasoning loop.

pub mod error;
pub mod eval;
pub mod gateway;
pub mod indexer;
pub mod knowledge;
pub mod parallel;
pub mod query;
pub mod store;

pub use error::{Error, Result};
pub use eval::{EvalQuestion, EvalReport};
pub use gateway::{ChatRequest, Gateway, MockModel, MockScript};
pub use indexer::{build_index, AddReport, BuildOutcome, Index, IndexStats};
pub use knowledge::{
    AtomicKnowledgeUnit, BridgingFact, Document, EntityTable, EntryKind, IndexConfig, IndexEntry,
    Stage1Strategy,
};
pub use query::{QueryConfig, QueryEngine, QueryMode, QueryResult};
pub use store::{SearchHit, VectorStore};
