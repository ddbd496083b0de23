//! Benchmark scoring: answer metrics, retrieval recall and the batch harness.

mod harness;
pub mod metrics;

pub use harness::{
    load_dataset, parse_dataset, run_eval, score_question, Aggregates, EvalOptions, EvalQuestion,
    EvalReport, QuestionRecord, RunMetadata,
};
pub use metrics::{accuracy, exact_match, f1, normalize_answer, recall_at_k};
