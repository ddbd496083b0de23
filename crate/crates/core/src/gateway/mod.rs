//! Access to chat and embedding models.
//!
//! [`Gateway`] wraps a [`ModelBackend`] (the OpenAI-compatible HTTP client or
//! the scripted [`MockModel`]) and keeps the call ledger. Only successful
//! chat completions count as LLM calls; embedding requests are tracked
//! separately.

mod http;
mod mock;
pub mod prompts;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

pub use http::{HttpConfig, OpenAiBackend, RetryPolicy};
pub use mock::{hash_embedding, MockModel, MockRule, MockScript, PromptMatcher};
pub use prompts::{render_prompt, TemplateId};

use crate::error::{Error, Result};

/// Output budget for short-form answer generation.
pub const ANSWER_MAX_TOKENS: u32 = 50;
/// Default output budget for indexing calls, which return JSON payloads.
pub const INDEXING_MAX_TOKENS: u32 = 2048;
/// Output budget for one iterative reasoning step.
pub const REASONING_MAX_TOKENS: u32 = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    pub temperature: f32,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn new(user: impl Into<String>, max_tokens: u32) -> Self {
        Self {
            system: String::new(),
            user: user.into(),
            temperature: 0.0,
            max_tokens,
        }
    }

    pub fn answer(user: impl Into<String>) -> Self {
        Self::new(user, ANSWER_MAX_TOKENS)
    }

    /// The text a scripted model matches against: system and user joined by a blank line.
    pub fn prompt_text(&self) -> String {
        if self.system.is_empty() {
            self.user.clone()
        } else {
            format!("{}\n\n{}", self.system, self.user)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(Error::Input(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(Error::Input("max_tokens must be at least 1".into()));
        }
        Ok(())
    }
}

/// Transport behind the gateway.
pub trait ModelBackend: Send + Sync {
    fn chat(&self, req: &ChatRequest) -> Result<String>;

    /// Embeds `texts`, returning one vector per input and the number of
    /// protocol requests that succeeded.
    fn embed(&self, texts: &[String]) -> Result<(Vec<Vec<f32>>, u64)>;

    fn describe(&self) -> String;
}

#[derive(Debug, Default)]
pub struct CallLedger {
    chat_calls: AtomicU64,
    embed_calls: AtomicU64,
    wall_times: Mutex<Vec<Duration>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LedgerSnapshot {
    pub chat_calls: u64,
    pub embed_calls: u64,
    pub wall_times: Vec<Duration>,
}

impl CallLedger {
    pub fn chat_calls(&self) -> u64 {
        self.chat_calls.load(Ordering::SeqCst)
    }

    pub fn embed_calls(&self) -> u64 {
        self.embed_calls.load(Ordering::SeqCst)
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        LedgerSnapshot {
            chat_calls: self.chat_calls(),
            embed_calls: self.embed_calls(),
            wall_times: self
                .wall_times
                .lock()
                .expect("ledger lock poisoned")
                .clone(),
        }
    }

    fn record(&self, counter: &AtomicU64, n: u64, elapsed: Duration) {
        counter.fetch_add(n, Ordering::SeqCst);
        self.wall_times
            .lock()
            .expect("ledger lock poisoned")
            .push(elapsed);
    }
}

pub struct Gateway {
    backend: Box<dyn ModelBackend>,
    ledger: CallLedger,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.describe())
            .field("chat_calls", &self.ledger.chat_calls())
            .field("embed_calls", &self.ledger.embed_calls())
            .finish()
    }
}

impl Gateway {
    pub fn new(backend: impl ModelBackend + 'static) -> Self {
        Self {
            backend: Box::new(backend),
            ledger: CallLedger::default(),
        }
    }

    pub fn mock(model: MockModel) -> Self {
        Self::new(model)
    }

    pub fn openai(config: HttpConfig) -> Result<Self> {
        Ok(Self::new(OpenAiBackend::new(config)?))
    }

    pub fn ledger(&self) -> &CallLedger {
        &self.ledger
    }

    pub fn describe(&self) -> String {
        self.backend.describe()
    }

    pub fn chat_complete(&self, req: &ChatRequest) -> Result<String> {
        req.validate()?;
        let start = Instant::now();
        let text = self.backend.chat(req)?;
        self.ledger
            .record(&self.ledger.chat_calls, 1, start.elapsed());
        Ok(text)
    }

    pub fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err(Error::Input(format!("embedding input {i} is empty")));
        }
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let start = Instant::now();
        let (vectors, requests) = self.backend.embed(texts)?;
        if vectors.len() != texts.len() {
            return Err(Error::gateway(format!(
                "embedding backend returned {} vectors for {} inputs",
                vectors.len(),
                texts.len()
            )));
        }
        let dim = vectors[0].len();
        if dim == 0 || vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::gateway(
                "embedding backend returned ragged or empty vectors",
            ));
        }
        self.ledger
            .record(&self.ledger.embed_calls, requests, start.elapsed());
        Ok(vectors)
    }

    pub fn embed_one(&self, text: &str) -> Result<Vec<f32>> {
        let mut v = self.embed_batch(&[text.to_string()])?;
        Ok(v.remove(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gateway() -> (Gateway, MockModel) {
        let model = MockModel::new(MockScript {
            embedding_dim: 8,
            rules: vec![MockRule::contains("Aylwin", "Weston-super-Mare")],
            fallback: None,
        })
        .unwrap();
        (Gateway::mock(model.clone()), model)
    }

    #[test]
    fn counts_each_completion() {
        let (gw, _) = gateway();
        let req = ChatRequest::answer("Where was the director of Aylwin born?");
        assert_eq!(gw.chat_complete(&req).unwrap(), "Weston-super-Mare");
        gw.chat_complete(&req).unwrap();
        assert_eq!(gw.ledger().chat_calls(), 2);
        assert_eq!(gw.ledger().snapshot().wall_times.len(), 2);
    }

    #[test]
    fn failed_completion_is_not_counted() {
        let (gw, _) = gateway();
        assert!(gw.chat_complete(&ChatRequest::answer("unmatched")).is_err());
        assert_eq!(gw.ledger().chat_calls(), 0);
    }

    #[test]
    fn rejects_invalid_requests() {
        let (gw, _) = gateway();
        let mut req = ChatRequest::answer("Aylwin");
        req.temperature = -0.5;
        assert!(matches!(gw.chat_complete(&req), Err(Error::Input(_))));
        req.temperature = 0.0;
        req.max_tokens = 0;
        assert!(matches!(gw.chat_complete(&req), Err(Error::Input(_))));
    }

    #[test]
    fn embed_batch_shapes_and_errors() {
        let (gw, _) = gateway();
        let texts: Vec<String> = ["a b", "c", "a b"].iter().map(|s| s.to_string()).collect();
        let v = gw.embed_batch(&texts).unwrap();
        assert_eq!(v.len(), 3);
        assert!(v.iter().all(|x| x.len() == 8));
        assert_eq!(v[0], v[2]);
        assert_eq!(gw.ledger().embed_calls(), 1);
        assert_eq!(gw.ledger().chat_calls(), 0);

        let bad: Vec<String> = vec!["ok".into(), " ".into()];
        match gw.embed_batch(&bad) {
            Err(Error::Input(msg)) => assert!(msg.contains("input 1")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
