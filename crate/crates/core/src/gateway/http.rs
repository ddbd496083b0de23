//! OpenAI-compatible chat-completions and embeddings client.

use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use serde::Deserialize;
use serde_json::json;
use tracing::{debug, warn};

use super::{ChatRequest, ModelBackend};
use crate::error::{Error, Result};

pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

/// Bounded exponential backoff on transport errors, 429 and 5xx.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, attempt: u32) -> Duration {
        self.initial_backoff * 2u32.saturating_pow(attempt.saturating_sub(1))
    }

    pub fn is_retryable(status: u16) -> bool {
        status == 429 || (500..600).contains(&status)
    }
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub chat_model: String,
    pub embed_model: String,
    pub retry: RetryPolicy,
    pub timeout: Duration,
    /// Inputs per embeddings request.
    pub embed_batch_size: usize,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            base_url: DEFAULT_BASE_URL.to_string(),
            api_key: None,
            chat_model: "gpt-4o-mini".to_string(),
            embed_model: "text-embedding-3-small".to_string(),
            retry: RetryPolicy::default(),
            timeout: Duration::from_secs(120),
            embed_batch_size: 128,
        }
    }
}

pub struct OpenAiBackend {
    config: HttpConfig,
    client: Client,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    #[serde(default)]
    index: usize,
    embedding: Vec<f32>,
}

impl OpenAiBackend {
    pub fn new(config: HttpConfig) -> Result<Self> {
        if config.embed_batch_size == 0 {
            return Err(Error::Config("embed_batch_size must be at least 1".into()));
        }
        if config.retry.max_attempts == 0 {
            return Err(Error::Config(
                "retry max_attempts must be at least 1".into(),
            ));
        }
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(Self { config, client })
    }

    fn endpoint(&self, path: &str) -> String {
        format!("{}/{}", self.config.base_url.trim_end_matches('/'), path)
    }

    /// POSTs `body`, retrying per the policy, and returns the response text.
    fn post(&self, path: &str, body: &serde_json::Value) -> Result<String> {
        let url = self.endpoint(path);
        let policy = self.config.retry;
        let mut attempt = 0;
        loop {
            attempt += 1;
            let mut request = self.client.post(&url).json(body);
            if let Some(key) = &self.config.api_key {
                request = request.bearer_auth(key);
            }
            let failure = match request.send() {
                Ok(response) => {
                    let status = response.status().as_u16();
                    let text = response.text();
                    match text {
                        Ok(text) if (200..300).contains(&status) => return Ok(text),
                        Ok(text) if !RetryPolicy::is_retryable(status) => {
                            return Err(Error::Gateway {
                                message: format!(
                                    "{url} returned {status}: {}",
                                    truncate(&text, 300)
                                ),
                                status: Some(status),
                            })
                        }
                        Ok(text) => Error::Gateway {
                            message: format!("{url} returned {status}: {}", truncate(&text, 300)),
                            status: Some(status),
                        },
                        Err(e) => Error::gateway(format!("{url}: reading body failed: {e}")),
                    }
                }
                Err(e) => Error::gateway(format!("{url}: {e}")),
            };
            if attempt >= policy.max_attempts {
                return Err(failure);
            }
            let wait = policy.backoff(attempt);
            warn!(%url, attempt, ?wait, error = %failure, "retrying model request");
            thread::sleep(wait);
        }
    }
}

fn truncate(s: &str, max: usize) -> String {
    s.chars().take(max).collect()
}

impl ModelBackend for OpenAiBackend {
    fn chat(&self, req: &ChatRequest) -> Result<String> {
        let mut messages = Vec::with_capacity(2);
        if !req.system.is_empty() {
            messages.push(json!({"role": "system", "content": req.system}));
        }
        messages.push(json!({"role": "user", "content": req.user}));
        let body = json!({
            "model": self.config.chat_model,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let raw = self.post("chat/completions", &body)?;
        let parsed: ChatResponse = serde_json::from_str(&raw)
            .map_err(|e| Error::gateway(format!("malformed chat response: {e}")))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Error::gateway("chat response has no message content"))?;
        debug!(chars = content.len(), "chat completion");
        Ok(content)
    }

    fn embed(&self, texts: &[String]) -> Result<(Vec<Vec<f32>>, u64)> {
        let mut out = Vec::with_capacity(texts.len());
        let mut requests = 0;
        for batch in texts.chunks(self.config.embed_batch_size) {
            let body = json!({"model": self.config.embed_model, "input": batch});
            let raw = self.post("embeddings", &body)?;
            requests += 1;
            let mut parsed: EmbeddingResponse = serde_json::from_str(&raw)
                .map_err(|e| Error::gateway(format!("malformed embedding response: {e}")))?;
            if parsed.data.len() != batch.len() {
                return Err(Error::gateway(format!(
                    "embedding response has {} items for {} inputs",
                    parsed.data.len(),
                    batch.len()
                )));
            }
            parsed.data.sort_by_key(|d| d.index);
            out.extend(parsed.data.into_iter().map(|d| d.embedding));
        }
        Ok((out, requests))
    }

    fn describe(&self) -> String {
        format!(
            "openai-compatible({}, chat={}, embed={})",
            self.config.base_url, self.config.chat_model, self.config.embed_model
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy {
            max_attempts: 3,
            initial_backoff: Duration::from_millis(100),
        };
        assert_eq!(p.backoff(1), Duration::from_millis(100));
        assert_eq!(p.backoff(2), Duration::from_millis(200));
        assert_eq!(p.backoff(3), Duration::from_millis(400));
    }

    #[test]
    fn retryable_statuses() {
        assert!(RetryPolicy::is_retryable(429));
        assert!(RetryPolicy::is_retryable(500));
        assert!(RetryPolicy::is_retryable(503));
        assert!(!RetryPolicy::is_retryable(400));
        assert!(!RetryPolicy::is_retryable(401));
        assert!(!RetryPolicy::is_retryable(404));
    }
}
