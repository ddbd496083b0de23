//! Scripted, fully deterministic stand-in for a chat + embedding provider.
//!
//! Chat responses come from the first rule whose matcher accepts the
//! rendered prompt. Embeddings are hashed bags of words:
//! lowercase alphanumeric tokens, each adding 1.0 at `fnv1a64(token) % dim`.
//! Text with no alphanumeric token hashes its trimmed form as one token.

use std::path::Path;
use std::sync::{Arc, Mutex};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{ChatRequest, ModelBackend};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMatcher {
    Contains(String),
    ContainsAll(Vec<String>),
    Regex(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    pub matcher: PromptMatcher,
    pub response: String,
}

impl MockRule {
    pub fn contains(needle: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            matcher: PromptMatcher::Contains(needle.into()),
            response: response.into(),
        }
    }

    pub fn contains_all<S: Into<String>>(
        needles: impl IntoIterator<Item = S>,
        response: impl Into<String>,
    ) -> Self {
        Self {
            matcher: PromptMatcher::ContainsAll(needles.into_iter().map(Into::into).collect()),
            response: response.into(),
        }
    }

    pub fn regex(pattern: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            matcher: PromptMatcher::Regex(pattern.into()),
            response: response.into(),
        }
    }
}

/// On-disk mock script: ordered rules plus the embedding dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default = "default_dim")]
    pub embedding_dim: usize,
    #[serde(default)]
    pub rules: Vec<MockRule>,
    /// Response when no rule matches; without one an unmatched prompt is an error.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<String>,
}

fn default_dim() -> usize {
    64
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::persistence(path, e))
    }
}

enum Compiled {
    Contains(String),
    ContainsAll(Vec<String>),
    Regex(Regex),
}

impl Compiled {
    fn matches(&self, prompt: &str) -> bool {
        match self {
            Compiled::Contains(needle) => prompt.contains(needle.as_str()),
            Compiled::ContainsAll(needles) => needles.iter().all(|n| prompt.contains(n.as_str())),
            Compiled::Regex(re) => re.is_match(prompt),
        }
    }
}

struct Inner {
    rules: Vec<(Compiled, String)>,
    fallback: Option<String>,
    dim: usize,
    history: Mutex<Vec<ChatRequest>>,
}

/// Cloning shares the script and the request history.
#[derive(Clone)]
pub struct MockModel {
    inner: Arc<Inner>,
}

impl MockModel {
    pub fn new(script: MockScript) -> Result<Self> {
        if script.embedding_dim == 0 {
            return Err(Error::Config(
                "mock embedding_dim must be at least 1".into(),
            ));
        }
        let rules = script
            .rules
            .into_iter()
            .map(|rule| {
                let compiled = match rule.matcher {
                    PromptMatcher::Contains(s) => Compiled::Contains(s),
                    PromptMatcher::ContainsAll(v) => Compiled::ContainsAll(v),
                    PromptMatcher::Regex(p) => Compiled::Regex(
                        Regex::new(&p)
                            .map_err(|e| Error::Config(format!("mock regex {p:?}: {e}")))?,
                    ),
                };
                Ok((compiled, rule.response))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            inner: Arc::new(Inner {
                rules,
                fallback: script.fallback,
                dim: script.embedding_dim,
                history: Mutex::new(Vec::new()),
            }),
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::new(MockScript::load(path)?)
    }

    pub fn embedding_dim(&self) -> usize {
        self.inner.dim
    }

    /// Every chat request received so far, in arrival order.
    pub fn history(&self) -> Vec<ChatRequest> {
        self.inner
            .history
            .lock()
            .expect("mock history poisoned")
            .clone()
    }

    pub fn respond(&self, prompt: &str) -> Option<&str> {
        self.inner
            .rules
            .iter()
            .find(|(m, _)| m.matches(prompt))
            .map(|(_, r)| r.as_str())
            .or(self.inner.fallback.as_deref())
    }
}

impl ModelBackend for MockModel {
    fn chat(&self, req: &ChatRequest) -> Result<String> {
        self.inner
            .history
            .lock()
            .expect("mock history poisoned")
            .push(req.clone());
        let prompt = req.prompt_text();
        self.respond(&prompt).map(str::to_string).ok_or_else(|| {
            let head: String = prompt.chars().take(80).collect();
            Error::gateway(format!(
                "mock script has no rule matching prompt starting {head:?}"
            ))
        })
    }

    fn embed(&self, texts: &[String]) -> Result<(Vec<Vec<f32>>, u64)> {
        let vectors = texts
            .iter()
            .map(|t| hash_embedding(t, self.inner.dim))
            .collect();
        Ok((vectors, 1))
    }

    fn describe(&self) -> String {
        format!(
            "mock({} rules, dim {})",
            self.inner.rules.len(),
            self.inner.dim
        )
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME)
    })
}

/// Bag-of-words feature hashing; never the zero vector for nonempty text.
pub fn hash_embedding(text: &str, dim: usize) -> Vec<f32> {
    let mut v = vec![0.0f32; dim];
    let lowered = text.to_lowercase();
    let mut any = false;
    for token in lowered
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
    {
        v[(fnv1a64(token.as_bytes()) % dim as u64) as usize] += 1.0;
        any = true;
    }
    if !any {
        v[(fnv1a64(lowered.trim().as_bytes()) % dim as u64) as usize] += 1.0;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_matching_rule_wins() {
        let model = MockModel::new(MockScript {
            embedding_dim: 4,
            rules: vec![
                MockRule::contains_all(["director", "Aylwin"], "Weston-super-Mare"),
                MockRule::regex(r"(?s)^Question:.*Aylwin", "Henry Edwards"),
                MockRule::contains("Aylwin", "fallthrough"),
            ],
            fallback: Some("[]".into()),
        })
        .unwrap();
        assert_eq!(
            model.respond("the director of Aylwin"),
            Some("Weston-super-Mare")
        );
        assert_eq!(
            model.respond("Question:\nWho made Aylwin"),
            Some("Henry Edwards")
        );
        assert_eq!(model.respond("about Aylwin"), Some("fallthrough"));
        assert_eq!(model.respond("nothing"), Some("[]"));
    }

    #[test]
    fn script_round_trips_through_json() {
        let script = MockScript {
            embedding_dim: 16,
            rules: vec![MockRule::contains("a", "b"), MockRule::regex("x+", "y")],
            fallback: None,
        };
        let json = serde_json::to_string(&script).unwrap();
        assert!(json.contains("{\"contains\":\"a\"}"));
        assert_eq!(serde_json::from_str::<MockScript>(&json).unwrap(), script);
    }

    #[test]
    fn bad_regex_is_a_config_error() {
        let script = MockScript {
            embedding_dim: 4,
            rules: vec![MockRule::regex("(", "x")],
            fallback: None,
        };
        assert!(matches!(MockModel::new(script), Err(Error::Config(_))));
    }

    #[test]
    fn embedding_is_never_zero() {
        for text in ["a", "!!!", "Weston-super-Mare", "Ünïcode wörds"] {
            let v = hash_embedding(text, 8);
            assert!(v.iter().any(|x| *x > 0.0), "{text}");
        }
    }
}
