//! Run configuration: built-in defaults, overlaid by an optional JSON file,
//! overlaid by command-line flags.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use indexrag_core::gateway::{HttpConfig, RetryPolicy};
use indexrag_core::{Gateway, IndexConfig, MockModel, QueryConfig};
use serde::{Deserialize, Serialize};

pub const API_KEY_VARS: [&str; 2] = ["INDEXRAG_API_KEY", "OPENAI_API_KEY"];
pub const BASE_URL_VAR: &str = "INDEXRAG_BASE_URL";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub index: IndexConfig,
    pub query: QueryConfig,
    pub gateway: GatewaySettings,
    pub eval: EvalSettings,
    pub paths: Paths,
}

/// Endpoint and model selection. API keys never live here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewaySettings {
    pub mock_script: Option<PathBuf>,
    pub base_url: Option<String>,
    pub chat_model: String,
    pub embed_model: String,
    pub timeout_secs: u64,
    pub max_attempts: u32,
    pub embed_batch_size: usize,
}

impl Default for GatewaySettings {
    fn default() -> Self {
        let http = HttpConfig::default();
        Self {
            mock_script: None,
            base_url: None,
            chat_model: http.chat_model,
            embed_model: http.embed_model,
            timeout_secs: http.timeout.as_secs(),
            max_attempts: http.retry.max_attempts,
            embed_batch_size: http.embed_batch_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// k_b values to sweep; empty means the single `query.k_b`.
    pub kb_sweep: Vec<usize>,
    pub exclude_failures: bool,
    pub parallelism: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            kb_sweep: Vec::new(),
            exclude_failures: false,
            parallelism: 4,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Reads a config file. Relative paths inside it resolve against the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut config: RunConfig = serde_json::from_str(&raw)
            .with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(inner) = p.as_mut() {
                if inner.is_relative() {
                    *inner = base.join(&*inner);
                }
            }
        };
        rebase(&mut config.paths.corpus);
        rebase(&mut config.paths.index);
        rebase(&mut config.paths.dataset);
        rebase(&mut config.paths.out);
        rebase(&mut config.gateway.mock_script);
        Ok(config)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::from_file)
    }
}

pub fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref()
        .with_context(|| format!("no {flag} given (flag or config file)"))
}

/// Builds the gateway, reading credentials and the endpoint override from `env`.
pub fn build_gateway(
    settings: &GatewaySettings,
    env: impl Fn(&str) -> Option<String>,
) -> Result<Gateway> {
    let base_url = env(BASE_URL_VAR).or_else(|| settings.base_url.clone());
    if let Some(script) = &settings.mock_script {
        if let Some(url) = base_url {
            bail!(
                "both a mock script ({}) and a live endpoint ({url}) are configured; pick one",
                script.display()
            );
        }
        let model = MockModel::from_file(script)
            .with_context(|| format!("loading mock script {}", script.display()))?;
        return Ok(Gateway::mock(model));
    }
    let Some(api_key) = API_KEY_VARS.iter().find_map(|v| env(v)) else {
        bail!(
            "no model configured: pass --mock-script, or set {} for a live endpoint",
            API_KEY_VARS.join(" or ")
        );
    };
    let mut http = HttpConfig {
        api_key: Some(api_key),
        chat_model: settings.chat_model.clone(),
        embed_model: settings.embed_model.clone(),
        timeout: Duration::from_secs(settings.timeout_secs),
        retry: RetryPolicy {
            max_attempts: settings.max_attempts,
            ..RetryPolicy::default()
        },
        embed_batch_size: settings.embed_batch_size,
        ..HttpConfig::default()
    };
    if let Some(url) = base_url {
        http.base_url = url;
    }
    Ok(Gateway::openai(http)?)
}

pub fn process_env(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.trim().is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_env(_: &str) -> Option<String> {
        None
    }

    #[test]
    fn file_overrides_defaults_and_rebases_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(
            &path,
            r#"{"index": {"tau": 4}, "query": {"k_b": 1}, "paths": {"corpus": "docs.jsonl", "out": "/abs/out"}}"#,
        )
        .unwrap();
        let config = RunConfig::from_file(&path).unwrap();
        assert_eq!(config.index.tau, 4);
        assert_eq!(config.index.max_source_docs, 5);
        assert_eq!(config.query.k_b, 1);
        assert_eq!(config.query.k, 10);
        assert_eq!(config.paths.corpus.unwrap(), dir.path().join("docs.jsonl"));
        assert_eq!(config.paths.out.unwrap(), PathBuf::from("/abs/out"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"gateway": {"api_key": "sk-nope"}}"#).unwrap();
        let err = RunConfig::from_file(&path).unwrap_err();
        assert!(format!("{err:#}").contains("api_key"));
    }

    #[test]
    fn gateway_needs_exactly_one_backend() {
        let err = build_gateway(&GatewaySettings::default(), no_env).unwrap_err();
        assert!(err.to_string().contains("INDEXRAG_API_KEY"));

        let both = GatewaySettings {
            mock_script: Some("script.json".into()),
            base_url: Some("http://localhost:1".into()),
            ..GatewaySettings::default()
        };
        assert!(build_gateway(&both, no_env)
            .unwrap_err()
            .to_string()
            .contains("pick one"));

        let env_url = GatewaySettings {
            mock_script: Some("script.json".into()),
            ..GatewaySettings::default()
        };
        let env = |k: &str| (k == BASE_URL_VAR).then(|| "http://localhost:1".to_string());
        assert!(build_gateway(&env_url, env)
            .unwrap_err()
            .to_string()
            .contains("pick one"));

        let live = |k: &str| (k == "OPENAI_API_KEY").then(|| "sk-test".to_string());
        let gw = build_gateway(&GatewaySettings::default(), live).unwrap();
        assert!(gw.describe().contains("gpt-4o-mini"), "{}", gw.describe());
    }
}
