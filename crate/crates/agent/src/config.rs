use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid JSON config: {0}")]
    Json(String),
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
}

/// Pipeline configuration, read from `key = value` lines or a JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    /// Number of object-perception runs.
    pub t_runs: usize,
    /// Images processed concurrently.
    pub parallelism: usize,
    /// Retries after a failed call.
    pub retry_budget: u32,
    /// First retry delay; doubles per retry.
    pub backoff_ms: u64,
    pub timeout_secs: u64,
    pub cache_dir: Option<PathBuf>,
    /// Name of the environment variable holding the API key. The key itself
    /// is never stored.
    pub api_key_env: Option<String>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            t_runs: 3,
            parallelism: 4,
            retry_budget: 3,
            backoff_ms: 500,
            timeout_secs: 120,
            cache_dir: None,
            api_key_env: Some("OPENAI_API_KEY".into()),
        }
    }
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        message: message.into(),
    }
}

impl AgentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// JSON when the text starts with `{`, otherwise `key = value` lines with
    /// `#` comments.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| ConfigError::Json(e.to_string()))?
        } else {
            Self::parse_lines(text)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn parse_lines(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let syntax = |message: String| ConfigError::Syntax { line: i + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| syntax(format!("expected key = value, got `{line}`")))?;
            let key = key.trim();
            let value = value.trim().trim_matches('"');
            let num = |v: &str| -> Result<u64, ConfigError> {
                v.parse::<u64>()
                    .map_err(|_| syntax(format!("{key}: expected a non-negative integer, got `{v}`")))
            };
            let optional = |v: &str| (!v.is_empty()).then(|| v.to_string());
            match key {
                "endpoint" => cfg.endpoint = value.into(),
                "model" => cfg.model = value.into(),
                "t_runs" | "T" => cfg.t_runs = num(value)? as usize,
                "parallelism" => cfg.parallelism = num(value)? as usize,
                "retry_budget" => cfg.retry_budget = num(value)? as u32,
                "backoff_ms" => cfg.backoff_ms = num(value)?,
                "timeout_secs" => cfg.timeout_secs = num(value)?,
                "cache_dir" => cfg.cache_dir = optional(value).map(PathBuf::from),
                "api_key_env" => cfg.api_key_env = optional(value),
                other => return Err(syntax(format!("unknown key `{other}`"))),
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.t_runs == 0 {
            return Err(invalid("t_runs", "must be at least 1"));
        }
        if self.parallelism == 0 {
            return Err(invalid("parallelism", "must be at least 1"));
        }
        if self.model.trim().is_empty() {
            return Err(invalid("model", "must not be empty"));
        }
        if self.endpoint.trim().is_empty() {
            return Err(invalid("endpoint", "must not be empty"));
        }
        Ok(())
    }

    /// The API key from the configured environment variable, if any.
    pub fn api_key(&self) -> Option<String> {
        self.api_key_env
            .as_deref()
            .and_then(|name| std::env::var(name).ok())
            .filter(|k| !k.is_empty())
    }
}
