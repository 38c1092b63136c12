use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use chrono::{DateTime, Utc};
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TokenTotals {
    /// Tokens spent on backend calls made by this run.
    pub fresh_prompt: u64,
    pub fresh_completion: u64,
    pub fresh_total: u64,
    /// Tokens over every stage reply used, including cached ones.
    pub ledger_total: u64,
}

/// Record of one command invocation, written next to its outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub started_at: DateTime<Utc>,
    pub wall_time_secs: f64,
    pub config: Value,
    pub inputs: BTreeMap<String, PathBuf>,
    pub outputs: BTreeMap<String, PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tokens: Option<TokenTotals>,
    pub summary: Value,
    pub exit_code: u8,
    #[serde(skip)]
    clock: Option<Instant>,
}

impl RunManifest {
    pub fn start(command: &str) -> Self {
        Self {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            started_at: Utc::now(),
            wall_time_secs: 0.0,
            config: Value::Null,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            tokens: None,
            summary: Value::Null,
            exit_code: 0,
            clock: Some(Instant::now()),
        }
    }

    pub fn input(&mut self, name: &str, path: &Path) -> &mut Self {
        self.inputs.insert(name.into(), path.to_path_buf());
        self
    }

    pub fn output(&mut self, name: &str, path: &Path) -> &mut Self {
        self.outputs.insert(name.into(), path.to_path_buf());
        self
    }

    pub fn write(&mut self, path: &Path) -> anyhow::Result<()> {
        if let Some(t) = self.clock {
            self.wall_time_secs = t.elapsed().as_secs_f64();
        }
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }
}

/// `report.json` gets `report.manifest.json` beside it.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    output.with_extension("manifest.json")
}
