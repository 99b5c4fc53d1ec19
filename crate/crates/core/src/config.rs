//! TOML configuration shared by the CLI and the service.
//!
//! ```toml
//! [correlation]
//! window_ms = 5000
//! skew_ms = 250
//! max_events = 500
//!
//! [ingest]
//! correlation_header = "X-Correlation-Id"
//!
//! [sanitizer]
//! rules_file = "rules.toml"
//!
//! [explainer]
//! backend = "http"
//! [explainer.http]
//! endpoint = "http://localhost:8000/v1/chat/completions"
//! model = "local"
//! token_env = "FAULTLINE_LLM_TOKEN"
//!
//! [service]
//! port = 8080
//! store = "events.jsonl"
//! spec = "openapi.yaml"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::correlate::{ConfigError as CorrelationConfigError, CorrelationConfig};
use crate::explain::{ExplainOptions, HttpBackendConfig};
use crate::ingest::IngestOptions;
use crate::sanitize::{builtin_rules, builtin_rules_with_user_pattern, load_rules, RuleError, SanitizationRule};

pub const DEFAULT_BIND: &str = "127.0.0.1";
pub const DEFAULT_PORT: u32 = 8080;
pub const DEFAULT_DEBOUNCE_MS: i64 = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error(transparent)]
    Correlation(#[from] CorrelationConfigError),
    #[error("sanitizer rules: {0}")]
    Rules(#[from] RuleError),
    #[error("port must be in 1..=65535, got {0}")]
    Port(u32),
    #[error("{what} path {path} is not readable: {reason}")]
    Unreadable { what: &'static str, path: PathBuf, reason: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Template,
    Http,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SanitizerSettings {
    /// Custom rules (TOML `[[rules]]` or JSON array), applied in place of the built-ins.
    pub rules_file: Option<PathBuf>,
    /// Replacement for the built-in user-id pattern.
    pub user_id_pattern: Option<String>,
}

impl SanitizerSettings {
    pub fn rules(&self) -> Result<Vec<SanitizationRule>, ConfigError> {
        if let Some(path) = &self.rules_file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError::Unreadable { what: "rules", path: path.clone(), reason: e.to_string() })?;
            return Ok(load_rules(&text)?);
        }
        Ok(match &self.user_id_pattern {
            Some(p) => builtin_rules_with_user_pattern(p)?,
            None => builtin_rules(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainerSettings {
    pub backend: BackendKind,
    pub backend_for_deterministic: bool,
    pub prompt_cap: Option<usize>,
    pub http: HttpBackendConfig,
}

impl ExplainerSettings {
    pub fn options(&self) -> ExplainOptions {
        let mut o = ExplainOptions { backend_for_deterministic: self.backend_for_deterministic, ..Default::default() };
        if let Some(cap) = self.prompt_cap {
            o.prompt_cap = cap;
        }
        o
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceSettings {
    pub bind: String,
    pub port: u32,
    /// Event store file; in-memory when absent.
    pub store: Option<PathBuf>,
    pub spec: Option<PathBuf>,
    pub auto_trigger: bool,
    pub debounce_ms: i64,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        Self {
            bind: DEFAULT_BIND.to_string(),
            port: DEFAULT_PORT,
            store: None,
            spec: None,
            auto_trigger: true,
            debounce_ms: DEFAULT_DEBOUNCE_MS,
        }
    }
}

impl ServiceSettings {
    /// Checks the port range and that referenced files can be opened.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(1..=65_535).contains(&self.port) {
            return Err(ConfigError::Port(self.port));
        }
        if self.debounce_ms < 0 {
            return Err(ConfigError::Invalid(format!("debounce_ms must be >= 0, got {}", self.debounce_ms)));
        }
        if let Some(spec) = &self.spec {
            check_readable("spec", spec)?;
        }
        if let Some(store) = &self.store {
            if store.exists() {
                check_readable("store", store)?;
            } else if let Some(parent) = store.parent().filter(|p| !p.as_os_str().is_empty()) {
                if !parent.is_dir() {
                    return Err(ConfigError::Unreadable {
                        what: "store",
                        path: store.clone(),
                        reason: "parent directory does not exist".into(),
                    });
                }
            }
        }
        Ok(())
    }
}

fn check_readable(what: &'static str, path: &Path) -> Result<(), ConfigError> {
    std::fs::File::open(path)
        .map(drop)
        .map_err(|e| ConfigError::Unreadable { what, path: path.to_path_buf(), reason: e.to_string() })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub correlation: CorrelationConfig,
    pub ingest: IngestOptions,
    pub sanitizer: SanitizerSettings,
    pub explainer: ExplainerSettings,
    pub service: ServiceSettings,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let c: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        c.correlation.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }
}
