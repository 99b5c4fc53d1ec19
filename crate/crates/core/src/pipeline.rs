//! The full analysis path shared by the CLI and the service:
//! select → validate → assemble → sanitize → classify → explain.

use std::sync::Arc;

use crate::classify;
use crate::config::{BackendKind, Config, ConfigError};
use crate::contract::{validate_exchange, ApiSpec};
use crate::correlate::{assemble_fco, select_failure_context, CorrelationConfig};
use crate::explain::{generate_explanations, CompletionBackend, ExplainOptions, HttpBackend, TemplateBackend};
use crate::ingest::IngestOptions;
use crate::model::{FailureContextObject, FailureReport, ModelError};
use crate::sanitize::{builtin_rules, Sanitizer};
use crate::store::EventStore;

pub struct Engine {
    spec: Option<Arc<ApiSpec>>,
    sanitizer: Sanitizer,
    correlation: CorrelationConfig,
    ingest: IngestOptions,
    backend: Box<dyn CompletionBackend>,
    explain: ExplainOptions,
}

impl Engine {
    /// Default configuration: built-in sanitizer rules and the template backend.
    pub fn new(spec: Option<ApiSpec>) -> Self {
        Self {
            spec: spec.map(Arc::new),
            sanitizer: Sanitizer::from_rules(builtin_rules()),
            correlation: CorrelationConfig::default(),
            ingest: IngestOptions::default(),
            backend: Box::new(TemplateBackend),
            explain: ExplainOptions::default(),
        }
    }

    pub fn from_config(config: &Config, spec: Option<ApiSpec>) -> Result<Self, ConfigError> {
        config.correlation.validate()?;
        let backend: Box<dyn CompletionBackend> = match config.explainer.backend {
            BackendKind::Template => Box::new(TemplateBackend),
            BackendKind::Http => {
                if config.explainer.http.endpoint.is_empty() {
                    return Err(ConfigError::Invalid("explainer.http.endpoint is required for the http backend".into()));
                }
                Box::new(HttpBackend::new(config.explainer.http.clone()))
            }
        };
        Ok(Self {
            spec: spec.map(Arc::new),
            sanitizer: Sanitizer::from_rules(config.sanitizer.rules()?),
            correlation: config.correlation,
            ingest: config.ingest.clone(),
            backend,
            explain: config.explainer.options(),
        })
    }

    pub fn with_correlation(mut self, correlation: CorrelationConfig) -> Self {
        self.correlation = correlation;
        self
    }

    pub fn with_backend(mut self, backend: Box<dyn CompletionBackend>) -> Self {
        self.backend = backend;
        self
    }

    pub fn with_sanitizer(mut self, sanitizer: Sanitizer) -> Self {
        self.sanitizer = sanitizer;
        self
    }

    pub fn correlation(&self) -> &CorrelationConfig {
        &self.correlation
    }

    pub fn ingest_options(&self) -> &IngestOptions {
        &self.ingest
    }

    pub fn spec(&self) -> Option<&ApiSpec> {
        self.spec.as_deref()
    }

    /// Runs the pipeline for one report. Only an invalid report fails.
    pub fn run(&self, store: &EventStore, report: FailureReport) -> Result<FailureContextObject, ModelError> {
        report.validate()?;
        let selection = select_failure_context(store, &report, &self.correlation);
        let findings = match &self.spec {
            Some(spec) => selection.events.iter().flat_map(|e| validate_exchange(spec, e)).collect(),
            None => Vec::new(),
        };
        let fco = assemble_fco(selection, report, findings, &self.correlation);
        let fco = self.sanitizer.sanitize_fco(fco);
        let mut fco = classify::apply(fco);
        fco.explanations = generate_explanations(&fco, self.backend.as_ref(), &self.explain);
        // backend output is untrusted; a sanitized FCO passes through unchanged
        Ok(self.sanitizer.sanitize_fco(fco))
    }
}
