//! Prompt serialization and dual-audience explanation generation.
//!
//! A [`CompletionBackend`] turns a prompt into a structured response with
//! the fields `summary`, `culprit`, `user_text` and `developer_text`. The
//! [`TemplateBackend`] answers deterministically from the context block
//! embedded in the prompt; [`HttpBackend`] forwards the prompt to a
//! chat-completion endpoint.

use std::sync::LazyLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::classify::RootCauseClass;
use crate::contract::{ContractFinding, FindingKind};
use crate::model::{FailureContextObject, Plane, Severity, TelemetryEvent};

pub const DEFAULT_PROMPT_CAP: usize = 16_384;
pub const END_USER_MAX_CHARS: usize = 300;
pub const DEFAULT_HTTP_TIMEOUT_MS: u64 = 30_000;

/// Longest message kept per event or headline field in the prompt.
const MAX_MESSAGE_CHARS: usize = 400;
const MAX_PROMPT_FINDINGS: usize = 20;

const CONTEXT_BEGIN: &str = "BEGIN CONTEXT";
const CONTEXT_END: &str = "END CONTEXT";
const NO_EVENTS_MARKER: &str = "no correlated events";

const PREAMBLE: &str = "You are assisting with the diagnosis of a failure in a web application.\n\
Using only the context below, perform these four tasks:\n\
1. Summarize the technical error in one sentence.\n\
2. Identify the likely culprit: Database, Network, ClientLogic or Backend (Unknown if unclear).\n\
3. Write a short, reassuring explanation for the end user, without technical detail.\n\
4. Write a precise explanation for the developer, naming the endpoint, status and error.\n";

const OUTPUT_FORMAT: &str = "Respond with a single JSON object and nothing else:\n\
{\"summary\": string, \"culprit\": \"Database\" | \"Network\" | \"ClientLogic\" | \"Backend\" | \"Unknown\", \"user_text\": string, \"developer_text\": string}\n\
user_text must stay under 300 characters and must not contain stack traces, status codes or placeholders such as <TOKEN_1>.\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Audience {
    EndUser,
    Developer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Culprit {
    Database,
    Network,
    ClientLogic,
    Backend,
    Unknown,
}

impl Culprit {
    /// Lenient parse; anything unrecognized is `Unknown`.
    pub fn parse(s: &str) -> Self {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        match norm.as_str() {
            "database" | "db" => Self::Database,
            "network" => Self::Network,
            "clientlogic" | "client" | "frontend" => Self::ClientLogic,
            "backend" | "server" => Self::Backend,
            _ => Self::Unknown,
        }
    }

    pub fn for_class(class: RootCauseClass) -> Self {
        match class {
            RootCauseClass::FrontendBug => Self::ClientLogic,
            RootCauseClass::InfrastructureIssue => Self::Network,
            RootCauseClass::BackendException | RootCauseClass::ContractBreach => Self::Backend,
            RootCauseClass::Unclassified => Self::Unknown,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explanation {
    pub audience: Audience,
    pub text: String,
    pub culprit: Culprit,
    pub summary: String,
    /// Set when the configured backend failed and the template answered instead.
    #[serde(default)]
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredResponse {
    pub summary: String,
    pub culprit: Culprit,
    pub user_text: String,
    pub developer_text: String,
}

impl StructuredResponse {
    fn to_json(&self) -> String {
        serde_json::to_string(self).expect("structured response serializes")
    }

    fn into_explanations(self, degraded: bool) -> Vec<Explanation> {
        vec![
            Explanation {
                audience: Audience::EndUser,
                text: self.user_text,
                culprit: self.culprit,
                summary: self.summary.clone(),
                degraded,
            },
            Explanation {
                audience: Audience::Developer,
                text: self.developer_text,
                culprit: self.culprit,
                summary: self.summary,
                degraded,
            },
        ]
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ParseFailure {
    #[error("response contains no JSON object")]
    NoObject,
    #[error("response JSON is invalid: {0}")]
    Json(String),
    #[error("response lacks required field `{0}`")]
    MissingField(&'static str),
}

/// Extracts the four required fields. Surrounding prose and code fences are
/// tolerated; field order does not matter.
pub fn parse_structured_response(text: &str) -> Result<StructuredResponse, ParseFailure> {
    let start = text.find('{').ok_or(ParseFailure::NoObject)?;
    let end = text.rfind('}').ok_or(ParseFailure::NoObject)?;
    if end < start {
        return Err(ParseFailure::NoObject);
    }
    let v: Value = serde_json::from_str(&text[start..=end]).map_err(|e| ParseFailure::Json(e.to_string()))?;
    let obj = v.as_object().ok_or(ParseFailure::NoObject)?;
    let field = |name: &'static str| -> Result<String, ParseFailure> {
        obj.get(name).and_then(Value::as_str).map(str::to_owned).ok_or(ParseFailure::MissingField(name))
    };
    Ok(StructuredResponse {
        summary: field("summary")?,
        culprit: Culprit::parse(&field("culprit")?),
        user_text: field("user_text")?,
        developer_text: field("developer_text")?,
    })
}

static STACK_TRACE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?m)^\s+at\s|\bat [\w$.<>]+\(|Traceback \(most recent call last\)|\.(?:java|kt|js|ts|py|rs|go|cs):\d+|File "[^"]+", line \d+"#)
        .unwrap()
});
static STATUS_ERROR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b[1-5]\d\d\s*error\b").unwrap());
static SECRET_PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<(?:TOKEN|CREDENTIAL)_\d+>").unwrap());
static EXCEPTION_NAME: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b([A-Za-z_][\w$.]*(?:Exception|Error))\b").unwrap());

/// Checks the end-user text constraints; returns the first violation.
pub fn end_user_violation(text: &str) -> Option<&'static str> {
    if text.trim().is_empty() {
        Some("empty text")
    } else if text.chars().count() > END_USER_MAX_CHARS {
        Some("longer than 300 characters")
    } else if STACK_TRACE.is_match(text) {
        Some("contains a stack trace")
    } else if SECRET_PLACEHOLDER.is_match(text) {
        Some("contains a token or credential placeholder")
    } else if STATUS_ERROR.is_match(text) {
        Some("contains a status code rendered as an error")
    } else {
        None
    }
}

/// First exception-like identifier (`NullPointerException`, `TypeError`).
pub fn exception_name(text: &str) -> Option<String> {
    let name = EXCEPTION_NAME.captures(text)?.get(1)?.as_str();
    Some(name.rsplit('.').next().unwrap_or(name).to_string())
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("completion request failed: {0}")]
    Transport(String),
    #[error("completion response malformed: {0}")]
    Response(String),
    #[error("prompt carries no readable context block")]
    NoContext,
}

pub trait CompletionBackend: Send + Sync {
    fn identifier(&self) -> &str;
    fn complete(&self, prompt: &str) -> Result<String, BackendError>;
}

/// Main signals of the failure, pulled out for the prompt and templates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Headline {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    #[serde(default)]
    pub timed_out: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slowest_phase: Option<(String, i64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exception: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub browser: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptFinding {
    pub kind: FindingKind,
    pub location: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptEvent {
    pub ts: i64,
    pub plane: Plane,
    pub severity: Severity,
    pub text: String,
}

/// Compact FCO serialization embedded in the prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptContext {
    pub class: RootCauseClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fired_rule: Option<String>,
    pub headline: Headline,
    pub findings: Vec<PromptFinding>,
    pub events: Vec<PromptEvent>,
    #[serde(default)]
    pub elided_events: usize,
}

fn clip(s: &str, max: usize) -> String {
    if s.chars().count() <= max {
        s.to_string()
    } else {
        let mut out: String = s.chars().take(max).collect();
        out.push_str("...");
        out
    }
}

fn first_line(s: &str) -> &str {
    s.lines().next().unwrap_or("")
}

fn event_text(e: &TelemetryEvent) -> String {
    let text = if let Some(b) = e.browser() {
        format!("{:?}: {} ({})", b.kind, b.message, b.page_url)
    } else if let Some(n) = e.network() {
        let status = if n.status == 0 { "no response".to_string() } else { n.status.to_string() };
        let mut t = format!("{} {} -> {}", n.method, n.path, status);
        if n.timed_out {
            t.push_str(" (timed out)");
        }
        t
    } else if let Some(s) = e.server() {
        let mut t = format!("[{}] {}: {}", s.service, s.level, s.message);
        if let Some(st) = &s.stack_trace {
            t.push_str(&format!(" | {}", first_line(st)));
        }
        t
    } else {
        String::new()
    };
    clip(&text, MAX_MESSAGE_CHARS)
}

fn headline(fco: &FailureContextObject) -> Headline {
    let nets: Vec<&TelemetryEvent> = fco.events.iter().filter(|e| e.network().is_some()).collect();
    let wanted = fco.report.triggering_status;
    let net = nets
        .iter()
        .find(|e| wanted.is_some() && e.network().map(|n| n.status) == wanted)
        .or_else(|| nets.iter().find(|e| e.network().is_some_and(|n| n.timed_out || n.is_error_status())))
        .or_else(|| nets.first())
        .and_then(|e| e.network());
    let server = fco
        .events
        .iter()
        .filter(|e| e.server().is_some())
        .max_by_key(|e| (e.severity, std::cmp::Reverse(e.canonical_key())))
        .and_then(|e| e.server());
    let browser = fco
        .events
        .iter()
        .filter(|e| e.browser().is_some())
        .max_by_key(|e| (e.severity, std::cmp::Reverse(e.canonical_key())))
        .and_then(|e| e.browser());
    let exception = server
        .and_then(|s| exception_name(&s.message).or_else(|| s.stack_trace.as_deref().and_then(exception_name)))
        .or_else(|| browser.and_then(|b| exception_name(&b.message)));
    Headline {
        method: net.map(|n| n.method.clone()),
        endpoint: net.map(|n| n.path.clone()),
        status: net.map(|n| n.status),
        timed_out: net.is_some_and(|n| n.timed_out),
        slowest_phase: net
            .and_then(|n| n.timings.phases().into_iter().filter(|(_, d)| *d >= 0).max_by_key(|(_, d)| *d))
            .map(|(p, d)| (p.to_string(), d)),
        service: server.map(|s| s.service.clone()),
        log: server.map(|s| clip(&s.message, MAX_MESSAGE_CHARS)),
        exception,
        browser: browser.map(|b| clip(&b.message, MAX_MESSAGE_CHARS)),
    }
}

fn prompt_finding(fco: &FailureContextObject, f: &ContractFinding) -> PromptFinding {
    let net = fco.events.iter().find(|e| e.event_id == f.event_id).and_then(|e| e.network());
    PromptFinding {
        kind: f.kind,
        location: f.location.clone(),
        message: clip(&f.message, MAX_MESSAGE_CHARS),
        field: f.field_name(),
        method: net.map(|n| n.method.clone()),
        endpoint: net.map(|n| n.path.clone()),
        status: net.map(|n| n.status),
    }
}

/// Builds the context block; events are elided later if the prompt is too long.
pub fn prompt_context(fco: &FailureContextObject) -> PromptContext {
    PromptContext {
        class: fco.root_cause,
        fired_rule: fco
            .classification
            .as_ref()
            .and_then(|c| c.fired_rule)
            .map(|r| format!("{r:?}")),
        headline: headline(fco),
        findings: fco.findings.iter().take(MAX_PROMPT_FINDINGS).map(|f| prompt_finding(fco, f)).collect(),
        events: fco
            .events
            .iter()
            .map(|e| PromptEvent { ts: e.timestamp_ms, plane: e.plane, severity: e.severity, text: event_text(e) })
            .collect(),
        elided_events: 0,
    }
}

fn render_prompt(ctx: &PromptContext) -> String {
    let mut p = String::with_capacity(4096);
    p.push_str(PREAMBLE);
    p.push('\n');
    if ctx.events.is_empty() && ctx.elided_events == 0 {
        p.push_str(&format!("Note: {NO_EVENTS_MARKER} were found for this failure.\n\n"));
    }
    p.push_str(CONTEXT_BEGIN);
    p.push('\n');
    p.push_str(&serde_json::to_string(ctx).expect("context serializes"));
    p.push('\n');
    p.push_str(CONTEXT_END);
    p.push_str("\n\n");
    p.push_str(OUTPUT_FORMAT);
    p
}

/// Serializes a sanitized, classified FCO into a prompt of at most `cap`
/// characters. Over the cap, middle events below Error severity are elided
/// first, keeping the first and last event.
pub fn build_prompt_capped(fco: &FailureContextObject, cap: usize) -> String {
    let mut ctx = prompt_context(fco);
    let mut prompt = render_prompt(&ctx);
    if prompt.chars().count() <= cap {
        return prompt;
    }
    let n = ctx.events.len();
    let keep = |i: usize, e: &PromptEvent| i == 0 || i + 1 == n || e.severity >= Severity::Error;
    let kept: Vec<PromptEvent> =
        ctx.events.iter().enumerate().filter(|(i, e)| keep(*i, e)).map(|(_, e)| e.clone()).collect();
    ctx.elided_events = n - kept.len();
    ctx.events = kept;
    prompt = render_prompt(&ctx);
    // still too long: drop findings beyond the first, then middle events
    while prompt.chars().count() > cap && ctx.findings.len() > 1 {
        ctx.findings.pop();
        prompt = render_prompt(&ctx);
    }
    while prompt.chars().count() > cap && ctx.events.len() > 2 {
        let mid = ctx.events.len() / 2;
        ctx.events.remove(mid);
        ctx.elided_events += 1;
        prompt = render_prompt(&ctx);
    }
    if prompt.chars().count() > cap {
        prompt = prompt.chars().take(cap).collect();
    }
    prompt
}

pub fn build_prompt(fco: &FailureContextObject) -> String {
    build_prompt_capped(fco, DEFAULT_PROMPT_CAP)
}

/// Recovers the context block from a prompt built by [`build_prompt`].
pub fn extract_context(prompt: &str) -> Option<PromptContext> {
    let start = prompt.find(CONTEXT_BEGIN)? + CONTEXT_BEGIN.len();
    let end = prompt[start..].find(CONTEXT_END)? + start;
    serde_json::from_str(prompt[start..end].trim()).ok()
}

fn endpoint_phrase(method: Option<&str>, endpoint: Option<&str>) -> String {
    match (method, endpoint) {
        (Some(m), Some(e)) => format!("{m} {e}"),
        (None, Some(e)) => e.to_string(),
        _ => "the request".to_string(),
    }
}

/// Deterministic response for a context; a pure function of its input.
pub fn template_response(ctx: &PromptContext) -> StructuredResponse {
    let h = &ctx.headline;
    let call = endpoint_phrase(h.method.as_deref(), h.endpoint.as_deref());
    let culprit = Culprit::for_class(ctx.class);
    let (summary, user_text, developer_text) = match ctx.class {
        RootCauseClass::FrontendBug => {
            let f = ctx.findings.iter().find(|f| {
                f.kind == FindingKind::ClientSchemaViolation && f.field.is_some()
            });
            let field = f.and_then(|f| f.field.clone()).unwrap_or_else(|| "unknown".into());
            let location = f.map(|f| f.location.clone()).unwrap_or_default();
            let fcall = f
                .map(|f| endpoint_phrase(f.method.as_deref(), f.endpoint.as_deref()))
                .unwrap_or_else(|| call.clone());
            (
                format!("The frontend sent {fcall} without the required field `{field}`."),
                "This page could not load its data because the app sent an incomplete request. \
                 Please refresh the page. Our team has been notified of the problem."
                    .to_string(),
                format!(
                    "Client-Side Schema Violation: {fcall} was sent without the required field `{field}` \
                     (at {location}). The request does not satisfy the API contract, so the fault is in the \
                     frontend code that builds this request."
                ),
            )
        }
        RootCauseClass::InfrastructureIssue => {
            let detail = match (&h.status, &h.slowest_phase) {
                (Some(0) | None, _) => "no response was received before the connection gave up".to_string(),
                (Some(s), Some((phase, ms))) => {
                    format!("the response ({s}) arrived only after the {phase} phase took {ms} ms")
                }
                (Some(s), None) => format!("the response ({s}) exceeded the timing limit"),
            };
            (
                format!("{call} timed out at the network level."),
                "We are having trouble connecting to the server right now. \
                 Please try again in a few minutes."
                    .to_string(),
                format!("Network timeout: {call} failed because {detail}. Check connectivity, load balancers and upstream availability for this endpoint."),
            )
        }
        RootCauseClass::BackendException => {
            let status = h.status.map(|s| s.to_string()).unwrap_or_else(|| "5xx".into());
            let exception = h.exception.clone().unwrap_or_else(|| "an unhandled exception".into());
            let service = h.service.clone().unwrap_or_else(|| "backend".into());
            let mut dev = format!(
                "Backend exception: {call} returned {status} after the {service} service raised {exception}"
            );
            if let Some(log) = &h.log {
                dev.push_str(&format!(" (log: \"{log}\")"));
            }
            dev.push('.');
            if let Some(b) = &h.browser {
                dev.push_str(&format!(" The browser then reported \"{b}\"."));
            }
            dev.push_str(" Inspect the server handler for this endpoint and the data it received.");
            (
                format!("{call} returned {status} because the {service} service raised {exception}."),
                "The dashboard failed to load because the server ran into an unexpected problem \
                 while preparing your data. Please try again later. Our engineers have the details."
                    .to_string(),
                dev,
            )
        }
        RootCauseClass::ContractBreach => {
            let f = ctx.findings.iter().find(|f| {
                matches!(f.kind, FindingKind::ServerContractBreach | FindingKind::UndocumentedStatus)
            });
            let fcall = f
                .map(|f| endpoint_phrase(f.method.as_deref(), f.endpoint.as_deref()))
                .unwrap_or_else(|| call.clone());
            let status = f.and_then(|f| f.status).or(h.status).map(|s| s.to_string()).unwrap_or_default();
            let what = f.map(|f| format!("{}: {}", f.kind, f.message)).unwrap_or_default();
            (
                format!("{fcall} returned {status} with a response that breaks the API contract."),
                "The dashboard failed to load because the server sent data in a format the app did not expect. \
                 Please try again later. Our team has been notified."
                    .to_string(),
                format!(
                    "Contract breach: {fcall} returned {status} and the response does not match the API \
                     specification ({what}). The backend changed its response without updating the contract."
                ),
            )
        }
        RootCauseClass::Unclassified => {
            let mut signals = Vec::new();
            if h.endpoint.is_some() {
                let s = h.status.map(|s| s.to_string()).unwrap_or_default();
                signals.push(format!("{call} -> {s}"));
            }
            if let Some(l) = &h.log {
                signals.push(format!("server log \"{l}\""));
            }
            if let Some(b) = &h.browser {
                signals.push(format!("browser \"{b}\""));
            }
            let n = ctx.events.len() + ctx.elided_events;
            let dev = if n == 0 {
                format!("No deterministic rule matched and there are {NO_EVENTS_MARKER} to inspect.")
            } else {
                format!(
                    "No deterministic rule matched the {n} correlated events. Key signals: {}.",
                    if signals.is_empty() { "none".to_string() } else { signals.join("; ") }
                )
            };
            (
                "The failure did not match any known pattern.".to_string(),
                "Something went wrong while loading this page. Please try again, \
                 and contact support if the problem continues."
                    .to_string(),
                dev,
            )
        }
    };
    StructuredResponse { summary, culprit, user_text, developer_text }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateBackend;

impl CompletionBackend for TemplateBackend {
    fn identifier(&self) -> &str {
        "template"
    }

    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let ctx = extract_context(prompt).ok_or(BackendError::NoContext)?;
        Ok(template_response(&ctx).to_json())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpBackendConfig {
    pub endpoint: String,
    pub model: String,
    pub timeout_ms: u64,
    /// Name of the environment variable holding the bearer token.
    pub token_env: Option<String>,
}

impl Default for HttpBackendConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model: String::new(),
            timeout_ms: DEFAULT_HTTP_TIMEOUT_MS,
            token_env: None,
        }
    }
}

/// Chat-completion client. Sends the prompt as a single user message and
/// reads the first choice's message content.
pub struct HttpBackend {
    config: HttpBackendConfig,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .build()
            .into();
        Self { config, agent }
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
        })
    }
}

/// Pulls `choices[0].message.content` (or `choices[0].text`) out of a reply.
pub fn chat_completion_text(reply: &Value) -> Result<String, BackendError> {
    let choice = reply
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| BackendError::Response("no choices".into()))?;
    choice
        .pointer("/message/content")
        .or_else(|| choice.get("text"))
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| BackendError::Response("first choice has no text".into()))
}

impl CompletionBackend for HttpBackend {
    fn identifier(&self) -> &str {
        "http"
    }

    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(var) = &self.config.token_env {
            if let Ok(token) = std::env::var(var) {
                req = req.header("Authorization", &format!("Bearer {token}"));
            }
        }
        let mut resp = req
            .send_json(self.request_body(prompt))
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let reply: Value = resp.body_mut().read_json().map_err(|e| BackendError::Response(e.to_string()))?;
        chat_completion_text(&reply)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainOptions {
    /// Send deterministic classes to the configured backend as well.
    pub backend_for_deterministic: bool,
    pub prompt_cap: usize,
}

impl Default for ExplainOptions {
    fn default() -> Self {
        Self { backend_for_deterministic: false, prompt_cap: DEFAULT_PROMPT_CAP }
    }
}

/// Always returns exactly one EndUser and one Developer explanation. Backend
/// failures, unparseable replies and end-user texts that break the
/// constraints fall back to the template with `degraded` set.
pub fn generate_explanations(
    fco: &FailureContextObject,
    backend: &dyn CompletionBackend,
    options: &ExplainOptions,
) -> Vec<Explanation> {
    let prompt = build_prompt_capped(fco, options.prompt_cap);
    let use_backend = fco.root_cause == RootCauseClass::Unclassified || options.backend_for_deterministic;
    if !use_backend || backend.identifier() == "template" {
        let resp = TemplateBackend
            .complete(&prompt)
            .ok()
            .and_then(|t| parse_structured_response(&t).ok())
            .unwrap_or_else(|| template_response(&prompt_context(fco)));
        return resp.into_explanations(false);
    }
    let outcome = backend
        .complete(&prompt)
        .map_err(|e| e.to_string())
        .and_then(|t| parse_structured_response(&t).map_err(|e| e.to_string()))
        .and_then(|r| match end_user_violation(&r.user_text) {
            Some(v) => Err(format!("end-user text rejected: {v}")),
            None => Ok(r),
        });
    match outcome {
        Ok(r) => r.into_explanations(false),
        Err(reason) => {
            tracing::warn!(backend = backend.identifier(), %reason, "falling back to template explanations");
            template_response(&prompt_context(fco)).into_explanations(true)
        }
    }
}
