//! Shared domain types: telemetry events on the three collection planes,
//! failure reports, and the Failure Context Object (FCO).
//!
//! The canonical wire format is one JSON document per event (JSONL for
//! streams) with the snake_case field names used below. Optional fields are
//! omitted rather than written as `null`, so serialize → parse → serialize is
//! byte-identical.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::classify::{ClassificationTrace, RootCauseClass};
use crate::contract::ContractFinding;
use crate::explain::Explanation;
use crate::sanitize::EntityCount;

/// Wire format version written into every event document.
pub const WIRE_VERSION: u32 = 1;

/// Maximum length of a correlation token.
pub const MAX_CORRELATION_ID_LEN: usize = 128;

/// Number of body bytes retained for non-JSON payloads.
pub const TEXT_DIGEST_BYTES: usize = 4096;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("invalid correlation id: {0}")]
    InvalidCorrelationId(String),
    #[error("payload variant does not match plane {0}")]
    PlaneMismatch(Plane),
    #[error("timestamp_ms must be non-negative, got {0}")]
    NegativeTimestamp(i64),
    #[error("status {0} outside 0..=599")]
    StatusOutOfRange(u16),
    #[error("timing phase `{0}` must be >= 0 or exactly -1")]
    BadTiming(&'static str),
    #[error("{0} must not be empty")]
    EmptyField(&'static str),
    #[error("invalid failure report: {0}")]
    InvalidReport(String),
}

/// Collection plane. The derived order (Browser < Network < Server) is only
/// used to break timestamp ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Plane {
    Browser,
    Network,
    Server,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::Browser, Plane::Network, Plane::Server];

    pub fn as_str(self) -> &'static str {
        match self {
            Plane::Browser => "browser",
            Plane::Network => "network",
            Plane::Server => "server",
        }
    }
}

impl fmt::Display for Plane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Plane {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "browser" => Ok(Plane::Browser),
            "network" => Ok(Plane::Network),
            "server" => Ok(Plane::Server),
            other => Err(format!("unknown plane `{other}`")),
        }
    }
}

/// Opaque token tying together the events of one user action across planes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct CorrelationId(String);

impl CorrelationId {
    pub fn new(token: impl Into<String>) -> Result<Self, ModelError> {
        let token = token.into();
        if token.is_empty()
            || token.len() > MAX_CORRELATION_ID_LEN
            || token.chars().any(char::is_whitespace)
        {
            return Err(ModelError::InvalidCorrelationId(token));
        }
        Ok(Self(token))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CorrelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for CorrelationId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        CorrelationId::new(raw).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Debug,
    Info,
    Warn,
    Error,
    Fatal,
}

impl Severity {
    /// Maps a logged level string onto the closed severity scale.
    /// Unknown levels return `None`.
    pub fn from_level(level: &str) -> Option<Self> {
        match level.trim().to_ascii_lowercase().as_str() {
            "trace" | "debug" | "fine" | "finer" | "finest" => Some(Severity::Debug),
            "info" | "information" | "notice" => Some(Severity::Info),
            "warn" | "warning" => Some(Severity::Warn),
            "error" | "err" => Some(Severity::Error),
            "fatal" | "critical" | "crit" | "panic" | "severe" | "emerg" | "alert" => {
                Some(Severity::Fatal)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrowserEventKind {
    ConsoleError,
    UnhandledRejection,
    NetworkStackTrace,
    ManualReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrowserPayload {
    pub kind: BrowserEventKind,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stack: Option<String>,
    pub page_url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clicked_element: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_snapshot: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub name: String,
    pub value: String,
}

impl Header {
    pub fn new(name: impl Into<String>, value: impl Into<String>) -> Self {
        Self { name: name.into(), value: value.into() }
    }
}

/// Case-insensitive header lookup; returns the first match.
pub fn find_header<'a>(headers: &'a [Header], name: &str) -> Option<&'a str> {
    headers
        .iter()
        .find(|h| h.name.eq_ignore_ascii_case(name))
        .map(|h| h.value.as_str())
}

/// Request or response body. JSON content is kept as a parsed document;
/// anything else is reduced to a bounded text digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "encoding", content = "content", rename_all = "snake_case")]
pub enum Body {
    Json(Value),
    Text { prefix: String, total_len: usize },
}

impl Body {
    pub fn text_digest(text: &str) -> Self {
        let mut cut = text.len().min(TEXT_DIGEST_BYTES);
        while !text.is_char_boundary(cut) {
            cut -= 1;
        }
        Body::Text { prefix: text[..cut].to_string(), total_len: text.len() }
    }

    /// Parses `text` as JSON when the content type says JSON, falling back to
    /// a text digest when it is not JSON or does not parse.
    pub fn from_content(text: &str, mime_type: Option<&str>) -> Self {
        let is_json = mime_type.is_some_and(|m| m.to_ascii_lowercase().contains("json"));
        if is_json {
            if let Ok(v) = serde_json::from_str::<Value>(text) {
                return Body::Json(v);
            }
        }
        Body::text_digest(text)
    }

    pub fn as_json(&self) -> Option<&Value> {
        match self {
            Body::Json(v) => Some(v),
            Body::Text { .. } => None,
        }
    }
}

/// Phase durations in milliseconds; -1 marks an unknown phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timings {
    pub blocked: i64,
    pub dns: i64,
    pub connect: i64,
    pub send: i64,
    pub wait: i64,
    pub receive: i64,
}

impl Default for Timings {
    fn default() -> Self {
        Self::UNKNOWN
    }
}

impl Timings {
    pub const UNKNOWN: Timings =
        Timings { blocked: -1, dns: -1, connect: -1, send: -1, wait: -1, receive: -1 };

    pub fn phases(&self) -> [(&'static str, i64); 6] {
        [
            ("blocked", self.blocked),
            ("dns", self.dns),
            ("connect", self.connect),
            ("send", self.send),
            ("wait", self.wait),
            ("receive", self.receive),
        ]
    }

    /// First phase whose duration exceeds `limit_ms`.
    pub fn slowest_over(&self, limit_ms: i64) -> Option<(&'static str, i64)> {
        self.phases()
            .into_iter()
            .filter(|(_, d)| *d > limit_ms)
            .max_by_key(|(_, d)| *d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkPayload {
    pub method: String,
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    #[serde(default)]
    pub request_headers: Vec<Header>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_body: Option<Body>,
    /// HTTP status, or 0 when no response was received.
    pub status: u16,
    #[serde(default)]
    pub response_headers: Vec<Header>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_body: Option<Body>,
    #[serde(default)]
    pub timings: Timings,
    #[serde(default)]
    pub timed_out: bool,
}

impl NetworkPayload {
    pub fn is_server_error(&self) -> bool {
        (500..=599).contains(&self.status)
    }

    pub fn is_error_status(&self) -> bool {
        (400..=599).contains(&self.status)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerPayload {
    pub service: String,
    pub level: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stack_trace: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Payload {
    Browser(BrowserPayload),
    Network(NetworkPayload),
    Server(ServerPayload),
}

impl Payload {
    pub fn plane(&self) -> Plane {
        match self {
            Payload::Browser(_) => Plane::Browser,
            Payload::Network(_) => Plane::Network,
            Payload::Server(_) => Plane::Server,
        }
    }
}

/// One timestamped observation on a collection plane.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TelemetryEvent {
    pub v: u32,
    /// Assigned by the store at ingestion; 0 means not yet stored.
    #[serde(skip_serializing_if = "is_zero")]
    pub event_id: u64,
    pub plane: Plane,
    pub timestamp_ms: i64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correlation_id: Option<CorrelationId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    pub severity: Severity,
    pub payload: Payload,
}

fn is_zero(n: &u64) -> bool {
    *n == 0
}

/// Raw wire shape: the payload is decoded once the plane is known.
#[derive(Deserialize)]
struct WireEvent {
    #[serde(default = "wire_version")]
    v: u32,
    #[serde(default)]
    event_id: u64,
    plane: Plane,
    timestamp_ms: i64,
    #[serde(default)]
    correlation_id: Option<CorrelationId>,
    #[serde(default)]
    session_id: Option<String>,
    severity: Severity,
    payload: Value,
}

fn wire_version() -> u32 {
    WIRE_VERSION
}

impl<'de> Deserialize<'de> for TelemetryEvent {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let wire = WireEvent::deserialize(d)?;
        let payload = match wire.plane {
            Plane::Browser => serde_json::from_value(wire.payload).map(Payload::Browser),
            Plane::Network => serde_json::from_value(wire.payload).map(Payload::Network),
            Plane::Server => serde_json::from_value(wire.payload).map(Payload::Server),
        }
        .map_err(|e| D::Error::custom(format!("payload: {e}")))?;
        let event = TelemetryEvent {
            v: wire.v,
            event_id: wire.event_id,
            plane: wire.plane,
            timestamp_ms: wire.timestamp_ms,
            correlation_id: wire.correlation_id,
            session_id: wire.session_id,
            severity: wire.severity,
            payload,
        };
        event.validate().map_err(D::Error::custom)?;
        Ok(event)
    }
}

impl TelemetryEvent {
    pub fn new(plane_payload: Payload, timestamp_ms: i64, severity: Severity) -> Self {
        Self {
            v: WIRE_VERSION,
            event_id: 0,
            plane: plane_payload.plane(),
            timestamp_ms,
            correlation_id: None,
            session_id: None,
            severity,
            payload: plane_payload,
        }
    }

    pub fn with_correlation_id(mut self, cid: Option<CorrelationId>) -> Self {
        self.correlation_id = cid;
        self
    }

    pub fn with_session_id(mut self, session: Option<String>) -> Self {
        self.session_id = session;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.payload.plane() != self.plane {
            return Err(ModelError::PlaneMismatch(self.plane));
        }
        if self.timestamp_ms < 0 {
            return Err(ModelError::NegativeTimestamp(self.timestamp_ms));
        }
        match &self.payload {
            Payload::Browser(b) => {
                if b.kind == BrowserEventKind::ManualReport && b.message.is_empty() {
                    return Err(ModelError::EmptyField("manual report message"));
                }
            }
            Payload::Network(n) => {
                if n.status > 599 {
                    return Err(ModelError::StatusOutOfRange(n.status));
                }
                for (name, d) in n.timings.phases() {
                    if d < -1 {
                        return Err(ModelError::BadTiming(name));
                    }
                }
            }
            Payload::Server(s) => {
                if s.message.is_empty() {
                    return Err(ModelError::EmptyField("server message"));
                }
            }
        }
        Ok(())
    }

    pub fn browser(&self) -> Option<&BrowserPayload> {
        match &self.payload {
            Payload::Browser(b) => Some(b),
            _ => None,
        }
    }

    pub fn network(&self) -> Option<&NetworkPayload> {
        match &self.payload {
            Payload::Network(n) => Some(n),
            _ => None,
        }
    }

    pub fn server(&self) -> Option<&ServerPayload> {
        match &self.payload {
            Payload::Server(s) => Some(s),
            _ => None,
        }
    }

    /// Key of the canonical event order.
    pub fn canonical_key(&self) -> (i64, Plane, u64) {
        (self.timestamp_ms, self.plane, self.event_id)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("events always serialize")
    }
}

pub fn canonical_cmp(a: &TelemetryEvent, b: &TelemetryEvent) -> Ordering {
    a.canonical_key().cmp(&b.canonical_key())
}

/// Stable sort by (timestamp_ms, plane, event_id).
pub fn canonical_order(mut events: Vec<TelemetryEvent>) -> Vec<TelemetryEvent> {
    events.sort_by(canonical_cmp);
    events
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerKind {
    /// Raised on observing a 4xx/5xx response.
    AutoStatus,
    /// Raised by the user ("Report Issue").
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureReport {
    pub report_id: String,
    pub failure_time_ms: i64,
    pub trigger: TriggerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triggering_status: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation_id: Option<CorrelationId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
}

impl FailureReport {
    pub fn manual(failure_time_ms: i64, correlation_id: Option<CorrelationId>) -> Self {
        Self {
            report_id: new_id(),
            failure_time_ms,
            trigger: TriggerKind::Manual,
            triggering_status: None,
            correlation_id,
            session_id: None,
        }
    }

    pub fn auto_status(
        failure_time_ms: i64,
        status: u16,
        correlation_id: Option<CorrelationId>,
    ) -> Self {
        Self {
            report_id: new_id(),
            failure_time_ms,
            trigger: TriggerKind::AutoStatus,
            triggering_status: Some(status),
            correlation_id,
            session_id: None,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.report_id.is_empty() {
            return Err(ModelError::EmptyField("report_id"));
        }
        if self.failure_time_ms < 0 {
            return Err(ModelError::NegativeTimestamp(self.failure_time_ms));
        }
        match (self.trigger, self.triggering_status) {
            (TriggerKind::AutoStatus, Some(s)) if (400..=599).contains(&s) => Ok(()),
            (TriggerKind::AutoStatus, Some(s)) => Err(ModelError::InvalidReport(format!(
                "auto_status trigger requires a 4xx/5xx triggering_status, got {s}"
            ))),
            (TriggerKind::AutoStatus, None) => Err(ModelError::InvalidReport(
                "auto_status trigger requires triggering_status".into(),
            )),
            (TriggerKind::Manual, Some(_)) => Err(ModelError::InvalidReport(
                "triggering_status is only allowed with auto_status".into(),
            )),
            (TriggerKind::Manual, None) => Ok(()),
        }
    }
}

pub fn new_id() -> String {
    uuid::Uuid::new_v4().to_string()
}

/// The unified artifact for one failure: trigger, correlated events, contract
/// findings, classification, sanitization summary and explanations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureContextObject {
    pub fco_id: String,
    pub report: FailureReport,
    pub window_ms: i64,
    pub events: Vec<TelemetryEvent>,
    /// Set when the selection was cut down to the configured event cap.
    #[serde(default)]
    pub truncated: bool,
    pub findings: Vec<ContractFinding>,
    pub root_cause: RootCauseClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassificationTrace>,
    pub sanitization_report: Vec<EntityCount>,
    pub explanations: Vec<Explanation>,
}

impl FailureContextObject {
    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("FCO always serializes")
    }
}
