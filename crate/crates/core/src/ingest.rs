//! Parsers for the three telemetry sources: HAR archives (network plane),
//! server log lines (JSON or plain text), and browser SDK event documents.
//!
//! Individual malformed entries are rejected and counted in a [`ParseReport`];
//! only a structurally absent container is a hard error.

use std::sync::LazyLock;

use chrono::DateTime;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::model::{
    Body, CorrelationId, Header, NetworkPayload, Payload, Plane, ServerPayload, Severity,
    TelemetryEvent, Timings,
};

pub const DEFAULT_CORRELATION_HEADER: &str = "X-Correlation-Id";
pub const DEFAULT_PHASE_TIMEOUT_MS: i64 = 30_000;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestOptions {
    pub correlation_header: String,
    /// A network event is flagged `timed_out` when any timing phase exceeds this.
    pub phase_timeout_ms: i64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            correlation_header: DEFAULT_CORRELATION_HEADER.to_string(),
            phase_timeout_ms: DEFAULT_PHASE_TIMEOUT_MS,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub accepted: usize,
    pub rejected: usize,
    pub rejections: Vec<Rejection>,
}

impl ParseReport {
    pub fn accept(&mut self) {
        self.accepted += 1;
    }

    pub fn reject(&mut self, index: usize, reason: impl Into<String>) {
        self.rejected += 1;
        self.rejections.push(Rejection { index, reason: reason.into() });
    }

    pub fn total(&self) -> usize {
        self.accepted + self.rejected
    }

    pub fn merge(&mut self, other: ParseReport) {
        self.accepted += other.accepted;
        self.rejected += other.rejected;
        self.rejections.extend(other.rejections);
    }
}

// ---------------------------------------------------------------------------
// HAR
// ---------------------------------------------------------------------------

/// One network event per `log.entries[*]`.
pub fn parse_har(
    document: &Value,
    session_id: Option<&str>,
    opts: &IngestOptions,
) -> Result<(Vec<TelemetryEvent>, ParseReport), IngestError> {
    let entries = document
        .get("log")
        .and_then(|l| l.get("entries"))
        .ok_or_else(|| IngestError::MalformedDocument("missing `log.entries`".into()))?
        .as_array()
        .ok_or_else(|| IngestError::MalformedDocument("`log.entries` is not an array".into()))?;

    let mut events = Vec::with_capacity(entries.len());
    let mut report = ParseReport::default();
    for (idx, entry) in entries.iter().enumerate() {
        match har_entry_to_event(entry, opts) {
            Ok(ev) => {
                report.accept();
                events.push(ev.with_session_id(session_id.map(str::to_string)));
            }
            Err(reason) => report.reject(idx, reason),
        }
    }
    Ok((events, report))
}

fn har_entry_to_event(entry: &Value, opts: &IngestOptions) -> Result<TelemetryEvent, String> {
    let started = entry
        .get("startedDateTime")
        .and_then(Value::as_str)
        .ok_or("missing startedDateTime")?;
    let timestamp_ms = parse_iso8601_ms(started)
        .ok_or_else(|| format!("unparseable startedDateTime `{started}`"))?;
    if timestamp_ms < 0 {
        return Err("startedDateTime before Unix epoch".into());
    }

    let request = entry.get("request").ok_or("missing request")?;
    let method = request.get("method").and_then(Value::as_str).ok_or("missing request.method")?;
    let raw_url = request.get("url").and_then(Value::as_str).ok_or("missing request.url")?;
    let (path, query) = split_url(raw_url).ok_or_else(|| format!("unparseable url `{raw_url}`"))?;
    let request_headers = har_headers(request.get("headers"));
    let request_body = request.get("postData").and_then(|pd| {
        let text = pd.get("text").and_then(Value::as_str)?;
        let mime = pd.get("mimeType").and_then(Value::as_str);
        Some(Body::from_content(text, mime))
    });

    let response = entry.get("response").ok_or("missing response")?;
    let status = response
        .get("status")
        .and_then(Value::as_i64)
        .ok_or("missing response.status")?;
    let status = u16::try_from(status)
        .ok()
        .filter(|s| *s <= 599)
        .ok_or_else(|| format!("response.status {status} outside 0..=599"))?;
    let response_headers = har_headers(response.get("headers"));
    let response_body = response.get("content").and_then(|c| {
        let text = c.get("text").and_then(Value::as_str)?;
        let mime = c.get("mimeType").and_then(Value::as_str);
        Some(Body::from_content(text, mime))
    });

    let timings = entry.get("timings").map(har_timings).unwrap_or(Timings::UNKNOWN);
    let timed_out = status == 0 || timings.slowest_over(opts.phase_timeout_ms).is_some();

    let correlation_id = request_headers
        .iter()
        .find(|h| h.name.eq_ignore_ascii_case(&opts.correlation_header))
        .and_then(|h| CorrelationId::new(h.value.trim()).ok());

    let severity = network_severity(status, timed_out);
    let payload = NetworkPayload {
        method: method.to_ascii_uppercase(),
        path,
        query,
        request_headers,
        request_body,
        status,
        response_headers,
        response_body,
        timings,
        timed_out,
    };
    Ok(TelemetryEvent::new(Payload::Network(payload), timestamp_ms, severity)
        .with_correlation_id(correlation_id))
}

pub fn network_severity(status: u16, timed_out: bool) -> Severity {
    if timed_out || status == 0 || status >= 500 {
        Severity::Error
    } else if status >= 400 {
        Severity::Warn
    } else {
        Severity::Info
    }
}

fn har_headers(v: Option<&Value>) -> Vec<Header> {
    v.and_then(Value::as_array)
        .map(|hs| {
            hs.iter()
                .filter_map(|h| {
                    let name = h.get("name")?.as_str()?;
                    let value = h.get("value").and_then(Value::as_str).unwrap_or_default();
                    Some(Header::new(name, value))
                })
                .collect()
        })
        .unwrap_or_default()
}

fn har_timings(v: &Value) -> Timings {
    let phase = |name: &str| -> i64 {
        match v.get(name).and_then(Value::as_f64) {
            Some(d) if d >= 0.0 => d.round() as i64,
            _ => -1,
        }
    };
    Timings {
        blocked: phase("blocked"),
        dns: phase("dns"),
        connect: phase("connect"),
        send: phase("send"),
        wait: phase("wait"),
        receive: phase("receive"),
    }
}

/// Splits an absolute or origin-relative URL into (path, query).
pub fn split_url(raw: &str) -> Option<(String, Option<String>)> {
    if raw.starts_with('/') {
        let without_fragment = raw.split('#').next().unwrap_or(raw);
        let (path, query) = match without_fragment.split_once('?') {
            Some((p, q)) => (p, Some(q.to_string())),
            None => (without_fragment, None),
        };
        return Some((path.to_string(), query.filter(|q| !q.is_empty())));
    }
    let url = url::Url::parse(raw).ok()?;
    Some((url.path().to_string(), url.query().filter(|q| !q.is_empty()).map(str::to_string)))
}

pub fn parse_iso8601_ms(s: &str) -> Option<i64> {
    DateTime::parse_from_rfc3339(s.trim()).ok().map(|dt| dt.timestamp_millis())
}

// ---------------------------------------------------------------------------
// Server logs
// ---------------------------------------------------------------------------

static PLAIN_LOG_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?P<ts>\S+)\s+(?P<level>[A-Za-z]+)\s+\[(?P<service>[^\]]+)\]\s+(?P<msg>.+)$")
        .expect("static regex")
});

/// Parses one server log line. JSON objects are mapped field by field with
/// the alias precedence `ts` > `timestamp`, `stack` > `stack_trace`,
/// `trace_id` > `correlation_id`. Anything else must match
/// `<ISO8601> <LEVEL> [<service>] <message>`.
pub fn parse_server_log_line(line: &str) -> Result<TelemetryEvent, String> {
    let line = line.trim_end_matches(['\r', '\n']);
    if line.trim().is_empty() {
        return Err("empty line".into());
    }
    match serde_json::from_str::<Value>(line) {
        Ok(Value::Object(obj)) => server_event_from_json(&obj),
        Ok(_) => Err("JSON value is not an object".into()),
        Err(_) if line.trim_start().starts_with('{') => Err("malformed JSON object".into()),
        Err(_) => server_event_from_plain(line),
    }
}

fn first_present<'a>(obj: &'a Map<String, Value>, keys: &[&str]) -> Option<&'a Value> {
    keys.iter().find_map(|k| obj.get(*k).filter(|v| !v.is_null()))
}

fn server_event_from_json(obj: &Map<String, Value>) -> Result<TelemetryEvent, String> {
    let ts_value = first_present(obj, &["ts", "timestamp"]).ok_or("missing timestamp")?;
    let timestamp_ms = match ts_value {
        Value::Number(n) => n.as_i64().ok_or("timestamp is not an integer")?,
        Value::String(s) => parse_iso8601_ms(s).ok_or_else(|| format!("unparseable timestamp `{s}`"))?,
        _ => return Err("timestamp has wrong type".into()),
    };
    if timestamp_ms < 0 {
        return Err("negative timestamp".into());
    }

    let message = first_present(obj, &["message"])
        .and_then(Value::as_str)
        .filter(|m| !m.is_empty())
        .ok_or("missing message")?;
    let level = match first_present(obj, &["level"]) {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err("level has wrong type".into()),
        None => "INFO".to_string(),
    };
    let severity =
        Severity::from_level(&level).ok_or_else(|| format!("unknown level `{level}`"))?;
    let service = first_present(obj, &["service"])
        .and_then(Value::as_str)
        .unwrap_or("unknown")
        .to_string();
    let stack_trace =
        first_present(obj, &["stack", "stack_trace"]).and_then(Value::as_str).map(str::to_string);
    let correlation_id = match first_present(obj, &["trace_id", "correlation_id"]) {
        Some(Value::String(s)) => {
            Some(CorrelationId::new(s.as_str()).map_err(|e| e.to_string())?)
        }
        Some(_) => return Err("correlation id has wrong type".into()),
        None => None,
    };
    let request_id = first_present(obj, &["request_id"]).and_then(|v| match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    });

    let payload = ServerPayload { service, level, message: message.to_string(), stack_trace, request_id };
    Ok(TelemetryEvent::new(Payload::Server(payload), timestamp_ms, severity)
        .with_correlation_id(correlation_id))
}

fn server_event_from_plain(line: &str) -> Result<TelemetryEvent, String> {
    let caps = PLAIN_LOG_LINE.captures(line).ok_or("unrecognized log line format")?;
    let ts = &caps["ts"];
    let timestamp_ms =
        parse_iso8601_ms(ts).ok_or_else(|| format!("unparseable timestamp `{ts}`"))?;
    if timestamp_ms < 0 {
        return Err("negative timestamp".into());
    }
    let level = caps["level"].to_string();
    let severity =
        Severity::from_level(&level).ok_or_else(|| format!("unknown level `{level}`"))?;
    let payload = ServerPayload {
        service: caps["service"].trim().to_string(),
        level,
        message: caps["msg"].trim().to_string(),
        stack_trace: None,
        request_id: None,
    };
    Ok(TelemetryEvent::new(Payload::Server(payload), timestamp_ms, severity))
}

/// Parses a whole server log file, one entry per non-blank line.
pub fn parse_server_log(text: &str) -> (Vec<TelemetryEvent>, ParseReport) {
    let mut events = Vec::new();
    let mut report = ParseReport::default();
    for (idx, line) in text.lines().enumerate() {
        match parse_server_log_line(line) {
            Ok(ev) => {
                report.accept();
                events.push(ev);
            }
            Err(reason) => report.reject(idx, reason),
        }
    }
    (events, report)
}

// ---------------------------------------------------------------------------
// Browser events
// ---------------------------------------------------------------------------

const BROWSER_MANDATORY: &[&str] = &["plane", "timestamp_ms", "severity", "payload"];
const BROWSER_PAYLOAD_MANDATORY: &[&str] = &["kind", "message", "page_url"];

/// Validates one document against the canonical wire format with
/// `plane = browser`. Unknown extra fields are ignored.
pub fn parse_browser_event(document: &Value) -> Result<TelemetryEvent, String> {
    let obj = document.as_object().ok_or("event is not a JSON object")?;
    for field in BROWSER_MANDATORY {
        if obj.get(*field).is_none_or(Value::is_null) {
            return Err(format!("missing field `{field}`"));
        }
    }
    match obj.get("plane").and_then(Value::as_str) {
        Some("browser") => {}
        Some(other) => return Err(format!("plane mismatch: expected browser, got `{other}`")),
        None => return Err("field `plane` is not a string".into()),
    }
    let payload = obj["payload"].as_object().ok_or("field `payload` is not an object")?;
    for field in BROWSER_PAYLOAD_MANDATORY {
        if payload.get(*field).is_none_or(Value::is_null) {
            return Err(format!("missing field `payload.{field}`"));
        }
    }
    serde_json::from_value::<TelemetryEvent>(document.clone()).map_err(|e| format!("invalid event: {e}"))
}

/// Parses canonical events of any plane from a wire document, requiring the
/// given plane. Used for network events posted in wire format.
pub fn parse_wire_event(document: &Value, plane: Plane) -> Result<TelemetryEvent, String> {
    if plane == Plane::Browser {
        return parse_browser_event(document);
    }
    let got = document.get("plane").and_then(Value::as_str).ok_or("missing field `plane`")?;
    if got != plane.as_str() {
        return Err(format!("plane mismatch: expected {plane}, got `{got}`"));
    }
    serde_json::from_value::<TelemetryEvent>(document.clone()).map_err(|e| format!("invalid event: {e}"))
}

/// Parses a JSONL stream of browser events.
pub fn parse_browser_events(text: &str) -> (Vec<TelemetryEvent>, ParseReport) {
    parse_jsonl(text, Plane::Browser)
}

/// Parses a JSONL stream of canonical events on one plane. Blank lines are
/// skipped and not counted.
pub fn parse_jsonl(text: &str, plane: Plane) -> (Vec<TelemetryEvent>, ParseReport) {
    let mut events = Vec::new();
    let mut report = ParseReport::default();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<Value>(line)
            .map_err(|e| format!("malformed JSON: {e}"))
            .and_then(|doc| parse_wire_event(&doc, plane));
        match parsed {
            Ok(ev) => {
                report.accept();
                events.push(ev);
            }
            Err(reason) => report.reject(idx, reason),
        }
    }
    (events, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn har_entry(ts: &str, url: &str, status: i64) -> Value {
        json!({
            "startedDateTime": ts,
            "time": 120.5,
            "request": {
                "method": "post",
                "url": url,
                "headers": [{"name": "x-correlation-id", "value": "abc"}],
                "postData": {"mimeType": "application/json", "text": "{\"chartId\": 7}"}
            },
            "response": {
                "status": status,
                "headers": [],
                "content": {"mimeType": "application/json", "text": "{\"error\":\"boom\"}"}
            },
            "timings": {"blocked": -1, "dns": 0, "connect": 3.4, "send": 1, "wait": 100.6, "receive": 2}
        })
    }

    #[test]
    fn empty_har() {
        let (events, report) =
            parse_har(&json!({"log": {"entries": []}}), None, &IngestOptions::default()).unwrap();
        assert!(events.is_empty());
        assert_eq!(report.accepted, 0);
        assert_eq!(report.rejected, 0);
    }

    #[test]
    fn har_without_entries_is_malformed() {
        assert!(parse_har(&json!({"log": {}}), None, &IngestOptions::default()).is_err());
        assert!(parse_har(&json!([]), None, &IngestOptions::default()).is_err());
    }

    #[test]
    fn har_entry_maps_fields() {
        let doc = json!({"log": {"entries": [har_entry(
            "2023-11-14T22:13:20.000Z", "https://dash.example.com/api/v1/data?range=7d", 500)]}});
        let (events, report) = parse_har(&doc, Some("s1"), &IngestOptions::default()).unwrap();
        assert_eq!(report.accepted, 1);
        let ev = &events[0];
        assert_eq!(ev.plane, Plane::Network);
        assert_eq!(ev.timestamp_ms, 1_700_000_000_000);
        assert_eq!(ev.correlation_id.as_ref().unwrap().as_str(), "abc");
        assert_eq!(ev.session_id.as_deref(), Some("s1"));
        assert_eq!(ev.severity, Severity::Error);
        let n = ev.network().unwrap();
        assert_eq!(n.method, "POST");
        assert_eq!(n.path, "/api/v1/data");
        assert_eq!(n.query.as_deref(), Some("range=7d"));
        assert_eq!(n.status, 500);
        assert_eq!(n.timings.blocked, -1);
        assert_eq!(n.timings.connect, 3);
        assert_eq!(n.timings.wait, 101);
        assert!(!n.timed_out);
        assert_eq!(n.request_body, Some(Body::Json(json!({"chartId": 7}))));
    }

    #[test]
    fn har_timeout_detection() {
        let mut status0 = har_entry("2023-11-14T22:13:20Z", "/a", 0);
        status0["timings"] = json!({"send": 0, "wait": -1, "receive": -1});
        let mut slow = har_entry("2023-11-14T22:13:20Z", "/a", 200);
        slow["timings"]["wait"] = json!(30_001);
        let mut exact = har_entry("2023-11-14T22:13:20Z", "/a", 200);
        exact["timings"]["wait"] = json!(30_000);
        let doc = json!({"log": {"entries": [status0, slow, exact]}});
        let (events, _) = parse_har(&doc, None, &IngestOptions::default()).unwrap();
        let flags: Vec<bool> = events.iter().map(|e| e.network().unwrap().timed_out).collect();
        assert_eq!(flags, [true, true, false]);
    }

    #[test]
    fn correlation_header_is_configurable() {
        let mut e = har_entry("2023-11-14T22:13:20Z", "/a", 200);
        e["request"]["headers"] = json!([{"name": "TRACEPARENT", "value": "tp-1"}]);
        let doc = json!({"log": {"entries": [e]}});
        let opts = IngestOptions { correlation_header: "traceparent".into(), ..Default::default() };
        let (events, _) = parse_har(&doc, None, &opts).unwrap();
        assert_eq!(events[0].correlation_id.as_ref().unwrap().as_str(), "tp-1");
    }

    #[test]
    fn server_json_line() {
        let ev = parse_server_log_line(
            r#"{"ts":1700000000000,"level":"ERROR","service":"analytics","message":"NullPointerException at Controller.java:45","trace_id":"abc"}"#,
        )
        .unwrap();
        assert_eq!(ev.plane, Plane::Server);
        assert_eq!(ev.severity, Severity::Error);
        assert_eq!(ev.correlation_id.as_ref().unwrap().as_str(), "abc");
        assert!(ev.server().unwrap().message.contains("NullPointerException at Controller.java:45"));
    }

    #[test]
    fn server_alias_precedence() {
        let ev = parse_server_log_line(
            r#"{"timestamp":"2023-11-14T22:13:20Z","ts":5,"message":"m","stack":"a","stack_trace":"b","correlation_id":"c2","trace_id":"c1"}"#,
        )
        .unwrap();
        assert_eq!(ev.timestamp_ms, 5);
        assert_eq!(ev.server().unwrap().stack_trace.as_deref(), Some("a"));
        assert_eq!(ev.correlation_id.unwrap().as_str(), "c1");
        let ev = parse_server_log_line(
            r#"{"timestamp":"2023-11-14T22:13:20Z","message":"m","stack_trace":"b","correlation_id":"c2"}"#,
        )
        .unwrap();
        assert_eq!(ev.timestamp_ms, 1_700_000_000_000);
        assert_eq!(ev.server().unwrap().stack_trace.as_deref(), Some("b"));
        assert_eq!(ev.correlation_id.unwrap().as_str(), "c2");
    }

    #[test]
    fn server_plain_line() {
        let ev = parse_server_log_line("2023-11-14T22:13:20.500Z WARN [gateway] upstream slow").unwrap();
        assert_eq!(ev.timestamp_ms, 1_700_000_000_500);
        assert_eq!(ev.severity, Severity::Warn);
        let s = ev.server().unwrap();
        assert_eq!(s.service, "gateway");
        assert_eq!(s.message, "upstream slow");
    }

    #[test]
    fn server_rejections() {
        assert_eq!(parse_server_log_line("").unwrap_err(), "empty line");
        assert_eq!(parse_server_log_line("   ").unwrap_err(), "empty line");
        assert!(parse_server_log_line("hello world").is_err());
        assert!(parse_server_log_line("[1,2]").is_err());
        assert!(parse_server_log_line("{\"ts\":1,").is_err());
        assert!(parse_server_log_line(r#"{"message":"no ts"}"#).unwrap_err().contains("timestamp"));
        assert!(parse_server_log_line(r#"{"ts":1}"#).unwrap_err().contains("message"));
        assert!(parse_server_log_line("2023-11-14T22:13:20Z LOUD [x] y").is_err());
    }

    fn browser_doc() -> Value {
        json!({
            "v": 1,
            "plane": "browser",
            "timestamp_ms": 1_700_000_000_100i64,
            "correlation_id": "abc",
            "severity": "error",
            "extra": "ignored",
            "payload": {
                "kind": "console_error",
                "message": "React Error Boundary caught error",
                "page_url": "https://dash.example.com/reports",
                "unknown": true
            }
        })
    }

    #[test]
    fn browser_event_well_formed() {
        let ev = parse_browser_event(&browser_doc()).unwrap();
        assert_eq!(ev.browser().unwrap().message, "React Error Boundary caught error");
    }

    #[test]
    fn browser_plane_mismatch() {
        let mut d = browser_doc();
        d["plane"] = json!("server");
        assert!(parse_browser_event(&d).unwrap_err().contains("plane mismatch"));
    }

    #[test]
    fn browser_manual_report_needs_message() {
        let mut d = browser_doc();
        d["payload"]["kind"] = json!("manual_report");
        d["payload"]["message"] = json!("");
        assert!(parse_browser_event(&d).is_err());
    }

    #[test]
    fn browser_mutation_harness_names_dropped_field() {
        let base = browser_doc();
        for field in BROWSER_MANDATORY {
            let mut d = base.clone();
            d.as_object_mut().unwrap().remove(*field);
            let err = parse_browser_event(&d).unwrap_err();
            assert!(err.contains(field), "{field}: {err}");
        }
        for field in BROWSER_PAYLOAD_MANDATORY {
            let mut d = base.clone();
            d["payload"].as_object_mut().unwrap().remove(*field);
            let err = parse_browser_event(&d).unwrap_err();
            assert!(err.contains(field), "{field}: {err}");
        }
    }

    #[test]
    fn jsonl_counts_add_up() {
        let good = browser_doc().to_string();
        let text = format!("{good}\nnot json\n\n{good}\n{{\"plane\":\"browser\"}}\n");
        let (events, report) = parse_browser_events(&text);
        assert_eq!(events.len(), 2);
        assert_eq!(report.accepted, 2);
        assert_eq!(report.rejected, 2);
        assert_eq!(report.total(), 4);
    }
}
