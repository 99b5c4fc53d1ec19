//! Seeded synthetic telemetry for the failure archetypes, with ground-truth
//! labels, planted PII and decoy events. Output is produced in the raw
//! capture formats (HAR, server-log JSONL, browser-event JSONL) so the
//! ingest parsers are exercised end to end.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::classify::RootCauseClass;
use crate::ingest::{parse_browser_events, parse_har, parse_server_log, IngestOptions, ParseReport};
use crate::model::{
    canonical_order, BrowserEventKind, BrowserPayload, CorrelationId, FailureReport, Payload, Severity,
    TelemetryEvent,
};
use crate::sanitize::EntityKind;

/// OpenAPI document the generated traffic is written against.
pub const FIXTURE_SPEC: &str = include_str!("../fixtures/api_spec.yaml");

pub const BROWSER_FILE: &str = "browser_events.jsonl";
pub const SERVER_FILE: &str = "server_log.jsonl";
pub const HAR_FILE: &str = "network.har";
pub const MANIFEST_FILE: &str = "manifest.json";
/// Copy of [`FIXTURE_SPEC`] so a written scenario can be analyzed on its own.
pub const SPEC_FILE: &str = "api_spec.yaml";

const BASE_EPOCH_MS: i64 = 1_700_000_000_000;
const ORIGIN: &str = "https://dash.example.com";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioName {
    MissingRequiredField,
    NetworkTimeout,
    BackendException,
    ContractBreach,
    Healthy,
    Unclassifiable,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 6] = [
        ScenarioName::MissingRequiredField,
        ScenarioName::NetworkTimeout,
        ScenarioName::BackendException,
        ScenarioName::ContractBreach,
        ScenarioName::Healthy,
        ScenarioName::Unclassifiable,
    ];

    pub fn expected_class(self) -> RootCauseClass {
        match self {
            Self::MissingRequiredField => RootCauseClass::FrontendBug,
            Self::NetworkTimeout => RootCauseClass::InfrastructureIssue,
            Self::BackendException => RootCauseClass::BackendException,
            Self::ContractBreach => RootCauseClass::ContractBreach,
            Self::Healthy | Self::Unclassifiable => RootCauseClass::Unclassified,
        }
    }

    fn index(self) -> u64 {
        Self::ALL.iter().position(|n| *n == self).unwrap() as u64
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for ScenarioName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|n| n.to_string().to_ascii_lowercase() == norm)
            .ok_or_else(|| {
                let names: Vec<String> = Self::ALL.iter().map(|n| n.to_string()).collect();
                format!("unknown scenario `{s}` (expected one of {})", names.join(", "))
            })
    }
}

/// A sensitive value embedded in the generated telemetry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plant {
    pub kind: EntityKind,
    pub value: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoyCounts {
    pub foreign_cid: usize,
    pub untagged_in_window: usize,
    pub untagged_far: usize,
}

/// Ground-truth manifest written next to the generated files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: ScenarioName,
    pub seed: u64,
    pub expected_class: RootCauseClass,
    pub correlation_id: CorrelationId,
    pub report: FailureReport,
    /// Events carrying the target correlation id.
    pub target_events: usize,
    pub decoys: DecoyCounts,
    pub plants: Vec<Plant>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScenario {
    pub manifest: Manifest,
    pub har: Value,
    pub server_log: String,
    pub browser_events: String,
}

impl GeneratedScenario {
    pub fn report(&self) -> &FailureReport {
        &self.manifest.report
    }

    pub fn expected_class(&self) -> RootCauseClass {
        self.manifest.expected_class
    }

    /// Runs the captured files through the ingest parsers.
    pub fn events(&self, opts: &IngestOptions) -> (Vec<TelemetryEvent>, ParseReport) {
        let mut report = ParseReport::default();
        let (mut events, r) = parse_har(&self.har, None, opts).expect("generated HAR is well formed");
        report.merge(r);
        let (server, r) = parse_server_log(&self.server_log);
        events.extend(server);
        report.merge(r);
        let (browser, r) = parse_browser_events(&self.browser_events);
        events.extend(browser);
        report.merge(r);
        (canonical_order(events), report)
    }

    pub fn write_to_dir(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(BROWSER_FILE), &self.browser_events)?;
        std::fs::write(dir.join(SERVER_FILE), &self.server_log)?;
        std::fs::write(dir.join(HAR_FILE), pretty(&self.har))?;
        std::fs::write(dir.join(SPEC_FILE), FIXTURE_SPEC)?;
        std::fs::write(dir.join(MANIFEST_FILE), pretty(&serde_json::to_value(&self.manifest).unwrap()))?;
        Ok(())
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON value serializes");
    s.push('\n');
    s
}

struct Identity {
    user: String,
    email: String,
    ip: String,
    token: String,
}

struct Builder {
    rng: ChaCha8Rng,
    entries: Vec<Value>,
    server: Vec<Value>,
    browser: Vec<TelemetryEvent>,
    target_events: usize,
    decoys: DecoyCounts,
    plants: Vec<Plant>,
}

fn iso(ts: i64) -> String {
    Utc.timestamp_millis_opt(ts).unwrap().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn hex_id(rng: &mut ChaCha8Rng) -> String {
    format!("{:016x}{:016x}", rng.gen::<u64>(), rng.gen::<u64>())
}

struct Exchange<'a> {
    ts: i64,
    cid: Option<&'a str>,
    method: &'a str,
    url: String,
    request_body: Option<Value>,
    status: u16,
    response_body: Option<Value>,
    /// Overrides the generated fast timings.
    timings: Option<Value>,
}

impl Builder {
    fn new(seed: u64, name: ScenarioName) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ name.index()),
            entries: Vec::new(),
            server: Vec::new(),
            browser: Vec::new(),
            target_events: 0,
            decoys: DecoyCounts { foreign_cid: 0, untagged_in_window: 0, untagged_far: 0 },
            plants: Vec::new(),
        }
    }

    fn identity(&mut self) -> Identity {
        const FIRST: [&str; 6] = ["ada", "grace", "linus", "barbara", "ken", "margaret"];
        const LAST: [&str; 6] = ["lovelace", "hopper", "torvalds", "liskov", "thompson", "hamilton"];
        let user = format!("u-{}", self.rng.gen_range(1_000..100_000));
        let email = format!(
            "{}.{}{}@example.org",
            FIRST[self.rng.gen_range(0..FIRST.len())],
            LAST[self.rng.gen_range(0..LAST.len())],
            self.rng.gen_range(1..100)
        );
        let ip = format!(
            "10.{}.{}.{}",
            self.rng.gen_range(0..256),
            self.rng.gen_range(0..256),
            self.rng.gen_range(1..255)
        );
        const ALPHABET: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";
        let token: String = (0..32).map(|_| ALPHABET[self.rng.gen_range(0..ALPHABET.len())] as char).collect();
        let token = format!("eyJ{token}");
        for (kind, value) in [
            (EntityKind::UserId, &user),
            (EntityKind::Email, &email),
            (EntityKind::Ipv4, &ip),
            (EntityKind::BearerToken, &token),
        ] {
            self.plants.push(Plant { kind, value: value.clone() });
        }
        Identity { user, email, ip, token }
    }

    fn fast_timings(&mut self) -> Value {
        json!({
            "blocked": self.rng.gen_range(0..5),
            "dns": -1,
            "connect": self.rng.gen_range(0..20),
            "send": 1,
            "wait": self.rng.gen_range(20..400),
            "receive": self.rng.gen_range(1..30),
        })
    }

    fn exchange(&mut self, x: Exchange<'_>, who: &Identity) {
        let mut headers = vec![
            json!({"name": "Accept", "value": "application/json"}),
            json!({"name": "Authorization", "value": format!("Bearer {}", who.token)}),
            json!({"name": "X-Forwarded-For", "value": who.ip}),
        ];
        if let Some(cid) = x.cid {
            headers.push(json!({"name": "X-Correlation-Id", "value": cid}));
        }
        let mut request = json!({
            "method": x.method,
            "url": format!("{ORIGIN}{}", x.url),
            "httpVersion": "HTTP/1.1",
            "headers": headers,
        });
        if let Some(body) = &x.request_body {
            request["postData"] = json!({"mimeType": "application/json", "text": body.to_string()});
        }
        let mut response = json!({
            "status": x.status,
            "statusText": "",
            "headers": [{"name": "Content-Type", "value": "application/json"}],
            "content": {"mimeType": "application/json"},
        });
        if let Some(body) = &x.response_body {
            response["content"]["text"] = Value::String(body.to_string());
        }
        let timings = match x.timings {
            Some(t) => t,
            None => self.fast_timings(),
        };
        self.entries.push(json!({
            "startedDateTime": iso(x.ts),
            "time": 0,
            "request": request,
            "response": response,
            "timings": timings,
        }));
    }

    fn log(&mut self, ts: i64, cid: Option<&str>, level: &str, service: &str, message: String, stack: Option<String>) {
        let mut line = json!({"ts": ts, "level": level, "service": service, "message": message});
        if let Some(c) = cid {
            line["trace_id"] = Value::String(c.to_string());
        }
        if let Some(s) = stack {
            line["stack"] = Value::String(s);
        }
        self.server.push(line);
    }

    #[allow(clippy::too_many_arguments)]
    fn browser(
        &mut self,
        ts: i64,
        cid: Option<&str>,
        kind: BrowserEventKind,
        severity: Severity,
        message: &str,
        stack: Option<&str>,
        who: &Identity,
    ) {
        let payload = BrowserPayload {
            kind,
            message: message.to_string(),
            stack: stack.map(str::to_string),
            page_url: format!("{ORIGIN}/dashboards/{}?user={}", self.rng.gen_range(1..50), who.user),
            clicked_element: Some("button#refresh-chart".into()),
            state_snapshot: Some(json!({"account": {"email": who.email, "last_ip": who.ip}, "filters": {"range": "7d"}})),
        };
        let e = TelemetryEvent::new(Payload::Browser(payload), ts, severity)
            .with_correlation_id(cid.map(|c| CorrelationId::new(c).expect("generated cid is valid")))
            .with_session_id(Some(format!("s-{:08x}", self.rng.gen::<u32>())));
        self.browser.push(e);
    }

    fn valid_report_body(&mut self) -> Value {
        json!({
            "id": self.rng.gen_range(1..10_000),
            "title": "Weekly revenue",
            "status": "published",
            "owner": null,
        })
    }

    fn add_decoys(&mut self, t_f: i64) {
        let foreign = hex_id(&mut self.rng);
        let other = self.identity();
        // a foreign session failing hard at the same time: would decide the
        // class if it leaked into the context
        let ts = t_f + self.rng.gen_range(-2_000..2_000);
        self.exchange(
            Exchange {
                ts,
                cid: Some(&foreign),
                method: "POST",
                url: "/api/v1/data".into(),
                request_body: Some(json!({"range": "30d"})),
                status: 500,
                response_body: Some(json!({"error": "Internal Server Error"})),
                timings: Some(json!({"blocked": 0, "dns": 0, "connect": 0, "send": 0, "wait": 45_000, "receive": 0})),
            },
            &other,
        );
        self.log(
            ts + 5,
            Some(&foreign),
            "ERROR",
            "analytics-api",
            format!("IllegalStateException while serving {} from {}", other.user, other.ip),
            Some("java.lang.IllegalStateException: pool closed\n\tat com.example.Pool.get(Pool.java:88)".into()),
        );
        self.browser(ts + 40, Some(&foreign), BrowserEventKind::ConsoleError, Severity::Error, "Uncaught TypeError: x is undefined", None, &other);
        self.decoys.foreign_cid += 3;

        // benign untagged traffic inside the window
        let ts = t_f + self.rng.gen_range(-4_000..4_000);
        let body = self.valid_report_body();
        self.exchange(
            Exchange {
                ts,
                cid: None,
                method: "GET",
                url: "/api/v1/reports/latest".into(),
                request_body: None,
                status: 200,
                response_body: Some(body),
                timings: None,
            },
            &other,
        );
        let ts = t_f + self.rng.gen_range(-4_000..4_000);
        self.log(ts, None, "INFO", "scheduler", format!("cache refresh finished for {}", other.email), None);
        self.decoys.untagged_in_window += 2;

        // untagged failures far outside the window
        let far = t_f + if self.rng.gen_bool(0.5) { 1 } else { -1 } * self.rng.gen_range(60_000..600_000);
        self.exchange(
            Exchange {
                ts: far,
                cid: None,
                method: "GET",
                url: "/api/v1/widgets?dashboardId=d-1".into(),
                request_body: None,
                status: 0,
                response_body: None,
                timings: Some(json!({"blocked": -1, "dns": -1, "connect": -1, "send": -1, "wait": -1, "receive": -1})),
            },
            &other,
        );
        self.log(
            far + 3,
            None,
            "FATAL",
            "analytics-api",
            "OutOfMemoryError in report worker".into(),
            Some("java.lang.OutOfMemoryError: Java heap space\n\tat com.example.Worker.run(Worker.java:12)".into()),
        );
        self.decoys.untagged_far += 2;
    }
}

/// Generates the scenario deterministically from `(name, seed)`.
pub fn generate(name: ScenarioName, seed: u64) -> GeneratedScenario {
    let mut b = Builder::new(seed, name);
    let t0 = BASE_EPOCH_MS + b.rng.gen_range(0..86_400_000);
    let cid_str = hex_id(&mut b.rng);
    let cid = Some(cid_str.as_str());
    let who = b.identity();
    let chart_id = format!("ch-{}", b.rng.gen_range(100..999));

    // (failure time, triggering status if auto-triggered)
    let (t_f, trigger): (i64, Option<u16>) = match name {
        ScenarioName::MissingRequiredField => {
            let ts = t0 + b.rng.gen_range(50..500);
            if b.rng.gen_bool(0.5) {
                b.exchange(
                    Exchange {
                        ts,
                        cid,
                        method: "POST",
                        url: "/api/v1/data".into(),
                        request_body: Some(json!({"range": "7d", "userId": who.user})),
                        status: 400,
                        response_body: Some(json!({"error": "chartId is required", "code": 4001})),
                        timings: None,
                    },
                    &who,
                );
            } else {
                let url = format!("/api/v1/widgets/w-{}", b.rng.gen_range(1..99));
                b.exchange(
                    Exchange {
                        ts,
                        cid,
                        method: "PUT",
                        url,
                        request_body: Some(json!({"id": "w-7", "title": "Revenue"})),
                        status: 400,
                        response_body: Some(json!({"error": "type is required"})),
                        timings: None,
                    },
                    &who,
                );
            }
            b.log(ts + 8, cid, "WARN", "analytics-api", format!("rejected request from {} ({}): validation failed", who.user, who.ip), None);
            b.browser(ts + 60, cid, BrowserEventKind::ConsoleError, Severity::Error, "Failed to load chart: request rejected", None, &who);
            b.target_events += 3;
            (ts, Some(400))
        }
        ScenarioName::NetworkTimeout => {
            let ts = t0 + b.rng.gen_range(50..500);
            b.log(ts - 20, cid, "INFO", "gateway", format!("session {} opened from {}", who.user, who.ip), None);
            let url = format!("/api/v1/widgets?dashboardId=d-{}", b.rng.gen_range(1..40));
            let (status, timings, trigger) = if b.rng.gen_bool(0.5) {
                (0, json!({"blocked": 2, "dns": -1, "connect": -1, "send": -1, "wait": -1, "receive": -1}), None)
            } else {
                let wait = b.rng.gen_range(30_001..60_000);
                (504, json!({"blocked": 1, "dns": 3, "connect": 12, "send": 1, "wait": wait, "receive": 0}), Some(504))
            };
            let response_body = (status == 504).then(|| json!({"error": "Gateway Timeout"}));
            b.exchange(Exchange { ts, cid, method: "GET", url, request_body: None, status, response_body, timings: Some(timings) }, &who);
            b.browser(
                ts + 30_000,
                cid,
                BrowserEventKind::UnhandledRejection,
                Severity::Error,
                "Failed to fetch widgets: network request failed",
                None,
                &who,
            );
            b.target_events += 3;
            (ts, trigger)
        }
        ScenarioName::BackendException => {
            let ts = t0 + b.rng.gen_range(50..500);
            b.log(ts + 2, cid, "INFO", "analytics-api", format!("POST /api/v1/data for {} from {}", who.user, who.ip), None);
            b.exchange(
                Exchange {
                    ts,
                    cid,
                    method: "POST",
                    url: "/api/v1/data".into(),
                    request_body: Some(json!({"chartId": chart_id, "range": "7d", "userId": who.user})),
                    status: 500,
                    response_body: Some(json!({"error": "Internal Server Error", "traceId": cid_str})),
                    timings: None,
                },
                &who,
            );
            let log_ts = ts + b.rng.gen_range(5..40);
            b.log(
                log_ts,
                cid,
                "ERROR",
                "analytics-api",
                "NullPointerException at Controller.java:45".into(),
                Some(format!(
                    "java.lang.NullPointerException: user {} has no chart config\n\tat com.example.ChartController.load(Controller.java:45)\n\tat com.example.Router.dispatch(Router.java:210)",
                    who.email
                )),
            );
            let browser_ts = ts + b.rng.gen_range(100..800);
            b.browser(
                browser_ts,
                cid,
                BrowserEventKind::ConsoleError,
                Severity::Error,
                "React Error Boundary caught error",
                Some("Error: Request failed with status code 500\n    at ChartPanel (chart.js:88:13)"),
                &who,
            );
            b.target_events += 4;
            (ts, Some(500))
        }
        ScenarioName::ContractBreach => {
            let ts = t0 + b.rng.gen_range(50..500);
            let report_id = b.rng.gen_range(1..10_000);
            let trigger = if b.rng.gen_bool(0.5) {
                // documented status, response violates the schema
                let body = match b.rng.gen_range(0..3) {
                    0 => json!({"id": report_id, "status": "draft", "owner": who.email}),
                    1 => json!({"id": report_id.to_string(), "title": "Q3", "status": "draft"}),
                    _ => json!({"id": report_id, "title": null, "status": "published"}),
                };
                b.exchange(
                    Exchange {
                        ts,
                        cid,
                        method: "GET",
                        url: format!("/api/v1/reports/{report_id}"),
                        request_body: None,
                        status: 200,
                        response_body: Some(body),
                        timings: None,
                    },
                    &who,
                );
                None
            } else {
                // status the contract does not document
                b.exchange(
                    Exchange {
                        ts,
                        cid,
                        method: "GET",
                        url: "/api/v1/reports/latest".into(),
                        request_body: None,
                        status: 503,
                        response_body: Some(json!({"message": "maintenance"})),
                        timings: None,
                    },
                    &who,
                );
                Some(503)
            };
            b.log(ts + 4, cid, "INFO", "reports-api", format!("served report to {} at {}", who.user, who.ip), None);
            let bts = ts + b.rng.gen_range(50..400);
            b.browser(
                bts,
                cid,
                BrowserEventKind::ConsoleError,
                Severity::Error,
                "Cannot read properties of undefined (reading 'title')",
                None,
                &who,
            );
            b.target_events += 3;
            (if trigger.is_some() { ts } else { bts }, trigger)
        }
        ScenarioName::Healthy => {
            let ts = t0 + b.rng.gen_range(50..500);
            b.exchange(
                Exchange {
                    ts,
                    cid,
                    method: "GET",
                    url: format!("/api/v1/data/{chart_id}"),
                    request_body: None,
                    status: 200,
                    response_body: Some(json!({"chartId": chart_id, "rows": [{"label": "mon", "value": 3.5}, {"label": "tue", "value": null}]})),
                    timings: None,
                },
                &who,
            );
            b.log(ts + 3, cid, "INFO", "analytics-api", format!("chart {chart_id} served to {}", who.user), None);
            let bts = ts + b.rng.gen_range(1_000..3_000);
            b.browser(bts, cid, BrowserEventKind::ManualReport, Severity::Info, "numbers look different from yesterday", None, &who);
            b.target_events += 3;
            (bts, None)
        }
        ScenarioName::Unclassifiable => {
            let ts = t0 + b.rng.gen_range(50..500);
            let (status, body, log_level, log) = if b.rng.gen_bool(0.5) {
                (404, json!({"error": "chart not found"}), "WARN", format!("chart {chart_id} not found for {}", who.user))
            } else {
                (500, json!({"error": "upstream returned garbage", "code": 17}), "ERROR", format!("render failed for {} without exception", who.user))
            };
            b.exchange(
                Exchange {
                    ts,
                    cid,
                    method: "GET",
                    url: format!("/api/v1/data/{chart_id}"),
                    request_body: None,
                    status,
                    response_body: Some(body),
                    timings: None,
                },
                &who,
            );
            b.log(ts + 6, cid, log_level, "analytics-api", log, None);
            b.browser(ts + 90, cid, BrowserEventKind::ConsoleError, Severity::Error, "Chart could not be rendered", None, &who);
            b.target_events += 3;
            (ts, Some(status))
        }
    };

    b.add_decoys(t_f);

    let correlation_id = CorrelationId::new(cid_str.clone()).expect("generated cid is valid");
    let mut report = match trigger {
        Some(status) => FailureReport::auto_status(t_f, status, Some(correlation_id.clone())),
        None => FailureReport::manual(t_f, Some(correlation_id.clone())),
    };
    report.report_id = format!("sim-{name}-{seed}");

    let mut entries = std::mem::take(&mut b.entries);
    entries.sort_by(|x, y| x["startedDateTime"].as_str().cmp(&y["startedDateTime"].as_str()));
    let har = json!({
        "log": {
            "version": "1.2",
            "creator": {"name": "faultline-simulator", "version": env!("CARGO_PKG_VERSION")},
            "entries": entries,
        }
    });
    let mut server = std::mem::take(&mut b.server);
    server.sort_by_key(|l| l["ts"].as_i64());
    let server_log: String = server.iter().map(|l| format!("{l}\n")).collect();
    let browser = canonical_order(std::mem::take(&mut b.browser));
    let browser_events: String = browser.iter().map(|e| format!("{}\n", e.to_json_line())).collect();

    GeneratedScenario {
        manifest: Manifest {
            scenario: name,
            seed,
            expected_class: name.expected_class(),
            correlation_id,
            report,
            target_events: b.target_events,
            decoys: b.decoys,
            plants: b.plants,
        },
        har,
        server_log,
        browser_events,
    }
}
