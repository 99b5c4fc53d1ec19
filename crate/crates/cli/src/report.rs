use std::fmt::Write;

use faultline_core::explain::Audience;
use faultline_core::model::{Payload, TelemetryEvent};
use faultline_core::FailureContextObject;

fn event_line(e: &TelemetryEvent) -> String {
    let detail = match &e.payload {
        Payload::Browser(b) => b.message.clone(),
        Payload::Network(n) => {
            let status = if n.timed_out { "timeout".to_string() } else { n.status.to_string() };
            format!("{} {} -> {status}", n.method, n.path)
        }
        Payload::Server(s) => format!("[{}] {}", s.service, s.message),
    };
    let first = detail.lines().next().unwrap_or_default();
    format!("#{:<5} {:>14} {:<8} {:<6} {first}", e.event_id, e.timestamp_ms, e.plane.as_str(), format!("{:?}", e.severity))
}

/// Human-readable summary of an FCO.
pub fn render_report(fco: &FailureContextObject) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Failure report {}", fco.fco_id);
    let cid = fco.report.correlation_id.as_ref().map(|c| c.as_str()).unwrap_or("-");
    let _ = writeln!(out, "  failure time   {} ms (cid {cid})", fco.report.failure_time_ms);
    let rule = fco
        .classification
        .as_ref()
        .and_then(|c| c.fired_rule)
        .map(|r| format!("{r:?}"))
        .unwrap_or_else(|| "none".into());
    let _ = writeln!(out, "  root cause     {} (rule {rule})", fco.root_cause);
    let trunc = if fco.truncated { ", truncated" } else { "" };
    let _ = writeln!(out, "\nEvents ({}{trunc})", fco.events.len());
    for e in &fco.events {
        let _ = writeln!(out, "  {}", event_line(e));
    }
    if !fco.findings.is_empty() {
        let _ = writeln!(out, "\nContract findings ({})", fco.findings.len());
        for f in &fco.findings {
            let loc = if f.location.is_empty() { "(exchange)" } else { f.location.as_str() };
            let _ = writeln!(out, "  #{:<5} {} at {loc}: {}", f.event_id, f.kind, f.message);
        }
    }
    let redacted: usize = fco.sanitization_report.iter().map(|c| c.count).sum();
    if redacted > 0 {
        let kinds: Vec<String> = fco.sanitization_report.iter().map(|c| format!("{} {}", c.count, c.kind)).collect();
        let _ = writeln!(out, "\nRedacted {redacted} value(s): {}", kinds.join(", "));
    }
    for ex in &fco.explanations {
        let label = match ex.audience {
            Audience::EndUser => "End-user explanation",
            Audience::Developer => "Developer explanation",
        };
        let degraded = if ex.degraded { " [fallback]" } else { "" };
        let _ = writeln!(out, "\n{label} (culprit {:?}){degraded}\n  {}", ex.culprit, ex.text);
    }
    out
}
