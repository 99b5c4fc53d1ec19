//! Failure-context selection around a trigger time.
//!
//! With a correlation id C present, the selection is every event tagged C
//! (regardless of time) plus every *untagged* event inside the window
//! `[T_f - Δt - skew, T_f + Δt + skew]`. Without C it is every event inside
//! the window. Events tagged with a different id are never selected when C
//! is present.

use serde::{Deserialize, Serialize};

use crate::contract::ContractFinding;
use crate::classify::RootCauseClass;
use crate::model::{canonical_cmp, new_id, FailureContextObject, FailureReport, TelemetryEvent};
use crate::store::EventStore;

pub const DEFAULT_WINDOW_MS: i64 = 5_000;
pub const DEFAULT_SKEW_MS: i64 = 250;
pub const DEFAULT_MAX_EVENTS: usize = 500;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("window_ms must be > 0, got {0}")]
    Window(i64),
    #[error("skew_ms must be >= 0, got {0}")]
    Skew(i64),
    #[error("max_events must be > 0")]
    MaxEvents,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrelationConfig {
    pub window_ms: i64,
    pub skew_ms: i64,
    pub max_events: usize,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        Self { window_ms: DEFAULT_WINDOW_MS, skew_ms: DEFAULT_SKEW_MS, max_events: DEFAULT_MAX_EVENTS }
    }
}

impl CorrelationConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.window_ms <= 0 {
            return Err(ConfigError::Window(self.window_ms));
        }
        if self.skew_ms < 0 {
            return Err(ConfigError::Skew(self.skew_ms));
        }
        if self.max_events == 0 {
            return Err(ConfigError::MaxEvents);
        }
        Ok(())
    }

    /// Closed window bounds around `failure_time_ms`, skew included.
    pub fn window(&self, failure_time_ms: i64) -> (i64, i64) {
        let half = self.window_ms.saturating_add(self.skew_ms);
        (failure_time_ms.saturating_sub(half), failure_time_ms.saturating_add(half))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub events: Vec<TelemetryEvent>,
    /// True when the cap removed events.
    pub truncated: bool,
}

/// Selects the failure context for `report` from a consistent store snapshot.
pub fn select_failure_context(
    store: &EventStore,
    report: &FailureReport,
    config: &CorrelationConfig,
) -> Selection {
    let view = store.view();
    let (lo, hi) = config.window(report.failure_time_ms);
    let mut events: Vec<TelemetryEvent> = match &report.correlation_id {
        Some(cid) => {
            let mut tagged = view.query_by_cid(cid);
            tagged.extend(view.window_iter(lo, hi).filter(|e| e.correlation_id.is_none()).cloned());
            tagged
        }
        None => view.window_iter(lo, hi).cloned().collect(),
    };
    drop(view);
    events.sort_by(canonical_cmp);
    cap_events(events, report.failure_time_ms, config.max_events)
}

/// Keeps the `max_events` events nearest to `failure_time_ms` (ties broken
/// by canonical order), returned in canonical order.
pub fn cap_events(events: Vec<TelemetryEvent>, failure_time_ms: i64, max_events: usize) -> Selection {
    if events.len() <= max_events {
        return Selection { events, truncated: false };
    }
    let mut ranked: Vec<(usize, TelemetryEvent)> = events.into_iter().enumerate().collect();
    ranked.sort_by_key(|(pos, e)| ((e.timestamp_ms - failure_time_ms).unsigned_abs(), *pos));
    ranked.truncate(max_events);
    ranked.sort_by_key(|(pos, _)| *pos);
    Selection { events: ranked.into_iter().map(|(_, e)| e).collect(), truncated: true }
}

/// Builds a draft FCO: unclassified, unsanitized, without explanations.
pub fn assemble_fco(
    selection: Selection,
    report: FailureReport,
    findings: Vec<ContractFinding>,
    config: &CorrelationConfig,
) -> FailureContextObject {
    FailureContextObject {
        fco_id: new_id(),
        report,
        window_ms: config.window_ms,
        events: selection.events,
        truncated: selection.truncated,
        findings,
        root_cause: RootCauseClass::Unclassified,
        classification: None,
        sanitization_report: Vec::new(),
        explanations: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CorrelationId, Payload, ServerPayload, Severity};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn ev(ts: i64, cid: Option<&str>) -> TelemetryEvent {
        TelemetryEvent::new(
            Payload::Server(ServerPayload {
                service: "svc".into(),
                level: "INFO".into(),
                message: "m".into(),
                stack_trace: None,
                request_id: None,
            }),
            ts,
            Severity::Info,
        )
        .with_correlation_id(cid.map(|c| CorrelationId::new(c).unwrap()))
    }

    fn report(t: i64, cid: Option<&str>) -> FailureReport {
        FailureReport::manual(t, cid.map(|c| CorrelationId::new(c).unwrap()))
    }

    /// Direct evaluation of the selection predicate over every event.
    fn brute_force(all: &[TelemetryEvent], r: &FailureReport, c: &CorrelationConfig) -> Vec<u64> {
        let lo = r.failure_time_ms - c.window_ms - c.skew_ms;
        let hi = r.failure_time_ms + c.window_ms + c.skew_ms;
        let in_window = |e: &TelemetryEvent| lo <= e.timestamp_ms && e.timestamp_ms <= hi;
        let mut picked: Vec<&TelemetryEvent> = all
            .iter()
            .filter(|e| match &r.correlation_id {
                Some(cid) => e.correlation_id.as_ref() == Some(cid) || (e.correlation_id.is_none() && in_window(e)),
                None => in_window(e),
            })
            .collect();
        picked.sort_by_key(|e| (e.timestamp_ms, e.plane, e.event_id));
        picked.iter().map(|e| e.event_id).collect()
    }

    fn ids(s: &Selection) -> Vec<u64> {
        s.events.iter().map(|e| e.event_id).collect()
    }

    #[test]
    fn empty_store() {
        let s = EventStore::in_memory();
        let sel = select_failure_context(&s, &report(0, Some("abc")), &CorrelationConfig::default());
        assert!(sel.events.is_empty());
        assert!(!sel.truncated);
    }

    #[test]
    fn tagged_events_selected_regardless_of_time() {
        let s = EventStore::in_memory();
        s.append(ev(0, Some("abc"))).unwrap();
        s.append(ev(1_000_000, Some("abc"))).unwrap();
        s.append(ev(1_000_000, Some("xyz"))).unwrap();
        s.append(ev(1_000_100, None)).unwrap();
        s.append(ev(9_000_000, None)).unwrap();
        let sel = select_failure_context(&s, &report(1_000_000, Some("abc")), &CorrelationConfig::default());
        assert_eq!(ids(&sel), [1, 2, 4]);
    }

    #[test]
    fn skew_widens_window_edges() {
        let s = EventStore::in_memory();
        s.append(ev(10_000 - 5_250, None)).unwrap();
        s.append(ev(10_000 - 5_251, None)).unwrap();
        s.append(ev(10_000 + 5_250, None)).unwrap();
        let sel = select_failure_context(&s, &report(10_000, None), &CorrelationConfig::default());
        assert_eq!(ids(&sel), [1, 3]);
    }

    #[test]
    fn randomized_oracle_equivalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let cids = ["a", "b", "c"];
        let s = EventStore::in_memory();
        for _ in 0..300 {
            let cid = if rng.gen_bool(0.4) { None } else { Some(cids[rng.gen_range(0..3)]) };
            s.append(ev(rng.gen_range(0..60_000), cid)).unwrap();
        }
        let all = s.all_events();
        for _ in 0..50 {
            let cid = if rng.gen_bool(0.3) { None } else { Some(cids[rng.gen_range(0..3)]) };
            let r = report(rng.gen_range(0..60_000), cid);
            let c = CorrelationConfig {
                window_ms: rng.gen_range(1..8_000),
                skew_ms: rng.gen_range(0..500),
                max_events: usize::MAX,
            };
            assert_eq!(ids(&select_failure_context(&s, &r, &c)), brute_force(&all, &r, &c));
        }
    }

    #[test]
    fn monotone_in_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = EventStore::in_memory();
        for _ in 0..200 {
            let cid = if rng.gen_bool(0.5) { None } else { Some("a") };
            s.append(ev(rng.gen_range(0..20_000), cid)).unwrap();
        }
        for _ in 0..30 {
            let r = report(rng.gen_range(0..20_000), if rng.gen_bool(0.5) { Some("a") } else { None });
            let small = CorrelationConfig { window_ms: rng.gen_range(1..3_000), skew_ms: 100, max_events: usize::MAX };
            let big = CorrelationConfig { window_ms: small.window_ms + rng.gen_range(0..3_000), ..small };
            let a: HashSet<u64> = ids(&select_failure_context(&s, &r, &small)).into_iter().collect();
            let b: HashSet<u64> = ids(&select_failure_context(&s, &r, &big)).into_iter().collect();
            assert!(a.is_subset(&b));
        }
    }

    #[test]
    fn truncation_keeps_nearest() {
        let s = EventStore::in_memory();
        for t in [0, 100, 480, 500, 520, 900, 1000] {
            s.append(ev(t, None)).unwrap();
        }
        let c = CorrelationConfig { window_ms: 5_000, skew_ms: 0, max_events: 3 };
        let sel = select_failure_context(&s, &report(500, None), &c);
        assert!(sel.truncated);
        let ts: Vec<i64> = sel.events.iter().map(|e| e.timestamp_ms).collect();
        assert_eq!(ts, [480, 500, 520]);
        // equidistant tie: canonical order decides
        let c1 = CorrelationConfig { max_events: 1, ..c };
        let sel = select_failure_context(&s, &report(490, None), &c1);
        assert_eq!(sel.events[0].timestamp_ms, 480);
    }

    #[test]
    fn assemble_draft() {
        let fco = assemble_fco(
            Selection { events: vec![], truncated: false },
            report(1, None),
            vec![],
            &CorrelationConfig::default(),
        );
        assert!(fco.events.is_empty());
        assert_eq!(fco.root_cause, RootCauseClass::Unclassified);
        assert_eq!(fco.window_ms, DEFAULT_WINDOW_MS);
        assert!(fco.explanations.is_empty());
    }

    #[test]
    fn fco_ids_unique_and_events_kept_once() {
        let mut seen = HashSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let n = rng.gen_range(0..5);
            let events: Vec<TelemetryEvent> = (0..n)
                .map(|i| {
                    let mut e = ev(i, None);
                    e.event_id = i as u64 + 1;
                    e
                })
                .collect();
            let fco = assemble_fco(
                Selection { events: events.clone(), truncated: false },
                report(0, None),
                vec![],
                &CorrelationConfig::default(),
            );
            assert_eq!(fco.events, events);
            assert!(seen.insert(fco.fco_id));
        }
    }

    #[test]
    fn config_validation() {
        assert!(CorrelationConfig::default().validate().is_ok());
        assert!(CorrelationConfig { window_ms: 0, ..Default::default() }.validate().is_err());
        assert!(CorrelationConfig { skew_ms: -1, ..Default::default() }.validate().is_err());
        assert!(CorrelationConfig { max_events: 0, ..Default::default() }.validate().is_err());
    }
}
