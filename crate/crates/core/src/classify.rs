//! Ordered deterministic root-cause rules, evaluated before any generative
//! step. The first rule whose condition holds decides the class.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::contract::FindingKind;
use crate::model::{FailureContextObject, Severity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootCauseClass {
    FrontendBug,
    InfrastructureIssue,
    BackendException,
    ContractBreach,
    Unclassified,
}

impl fmt::Display for RootCauseClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::FrontendBug => "FrontendBug",
            Self::InfrastructureIssue => "InfrastructureIssue",
            Self::BackendException => "BackendException",
            Self::ContractBreach => "ContractBreach",
            Self::Unclassified => "Unclassified",
        })
    }
}

impl std::str::FromStr for RootCauseClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "FrontendBug" | "frontend_bug" => Self::FrontendBug,
            "InfrastructureIssue" | "infrastructure_issue" => Self::InfrastructureIssue,
            "BackendException" | "backend_exception" => Self::BackendException,
            "ContractBreach" | "contract_breach" => Self::ContractBreach,
            "Unclassified" | "unclassified" => Self::Unclassified,
            other => return Err(format!("unknown root-cause class `{other}`")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RuleId {
    R1,
    R2,
    R3,
    R4,
}

impl RuleId {
    pub const ORDERED: [RuleId; 4] = [RuleId::R1, RuleId::R2, RuleId::R3, RuleId::R4];

    pub fn class(self) -> RootCauseClass {
        match self {
            RuleId::R1 => RootCauseClass::FrontendBug,
            RuleId::R2 => RootCauseClass::InfrastructureIssue,
            RuleId::R3 => RootCauseClass::ContractBreach,
            RuleId::R4 => RootCauseClass::BackendException,
        }
    }

    pub fn condition(self) -> &'static str {
        match self {
            RuleId::R1 => "a Client-Side Schema Violation reports a missing required request field",
            RuleId::R2 => "a network event timed out (no response, or a timing phase over the limit)",
            RuleId::R3 => "a Server-Side Contract Breach or an undocumented response status was found",
            RuleId::R4 => {
                "a server event at Error or above carries a stack trace while a network event has a 5xx status"
            }
        }
    }
}

/// Ordered rule list, one line per rule, as printed by `--explain-rules`.
pub fn describe_rules() -> String {
    let mut out = String::new();
    for r in RuleId::ORDERED {
        out.push_str(&format!("{r:?}  {:<20} if {}\n", r.class().to_string(), r.condition()));
    }
    out.push_str("--  Unclassified         otherwise (escalated to the generative explainer)\n");
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source", content = "id")]
pub enum EvidenceRef {
    Event(u64),
    Finding(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    #[serde(flatten)]
    pub source: EvidenceRef,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationTrace {
    /// `None` serializes as `"none"`: no rule fired.
    #[serde(with = "fired_rule")]
    pub fired_rule: Option<RuleId>,
    pub evidence: Vec<Evidence>,
}

mod fired_rule {
    use super::RuleId;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<RuleId>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(r) => r.serialize(s),
            None => s.serialize_str("none"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<RuleId>, D::Error> {
        let s = String::deserialize(d)?;
        Ok(match s.as_str() {
            "R1" => Some(RuleId::R1),
            "R2" => Some(RuleId::R2),
            "R3" => Some(RuleId::R3),
            "R4" => Some(RuleId::R4),
            "none" => None,
            other => return Err(serde::de::Error::custom(format!("unknown rule `{other}`"))),
        })
    }
}

/// Evidence satisfying one rule's condition; empty when it does not hold.
pub fn rule_evidence(rule: RuleId, fco: &FailureContextObject) -> Vec<Evidence> {
    match rule {
        RuleId::R1 => fco
            .findings
            .iter()
            .enumerate()
            .filter(|(_, f)| f.is_missing_required_request_field())
            .map(|(i, f)| Evidence {
                source: EvidenceRef::Finding(i),
                reason: format!("missing required request field at {}", f.location),
            })
            .collect(),
        RuleId::R2 => fco
            .events
            .iter()
            .filter_map(|e| {
                let n = e.network()?;
                n.timed_out.then(|| Evidence {
                    source: EvidenceRef::Event(e.event_id),
                    reason: if n.status == 0 {
                        format!("{} {} received no response", n.method, n.path)
                    } else {
                        format!("{} {} exceeded the timing limit", n.method, n.path)
                    },
                })
            })
            .collect(),
        RuleId::R3 => fco
            .findings
            .iter()
            .enumerate()
            .filter(|(_, f)| {
                matches!(f.kind, FindingKind::ServerContractBreach | FindingKind::UndocumentedStatus)
            })
            .map(|(i, f)| Evidence { source: EvidenceRef::Finding(i), reason: format!("{}: {}", f.kind, f.location) })
            .collect(),
        RuleId::R4 => {
            let crashes: Vec<Evidence> = fco
                .events
                .iter()
                .filter(|e| e.severity >= Severity::Error)
                .filter_map(|e| {
                    let s = e.server()?;
                    s.stack_trace.as_ref()?;
                    Some(Evidence {
                        source: EvidenceRef::Event(e.event_id),
                        reason: format!("{} logged {:?} with a stack trace", s.service, e.severity),
                    })
                })
                .collect();
            let failures: Vec<Evidence> = fco
                .events
                .iter()
                .filter_map(|e| {
                    let n = e.network()?;
                    n.is_server_error().then(|| Evidence {
                        source: EvidenceRef::Event(e.event_id),
                        reason: format!("{} {} returned {}", n.method, n.path, n.status),
                    })
                })
                .collect();
            if crashes.is_empty() || failures.is_empty() {
                Vec::new()
            } else {
                failures.into_iter().chain(crashes).collect()
            }
        }
    }
}

/// First-match classification over the ordered rule list. Operates only on
/// structured fields and finding kinds.
pub fn classify(fco: &FailureContextObject) -> (RootCauseClass, ClassificationTrace) {
    for rule in RuleId::ORDERED {
        let evidence = rule_evidence(rule, fco);
        if !evidence.is_empty() {
            return (rule.class(), ClassificationTrace { fired_rule: Some(rule), evidence });
        }
    }
    (RootCauseClass::Unclassified, ClassificationTrace { fired_rule: None, evidence: Vec::new() })
}

/// Classifies and records the result on the FCO.
pub fn apply(mut fco: FailureContextObject) -> FailureContextObject {
    let (class, trace) = classify(&fco);
    fco.root_cause = class;
    fco.classification = Some(trace);
    fco
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::{ContractFinding, DefectKind};
    use crate::correlate::{assemble_fco, CorrelationConfig, Selection};
    use crate::model::*;

    fn net(id: u64, status: u16, timed_out: bool) -> TelemetryEvent {
        let mut e = TelemetryEvent::new(
            Payload::Network(NetworkPayload {
                method: "POST".into(),
                path: "/api/v1/data".into(),
                query: None,
                request_headers: vec![],
                request_body: None,
                status,
                response_headers: vec![],
                response_body: None,
                timings: Timings::UNKNOWN,
                timed_out,
            }),
            id as i64,
            crate::ingest::network_severity(status, timed_out),
        );
        e.event_id = id;
        e
    }

    fn server(id: u64, severity: Severity, stack: bool) -> TelemetryEvent {
        let mut e = TelemetryEvent::new(
            Payload::Server(ServerPayload {
                service: "analytics".into(),
                level: "ERROR".into(),
                message: "NullPointerException at Controller.java:45".into(),
                stack_trace: stack.then(|| "java.lang.NullPointerException\n\tat Controller.java:45".into()),
                request_id: None,
            }),
            id as i64,
            severity,
        );
        e.event_id = id;
        e
    }

    fn finding(kind: FindingKind, defect: DefectKind) -> ContractFinding {
        ContractFinding {
            kind,
            defect,
            location: "/chartId".into(),
            expected: String::new(),
            actual: String::new(),
            message: "Required Field Missing".into(),
            event_id: 1,
            route: None,
        }
    }

    fn fco(events: Vec<TelemetryEvent>, findings: Vec<ContractFinding>) -> FailureContextObject {
        assemble_fco(
            Selection { events, truncated: false },
            FailureReport::manual(0, None),
            findings,
            &CorrelationConfig::default(),
        )
    }

    #[test]
    fn scenario_a_frontend_bug() {
        let f = fco(vec![net(1, 400, false)], vec![finding(FindingKind::ClientSchemaViolation, DefectKind::MissingRequiredField)]);
        let (class, trace) = classify(&f);
        assert_eq!(class, RootCauseClass::FrontendBug);
        assert_eq!(trace.fired_rule, Some(RuleId::R1));
        assert_eq!(trace.evidence[0].source, EvidenceRef::Finding(0));
    }

    #[test]
    fn type_mismatch_is_not_scenario_a() {
        let f = fco(vec![], vec![finding(FindingKind::ClientSchemaViolation, DefectKind::TypeMismatch)]);
        assert_eq!(classify(&f).0, RootCauseClass::Unclassified);
    }

    #[test]
    fn scenario_b_infrastructure() {
        let (class, trace) = classify(&fco(vec![net(1, 0, true)], vec![]));
        assert_eq!(class, RootCauseClass::InfrastructureIssue);
        assert_eq!(trace.fired_rule, Some(RuleId::R2));
    }

    #[test]
    fn backend_exception_needs_both_signals() {
        let (class, trace) = classify(&fco(vec![net(1, 500, false), server(2, Severity::Error, true)], vec![]));
        assert_eq!(class, RootCauseClass::BackendException);
        assert_eq!(trace.fired_rule, Some(RuleId::R4));
        assert_eq!(trace.evidence.len(), 2);
        assert_eq!(classify(&fco(vec![server(2, Severity::Error, true)], vec![])).0, RootCauseClass::Unclassified);
        assert_eq!(classify(&fco(vec![net(1, 500, false), server(2, Severity::Error, false)], vec![])).0, RootCauseClass::Unclassified);
        assert_eq!(classify(&fco(vec![net(1, 500, false), server(2, Severity::Warn, true)], vec![])).0, RootCauseClass::Unclassified);
        assert_eq!(classify(&fco(vec![net(1, 404, false), server(2, Severity::Fatal, true)], vec![])).0, RootCauseClass::Unclassified);
    }

    #[test]
    fn first_match_wins() {
        let all = fco(
            vec![net(1, 500, true), server(2, Severity::Error, true)],
            vec![
                finding(FindingKind::ServerContractBreach, DefectKind::NullNotAllowed),
                finding(FindingKind::ClientSchemaViolation, DefectKind::MissingRequiredField),
            ],
        );
        assert_eq!(classify(&all).1.fired_rule, Some(RuleId::R1));
        let no_r1 = fco(all.events.clone(), vec![finding(FindingKind::ServerContractBreach, DefectKind::NullNotAllowed)]);
        assert_eq!(classify(&no_r1).1.fired_rule, Some(RuleId::R2));
        let no_r2 = fco(
            vec![net(1, 500, false), server(2, Severity::Error, true)],
            vec![finding(FindingKind::UndocumentedStatus, DefectKind::UndocumentedStatus)],
        );
        assert_eq!(classify(&no_r2).1.fired_rule, Some(RuleId::R3));
    }

    #[test]
    fn unclassified_trace_is_none() {
        let (class, trace) = classify(&fco(vec![], vec![]));
        assert_eq!(class, RootCauseClass::Unclassified);
        assert_eq!(trace.fired_rule, None);
        assert_eq!(serde_json::to_value(&trace).unwrap()["fired_rule"], "none");
    }

    #[test]
    fn rules_description_lists_all_in_order() {
        let d = describe_rules();
        let pos: Vec<usize> = ["R1", "R2", "R3", "R4", "Unclassified"].iter().map(|k| d.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
    }
}
