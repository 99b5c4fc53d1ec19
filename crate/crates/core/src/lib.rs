//! Multi-source failure debugging engine: collects browser, network and
//! server telemetry, correlates it around a failure trigger into a Failure
//! Context Object, validates HTTP traffic against an OpenAPI contract,
//! classifies the root cause with ordered deterministic rules, and produces
//! sanitized end-user and developer explanations.

pub mod classify;
pub mod config;
pub mod contract;
pub mod correlate;
pub mod explain;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod sanitize;
pub mod scenario;
pub mod store;

pub use classify::{classify, RootCauseClass};
pub use contract::{load_spec, ApiSpec, ContractFinding, FindingKind};
pub use correlate::{select_failure_context, CorrelationConfig};
pub use model::{FailureContextObject, FailureReport, Plane, TelemetryEvent};
pub use pipeline::Engine;
pub use store::EventStore;
