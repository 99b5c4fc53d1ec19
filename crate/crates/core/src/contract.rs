//! OpenAPI 3.x contract validation for captured HTTP exchanges.
//!
//! Only a structural subset is supported: `type`, `required`, `properties`,
//! `items`, `enum`, `nullable` and boolean `additionalProperties`, with
//! `$ref` resolved inside `#/components/schemas`. Composition keywords and
//! format validation are ignored with a recorded warning.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::model::{Body, NetworkPayload, TelemetryEvent};

const HTTP_METHODS: &[&str] = &["get", "put", "post", "delete", "options", "head", "patch", "trace"];

/// Keywords that carry no validation meaning here and are skipped silently.
const ANNOTATION_KEYWORDS: &[&str] = &[
    "description", "title", "example", "examples", "default", "deprecated", "readOnly",
    "writeOnly", "xml", "externalDocs", "discriminator", "$schema", "$id", "$comment",
];

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SpecError {
    #[error("cannot parse specification: {0}")]
    Parse(String),
    #[error("specification has no `paths` object")]
    MissingPaths,
    #[error("cyclic $ref: {0}")]
    CyclicRef(String),
    #[error("malformed schema at {pointer}: {reason}")]
    MalformedSchema { pointer: String, reason: String },
    #[error("duplicate route {method} {template}")]
    DuplicateRoute { method: String, template: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaType {
    Object,
    Array,
    String,
    Number,
    Integer,
    Boolean,
    Null,
}

impl SchemaType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "object" => Self::Object,
            "array" => Self::Array,
            "string" => Self::String,
            "number" => Self::Number,
            "integer" => Self::Integer,
            "boolean" => Self::Boolean,
            "null" => Self::Null,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Object => "object",
            Self::Array => "array",
            Self::String => "string",
            Self::Number => "number",
            Self::Integer => "integer",
            Self::Boolean => "boolean",
            Self::Null => "null",
        }
    }

    fn admits(self, v: &Value) -> bool {
        match self {
            Self::Object => v.is_object(),
            Self::Array => v.is_array(),
            Self::String => v.is_string(),
            Self::Number => v.is_number(),
            Self::Integer => is_integer(v),
            Self::Boolean => v.is_boolean(),
            Self::Null => v.is_null(),
        }
    }
}

fn is_integer(v: &Value) -> bool {
    match v {
        Value::Number(n) => n.is_i64() || n.is_u64() || n.as_f64().is_some_and(|f| f.fract() == 0.0),
        _ => false,
    }
}

pub fn json_type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) if is_integer(v) => "integer",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SchemaNode {
    /// Absent means any type.
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "type")]
    pub schema_type: Option<SchemaType>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub required: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub properties: BTreeMap<String, SchemaNode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub items: Option<Box<SchemaNode>>,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "enum")]
    pub enum_values: Option<Vec<Value>>,
    #[serde(default)]
    pub nullable: bool,
    #[serde(default = "default_true", rename = "additionalProperties")]
    pub additional_properties: bool,
}

fn default_true() -> bool {
    true
}

impl SchemaNode {
    pub fn any() -> Self {
        Self { additional_properties: true, ..Default::default() }
    }

    pub fn of_type(t: SchemaType) -> Self {
        Self { schema_type: Some(t), ..Self::any() }
    }

    fn admits_null(&self) -> bool {
        self.nullable || matches!(self.schema_type, None | Some(SchemaType::Null))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OperationSpec {
    pub required_query_params: Vec<String>,
    pub request_body_required: bool,
    pub request_schema: Option<SchemaNode>,
    /// Keys are exact codes ("200"), class wildcards ("4XX") or "default".
    pub responses: BTreeMap<String, Option<SchemaNode>>,
}

impl OperationSpec {
    /// Exact code, then `NXX`, then `default`.
    pub fn resolve_response(&self, status: u16) -> Option<(&str, Option<&SchemaNode>)> {
        let exact = status.to_string();
        let class = format!("{}XX", status / 100);
        let found = [exact.as_str(), class.as_str(), "default"]
            .into_iter()
            .find_map(|k| self.responses.get_key_value(k));
        found.map(|(k, s)| (k.as_str(), s.as_ref()))
    }
}

/// One (template, method) route.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub template: String,
    pub method: String,
    segments: Vec<Segment>,
    pub operation: OperationSpec,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Segment {
    Literal(String),
    Param,
}

fn parse_template(template: &str) -> Vec<Segment> {
    split_segments(template)
        .map(|s| {
            if s.len() >= 2 && s.starts_with('{') && s.ends_with('}') {
                Segment::Param
            } else {
                Segment::Literal(s.to_string())
            }
        })
        .collect()
}

fn split_segments(path: &str) -> impl Iterator<Item = &str> {
    path.strip_prefix('/').unwrap_or(path).split('/')
}

#[derive(Debug, Default)]
struct TrieNode {
    literal: HashMap<String, TrieNode>,
    param: Option<Box<TrieNode>>,
    /// method -> route index
    routes: HashMap<String, usize>,
}

#[derive(Debug, Default)]
pub struct ApiSpec {
    routes: Vec<Route>,
    trie: TrieNode,
}

impl ApiSpec {
    pub fn routes(&self) -> &[Route] {
        &self.routes
    }

    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }

    fn insert(&mut self, route: Route) -> Result<(), SpecError> {
        let idx = self.routes.len();
        let mut node = &mut self.trie;
        for seg in &route.segments {
            node = match seg {
                Segment::Literal(l) => node.literal.entry(l.clone()).or_default(),
                Segment::Param => node.param.get_or_insert_with(Default::default),
            };
        }
        if node.routes.insert(route.method.clone(), idx).is_some() {
            return Err(SpecError::DuplicateRoute { method: route.method, template: route.template });
        }
        self.routes.push(route);
        Ok(())
    }

    /// Matches segment by segment; a `{name}` segment matches exactly one
    /// non-empty segment and literal segments win over parameters, scanning
    /// left to right. The query string is ignored.
    pub fn match_path(&self, method: &str, path: &str) -> Option<&Route> {
        let path = path.split(['?', '#']).next().unwrap_or(path);
        let method = method.to_ascii_lowercase();
        let segs: Vec<&str> = split_segments(path).collect();
        fn walk(node: &TrieNode, segs: &[&str], method: &str) -> Option<usize> {
            let Some((head, rest)) = segs.split_first() else {
                return node.routes.get(method).copied();
            };
            if let Some(found) = node.literal.get(*head).and_then(|n| walk(n, rest, method)) {
                return Some(found);
            }
            if head.is_empty() {
                return None;
            }
            node.param.as_deref().and_then(|n| walk(n, rest, method))
        }
        walk(&self.trie, &segs, &method).map(|i| &self.routes[i])
    }
}

#[derive(Debug)]
pub struct LoadedSpec {
    pub spec: ApiSpec,
    pub warnings: Vec<String>,
}

/// Loads a JSON or YAML OpenAPI 3.x document.
pub fn load_spec(text: &str) -> Result<LoadedSpec, SpecError> {
    let doc: Value = serde_yaml::from_str(text).map_err(|e| SpecError::Parse(e.to_string()))?;
    load_spec_value(&doc)
}

pub fn load_spec_value(doc: &Value) -> Result<LoadedSpec, SpecError> {
    let paths = doc.get("paths").and_then(Value::as_object).ok_or(SpecError::MissingPaths)?;
    let components = doc
        .get("components")
        .and_then(|c| c.get("schemas"))
        .and_then(Value::as_object);
    let mut loader = Loader { components, warnings: Vec::new(), stack: Vec::new() };
    let mut spec = ApiSpec::default();

    for (template, item) in paths {
        let item_ptr = format!("/paths/{}", escape_pointer(template));
        let item = item.as_object().ok_or_else(|| malformed(&item_ptr, "path item is not an object"))?;
        let shared_params = item.get("parameters");
        for (method, op) in item {
            if !HTTP_METHODS.contains(&method.as_str()) {
                continue;
            }
            let op_ptr = format!("{item_ptr}/{method}");
            let operation = loader.operation(op, shared_params, &op_ptr)?;
            spec.insert(Route {
                template: template.clone(),
                method: method.clone(),
                segments: parse_template(template),
                operation,
            })?;
        }
    }
    Ok(LoadedSpec { spec, warnings: loader.warnings })
}

fn malformed(pointer: &str, reason: impl Into<String>) -> SpecError {
    SpecError::MalformedSchema { pointer: pointer.to_string(), reason: reason.into() }
}

struct Loader<'a> {
    components: Option<&'a serde_json::Map<String, Value>>,
    warnings: Vec<String>,
    stack: Vec<String>,
}

impl Loader<'_> {
    fn operation(
        &mut self,
        op: &Value,
        shared_params: Option<&Value>,
        ptr: &str,
    ) -> Result<OperationSpec, SpecError> {
        let op_obj = op.as_object().ok_or_else(|| malformed(ptr, "operation is not an object"))?;
        let mut out = OperationSpec::default();

        let mut query_params: Vec<(String, bool)> = Vec::new();
        for params in [shared_params, op_obj.get("parameters")].into_iter().flatten() {
            let Some(params) = params.as_array() else {
                return Err(malformed(ptr, "`parameters` is not an array"));
            };
            for p in params {
                if p.get("$ref").is_some() {
                    self.warnings.push(format!("{ptr}: parameter $ref not resolved"));
                    continue;
                }
                if p.get("in").and_then(Value::as_str) != Some("query") {
                    continue;
                }
                let Some(name) = p.get("name").and_then(Value::as_str) else {
                    return Err(malformed(ptr, "query parameter without name"));
                };
                let required = p.get("required").and_then(Value::as_bool).unwrap_or(false);
                // operation-level parameters override path-level ones
                query_params.retain(|(n, _)| n != name);
                query_params.push((name.to_string(), required));
            }
        }
        out.required_query_params =
            query_params.into_iter().filter(|(_, r)| *r).map(|(n, _)| n).collect();

        if let Some(body) = op_obj.get("requestBody") {
            if body.get("$ref").is_some() {
                self.warnings.push(format!("{ptr}/requestBody: $ref not resolved"));
            } else {
                out.request_body_required =
                    body.get("required").and_then(Value::as_bool).unwrap_or(false);
                out.request_schema = self.json_media_schema(body, &format!("{ptr}/requestBody"))?;
            }
        }

        if let Some(responses) = op_obj.get("responses") {
            let responses = responses
                .as_object()
                .ok_or_else(|| malformed(ptr, "`responses` is not an object"))?;
            for (key, resp) in responses {
                let normalized = normalize_status_key(key)
                    .ok_or_else(|| malformed(ptr, format!("unsupported response key `{key}`")))?;
                let rptr = format!("{ptr}/responses/{key}");
                let schema = if resp.get("$ref").is_some() {
                    self.warnings.push(format!("{rptr}: response $ref not resolved"));
                    None
                } else {
                    self.json_media_schema(resp, &rptr)?
                };
                out.responses.insert(normalized, schema);
            }
        }
        Ok(out)
    }

    /// Schema of the first JSON media type under `content`, if any.
    fn json_media_schema(&mut self, holder: &Value, ptr: &str) -> Result<Option<SchemaNode>, SpecError> {
        let Some(content) = holder.get("content").and_then(Value::as_object) else {
            return Ok(None);
        };
        let json_entry = content
            .get("application/json")
            .map(|v| ("application/json", v))
            .or_else(|| content.iter().find(|(k, _)| k.contains("json")).map(|(k, v)| (k.as_str(), v)));
        match json_entry {
            Some((mt, media)) => match media.get("schema") {
                Some(schema) => {
                    Ok(Some(self.schema(schema, &format!("{ptr}/content/{}/schema", escape_pointer(mt)))?))
                }
                None => Ok(None),
            },
            None => Ok(None),
        }
    }

    fn schema(&mut self, v: &Value, ptr: &str) -> Result<SchemaNode, SpecError> {
        if let Value::Bool(b) = v {
            if !*b {
                self.warnings.push(format!("{ptr}: `false` schema treated as unconstrained"));
            }
            return Ok(SchemaNode::any());
        }
        let obj = v.as_object().ok_or_else(|| malformed(ptr, "schema is not an object"))?;

        if let Some(r) = obj.get("$ref") {
            let r = r.as_str().ok_or_else(|| malformed(ptr, "$ref is not a string"))?;
            return self.resolve_ref(r, ptr);
        }

        let mut node = SchemaNode::any();
        for (key, val) in obj {
            let kptr = format!("{ptr}/{}", escape_pointer(key));
            match key.as_str() {
                "type" => match val {
                    Value::String(s) => {
                        node.schema_type = Some(
                            SchemaType::parse(s).ok_or_else(|| malformed(&kptr, format!("unknown type `{s}`")))?,
                        );
                    }
                    Value::Array(ts) => {
                        let mut non_null = Vec::new();
                        for t in ts {
                            let t = t
                                .as_str()
                                .and_then(SchemaType::parse)
                                .ok_or_else(|| malformed(&kptr, "bad entry in type array"))?;
                            if t == SchemaType::Null {
                                node.nullable = true;
                            } else {
                                non_null.push(t);
                            }
                        }
                        match non_null.as_slice() {
                            [] => node.schema_type = Some(SchemaType::Null),
                            [t] => node.schema_type = Some(*t),
                            _ => self
                                .warnings
                                .push(format!("{kptr}: multi-type unions not enforced")),
                        }
                    }
                    _ => return Err(malformed(&kptr, "`type` must be a string or array")),
                },
                "required" => {
                    let names = val.as_array().ok_or_else(|| malformed(&kptr, "`required` is not an array"))?;
                    for n in names {
                        let n = n.as_str().ok_or_else(|| malformed(&kptr, "`required` entry is not a string"))?;
                        if !node.required.iter().any(|r| r == n) {
                            node.required.push(n.to_string());
                        }
                    }
                }
                "properties" => {
                    let props = val.as_object().ok_or_else(|| malformed(&kptr, "`properties` is not an object"))?;
                    for (name, sub) in props {
                        let sub = self.schema(sub, &format!("{kptr}/{}", escape_pointer(name)))?;
                        node.properties.insert(name.clone(), sub);
                    }
                }
                "items" => node.items = Some(Box::new(self.schema(val, &kptr)?)),
                "enum" => {
                    let vals = val.as_array().ok_or_else(|| malformed(&kptr, "`enum` is not an array"))?;
                    node.enum_values = Some(vals.clone());
                }
                "nullable" => {
                    node.nullable |= val.as_bool().ok_or_else(|| malformed(&kptr, "`nullable` is not a boolean"))?;
                }
                "additionalProperties" => match val {
                    Value::Bool(b) => node.additional_properties = *b,
                    Value::Object(_) => self
                        .warnings
                        .push(format!("{kptr}: schema-valued additionalProperties not enforced")),
                    _ => return Err(malformed(&kptr, "`additionalProperties` must be boolean or schema")),
                },
                k if ANNOTATION_KEYWORDS.contains(&k) || k.starts_with("x-") => {}
                other => self.warnings.push(format!("{ptr}: unsupported keyword `{other}` ignored")),
            }
        }
        if !node.additional_properties {
            if let Some(missing) = node.required.iter().find(|r| !node.properties.contains_key(*r)) {
                return Err(malformed(
                    ptr,
                    format!("required `{missing}` is not declared and additionalProperties is false"),
                ));
            }
        }
        Ok(node)
    }

    fn resolve_ref(&mut self, reference: &str, ptr: &str) -> Result<SchemaNode, SpecError> {
        let Some(name) = reference.strip_prefix("#/components/schemas/") else {
            self.warnings.push(format!("{ptr}: $ref `{reference}` outside #/components/schemas not resolved"));
            return Ok(SchemaNode::any());
        };
        let name = unescape_pointer(name);
        if self.stack.contains(&name) {
            let mut chain = self.stack.clone();
            chain.push(name);
            return Err(SpecError::CyclicRef(chain.join(" -> ")));
        }
        let target = self
            .components
            .and_then(|c| c.get(&name))
            .ok_or_else(|| malformed(ptr, format!("dangling $ref `{reference}`")))?;
        self.stack.push(name.clone());
        let resolved = self.schema(target, &format!("/components/schemas/{}", escape_pointer(&name)));
        self.stack.pop();
        resolved
    }
}

fn normalize_status_key(key: &str) -> Option<String> {
    if key == "default" {
        return Some(key.to_string());
    }
    let upper = key.to_ascii_uppercase();
    let b = upper.as_bytes();
    if b.len() != 3 || !(b'1'..=b'5').contains(&b[0]) {
        return None;
    }
    if &upper[1..] == "XX" || (b[1].is_ascii_digit() && b[2].is_ascii_digit()) {
        Some(upper)
    } else {
        None
    }
}

pub fn escape_pointer(token: &str) -> String {
    token.replace('~', "~0").replace('/', "~1")
}

fn unescape_pointer(token: &str) -> String {
    token.replace("~1", "/").replace("~0", "~")
}

// ---------------------------------------------------------------------------
// Document validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectKind {
    MissingRequiredField,
    TypeMismatch,
    NullNotAllowed,
    EnumMismatch,
    UnexpectedProperty,
    MissingRequestBody,
    MissingQueryParameter,
    UndocumentedEndpoint,
    UndocumentedStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Defect {
    pub kind: DefectKind,
    /// JSON pointer from the document root.
    pub location: String,
    pub expected: String,
    pub actual: String,
}

/// Recursive structural validation; reports every defect.
pub fn validate_document(schema: &SchemaNode, document: &Value) -> Vec<Defect> {
    let mut out = Vec::new();
    validate_node(schema, document, &mut String::new(), &mut out);
    out
}

fn validate_node(schema: &SchemaNode, doc: &Value, loc: &mut String, out: &mut Vec<Defect>) {
    if doc.is_null() && !schema.admits_null() {
        out.push(Defect {
            kind: DefectKind::NullNotAllowed,
            location: loc.clone(),
            expected: schema.schema_type.map_or("non-null", SchemaType::as_str).to_string(),
            actual: "null".into(),
        });
    } else if let Some(t) = schema.schema_type {
        if !t.admits(doc) && !(doc.is_null() && schema.nullable) {
            out.push(Defect {
                kind: DefectKind::TypeMismatch,
                location: loc.clone(),
                expected: t.as_str().into(),
                actual: json_type_name(doc).into(),
            });
        }
    }

    if let Some(allowed) = &schema.enum_values {
        let null_ok = doc.is_null() && schema.nullable;
        if !null_ok && !allowed.iter().any(|a| json_equal(a, doc)) {
            out.push(Defect {
                kind: DefectKind::EnumMismatch,
                location: loc.clone(),
                expected: format!("one of {}", Value::Array(allowed.clone())),
                actual: doc.to_string(),
            });
        }
    }

    match doc {
        Value::Object(map) => {
            for name in &schema.required {
                if !map.contains_key(name) {
                    out.push(Defect {
                        kind: DefectKind::MissingRequiredField,
                        location: format!("{loc}/{}", escape_pointer(name)),
                        expected: format!("required property `{name}`"),
                        actual: "absent".into(),
                    });
                }
            }
            for (name, sub) in &schema.properties {
                if let Some(child) = map.get(name) {
                    let len = loc.len();
                    loc.push('/');
                    loc.push_str(&escape_pointer(name));
                    validate_node(sub, child, loc, out);
                    loc.truncate(len);
                }
            }
            if !schema.additional_properties {
                for name in map.keys().filter(|k| !schema.properties.contains_key(*k)) {
                    out.push(Defect {
                        kind: DefectKind::UnexpectedProperty,
                        location: format!("{loc}/{}", escape_pointer(name)),
                        expected: "no additional properties".into(),
                        actual: format!("property `{name}`"),
                    });
                }
            }
        }
        Value::Array(items) => {
            if let Some(item_schema) = &schema.items {
                for (i, item) in items.iter().enumerate() {
                    let len = loc.len();
                    loc.push('/');
                    loc.push_str(&i.to_string());
                    validate_node(item_schema, item, loc, out);
                    loc.truncate(len);
                }
            }
        }
        _ => {}
    }
}

/// JSON equality where 1 and 1.0 compare equal.
fn json_equal(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => match (x.as_i64(), y.as_i64()) {
            (Some(i), Some(j)) => i == j,
            _ => x.as_f64() == y.as_f64(),
        },
        (Value::Array(x), Value::Array(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|(p, q)| json_equal(p, q))
        }
        (Value::Object(x), Value::Object(y)) => {
            x.len() == y.len() && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| json_equal(v, w)))
        }
        _ => a == b,
    }
}

// ---------------------------------------------------------------------------
// Exchange validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    /// Request traffic breaks the contract: the frontend is at fault.
    ClientSchemaViolation,
    /// Response body breaks the declared schema: the backend is at fault.
    ServerContractBreach,
    UndocumentedEndpoint,
    UndocumentedStatus,
}

impl fmt::Display for FindingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ClientSchemaViolation => "Client-Side Schema Violation",
            Self::ServerContractBreach => "Server-Side Contract Breach",
            Self::UndocumentedEndpoint => "Undocumented Endpoint",
            Self::UndocumentedStatus => "Undocumented Status",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractFinding {
    pub kind: FindingKind,
    pub defect: DefectKind,
    pub location: String,
    pub expected: String,
    pub actual: String,
    pub message: String,
    pub event_id: u64,
    /// Matched route template, when one matched.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route: Option<String>,
}

impl ContractFinding {
    /// A missing required request-body property (the "Required Field Missing" case).
    pub fn is_missing_required_request_field(&self) -> bool {
        self.kind == FindingKind::ClientSchemaViolation
            && self.defect == DefectKind::MissingRequiredField
    }

    /// Property name for missing-field findings.
    pub fn field_name(&self) -> Option<String> {
        if self.defect != DefectKind::MissingRequiredField {
            return None;
        }
        self.location.rsplit('/').next().map(unescape_pointer)
    }
}

fn defect_message(side: &str, d: &Defect) -> String {
    let at = if d.location.is_empty() { "/".to_string() } else { d.location.clone() };
    match d.kind {
        DefectKind::MissingRequiredField => {
            format!("Required Field Missing: {side} {} at {at}", d.expected)
        }
        DefectKind::TypeMismatch => {
            format!("{side} type mismatch at {at}: expected {}, got {}", d.expected, d.actual)
        }
        DefectKind::NullNotAllowed => {
            format!("{side} value at {at} is null but the schema does not allow null (expected {})", d.expected)
        }
        DefectKind::EnumMismatch => format!("{side} value at {at} is not {}", d.expected),
        DefectKind::UnexpectedProperty => format!("{side} has unexpected {} at {at}", d.actual),
        _ => format!("{side} defect at {at}"),
    }
}

/// Validates one network exchange. An empty result means fully conformant.
pub fn validate_exchange(spec: &ApiSpec, event: &TelemetryEvent) -> Vec<ContractFinding> {
    let Some(net) = event.network() else {
        return Vec::new();
    };
    validate_network(spec, net, event.event_id)
}

pub fn validate_network(spec: &ApiSpec, net: &NetworkPayload, event_id: u64) -> Vec<ContractFinding> {
    let Some(route) = spec.match_path(&net.method, &net.path) else {
        return vec![ContractFinding {
            kind: FindingKind::UndocumentedEndpoint,
            defect: DefectKind::UndocumentedEndpoint,
            location: String::new(),
            expected: "a documented route".into(),
            actual: format!("{} {}", net.method, net.path),
            message: format!("{} {} is not declared in the API specification", net.method, net.path),
            event_id,
            route: None,
        }];
    };
    let op = &route.operation;
    let mut out = Vec::new();
    let finding = |kind: FindingKind, side: &str, d: Defect| ContractFinding {
        kind,
        defect: d.kind,
        message: defect_message(side, &d),
        location: d.location,
        expected: d.expected,
        actual: d.actual,
        event_id,
        route: Some(route.template.clone()),
    };

    let present: Vec<String> = net
        .query
        .as_deref()
        .map(|q| url::form_urlencoded::parse(q.as_bytes()).map(|(k, _)| k.into_owned()).collect())
        .unwrap_or_default();
    for name in &op.required_query_params {
        if !present.contains(name) {
            out.push(ContractFinding {
                kind: FindingKind::ClientSchemaViolation,
                defect: DefectKind::MissingQueryParameter,
                location: String::new(),
                expected: format!("query parameter `{name}`"),
                actual: "absent".into(),
                message: format!("request is missing required query parameter `{name}`"),
                event_id,
                route: Some(route.template.clone()),
            });
        }
    }

    match (&net.request_body, &op.request_schema) {
        (None, _) if op.request_body_required => out.push(ContractFinding {
            kind: FindingKind::ClientSchemaViolation,
            defect: DefectKind::MissingRequestBody,
            location: String::new(),
            expected: "request body".into(),
            actual: "absent".into(),
            message: "request body is required but was not sent".into(),
            event_id,
            route: Some(route.template.clone()),
        }),
        (Some(Body::Json(doc)), Some(schema)) => {
            for d in validate_document(schema, doc) {
                out.push(finding(FindingKind::ClientSchemaViolation, "request", d));
            }
        }
        _ => {}
    }

    if net.status != 0 {
        match op.resolve_response(net.status) {
            None => out.push(ContractFinding {
                kind: FindingKind::UndocumentedStatus,
                defect: DefectKind::UndocumentedStatus,
                location: String::new(),
                expected: format!("one of {:?}", op.responses.keys().collect::<Vec<_>>()),
                actual: net.status.to_string(),
                message: format!(
                    "{} {} returned status {} which the specification does not declare",
                    net.method, route.template, net.status
                ),
                event_id,
                route: Some(route.template.clone()),
            }),
            Some((_, Some(schema))) => {
                if let Some(Body::Json(doc)) = &net.response_body {
                    for d in validate_document(schema, doc) {
                        out.push(finding(FindingKind::ServerContractBreach, "response", d));
                    }
                }
            }
            Some((_, None)) => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Payload, Severity, Timings};
    use serde_json::json;

    fn fixture() -> ApiSpec {
        load_spec(crate::scenario::FIXTURE_SPEC).unwrap().spec
    }

    fn net_event(method: &str, path: &str, req: Option<Value>, status: u16, resp: Option<Value>) -> TelemetryEvent {
        let (path, query) = crate::ingest::split_url(path).unwrap();
        let mut e = TelemetryEvent::new(
            Payload::Network(NetworkPayload {
                method: method.into(),
                path,
                query,
                request_headers: vec![],
                request_body: req.map(Body::Json),
                status,
                response_headers: vec![],
                response_body: resp.map(Body::Json),
                timings: Timings::UNKNOWN,
                timed_out: false,
            }),
            1,
            Severity::Info,
        );
        e.event_id = 9;
        e
    }

    #[test]
    fn minimal_spec() {
        let s = load_spec(r#"{"openapi":"3.0.0","paths":{"/ping":{"get":{"responses":{"200":{"description":"ok"}}}}}}"#)
            .unwrap();
        assert_eq!(s.spec.len(), 1);
        assert!(s.spec.match_path("GET", "/ping").is_some());
    }

    #[test]
    fn yaml_spec_and_required_field() {
        let spec = fixture();
        let route = spec.match_path("POST", "/api/v1/data").unwrap();
        assert!(route.operation.request_schema.as_ref().unwrap().required.contains(&"chartId".to_string()));
    }

    #[test]
    fn missing_paths_is_error() {
        assert_eq!(load_spec(r#"{"openapi":"3.0.0"}"#).unwrap_err(), SpecError::MissingPaths);
    }

    #[test]
    fn cyclic_ref_is_error() {
        let doc = json!({
            "paths": {"/a": {"get": {"responses": {"200": {"content": {"application/json": {"schema": {"$ref": "#/components/schemas/A"}}}}}}}},
            "components": {"schemas": {
                "A": {"type": "object", "properties": {"b": {"$ref": "#/components/schemas/B"}}},
                "B": {"type": "object", "properties": {"a": {"$ref": "#/components/schemas/A"}}}
            }}
        });
        assert!(matches!(load_spec_value(&doc), Err(SpecError::CyclicRef(_))));
    }

    #[test]
    fn malformed_schema_node() {
        let doc = json!({"paths": {"/a": {"post": {"requestBody": {"content": {"application/json": {"schema": {"type": "widget"}}}}, "responses": {}}}}});
        assert!(matches!(load_spec_value(&doc), Err(SpecError::MalformedSchema { .. })));
        let doc = json!({"paths": {"/a": {"get": {"responses": {"2XY": {}}}}}});
        assert!(matches!(load_spec_value(&doc), Err(SpecError::MalformedSchema { .. })));
    }

    #[test]
    fn unsupported_keywords_warn() {
        let doc = json!({"paths": {"/a": {"post": {"requestBody": {"content": {"application/json": {"schema": {
            "type": "object", "oneOf": [], "properties": {"d": {"type": "string", "format": "date"}}
        }}}}, "responses": {}}}}});
        let loaded = load_spec_value(&doc).unwrap();
        assert!(loaded.warnings.iter().any(|w| w.contains("oneOf")));
        assert!(loaded.warnings.iter().any(|w| w.contains("format")));
    }

    #[test]
    fn duplicate_equivalent_templates_rejected() {
        let doc = json!({"paths": {
            "/r/{a}": {"get": {"responses": {}}},
            "/r/{b}": {"get": {"responses": {}}}
        }});
        assert!(matches!(load_spec_value(&doc), Err(SpecError::DuplicateRoute { .. })));
    }

    #[test]
    fn path_matching_rules() {
        let doc = json!({"paths": {
            "/reports/{id}": {"get": {"responses": {}}},
            "/reports/latest": {"get": {"responses": {}}}
        }});
        let spec = load_spec_value(&doc).unwrap().spec;
        assert_eq!(spec.match_path("GET", "/reports/42").unwrap().template, "/reports/{id}");
        assert_eq!(spec.match_path("get", "/reports/latest?x=1").unwrap().template, "/reports/latest");
        assert!(spec.match_path("GET", "/reports/").is_none());
        assert!(spec.match_path("GET", "/reports/1/2").is_none());
        assert!(spec.match_path("POST", "/reports/1").is_none());
    }

    #[test]
    fn validate_document_basics() {
        assert!(validate_document(&SchemaNode::of_type(SchemaType::Object), &json!({})).is_empty());
        let d = validate_document(&SchemaNode::of_type(SchemaType::Integer), &json!("5"));
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].location, "");
        assert_eq!(d[0].expected, "integer");
        assert_eq!(d[0].actual, "string");
        assert!(validate_document(&SchemaNode::of_type(SchemaType::Integer), &json!(5.0)).is_empty());
    }

    #[test]
    fn conformant_exchange_has_no_findings() {
        let e = net_event(
            "POST",
            "/api/v1/data",
            Some(json!({"chartId": "c-1", "range": "7d"})),
            200,
            Some(json!({"chartId": "c-1", "rows": [{"label": "a", "value": 1.5}]})),
        );
        assert_eq!(validate_exchange(&fixture(), &e), vec![]);
    }

    #[test]
    fn missing_required_request_field() {
        let e = net_event("POST", "/api/v1/data", Some(json!({"range": "7d"})), 400, Some(json!({"error": "bad"})));
        let f = validate_exchange(&fixture(), &e);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].kind, FindingKind::ClientSchemaViolation);
        assert_eq!(f[0].location, "/chartId");
        assert!(f[0].message.contains("Required Field Missing"));
        assert!(f[0].is_missing_required_request_field());
        assert_eq!(f[0].field_name().as_deref(), Some("chartId"));
        assert_eq!(f[0].event_id, 9);
    }

    #[test]
    fn null_for_non_nullable_response_field() {
        let e = net_event(
            "POST",
            "/api/v1/data",
            Some(json!({"chartId": "c-1"})),
            200,
            Some(json!({"chartId": "c-1", "rows": null})),
        );
        let f = validate_exchange(&fixture(), &e);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].kind, FindingKind::ServerContractBreach);
        assert_eq!(f[0].defect, DefectKind::NullNotAllowed);
        assert_eq!(f[0].location, "/rows");
    }

    #[test]
    fn undocumented_endpoint_and_status() {
        let f = validate_exchange(&fixture(), &net_event("GET", "/nope", None, 200, None));
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].kind, FindingKind::UndocumentedEndpoint);
        let f = validate_exchange(&fixture(), &net_event("GET", "/api/v1/reports/7", None, 418, None));
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].kind, FindingKind::UndocumentedStatus);
    }

    #[test]
    fn wildcard_resolution_order() {
        let op = OperationSpec {
            responses: [
                ("404".to_string(), None),
                ("4XX".to_string(), Some(SchemaNode::of_type(SchemaType::Object))),
                ("default".to_string(), None),
            ]
            .into_iter()
            .collect(),
            ..Default::default()
        };
        assert_eq!(op.resolve_response(404).unwrap().0, "404");
        assert_eq!(op.resolve_response(409).unwrap().0, "4XX");
        assert_eq!(op.resolve_response(500).unwrap().0, "default");
    }

    #[test]
    fn non_network_event_yields_nothing() {
        let e = TelemetryEvent::new(
            Payload::Server(crate::model::ServerPayload {
                service: "s".into(),
                level: "ERROR".into(),
                message: "m".into(),
                stack_trace: None,
                request_id: None,
            }),
            1,
            Severity::Error,
        );
        assert!(validate_exchange(&fixture(), &e).is_empty());
    }
}
