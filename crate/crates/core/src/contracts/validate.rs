//! Argument validation against a tool's schema.
//!
//! Errors are exhaustive (one per violated field) and ordered by field path,
//! where paths order by schema declaration position first and unknown fields
//! (sorted by name) after the declared ones at the same level.

use serde_json::{Map, Value};

use super::call::{ErrorCode, ToolCall, ValidatedCall, ValidationError};
use super::schema::{FieldKind, FieldSchema};
use super::spec::ToolSpec;
use crate::canonical::canonical_string;

type OrderKey = Vec<(usize, String)>;

struct Collector<'a> {
    errors: Vec<(OrderKey, ValidationError)>,
    skip: &'a dyn Fn(&Value) -> bool,
}

impl Collector<'_> {
    fn push(&mut self, key: &OrderKey, code: ErrorCode, expected: String, actual: String) {
        self.errors
            .push((key.clone(), ValidationError::new(code, render_path(key), expected, actual)));
    }
}

fn render_path(key: &OrderKey) -> String {
    let mut out = String::new();
    for (_, seg) in key {
        if seg.starts_with('[') || out.is_empty() {
            out.push_str(seg);
        } else {
            out.push('.');
            out.push_str(seg);
        }
    }
    out
}

pub(crate) fn json_type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(n) if n.is_i64() || n.is_u64() => "integer",
        Value::Number(_) => "decimal",
        Value::String(_) => "text",
        Value::Array(_) => "list",
        Value::Object(_) => "nested-document",
    }
}

pub(crate) fn describe_value(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => canonical_string(other),
    }
}

fn fmt_bound(x: f64) -> String {
    format!("{x}")
}

/// Validates `call` against `spec`.
pub fn validate_args(spec: &ToolSpec, call: &ToolCall) -> Result<ValidatedCall, Vec<ValidationError>> {
    let errors = validate_args_with(spec, call, &|_| false);
    if errors.is_empty() {
        Ok(ValidatedCall(call.clone()))
    } else {
        Err(errors)
    }
}

/// Like [`validate_args`] but treats any value for which `skip` returns true
/// as satisfying its field. Plan validation uses this to check call
/// templates whose fields hold placeholders.
pub fn validate_args_with(spec: &ToolSpec, call: &ToolCall, skip: &dyn Fn(&Value) -> bool) -> Vec<ValidationError> {
    let mut errors = Vec::new();
    if spec.name != call.tool_name || spec.version != call.tool_version {
        errors.push(ValidationError::new(
            ErrorCode::UnknownTool,
            "tool_name",
            format!("{}@{}", spec.name, spec.version),
            format!("{}@{}", call.tool_name, call.tool_version),
        ));
        return errors;
    }
    let mut c = Collector {
        errors: Vec::new(),
        skip,
    };
    match &call.args {
        Value::Object(map) => check_object(&spec.arg_schema, map, &Vec::new(), &mut c),
        other => c.push(
            &vec![(0, "$".into())],
            ErrorCode::TypeMismatch,
            "nested-document".into(),
            json_type_name(other).into(),
        ),
    }
    c.errors.sort_by(|a, b| a.0.cmp(&b.0));
    errors.extend(c.errors.into_iter().map(|(_, e)| e));
    if spec.requires_idempotency_key && call.idempotency_key.as_deref().is_none_or(str::is_empty) {
        errors.push(ValidationError::new(
            ErrorCode::MissingIdempotencyKey,
            "idempotency_key",
            "non-empty key",
            "absent",
        ));
    }
    errors
}

fn check_object(fields: &[FieldSchema], map: &Map<String, Value>, prefix: &OrderKey, c: &mut Collector<'_>) {
    for (idx, field) in fields.iter().enumerate() {
        let mut key = prefix.clone();
        key.push((idx, field.name.clone()));
        match map.get(&field.name) {
            None => {
                if field.required {
                    c.push(&key, ErrorCode::MissingField, field.kind.to_string(), "absent".into());
                }
            }
            Some(v) => check_value(field, v, &key, c),
        }
    }
    let mut unknown: Vec<&String> = map
        .keys()
        .filter(|k| !fields.iter().any(|f| &f.name == *k))
        .collect();
    unknown.sort();
    for name in unknown {
        let mut key = prefix.clone();
        key.push((usize::MAX, name.clone()));
        c.push(&key, ErrorCode::UnknownField, "absent".into(), describe_value(&map[name]));
    }
}

fn check_value(field: &FieldSchema, v: &Value, key: &OrderKey, c: &mut Collector<'_>) {
    if (c.skip)(v) {
        return;
    }
    let mismatch = |c: &mut Collector<'_>| {
        c.push(key, ErrorCode::TypeMismatch, field.kind.to_string(), json_type_name(v).into())
    };
    match field.kind {
        FieldKind::Integer | FieldKind::Decimal => {
            let Value::Number(n) = v else { return mismatch(c) };
            if field.kind == FieldKind::Integer && !(n.is_i64() || n.is_u64()) {
                return mismatch(c);
            }
            let x = n.as_f64().unwrap_or(f64::NAN);
            if let Some(hi) = field.max {
                if !(x <= hi) {
                    return c.push(key, ErrorCode::OutOfRange, format!("≤{}", fmt_bound(hi)), canonical_string(v));
                }
            }
            if let Some(lo) = field.min {
                if !(x >= lo) {
                    c.push(key, ErrorCode::OutOfRange, format!("≥{}", fmt_bound(lo)), canonical_string(v));
                }
            }
        }
        FieldKind::Text => {
            let Value::String(s) = v else { return mismatch(c) };
            if let Some(n) = field.max_len {
                let len = s.chars().count();
                if len > n {
                    c.push(key, ErrorCode::OutOfRange, format!("length≤{n}"), format!("length={len}"));
                }
            }
        }
        FieldKind::Boolean => {
            if !v.is_boolean() {
                mismatch(c)
            }
        }
        FieldKind::Enumeration => {
            let Value::String(s) = v else { return mismatch(c) };
            if !field.allowed.iter().any(|a| a == s) {
                c.push(
                    key,
                    ErrorCode::NotInEnumeration,
                    format!("one of {{{}}}", field.allowed.join(",")),
                    s.clone(),
                );
            }
        }
        FieldKind::NestedDocument => {
            let Value::Object(map) = v else { return mismatch(c) };
            check_object(&field.children, map, key, c);
        }
        FieldKind::List => {
            let Value::Array(items) = v else { return mismatch(c) };
            let Some(elem) = field.children.first() else { return };
            for (i, item) in items.iter().enumerate() {
                let mut k = key.clone();
                k.push((i, format!("[{i}]")));
                check_value(elem, item, &k, c);
            }
        }
    }
}
