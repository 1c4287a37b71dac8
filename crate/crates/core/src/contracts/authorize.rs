use serde_json::Value;

use super::call::{ErrorCode, Permit, ToolCall, ValidatedCall, ValidationError};
use super::schema::{field_at, FieldKind};
use super::spec::ToolSpec;
use super::token::{CapabilityToken, ParamCap};
use super::validate::{describe_value, json_type_name};
use crate::canonical::lookup_path;
use crate::clock::Tick;

/// Authorizes a validated call under `token` at logical time `now`.
///
/// On success returns the permit together with the token after consuming one
/// invocation; the caller keeps the updated token. Errors are reported in a
/// fixed order: allowlist, scope, caps (by path), expiry, exhaustion.
pub fn authorize(
    call: &ValidatedCall,
    spec: &ToolSpec,
    token: &CapabilityToken,
    now: Tick,
) -> Result<(Permit, CapabilityToken), Vec<ValidationError>> {
    let errors = check_grant(call.call(), spec, token, now, &|_| false);
    if !errors.is_empty() {
        return Err(errors);
    }
    let permit = Permit::new(
        call.call().clone(),
        token.token_id.clone(),
        token.subject.clone(),
        spec.scope,
        now,
    );
    Ok((permit, token.consumed()))
}

/// Authorization check that consumes nothing. Cap checks are skipped for
/// values matching `skip` (unbound placeholders).
pub fn dry_run_authorize(
    call: &ToolCall,
    spec: &ToolSpec,
    token: &CapabilityToken,
    now: Tick,
    skip: &dyn Fn(&Value) -> bool,
) -> Vec<ValidationError> {
    check_grant(call, spec, token, now, skip)
}

fn check_grant(
    call: &ToolCall,
    spec: &ToolSpec,
    token: &CapabilityToken,
    now: Tick,
    skip: &dyn Fn(&Value) -> bool,
) -> Vec<ValidationError> {
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
    if !token.allows_tool(&call.tool_name) {
        errors.push(ValidationError::new(
            ErrorCode::ToolNotAllowlisted,
            "tool_name",
            format!("one of [{}]", token.tool_allowlist.join(",")),
            call.tool_name.clone(),
        ));
    }
    if spec.scope > token.scope_ceiling {
        errors.push(ValidationError::new(
            ErrorCode::ScopeExceeded,
            "scope",
            format!("≤{}", token.scope_ceiling),
            spec.scope.to_string(),
        ));
    }
    for (path, cap) in &token.parameter_caps {
        if let Some(err) = check_cap(spec, &call.args, path, cap, skip) {
            errors.push(err);
        }
    }
    if now >= token.expiry {
        errors.push(ValidationError::new(
            ErrorCode::TokenExpired,
            "token.expiry",
            format!("now<{}", token.expiry),
            format!("now={now}"),
        ));
    }
    if token.invocations_used >= token.max_invocations {
        errors.push(ValidationError::new(
            ErrorCode::TokenExhausted,
            "token.invocations_used",
            format!("<{}", token.max_invocations),
            token.invocations_used.to_string(),
        ));
    }
    errors
}

fn check_cap(
    spec: &ToolSpec,
    args: &Value,
    path: &str,
    cap: &ParamCap,
    skip: &dyn Fn(&Value) -> bool,
) -> Option<ValidationError> {
    let value = lookup_path(args, path)?;
    if skip(value) {
        return None;
    }
    let fail = |expected: String| {
        Some(ValidationError::new(ErrorCode::CapExceeded, path, expected, describe_value(value)))
    };
    // Caps are defined for numeric and enumeration fields only.
    if let Some(field) = field_at(&spec.arg_schema, path) {
        if !matches!(field.kind, FieldKind::Integer | FieldKind::Decimal | FieldKind::Enumeration) {
            return fail(format!("cap on a numeric or enumeration field, not {}", field.kind));
        }
    }
    match value {
        Value::Number(n) => {
            if cap.allowed.is_some() && !cap.is_numeric() {
                return fail("enumeration value".into());
            }
            let x = n.as_f64().unwrap_or(f64::NAN);
            if let Some(hi) = cap.max {
                if !(x <= hi) {
                    return fail(format!("≤{hi}"));
                }
            }
            if let Some(lo) = cap.min {
                if !(x >= lo) {
                    return fail(format!("≥{lo}"));
                }
            }
            None
        }
        Value::String(s) => match &cap.allowed {
            Some(allowed) if allowed.contains(s) => None,
            Some(allowed) => fail(format!(
                "one of {{{}}}",
                allowed.iter().cloned().collect::<Vec<_>>().join(",")
            )),
            None => fail("numeric value".into()),
        },
        other => fail(format!("numeric or enumeration value, not {}", json_type_name(other))),
    }
}
