use serde_json::json;

use super::authorize::authorize;
use super::call::{Permit, ToolCall, ValidatedCall, ValidationError};
use super::spec::ToolSpec;
use super::token::CapabilityToken;
use super::validate::validate_args;
use crate::audit::{AuditSink, Component, EventKind};
use crate::clock::Tick;

/// [`validate_args`] with a `CallValidated` or `CallRejected` event.
pub fn validate_logged(spec: &ToolSpec, call: &ToolCall, sink: &dyn AuditSink) -> Result<ValidatedCall, Vec<ValidationError>> {
    let res = validate_args(spec, call);
    match &res {
        Ok(_) => sink.emit(
            Component::Contracts,
            EventKind::CallValidated,
            json!({"call": call, "fingerprint": call.fingerprint()}),
        ),
        Err(errors) => sink.emit(
            Component::Contracts,
            EventKind::CallRejected,
            json!({"call": call, "errors": errors}),
        ),
    }
    res
}

/// [`authorize`] with a `Permitted` or `Refused` event.
pub fn authorize_logged(
    call: &ValidatedCall,
    spec: &ToolSpec,
    token: &CapabilityToken,
    now: Tick,
    sink: &dyn AuditSink,
) -> Result<(Permit, CapabilityToken), Vec<ValidationError>> {
    let res = authorize(call, spec, token, now);
    let c = call.call();
    match &res {
        Ok((permit, next)) => sink.emit(
            Component::Contracts,
            EventKind::Permitted,
            json!({
                "call_id": c.call_id,
                "invocations_used": next.invocations_used,
                "scope": permit.scope(),
                "step": c.origin,
                "token_id": permit.token_id(),
                "tool": c.tool_name,
            }),
        ),
        Err(errors) => sink.emit(
            Component::Contracts,
            EventKind::Refused,
            json!({"call_id": c.call_id, "errors": errors, "step": c.origin, "token_id": token.token_id, "tool": c.tool_name}),
        ),
    }
    res
}
