use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::scope::ToolScope;
use crate::canonical::{hash_value, Digest};
use crate::clock::Tick;

/// A proposed tool invocation, typically produced by binding a plan step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolCall {
    pub call_id: String,
    pub tool_name: String,
    pub tool_version: String,
    pub args: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency_key: Option<String>,
    pub issuer: String,
    /// Plan step this call realizes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<String>,
    /// Verdict id of the simulation that cleared this call.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim_verdict_ref: Option<String>,
}

impl ToolCall {
    pub fn new(
        call_id: impl Into<String>,
        tool_name: impl Into<String>,
        tool_version: impl Into<String>,
        args: Value,
        issuer: impl Into<String>,
    ) -> Self {
        Self {
            call_id: call_id.into(),
            tool_name: tool_name.into(),
            tool_version: tool_version.into(),
            args,
            idempotency_key: None,
            issuer: issuer.into(),
            origin: None,
            sim_verdict_ref: None,
        }
    }

    pub fn with_key(mut self, key: impl Into<String>) -> Self {
        self.idempotency_key = Some(key.into());
        self
    }

    pub fn with_origin(mut self, step: impl Into<String>) -> Self {
        self.origin = Some(step.into());
        self
    }

    pub fn with_sim_verdict(mut self, verdict_id: impl Into<String>) -> Self {
        self.sim_verdict_ref = Some(verdict_id.into());
        self
    }

    /// Hash of canonical (tool_name, version, args); the idempotency
    /// fingerprint.
    pub fn fingerprint(&self) -> Digest {
        hash_value(&json!({
            "args": self.args,
            "tool_name": self.tool_name,
            "version": self.tool_version,
        }))
    }
}

/// A call whose arguments conform to its tool's schema. Only
/// [`validate_args`](super::validate_args) constructs one.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedCall(pub(super) ToolCall);

impl ValidatedCall {
    pub fn call(&self) -> &ToolCall {
        &self.0
    }

    pub fn into_call(self) -> ToolCall {
        self.0
    }
}

/// Proof that a validated call was authorized under a capability token.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Permit {
    call: ToolCall,
    token_id: String,
    subject: String,
    scope: ToolScope,
    issued_at: Tick,
}

impl Permit {
    pub(super) fn new(call: ToolCall, token_id: String, subject: String, scope: ToolScope, issued_at: Tick) -> Self {
        Self {
            call,
            token_id,
            subject,
            scope,
            issued_at,
        }
    }

    pub fn call(&self) -> &ToolCall {
        &self.call
    }

    pub fn token_id(&self) -> &str {
        &self.token_id
    }

    pub fn subject(&self) -> &str {
        &self.subject
    }

    pub fn scope(&self) -> ToolScope {
        self.scope
    }

    pub fn issued_at(&self) -> Tick {
        self.issued_at
    }

    /// Attaches the simulation verdict that clears this call for actuation.
    /// The verdict is checked by the gateway, not here.
    pub fn with_sim_verdict(mut self, verdict_id: impl Into<String>) -> Self {
        self.call.sim_verdict_ref = Some(verdict_id.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ErrorCode {
    UnknownTool,
    UnknownField,
    MissingField,
    TypeMismatch,
    OutOfRange,
    NotInEnumeration,
    ScopeExceeded,
    CapExceeded,
    TokenExpired,
    TokenExhausted,
    ToolNotAllowlisted,
    MissingIdempotencyKey,
}

/// Structured refusal detail surfaced back to the proposer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ValidationError {
    pub code: ErrorCode,
    pub path: String,
    pub expected: String,
    pub actual: String,
}

impl ValidationError {
    pub fn new(code: ErrorCode, path: impl Into<String>, expected: impl Into<String>, actual: impl Into<String>) -> Self {
        Self {
            code,
            path: path.into(),
            expected: expected.into(),
            actual: actual.into(),
        }
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?} at {:?}: expected {}, got {}",
            self.code, self.path, self.expected, self.actual
        )
    }
}
