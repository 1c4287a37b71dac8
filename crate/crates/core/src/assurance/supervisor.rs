use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::bdi::{ReconsiderAction, TriggerKind};
use super::verdict::Verdict;
use crate::audit::{AuditSink, Component, EventKind};
use crate::contracts::{ToolCall, ToolScope};
use crate::predicate::Predicate;

/// Operating mode of the kernel. `Normal` is the least restrictive; the
/// degraded modes only ever narrow what may run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatingMode {
    Normal,
    Shadow,
    ReadOnly,
    MonitorOnly,
}

impl OperatingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            OperatingMode::Normal => "normal",
            OperatingMode::Shadow => "shadow",
            OperatingMode::ReadOnly => "read_only",
            OperatingMode::MonitorOnly => "monitor_only",
        }
    }

    /// Highest scope a call may have in this mode.
    pub fn scope_ceiling(self) -> ToolScope {
        match self {
            OperatingMode::Normal => ToolScope::ActuateIrreversible,
            OperatingMode::Shadow => ToolScope::Simulate,
            OperatingMode::ReadOnly | OperatingMode::MonitorOnly => ToolScope::ReadOnly,
        }
    }
}

impl fmt::Display for OperatingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_degraded_modes() -> Vec<OperatingMode> {
    vec![OperatingMode::MonitorOnly, OperatingMode::ReadOnly, OperatingMode::Shadow]
}

fn default_escalation_target() -> String {
    "operator".into()
}

fn default_risk_tolerance() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupervisorPolicy {
    pub risk_threshold: f64,
    /// Degraded modes, safest first.
    #[serde(default = "default_degraded_modes")]
    pub degraded_modes: Vec<OperatingMode>,
    #[serde(default = "default_escalation_target")]
    pub escalation_target: String,
    #[serde(default)]
    pub reconsideration_triggers: Vec<Predicate>,
    #[serde(default = "super::bdi::default_reconsideration_table")]
    pub reconsideration_table: BTreeMap<TriggerKind, ReconsiderAction>,
    /// Absolute risk change that counts as a `risk_changed` trigger.
    #[serde(default = "default_risk_tolerance")]
    pub risk_change_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("risk_threshold must lie in [0, 1]")]
    ThresholdOutOfRange,
    #[error("degraded_modes must be distinct and must not contain normal")]
    BadModeList,
    #[error("risk_change_tolerance must be a non-negative number")]
    BadTolerance,
}

impl SupervisorPolicy {
    pub fn with_threshold(risk_threshold: f64) -> Self {
        Self {
            risk_threshold,
            degraded_modes: default_degraded_modes(),
            escalation_target: default_escalation_target(),
            reconsideration_triggers: Vec::new(),
            reconsideration_table: super::bdi::default_reconsideration_table(),
            risk_change_tolerance: default_risk_tolerance(),
        }
    }

    pub fn check(&self) -> Result<(), PolicyError> {
        if !(0.0..=1.0).contains(&self.risk_threshold) {
            return Err(PolicyError::ThresholdOutOfRange);
        }
        let mut seen = self.degraded_modes.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.degraded_modes.len() || seen.contains(&OperatingMode::Normal) {
            return Err(PolicyError::BadModeList);
        }
        if !(self.risk_change_tolerance >= 0.0) {
            return Err(PolicyError::BadTolerance);
        }
        Ok(())
    }

    /// Safety rank: `Normal` is 0, the last listed degraded mode 1, the
    /// first listed (safest) `len`. Unlisted modes are unreachable.
    pub fn safety_rank(&self, mode: OperatingMode) -> Option<usize> {
        if mode == OperatingMode::Normal {
            return Some(0);
        }
        let n = self.degraded_modes.len();
        self.degraded_modes.iter().position(|m| *m == mode).map(|i| n - i)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Escalation {
    pub target: String,
    pub subject_ref: String,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "decision")]
pub enum SupervisorDecision {
    Authorize,
    SafeHalt { explanation: String, escalation: Escalation },
}

impl SupervisorDecision {
    pub fn is_authorize(&self) -> bool {
        matches!(self, SupervisorDecision::Authorize)
    }
}

fn verdict_covers(verdict: &Verdict, call: &ToolCall) -> bool {
    verdict.subject_ref == call.call_id || call.origin.as_deref() == Some(verdict.subject_ref.as_str())
}

/// Pure decision: authorize iff the risk estimate is valid and within the
/// threshold and a passing verdict covers the call. A halt names every
/// violated condition.
pub fn supervise_action(
    call: &ToolCall,
    risk: f64,
    verdict: Option<&Verdict>,
    policy: &SupervisorPolicy,
) -> SupervisorDecision {
    let mut reasons = Vec::new();
    let mut parts = Vec::new();
    if !(0.0..=1.0).contains(&risk) {
        reasons.push("risk_invalid".to_string());
        parts.push(format!("risk estimate {risk} is outside [0, 1]"));
    } else if risk > policy.risk_threshold {
        reasons.push("risk_above_threshold".to_string());
        parts.push(format!(
            "predicted risk {risk} exceeds threshold {}",
            policy.risk_threshold
        ));
    }
    match verdict {
        None => {
            reasons.push("missing_verdict".to_string());
            parts.push("no verdict covers the call".to_string());
        }
        Some(v) if !verdict_covers(v, call) => {
            reasons.push("missing_verdict".to_string());
            parts.push(format!("verdict {} judges {}, not this call", v.verdict_id, v.subject_ref));
        }
        Some(v) if !v.pass => {
            reasons.push("verifier_rejected".to_string());
            parts.push(format!(
                "verifier rejected the call: {}",
                v.reason_codes.join(", ")
            ));
        }
        Some(_) => {}
    }
    if reasons.is_empty() {
        return SupervisorDecision::Authorize;
    }
    SupervisorDecision::SafeHalt {
        explanation: format!("{} {}: {}", call.tool_name, call.call_id, parts.join("; ")),
        escalation: Escalation {
            target: policy.escalation_target.clone(),
            subject_ref: call.origin.clone().unwrap_or_else(|| call.call_id.clone()),
            reasons,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModeError {
    #[error("transition {from} -> {to} is not toward a safer mode")]
    NotSafer { from: OperatingMode, to: OperatingMode },
    #[error("mode {0} is not configured")]
    Unconfigured(OperatingMode),
}

/// Stateful supervisor: current mode plus the safe-halt latch. Every
/// decision lands in the audit log.
#[derive(Debug, Clone)]
pub struct Supervisor {
    policy: SupervisorPolicy,
    mode: OperatingMode,
    halted: bool,
}

impl Supervisor {
    pub fn new(policy: SupervisorPolicy) -> Result<Self, PolicyError> {
        policy.check()?;
        Ok(Self {
            policy,
            mode: OperatingMode::Normal,
            halted: false,
        })
    }

    pub fn policy(&self) -> &SupervisorPolicy {
        &self.policy
    }

    pub fn mode(&self) -> OperatingMode {
        self.mode
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    /// Whether a call of `scope` may run under the current mode and latch.
    pub fn permits_scope(&self, scope: ToolScope) -> bool {
        if self.halted && scope.is_actuating() {
            return false;
        }
        scope <= self.mode.scope_ceiling()
    }

    pub fn review(
        &mut self,
        call: &ToolCall,
        risk: f64,
        verdict: Option<&Verdict>,
        sink: &dyn AuditSink,
    ) -> SupervisorDecision {
        let decision = supervise_action(call, risk, verdict, &self.policy);
        sink.emit(
            Component::Assurance,
            EventKind::SupervisorDecision,
            json!({
                "call_id": call.call_id,
                "decision": decision,
                "risk": risk,
                "step": call.origin,
                "threshold": self.policy.risk_threshold,
                "tool": call.tool_name,
                "verdict_ref": verdict.map(|v| v.verdict_id.clone()),
            }),
        );
        if let SupervisorDecision::SafeHalt { explanation, escalation } = &decision {
            self.latch(explanation, escalation, sink);
        }
        decision
    }

    /// Safe-halt raised outside an action review (validation failure,
    /// compensation failure, reconsideration drop).
    pub fn halt(
        &mut self,
        subject_ref: &str,
        reasons: Vec<String>,
        explanation: impl Into<String>,
        sink: &dyn AuditSink,
    ) -> SupervisorDecision {
        let explanation = explanation.into();
        let escalation = Escalation {
            target: self.policy.escalation_target.clone(),
            subject_ref: subject_ref.to_string(),
            reasons,
        };
        self.latch(&explanation, &escalation, sink);
        SupervisorDecision::SafeHalt { explanation, escalation }
    }

    fn latch(&mut self, explanation: &str, escalation: &Escalation, sink: &dyn AuditSink) {
        self.halted = true;
        sink.emit(
            Component::Assurance,
            EventKind::SafeHalt,
            json!({"explanation": explanation, "mode": self.mode, "subject_ref": escalation.subject_ref}),
        );
        sink.emit(Component::Assurance, EventKind::Escalation, json!({ "escalation": escalation }));
    }

    /// Moves to a strictly safer configured mode.
    pub fn degrade(&mut self, to: OperatingMode, reason: &str, sink: &dyn AuditSink) -> Result<(), ModeError> {
        let to_rank = self.policy.safety_rank(to).ok_or(ModeError::Unconfigured(to))?;
        let from_rank = self.policy.safety_rank(self.mode).unwrap_or(0);
        if to_rank <= from_rank {
            return Err(ModeError::NotSafer { from: self.mode, to });
        }
        sink.emit(
            Component::Assurance,
            EventKind::ModeChange,
            json!({"from": self.mode, "reason": reason, "to": to}),
        );
        self.mode = to;
        Ok(())
    }

    /// Operator-authorized mode change in any direction; clears the latch.
    pub fn operator_override(&mut self, operator: &str, to: OperatingMode, reason: &str, sink: &dyn AuditSink) {
        sink.emit(
            Component::Assurance,
            EventKind::OperatorOverride,
            json!({"from": self.mode, "operator": operator, "reason": reason, "to": to}),
        );
        self.mode = to;
        self.halted = false;
    }
}
