//! Goal adoption, execution monitoring and reconsideration.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::supervisor::SupervisorPolicy;
use super::verdict::Verdict;
use crate::audit::{AuditSink, Component, EventKind};
use crate::predicate::Predicate;

/// Measurable objective: a metric name and the predicate that says it is met.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Objective {
    pub metric: String,
    pub target: Predicate,
}

/// A normalized goal document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Goal {
    pub goal_id: String,
    #[serde(default)]
    pub description: String,
    pub objective: Objective,
    #[serde(default)]
    pub constraints: Vec<Predicate>,
    /// Conditions over the observed state that must keep holding while the
    /// goal is pursued.
    #[serde(default)]
    pub preconditions: Vec<Predicate>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed goal: {0}")]
pub struct MalformedGoal(pub String);

impl Goal {
    pub fn from_value(doc: &Value) -> Result<Goal, MalformedGoal> {
        let goal: Goal = serde_json::from_value(doc.clone()).map_err(|e| MalformedGoal(e.to_string()))?;
        goal.check()?;
        Ok(goal)
    }

    pub fn check(&self) -> Result<(), MalformedGoal> {
        if self.goal_id.trim().is_empty() {
            return Err(MalformedGoal("goal_id is empty".into()));
        }
        if self.objective.metric.trim().is_empty() {
            return Err(MalformedGoal("objective has no metric".into()));
        }
        if self.objective.target.path.is_empty() {
            return Err(MalformedGoal("objective target has no path".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntentionStatus {
    Active,
    Suspended,
    Dropped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intention {
    pub intention_id: String,
    pub goal: Goal,
    pub status: IntentionStatus,
    pub adopted_via: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "adoption")]
pub enum Adoption {
    Intention(Intention),
    Reject { reasons: Vec<String> },
}

/// Adopts `goal` iff it is well-formed and the feasibility verdict passes.
pub fn adoption_filter(goal: &Goal, feasibility: &Verdict, sink: &dyn AuditSink) -> Result<Adoption, MalformedGoal> {
    if let Err(e) = goal.check() {
        sink.emit(
            Component::Assurance,
            EventKind::GoalRejected,
            json!({"goal_id": goal.goal_id, "reasons": ["malformed_goal"], "detail": e.0}),
        );
        return Err(e);
    }
    if !feasibility.pass {
        sink.emit(
            Component::Assurance,
            EventKind::GoalRejected,
            json!({"goal_id": goal.goal_id, "reasons": feasibility.reason_codes, "verdict_ref": feasibility.verdict_id}),
        );
        return Ok(Adoption::Reject {
            reasons: feasibility.reason_codes.clone(),
        });
    }
    let intention = Intention {
        intention_id: format!("int-{}", goal.goal_id),
        goal: goal.clone(),
        status: IntentionStatus::Active,
        adopted_via: feasibility.verdict_id.clone(),
    };
    sink.emit(
        Component::Assurance,
        EventKind::GoalAdopted,
        json!({"goal": goal, "intention_id": intention.intention_id, "verdict_ref": feasibility.verdict_id}),
    );
    Ok(Adoption::Intention(intention))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerKind {
    PreconditionViolated,
    NewEvidence,
    RiskChanged,
    PolicyPredicate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconsiderAction {
    Keep,
    Suspend,
    Drop,
}

pub fn default_reconsideration_table() -> BTreeMap<TriggerKind, ReconsiderAction> {
    [
        (TriggerKind::PreconditionViolated, ReconsiderAction::Drop),
        (TriggerKind::NewEvidence, ReconsiderAction::Keep),
        (TriggerKind::RiskChanged, ReconsiderAction::Suspend),
        (TriggerKind::PolicyPredicate, ReconsiderAction::Suspend),
    ]
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trigger {
    pub kind: TriggerKind,
    pub detail: String,
}

/// What the monitor sees after a step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Observation {
    pub state: Value,
    pub new_evidence: bool,
    pub risk: Option<f64>,
    pub baseline_risk: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "signal")]
pub enum MonitorSignal {
    Hold,
    Reconsider(Trigger),
}

/// First firing trigger in the fixed order: violated precondition, new
/// evidence, risk change beyond tolerance, policy predicate.
pub fn execution_monitor(
    intention: &Intention,
    obs: &Observation,
    policy: &SupervisorPolicy,
    sink: &dyn AuditSink,
) -> MonitorSignal {
    let signal = first_trigger(intention, obs, policy)
        .map(MonitorSignal::Reconsider)
        .unwrap_or(MonitorSignal::Hold);
    sink.emit(
        Component::Assurance,
        EventKind::MonitorTrigger,
        json!({"intention_id": intention.intention_id, "signal": signal}),
    );
    signal
}

fn first_trigger(intention: &Intention, obs: &Observation, policy: &SupervisorPolicy) -> Option<Trigger> {
    if let Some(p) = intention.goal.preconditions.iter().find(|p| !p.eval(&obs.state)) {
        return Some(Trigger {
            kind: TriggerKind::PreconditionViolated,
            detail: p.to_string(),
        });
    }
    if obs.new_evidence {
        return Some(Trigger {
            kind: TriggerKind::NewEvidence,
            detail: "new evidence flagged".into(),
        });
    }
    if let (Some(now), Some(base)) = (obs.risk, obs.baseline_risk) {
        if (now - base).abs() > policy.risk_change_tolerance {
            return Some(Trigger {
                kind: TriggerKind::RiskChanged,
                detail: format!("risk {base} -> {now}"),
            });
        }
    }
    policy
        .reconsideration_triggers
        .iter()
        .find(|p| p.eval(&obs.state))
        .map(|p| Trigger {
            kind: TriggerKind::PolicyPredicate,
            detail: p.to_string(),
        })
}

/// Table lookup; unmapped trigger kinds suspend.
pub fn reconsider(
    intention: &Intention,
    trigger: &Trigger,
    policy: &SupervisorPolicy,
    sink: &dyn AuditSink,
) -> (Intention, ReconsiderAction) {
    let action = policy
        .reconsideration_table
        .get(&trigger.kind)
        .copied()
        .unwrap_or(ReconsiderAction::Suspend);
    let mut next = intention.clone();
    next.status = match action {
        ReconsiderAction::Keep => intention.status,
        ReconsiderAction::Suspend => IntentionStatus::Suspended,
        ReconsiderAction::Drop => IntentionStatus::Dropped,
    };
    sink.emit(
        Component::Assurance,
        EventKind::Reconsidered,
        json!({
            "action": action,
            "from": intention.status,
            "intention_id": intention.intention_id,
            "to": next.status,
            "trigger": trigger,
        }),
    );
    (next, action)
}
