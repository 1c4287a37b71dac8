use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::assurance::Budget;
use crate::audit::{AuditSink, Component, EventKind};
use crate::canonical::lookup_path;
use crate::clock::Tick;
use crate::contracts::{dry_run_authorize, validate_args_with, CapabilityToken, ToolCall, ToolRegistry, ValidationError};
use crate::predicate::Predicate;

/// A reference to an earlier step's output, written `#STEP.path` inside
/// argument templates. An empty path means the whole result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placeholder {
    pub source_step: String,
    pub output_path: String,
}

impl Placeholder {
    pub fn parse(s: &str) -> Option<Placeholder> {
        let body = s.strip_prefix('#')?;
        let (step, path) = body.split_once('.').unwrap_or((body, ""));
        if step.is_empty() || !step.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '-') {
            return None;
        }
        Some(Placeholder {
            source_step: step.to_string(),
            output_path: path.to_string(),
        })
    }

    pub fn is_placeholder(v: &Value) -> bool {
        v.as_str().is_some_and(|s| Placeholder::parse(s).is_some())
    }
}

impl fmt::Display for Placeholder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.output_path.is_empty() {
            write!(f, "#{}", self.source_step)
        } else {
            write!(f, "#{}.{}", self.source_step, self.output_path)
        }
    }
}

/// Every placeholder in a document, in document order.
pub fn placeholders_in(v: &Value) -> Vec<Placeholder> {
    let mut out = Vec::new();
    collect(v, &mut out);
    out
}

fn collect(v: &Value, out: &mut Vec<Placeholder>) {
    match v {
        Value::String(s) => out.extend(Placeholder::parse(s)),
        Value::Array(items) => items.iter().for_each(|i| collect(i, out)),
        Value::Object(map) => map.values().for_each(|i| collect(i, out)),
        _ => {}
    }
}

/// A tool call skeleton; args may hold placeholders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CallTemplate {
    pub tool_name: String,
    pub tool_version: String,
    pub args: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency_key: Option<String>,
}

impl CallTemplate {
    pub fn new(tool_name: impl Into<String>, tool_version: impl Into<String>, args: Value) -> Self {
        Self {
            tool_name: tool_name.into(),
            tool_version: tool_version.into(),
            args,
            idempotency_key: None,
        }
    }

    pub fn with_key(mut self, key: impl Into<String>) -> Self {
        self.idempotency_key = Some(key.into());
        self
    }

    fn skeleton(&self, call_id: &str, issuer: &str) -> ToolCall {
        let mut c = ToolCall::new(call_id, &self.tool_name, &self.tool_version, self.args.clone(), issuer);
        c.idempotency_key = self.idempotency_key.clone();
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanStep {
    pub step_id: String,
    #[serde(default)]
    pub description: String,
    pub call_template: CallTemplate,
    /// Runs the step only when true over prior outputs; a false guard skips
    /// it without error.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<Predicate>,
    #[serde(default)]
    pub preconditions: Vec<Predicate>,
    #[serde(default)]
    pub postconditions: Vec<Predicate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compensation_template: Option<CallTemplate>,
    #[serde(default)]
    pub cost_estimate: u64,
}

impl PlanStep {
    pub fn new(step_id: impl Into<String>, call_template: CallTemplate) -> Self {
        Self {
            step_id: step_id.into(),
            description: String::new(),
            call_template,
            guard: None,
            preconditions: Vec::new(),
            postconditions: Vec::new(),
            compensation_template: None,
            cost_estimate: 0,
        }
    }

    /// Steps this one reads from: placeholder sources and predicate roots
    /// naming other steps.
    pub fn references(&self, step_ids: &BTreeSet<&str>) -> Vec<String> {
        let mut refs: Vec<String> = placeholders_in(&self.call_template.args)
            .into_iter()
            .map(|p| p.source_step)
            .collect();
        if let Some(c) = &self.compensation_template {
            refs.extend(placeholders_in(&c.args).into_iter().map(|p| p.source_step));
        }
        let preds = self.guard.iter().chain(&self.preconditions);
        refs.extend(
            preds
                .map(|p| p.root().to_string())
                .filter(|r| step_ids.contains(r.as_str()) && r != &self.step_id),
        );
        let mut seen = BTreeSet::new();
        refs.retain(|r| seen.insert(r.clone()));
        refs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Plan {
    pub plan_id: String,
    #[serde(default)]
    pub goal_ref: String,
    pub steps: Vec<PlanStep>,
    pub total_cost_estimate: u64,
}

impl Plan {
    /// Builds a plan with the total filled in from the steps.
    pub fn new(plan_id: impl Into<String>, goal_ref: impl Into<String>, steps: Vec<PlanStep>) -> Self {
        let total = steps.iter().map(|s| s.cost_estimate).sum();
        Self {
            plan_id: plan_id.into(),
            goal_ref: goal_ref.into(),
            steps,
            total_cost_estimate: total,
        }
    }

    pub fn step(&self, id: &str) -> Option<&PlanStep> {
        self.steps.iter().find(|s| s.step_id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "error")]
pub enum PlanError {
    DuplicateStep { step_id: String },
    CyclicPlan { steps: Vec<String> },
    DanglingPlaceholder { step_id: String, reference: String, reason: String },
    StepUnauthorized { step_id: String, errors: Vec<ValidationError> },
    MissingCompensation { step_id: String, tool: String },
    TotalCostMismatch { declared: u64, computed: u64 },
    CostExceedsBudget { cost: u64, budget: u64 },
}

impl PlanError {
    pub fn step_id(&self) -> Option<&str> {
        match self {
            PlanError::DuplicateStep { step_id }
            | PlanError::DanglingPlaceholder { step_id, .. }
            | PlanError::StepUnauthorized { step_id, .. }
            | PlanError::MissingCompensation { step_id, .. } => Some(step_id),
            _ => None,
        }
    }
}

/// Steps on some dependency cycle, in plan order.
fn cyclic_steps(plan: &Plan, ids: &BTreeSet<&str>) -> Vec<String> {
    let idx: BTreeMap<&str, usize> = plan.steps.iter().enumerate().map(|(i, s)| (s.step_id.as_str(), i)).collect();
    let edges: Vec<Vec<usize>> = plan
        .steps
        .iter()
        .map(|s| s.references(ids).iter().filter_map(|r| idx.get(r.as_str()).copied()).collect())
        .collect();
    let n = plan.steps.len();
    // reach[i][j]: j reachable from i through one or more edges.
    let mut reach = vec![vec![false; n]; n];
    for (i, out) in edges.iter().enumerate() {
        for &j in out {
            reach[i][j] = true;
        }
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    (0..n).filter(|&i| reach[i][i]).map(|i| plan.steps[i].step_id.clone()).collect()
}

/// Static checks before anything runs: unique ids, acyclicity, placeholder
/// resolvability, per-step validation and dry-run authorization,
/// compensation for actuating steps, and cost. Consumes no token
/// invocations and invokes no adapters.
pub fn validate_plan(
    plan: &Plan,
    registry: &ToolRegistry,
    token: &CapabilityToken,
    budget: &Budget,
    now: Tick,
) -> Result<(), Vec<PlanError>> {
    let mut errors = Vec::new();
    let ids: BTreeSet<&str> = plan.steps.iter().map(|s| s.step_id.as_str()).collect();
    let position: BTreeMap<&str, usize> = plan.steps.iter().enumerate().rev().map(|(i, s)| (s.step_id.as_str(), i)).collect();

    let cycle = cyclic_steps(plan, &ids);
    if !cycle.is_empty() {
        errors.push(PlanError::CyclicPlan { steps: cycle });
    }

    let mut seen = BTreeSet::new();
    let skip = |v: &Value| Placeholder::is_placeholder(v);
    for (i, step) in plan.steps.iter().enumerate() {
        if !seen.insert(step.step_id.as_str()) {
            errors.push(PlanError::DuplicateStep {
                step_id: step.step_id.clone(),
            });
        }
        for r in step.references(&ids) {
            let reason = match position.get(r.as_str()) {
                None => Some("unknown step"),
                Some(&j) if j >= i => Some("step does not precede the reference"),
                Some(&j) => {
                    let src = &plan.steps[j];
                    (src.guard.is_some() && src.guard != step.guard).then_some("source step is conditional")
                }
            };
            if let Some(reason) = reason {
                errors.push(PlanError::DanglingPlaceholder {
                    step_id: step.step_id.clone(),
                    reference: r,
                    reason: reason.into(),
                });
            }
        }

        let tpl = &step.call_template;
        let call = tpl.skeleton(&step.step_id, &token.subject);
        let Some(spec) = registry.get(&tpl.tool_name, &tpl.tool_version) else {
            errors.push(PlanError::StepUnauthorized {
                step_id: step.step_id.clone(),
                errors: vec![ValidationError::new(
                    crate::contracts::ErrorCode::UnknownTool,
                    "tool_name",
                    "registered tool",
                    format!("{}@{}", tpl.tool_name, tpl.tool_version),
                )],
            });
            continue;
        };
        let mut step_errors = validate_args_with(spec, &call, &skip);
        step_errors.extend(dry_run_authorize(&call, spec, token, now, &skip));
        if let Some(comp) = &step.compensation_template {
            match registry.get(&comp.tool_name, &comp.tool_version) {
                Some(cspec) => step_errors.extend(validate_args_with(cspec, &comp.skeleton(&step.step_id, &token.subject), &skip)),
                None => step_errors.push(ValidationError::new(
                    crate::contracts::ErrorCode::UnknownTool,
                    "compensation_template.tool_name",
                    "registered tool",
                    format!("{}@{}", comp.tool_name, comp.tool_version),
                )),
            }
        }
        if !step_errors.is_empty() {
            errors.push(PlanError::StepUnauthorized {
                step_id: step.step_id.clone(),
                errors: step_errors,
            });
        }
        if spec.scope.is_actuating() && step.compensation_template.is_none() {
            errors.push(PlanError::MissingCompensation {
                step_id: step.step_id.clone(),
                tool: spec.name.clone(),
            });
        }
    }

    let computed: u64 = plan.steps.iter().map(|s| s.cost_estimate).fold(0, u64::saturating_add);
    if computed != plan.total_cost_estimate {
        errors.push(PlanError::TotalCostMismatch {
            declared: plan.total_cost_estimate,
            computed,
        });
    }
    if computed > budget.max_cost_units {
        errors.push(PlanError::CostExceedsBudget {
            cost: computed,
            budget: budget.max_cost_units,
        });
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

/// [`validate_plan`] with the verdict recorded in the audit log.
pub fn validate_plan_logged(
    plan: &Plan,
    registry: &ToolRegistry,
    token: &CapabilityToken,
    budget: &Budget,
    now: Tick,
    sink: &dyn AuditSink,
) -> Result<(), Vec<PlanError>> {
    let res = validate_plan(plan, registry, token, budget, now);
    match &res {
        Ok(()) => sink.emit(
            Component::Planner,
            EventKind::PlanValidated,
            json!({"plan": plan, "plan_id": plan.plan_id, "total_cost": plan.total_cost_estimate}),
        ),
        Err(errors) => sink.emit(
            Component::Planner,
            EventKind::PlanRejected,
            json!({"errors": errors, "plan_id": plan.plan_id}),
        ),
    }
    res
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
pub enum BindError {
    #[error("no output recorded for step {0}")]
    MissingOutput(String),
    #[error("output path {0} not found")]
    PathNotFound(String),
}

/// Substitutes placeholders with values from earlier outputs. A string
/// that is exactly one placeholder is replaced by the referenced value.
pub fn bind_value(v: &Value, outputs: &BTreeMap<String, Value>) -> Result<Value, BindError> {
    match v {
        Value::String(s) => match Placeholder::parse(s) {
            None => Ok(v.clone()),
            Some(p) => {
                let doc = outputs
                    .get(&p.source_step)
                    .ok_or_else(|| BindError::MissingOutput(p.source_step.clone()))?;
                lookup_path(doc, &p.output_path)
                    .cloned()
                    .ok_or_else(|| BindError::PathNotFound(p.to_string()))
            }
        },
        Value::Array(items) => items.iter().map(|i| bind_value(i, outputs)).collect::<Result<Vec<_>, _>>().map(Value::Array),
        Value::Object(map) => map
            .iter()
            .map(|(k, i)| bind_value(i, outputs).map(|b| (k.clone(), b)))
            .collect::<Result<serde_json::Map<_, _>, _>>()
            .map(Value::Object),
        other => Ok(other.clone()),
    }
}

pub fn bind_template(
    template: &CallTemplate,
    origin: &str,
    outputs: &BTreeMap<String, Value>,
    call_id: &str,
    issuer: &str,
) -> Result<ToolCall, BindError> {
    let mut call = template.skeleton(call_id, issuer).with_origin(origin);
    call.args = bind_value(&template.args, outputs)?;
    Ok(call)
}

pub fn bind_step(
    step: &PlanStep,
    outputs: &BTreeMap<String, Value>,
    call_id: &str,
    issuer: &str,
) -> Result<ToolCall, BindError> {
    bind_template(&step.call_template, &step.step_id, outputs, call_id, issuer)
}

/// Diagnostic emitted when a plan or step fails; logged, not consumed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairHint {
    pub failed_artifact_ref: String,
    pub diagnostic: String,
}
