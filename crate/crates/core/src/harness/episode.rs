//! The diagnosis episode: goal adoption, plan validation, gated stepwise
//! execution, memory writes and compaction, all on one audit chain.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::config::{FaultMode, Scenario};
use super::planner::diagnosis_plan;
use super::tools::{mock_adapters, registry, tool_specs, FaultAdapter, TOOL_VERSION};
use crate::assurance::{
    adoption_filter, check_budget_logged, execution_monitor, reconsider, verify, Adoption, BudgetDecision, BudgetLedger,
    Finding, FnVerifier, Intention, MonitorSignal, Observation, OperatingMode, ReconsiderAction, StopCode, Subject,
    SubjectKind, Supervisor, SupervisorDecision, Trigger, TriggerKind, Verdict, WhyStopped,
};
use crate::audit::{
    AuditEvent, AuditSink, Component, EpisodeFactory, EpisodeTrace, EventKind, Playback, Recorder, TraceHeader, TraceKind,
    TRACE_FORMAT,
};
use crate::canonical::{hash_of, lookup_path, Digest, HashAlgorithm};
use crate::clock::LogicalClock;
use crate::contracts::{authorize_logged, validate_logged, CapabilityToken, ToolCall, ToolRegistry};
use crate::gateway::{compensate, Gateway, GatewayOutcome, OutcomeStatus, PlaybackAdapter, SagaLog, SagaStatus, ToolAdapter};
use crate::memory::{compact, EpisodeSummarizer, MemoryRecord, MemoryStore, RecordKind, Tier, WritePolicy, WriterCapability};
use crate::planner::{bind_step, bind_template, validate_plan_logged, Plan, PlanError, PlanStep};

/// Where adapter replies come from.
#[derive(Debug, Clone)]
pub enum AdapterSource {
    /// Fixture-backed mocks with the configured faults applied.
    Live,
    /// Recorded replies from a trace.
    Playback(Playback),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode_id: String,
    pub why_stopped: WhyStopped,
    /// Actuating steps that completed, as `step:tool`.
    pub actions_taken: Vec<String>,
    /// Steps whose actuation was undone during a safe-halt.
    pub compensated: Vec<String>,
    pub escalations: usize,
    pub exit_code: i32,
}

#[derive(Debug, Clone)]
pub struct EpisodeRun {
    pub trace: EpisodeTrace,
    pub summary: EpisodeSummary,
}

pub fn trace_header(scenario: &Scenario, seed: u64, config_path: Option<String>) -> TraceHeader {
    TraceHeader {
        format: TRACE_FORMAT.into(),
        kind: TraceKind::Episode,
        episode_id: scenario.config.episode_id.clone(),
        seed,
        hash_algorithm: HashAlgorithm::Sha256,
        config_hash: scenario.config_hash(),
        registry_hash: registry_hash(),
        policy_hash: hash_of(&scenario.config.supervisor_policy),
        component_versions: crate::component_versions(),
        config_path,
    }
}

pub fn registry_hash() -> Digest {
    hash_of(&tool_specs())
}

/// Why execution stopped early.
enum Stop {
    Budget(WhyStopped),
    Rejected(WhyStopped),
    Safety {
        subject: String,
        reasons: Vec<String>,
        explanation: String,
        degrade_to: Option<OperatingMode>,
        latched: bool,
    },
}

impl Stop {
    fn safety(subject: &str, reasons: Vec<String>, explanation: impl Into<String>, degrade_to: Option<OperatingMode>) -> Self {
        Stop::Safety {
            subject: subject.to_string(),
            reasons,
            explanation: explanation.into(),
            degrade_to,
            latched: false,
        }
    }
}

/// Failures the episode can retry past or wait out degrade to read-only
/// advice; anything else leaves the asset monitor-only.
fn degraded_mode_for(outcome: &GatewayOutcome, transient: bool) -> OperatingMode {
    match outcome.status {
        OutcomeStatus::TimedOut | OutcomeStatus::RateLimited => OperatingMode::ReadOnly,
        OutcomeStatus::ToolError if transient => OperatingMode::ReadOnly,
        _ => OperatingMode::MonitorOnly,
    }
}

fn codes<T: Serialize>(errors: &[T], key: &str) -> Vec<String> {
    let mut out: Vec<String> = errors
        .iter()
        .filter_map(|e| serde_json::to_value(e).ok()?.get(key)?.as_str().map(str::to_string))
        .collect();
    out.dedup();
    out
}

struct Episode<'a> {
    scenario: &'a Scenario,
    seed: u64,
    sink: &'a Recorder,
    clock: LogicalClock,
    registry: Arc<ToolRegistry>,
    gateway: Gateway,
    supervisor: Supervisor,
    token: CapabilityToken,
    ledger: BudgetLedger,
    saga: SagaLog,
    outputs: BTreeMap<String, Value>,
    state: Map<String, Value>,
    bound_calls: BTreeMap<String, u32>,
    actions: Vec<String>,
    compensated: Vec<String>,
    store: MemoryStore,
    memory_seq: u32,
}

impl<'a> Episode<'a> {
    fn new(scenario: &'a Scenario, seed: u64, source: AdapterSource, sink: &'a Recorder) -> Self {
        let cfg = &scenario.config;
        let clock = sink.clock().clone();
        let registry = Arc::new(registry());
        let mut gateway = Gateway::new(registry.clone(), cfg.gateway.clone(), clock.clone());
        let live = mock_adapters(Arc::new(scenario.fixtures.clone()));
        for (name, adapter) in live {
            let adapter: Arc<dyn ToolAdapter> = match &source {
                AdapterSource::Live => {
                    let faults = cfg
                        .faults
                        .iter()
                        .filter(|f| f.target_tool == name && f.mode != FaultMode::SchemaMismatch)
                        .cloned()
                        .collect();
                    Arc::new(FaultAdapter::new(adapter, faults))
                }
                AdapterSource::Playback(pb) => Arc::new(PlaybackAdapter::new(pb.clone(), name)),
            };
            gateway
                .register_adapter(name, TOOL_VERSION, adapter)
                .expect("mock tools are registered");
        }
        let supervisor = Supervisor::new(cfg.supervisor_policy.clone()).expect("policy checked on load");
        let mut state = Map::new();
        state.insert("telemetry".into(), json!({"complete": false}));
        Self {
            scenario,
            seed,
            sink,
            clock,
            registry,
            gateway,
            supervisor,
            token: cfg.tokens["executor"].clone(),
            ledger: BudgetLedger::default(),
            saga: SagaLog::new(format!("{}-saga", cfg.episode_id)),
            outputs: BTreeMap::new(),
            state,
            bound_calls: BTreeMap::new(),
            actions: Vec::new(),
            compensated: Vec::new(),
            store: MemoryStore::new(),
            memory_seq: 0,
        }
    }

    fn state_doc(&self) -> Value {
        Value::Object(self.state.clone())
    }

    fn issuer(&self) -> String {
        self.token.subject.clone()
    }

    fn threshold(&self) -> f64 {
        self.scenario.config.supervisor_policy.risk_threshold
    }

    fn run(&mut self) -> WhyStopped {
        let plan = diagnosis_plan(&self.scenario.config);
        let why = match self.execute(&plan) {
            Ok(why) => why,
            Err(stop) => self.settle(stop),
        };
        self.close_memory();
        why
    }

    fn execute(&mut self, plan: &Plan) -> Result<WhyStopped, Stop> {
        let intention = self.adopt(plan)?;
        let cfg = &self.scenario.config;
        if let Err(errors) = validate_plan_logged(plan, &self.registry, &self.token, &cfg.budget, self.clock.now(), self.sink) {
            return Err(self.plan_rejected(plan, &errors));
        }
        let mut intention = intention;
        for step in &plan.steps {
            self.clock.advance(1);
            if let Some(guard) = &step.guard {
                if !guard.eval(&self.state_doc()) {
                    self.sink.emit(
                        Component::Harness,
                        EventKind::StepSkipped,
                        json!({"guard": guard.to_string(), "step": step.step_id}),
                    );
                    self.remember(step, json!("skipped"));
                    continue;
                }
            }
            if let Some(p) = step.preconditions.iter().find(|p| !p.eval(&self.state_doc())) {
                let trigger = Trigger {
                    kind: TriggerKind::PreconditionViolated,
                    detail: format!("{}: {p}", step.step_id),
                };
                intention = self.reconsider(&intention, &trigger, &step.step_id)?;
            }
            let result = match self.run_step(step) {
                Ok(r) => r,
                Err(stop) => {
                    self.remember(step, json!("failed"));
                    return Err(stop);
                }
            };
            self.observe(step, result);
            self.remember(step, json!("ok"));

            if let Some(p) = step.postconditions.iter().find(|p| !p.eval(&self.state_doc())) {
                let trigger = Trigger {
                    kind: TriggerKind::PreconditionViolated,
                    detail: format!("{} postcondition: {p}", step.step_id),
                };
                intention = self.reconsider(&intention, &trigger, &step.step_id)?;
            }
            let obs = Observation {
                state: self.state_doc(),
                ..Observation::default()
            };
            let policy = self.supervisor.policy().clone();
            if let MonitorSignal::Reconsider(trigger) = execution_monitor(&intention, &obs, &policy, self.sink) {
                intention = self.reconsider(&intention, &trigger, &step.step_id)?;
            }
        }
        Ok(self.judge_goal(&intention))
    }

    fn adopt(&mut self, plan: &Plan) -> Result<Intention, Stop> {
        let goal = &self.scenario.config.goal;
        let mut tools: Vec<&str> = plan.steps.iter().map(|s| s.call_template.tool_name.as_str()).collect();
        tools.push("twin_simulate");
        let token = self.token.clone();
        let coverage = FnVerifier::new("tool-coverage", "1", move |s: &Subject| {
            let missing: Vec<&str> = s.document["tools"]
                .as_array()
                .into_iter()
                .flatten()
                .filter_map(Value::as_str)
                .filter(|t| !token.allows_tool(t))
                .collect();
            Ok(if missing.is_empty() {
                Finding::pass()
            } else {
                Finding::fail("tool_not_granted").with_evidence(missing.join(","))
            })
        });
        let subject = Subject::new(goal.goal_id.clone(), SubjectKind::Goal, json!({"goal": goal, "tools": tools}));
        let verdict = verify(&subject, &[&coverage], self.sink);
        match adoption_filter(goal, &verdict, self.sink) {
            Ok(Adoption::Intention(i)) => Ok(i),
            Ok(Adoption::Reject { reasons }) => Err(Stop::Rejected(WhyStopped::new(
                StopCode::VerifierRejection,
                format!("goal not adopted: {}", reasons.join(", ")),
            ))),
            Err(e) => Err(Stop::Rejected(WhyStopped::new(StopCode::VerifierRejection, e.0))),
        }
    }

    fn plan_rejected(&mut self, plan: &Plan, errors: &[PlanError]) -> Stop {
        for e in errors {
            if let PlanError::StepUnauthorized { step_id, errors } = e {
                self.sink.emit(
                    Component::Contracts,
                    EventKind::Refused,
                    json!({"errors": errors, "phase": "plan", "step": step_id, "token_id": self.token.token_id}),
                );
            }
        }
        let reasons = codes(errors, "error");
        if errors.iter().all(|e| matches!(e, PlanError::CostExceedsBudget { .. })) {
            return Stop::Budget(WhyStopped::new(StopCode::BudgetExceeded, "plan cost exceeds budget"));
        }
        let mut detail: Vec<String> = Vec::new();
        for e in errors {
            if let PlanError::StepUnauthorized { step_id, errors } = e {
                let c: Vec<String> = errors.iter().map(|v| format!("{:?} at {}", v.code, v.path)).collect();
                detail.push(format!("{step_id} refused ({})", c.join(", ")));
            }
        }
        if detail.is_empty() {
            detail = reasons.clone();
        }
        Stop::safety(
            &plan.plan_id,
            reasons,
            format!("plan {} rejected: {}", plan.plan_id, detail.join("; ")),
            None,
        )
    }

    fn reconsider(&mut self, intention: &Intention, trigger: &Trigger, step_id: &str) -> Result<Intention, Stop> {
        let policy = self.supervisor.policy().clone();
        let (next, action) = reconsider(intention, trigger, &policy, self.sink);
        match action {
            ReconsiderAction::Keep => Ok(next),
            ReconsiderAction::Suspend | ReconsiderAction::Drop => {
                let kind = serde_json::to_value(trigger.kind).ok().and_then(|v| v.as_str().map(str::to_string));
                Err(Stop::safety(
                    step_id,
                    kind.into_iter().collect(),
                    format!("intention {:?} after {}", action, trigger.detail).to_lowercase(),
                    Some(OperatingMode::ReadOnly),
                ))
            }
        }
    }

    fn run_step(&mut self, step: &PlanStep) -> Result<Value, Stop> {
        let ep = &self.scenario.config.episode_id;
        let call_id = format!("{ep}-{}", step.step_id);
        let call = bind_step(step, &self.outputs, &call_id, &self.issuer()).map_err(|e| {
            Stop::safety(
                &step.step_id,
                vec!["bind_error".into()],
                format!("cannot bind {}: {e}", step.step_id),
                Some(OperatingMode::ReadOnly),
            )
        })?;
        let scope = self
            .registry
            .get(&call.tool_name, &call.tool_version)
            .map(|s| s.scope)
            .ok_or_else(|| Stop::safety(&step.step_id, vec!["UnknownTool".into()], format!("unknown tool {}", call.tool_name), None))?;
        if !scope.is_actuating() {
            return self.dispatch(call, step.cost_estimate, None);
        }

        let verdict = self.simulate_gate(step)?;
        let risk = verdict.1;
        let verdict = verdict.0;
        self.gateway.record_simulation(&verdict);
        if let SupervisorDecision::SafeHalt { explanation, escalation } =
            self.supervisor.review(&call, risk, Some(&verdict), self.sink)
        {
            return Err(Stop::Safety {
                subject: escalation.subject_ref,
                reasons: escalation.reasons,
                explanation,
                degrade_to: None,
                latched: true,
            });
        }
        let compensation = match &step.compensation_template {
            Some(tpl) => Some(
                bind_template(tpl, &step.step_id, &self.outputs, &format!("{call_id}-undo"), &self.issuer())
                    .map_err(|e| Stop::safety(&step.step_id, vec!["bind_error".into()], e.to_string(), None))?,
            ),
            None => None,
        };
        self.saga.intend(&step.step_id, call.clone(), compensation, self.sink);
        match self.dispatch(call, step.cost_estimate, Some(verdict.verdict_id.clone())) {
            Ok(result) => {
                self.saga.mark(&step.step_id, SagaStatus::Done, self.sink);
                self.actions.push(format!("{}:{}", step.step_id, step.call_template.tool_name));
                self.state.insert("risk".into(), json!(risk));
                self.notify_operator(step, risk);
                Ok(result)
            }
            Err(stop) => {
                self.saga.mark(&step.step_id, SagaStatus::Failed, self.sink);
                Err(stop)
            }
        }
    }

    /// Twin run of the post-mitigation state for an actuating step, judged
    /// against the risk threshold.
    fn simulate_gate(&mut self, step: &PlanStep) -> Result<(Verdict, f64), Stop> {
        let cfg = &self.scenario.config;
        let features = lookup_path(&self.state_doc(), "E1.features").cloned().unwrap_or(Value::Null);
        let call_id = format!("{}-{}-sim", cfg.episode_id, step.step_id);
        let call = ToolCall::new(
            call_id.clone(),
            "twin_simulate",
            TOOL_VERSION,
            json!({"derate_fraction": cfg.derate_fraction, "features": features}),
            self.issuer(),
        )
        .with_key(call_id)
        .with_origin(step.step_id.clone());
        let result = self.dispatch(call, 1, None)?;
        let risk = result.get("risk").and_then(Value::as_f64).unwrap_or(f64::NAN);
        let threshold = self.threshold();
        let limit = FnVerifier::new("twin-risk", "1", move |s: &Subject| {
            Ok(match s.document.get("risk").and_then(Value::as_f64) {
                Some(r) if (0.0..=threshold).contains(&r) => Finding::pass(),
                Some(_) => Finding::fail("risk_above_threshold"),
                None => Finding::fail("risk_missing"),
            })
        });
        let subject = Subject::new(step.step_id.clone(), SubjectKind::Simulation, result);
        Ok((verify(&subject, &[&limit], self.sink), risk))
    }

    /// Validate, authorize and execute one call.
    fn dispatch(&mut self, mut call: ToolCall, cost: u64, sim_verdict: Option<String>) -> Result<Value, Stop> {
        let subject = call.origin.clone().unwrap_or_else(|| call.call_id.clone());
        let inc = BudgetLedger::tool_call(call.tool_name.clone(), cost, 0);
        let budget = &self.scenario.config.budget;
        if let BudgetDecision::Halt { why } = check_budget_logged(&self.ledger, budget, &inc, "episode", self.sink) {
            return Err(Stop::Budget(why));
        }
        self.ledger = self.ledger.plus(&inc);

        let n = self.bound_calls.entry(call.tool_name.clone()).or_insert(0);
        *n += 1;
        let index = *n;
        let mismatch = self
            .scenario
            .config
            .faults
            .iter()
            .any(|f| f.mode == FaultMode::SchemaMismatch && f.target_tool == call.tool_name && f.hits(index));
        if mismatch {
            // A producer on an older schema wraps everything in an envelope.
            call.args = json!({"payload": call.args});
        }

        let spec = self
            .registry
            .get(&call.tool_name, &call.tool_version)
            .cloned()
            .ok_or_else(|| Stop::safety(&subject, vec!["UnknownTool".into()], format!("unknown tool {}", call.tool_name), None))?;
        let validated = validate_logged(&spec, &call, self.sink).map_err(|errors| {
            let reasons = codes(&errors, "code");
            Stop::safety(
                &subject,
                reasons.clone(),
                format!("{} arguments rejected: {}", call.tool_name, reasons.join(", ")),
                Some(OperatingMode::MonitorOnly),
            )
        })?;
        let (permit, token) = authorize_logged(&validated, &spec, &self.token, self.clock.now(), self.sink).map_err(|errors| {
            let reasons = codes(&errors, "code");
            Stop::safety(
                &subject,
                reasons.clone(),
                format!("{} refused: {}", call.tool_name, reasons.join(", ")),
                Some(OperatingMode::MonitorOnly),
            )
        })?;
        self.token = token;
        if !self.supervisor.permits_scope(spec.scope) {
            return Err(Stop::safety(
                &subject,
                vec!["mode_forbids_scope".into()],
                format!("{} scope {} not allowed in mode {}", call.tool_name, spec.scope, self.supervisor.mode().as_str()),
                None,
            ));
        }
        let permit = match sim_verdict {
            Some(v) => permit.with_sim_verdict(v),
            None => permit,
        };
        let outcome = self.gateway.execute(&permit, &spec, self.seed, self.sink);
        if outcome.is_ok() {
            return Ok(outcome.result.unwrap_or(Value::Null));
        }
        let code = outcome.error_code.clone().unwrap_or_else(|| "unknown".into());
        let transient = spec.transient_error_codes.contains(&code);
        Err(Stop::safety(
            &subject,
            vec![code.clone()],
            format!(
                "{} failed with {code} after {} attempt(s)",
                call.tool_name, outcome.attempts
            ),
            Some(degraded_mode_for(&outcome, transient)),
        ))
    }

    fn observe(&mut self, step: &PlanStep, result: Value) {
        if step.call_template.tool_name == "telemetry_query" {
            let complete = result.get("features").is_some();
            self.state.insert("telemetry".into(), json!({"complete": complete}));
        }
        if step.call_template.tool_name == "twin_simulate" {
            if let Some(r) = result.get("risk") {
                self.state.insert("risk".into(), r.clone());
            }
        }
        self.state.insert(step.step_id.clone(), result.clone());
        self.outputs.insert(step.step_id.clone(), result);
    }

    fn notify_operator(&self, step: &PlanStep, risk: f64) {
        let policy = self.supervisor.policy();
        self.sink.emit(
            Component::Assurance,
            EventKind::Escalation,
            json!({
                "escalation": {
                    "reasons": ["operator_notice"],
                    "subject_ref": step.step_id,
                    "target": policy.escalation_target,
                },
                "notice": format!(
                    "{} issued; predicted risk after mitigation {risk} (threshold {})",
                    step.call_template.tool_name, policy.risk_threshold
                ),
            }),
        );
    }

    fn judge_goal(&mut self, intention: &Intention) -> WhyStopped {
        let target = intention.goal.objective.target.clone();
        let objective = FnVerifier::new("goal-objective", "1", move |s: &Subject| {
            Ok(if target.eval(&s.document) {
                Finding::pass()
            } else {
                Finding::fail("objective_unmet")
            })
        });
        let subject = Subject::new(intention.goal.goal_id.clone(), SubjectKind::Goal, self.state_doc());
        let verdict = verify(&subject, &[&objective], self.sink);
        let risk = self.state.get("risk").cloned().unwrap_or(Value::Null);
        if verdict.pass {
            WhyStopped::new(StopCode::GoalSatisfied, format!("objective {} met (risk {risk})", intention.goal.objective.target))
        } else {
            WhyStopped::new(
                StopCode::VerifierRejection,
                format!("objective {} not met (risk {risk})", intention.goal.objective.target),
            )
        }
    }

    fn settle(&mut self, stop: Stop) -> WhyStopped {
        match stop {
            Stop::Budget(why) | Stop::Rejected(why) => why,
            Stop::Safety {
                subject,
                reasons,
                explanation,
                degrade_to,
                latched,
            } => {
                if let Some(mode) = degrade_to {
                    // Already at or past this mode is fine.
                    let _ = self.supervisor.degrade(mode, &explanation, self.sink);
                }
                if !latched {
                    self.supervisor.halt(&subject, reasons, explanation.clone(), self.sink);
                }
                self.gateway.engage_safe_halt();
                match compensate(&self.saga, &self.gateway, self.seed, self.sink) {
                    Ok(log) => {
                        self.compensated = log.steps_with(SagaStatus::Compensated).iter().map(|s| s.to_string()).collect();
                    }
                    Err(failed) => {
                        self.compensated =
                            failed.saga.steps_with(SagaStatus::Compensated).iter().map(|s| s.to_string()).collect();
                        self.supervisor.halt(
                            &failed.step_id,
                            vec!["compensation_failed".into()],
                            format!("compensation for {} failed; manual recovery required", failed.step_id),
                            self.sink,
                        );
                    }
                }
                WhyStopped::new(StopCode::SafetyHalt, explanation)
            }
        }
    }

    fn remember(&mut self, step: &PlanStep, outcome: Value) {
        let cfg = &self.scenario.config;
        self.memory_seq += 1;
        let content = json!({
            "action": format!("{} {}", step.step_id, step.call_template.tool_name),
            "outcome": outcome,
            "task": cfg.goal.description,
        });
        let record = MemoryRecord::new(
            format!("{}/{:02}-{}", cfg.episode_id, self.memory_seq, step.step_id),
            content,
            format!("episode://{}/{}", cfg.episode_id, step.step_id),
            Tier::Silver,
        )
        .kind(RecordKind::Episodic);
        let _ = self.store.write(
            record,
            &WritePolicy::new("episode-log"),
            &WriterCapability::curated("harness"),
            self.clock.now(),
            self.sink,
        );
    }

    fn close_memory(&mut self) {
        let records: Vec<MemoryRecord> = self.store.records().cloned().collect();
        if records.is_empty() {
            return;
        }
        if let Ok(summary) = compact(&records, &EpisodeSummarizer, self.sink) {
            let _ = self.store.write(
                summary,
                &WritePolicy::new("compaction"),
                &WriterCapability::curated("harness"),
                self.clock.now(),
                self.sink,
            );
        }
    }
}

/// Runs one episode in memory.
pub fn run_episode(scenario: &Scenario, seed: u64, source: AdapterSource, config_path: Option<String>) -> EpisodeRun {
    let header = trace_header(scenario, seed, config_path);
    let rec = Recorder::new(header.hash_algorithm, LogicalClock::new());
    rec.emit(Component::Harness, EventKind::EpisodeStarted, json!({ "header": header }));
    let mut ep = Episode::new(scenario, seed, source, &rec);
    let why = ep.run();
    let escalations = rec.events().iter().filter(|e| e.kind == EventKind::Escalation).count();
    let summary = EpisodeSummary {
        episode_id: scenario.config.episode_id.clone(),
        exit_code: why.code.exit_code(),
        why_stopped: why,
        actions_taken: ep.actions.clone(),
        compensated: ep.compensated.clone(),
        escalations,
    };
    rec.emit(Component::Harness, EventKind::WhyStopped, json!({ "summary": summary }));
    EpisodeRun {
        trace: EpisodeTrace {
            header,
            events: rec.events(),
        },
        summary,
    }
}

/// Runs an episode and writes `<out_dir>/<episode_id>.trace`.
pub fn run_to_dir(
    scenario: &Scenario,
    seed: u64,
    out_dir: &Path,
    config_path: Option<String>,
) -> std::io::Result<(EpisodeRun, PathBuf)> {
    let run = run_episode(scenario, seed, AdapterSource::Live, config_path);
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(format!("{}.trace", scenario.config.episode_id));
    std::fs::write(&path, run.trace.to_text())?;
    Ok((run, path))
}

/// Re-runs episodes for replay with playback adapters.
pub struct HarnessFactory<'a> {
    pub scenario: &'a Scenario,
}

impl EpisodeFactory for HarnessFactory<'_> {
    fn component_versions(&self) -> BTreeMap<String, String> {
        crate::component_versions()
    }

    fn config_hash(&self) -> Digest {
        self.scenario.config_hash()
    }

    fn rerun(&self, header: &TraceHeader, playback: Playback) -> Result<Vec<AuditEvent>, String> {
        if header.kind != TraceKind::Episode {
            return Err("not an episode trace".into());
        }
        if header.registry_hash != registry_hash() {
            return Err("tool registry differs from the recorded one".into());
        }
        let run = run_episode(
            self.scenario,
            header.seed,
            AdapterSource::Playback(playback),
            header.config_path.clone(),
        );
        Ok(run.trace.events)
    }
}

