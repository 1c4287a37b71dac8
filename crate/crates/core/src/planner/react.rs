use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::assurance::{check_budget_logged, Budget, BudgetDecision, BudgetLedger, StopCode, WhyStopped};
use crate::audit::{AuditSink, Component, EventKind};
use crate::canonical::{hash_of, Digest};
use crate::clock::LogicalClock;
use crate::contracts::{authorize_logged, validate_logged, CapabilityToken, ToolCall, ToolRegistry};
use crate::gateway::{Gateway, OutcomeStatus};

/// Refusals tolerated in a row; the next one halts the loop.
pub const MAX_REPROPOSALS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EntryKind {
    Thought,
    Action,
    Observation,
    Refusal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub kind: EntryKind,
    pub payload: Value,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReactState {
    pub transcript: Vec<TranscriptEntry>,
    pub steps_taken: u64,
    pub consecutive_refusals: u32,
    pub ledger: BudgetLedger,
}

impl ReactState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Digest of the transcript; scripted proposers key on it.
    pub fn state_hash(&self) -> Digest {
        hash_of(&self.transcript)
    }

    fn push(&mut self, kind: EntryKind, payload: Value) {
        self.transcript.push(TranscriptEntry { kind, payload });
    }
}

/// Every Action is immediately followed by its Observation, and nothing
/// else is.
pub fn transcript_well_formed(transcript: &[TranscriptEntry]) -> bool {
    let mut pending_action = false;
    for e in transcript {
        match (pending_action, e.kind) {
            (true, EntryKind::Observation) => pending_action = false,
            (true, _) | (false, EntryKind::Observation) => return false,
            (false, EntryKind::Action) => pending_action = true,
            (false, _) => {}
        }
    }
    !pending_action
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "body")]
pub enum Proposal {
    Thought(String),
    Action(ToolCall),
    Finish(Value),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProposerError {
    #[error("no proposal scripted for state {0}")]
    NoProposal(String),
}

pub trait Proposer {
    fn propose(&mut self, state: &ReactState, seed: u64) -> Result<Proposal, ProposerError>;
}

/// Proposals looked up by transcript hash, then by step index, then a
/// fallback.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScriptedProposer {
    #[serde(default)]
    pub by_state: BTreeMap<String, Proposal>,
    #[serde(default)]
    pub sequence: Vec<Proposal>,
    #[serde(default)]
    pub fallback: Option<Proposal>,
}

impl ScriptedProposer {
    pub fn sequence(sequence: Vec<Proposal>) -> Self {
        Self {
            sequence,
            ..Self::default()
        }
    }

    pub fn looping(p: Proposal) -> Self {
        Self {
            fallback: Some(p),
            ..Self::default()
        }
    }
}

impl Proposer for ScriptedProposer {
    fn propose(&mut self, state: &ReactState, _seed: u64) -> Result<Proposal, ProposerError> {
        let hash = state.state_hash().to_hex();
        self.by_state
            .get(&hash)
            .or_else(|| self.sequence.get(state.steps_taken as usize))
            .or(self.fallback.as_ref())
            .cloned()
            .ok_or(ProposerError::NoProposal(hash))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "governance")]
pub enum Governance {
    Dispatched { observation: Value },
    Refused { reasons: Vec<String> },
}

/// Decides whether a proposed call may run, and runs it if so.
pub trait Governor {
    fn govern(&mut self, call: &ToolCall, sink: &dyn AuditSink) -> Governance;
}

/// Governor backed by the contract layer and the gateway: validate,
/// authorize, then execute. The gateway enforces the simulation gate for
/// actuating scopes, and its refusals come back as governed refusals.
pub struct ContractGovernor<'a> {
    pub registry: &'a ToolRegistry,
    pub gateway: &'a Gateway,
    pub token: CapabilityToken,
    pub clock: LogicalClock,
    pub seed: u64,
}

impl Governor for ContractGovernor<'_> {
    fn govern(&mut self, call: &ToolCall, sink: &dyn AuditSink) -> Governance {
        let Some(spec) = self.registry.get(&call.tool_name, &call.tool_version) else {
            return Governance::Refused {
                reasons: vec![format!("UnknownTool: {}@{}", call.tool_name, call.tool_version)],
            };
        };
        let refusal = |errs: Vec<crate::contracts::ValidationError>| Governance::Refused {
            reasons: errs.iter().map(|e| format!("{:?}: {}", e.code, e.path)).collect(),
        };
        let validated = match validate_logged(spec, call, sink) {
            Ok(v) => v,
            Err(errs) => return refusal(errs),
        };
        let (permit, token) = match authorize_logged(&validated, spec, &self.token, self.clock.now(), sink) {
            Ok(p) => p,
            Err(errs) => return refusal(errs),
        };
        self.token = token;
        let outcome = self.gateway.execute(&permit, spec, self.seed, sink);
        match outcome.status {
            OutcomeStatus::Refused => Governance::Refused {
                reasons: outcome.error_code.into_iter().collect(),
            },
            _ => Governance::Dispatched {
                observation: serde_json::to_value(&outcome).unwrap_or(Value::Null),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "next")]
pub enum ReactNext {
    Thought,
    Dispatched { observation: Value },
    Refused { reasons: Vec<String> },
    Halt { why: WhyStopped },
}

/// One turn of the governed think/act loop. The step budget is checked
/// before the proposer is consulted, so a cap of N halts with exactly N
/// steps taken.
pub fn react_step(
    state: &mut ReactState,
    proposer: &mut dyn Proposer,
    governor: &mut dyn Governor,
    budget: &Budget,
    seed: u64,
    sink: &dyn AuditSink,
) -> Result<ReactNext, ProposerError> {
    if let BudgetDecision::Halt { why } = check_budget_logged(&state.ledger, budget, &BudgetLedger::step(), "react", sink) {
        return Ok(log_next(state, ReactNext::Halt { why }, sink));
    }
    let proposal = proposer.propose(state, seed)?;
    state.ledger = state.ledger.plus(&BudgetLedger::step());
    state.steps_taken += 1;

    let next = match proposal {
        Proposal::Thought(text) => {
            state.push(EntryKind::Thought, Value::String(text));
            ReactNext::Thought
        }
        Proposal::Finish(answer) => {
            state.push(EntryKind::Thought, json!({"finish": answer}));
            ReactNext::Halt {
                why: WhyStopped::new(StopCode::GoalSatisfied, "proposer finished"),
            }
        }
        Proposal::Action(call) => match governor.govern(&call, sink) {
            Governance::Dispatched { observation } => {
                state.consecutive_refusals = 0;
                state.push(EntryKind::Action, serde_json::to_value(&call).unwrap_or(Value::Null));
                state.push(EntryKind::Observation, observation.clone());
                ReactNext::Dispatched { observation }
            }
            Governance::Refused { reasons } => {
                state.consecutive_refusals += 1;
                state.push(EntryKind::Refusal, json!({"call": call, "reasons": reasons}));
                if state.consecutive_refusals > MAX_REPROPOSALS {
                    ReactNext::Halt {
                        why: WhyStopped::new(
                            StopCode::VerifierRejection,
                            format!("{} consecutive refusals", state.consecutive_refusals),
                        ),
                    }
                } else {
                    ReactNext::Refused { reasons }
                }
            }
        },
    };
    Ok(log_next(state, next, sink))
}

fn log_next(state: &ReactState, next: ReactNext, sink: &dyn AuditSink) -> ReactNext {
    sink.emit(
        Component::Planner,
        EventKind::ReactEntry,
        json!({
            "entry": state.transcript.last(),
            "next": next,
            "steps_taken": state.steps_taken,
        }),
    );
    next
}

/// Runs [`react_step`] until it halts.
pub fn run_react(
    state: &mut ReactState,
    proposer: &mut dyn Proposer,
    governor: &mut dyn Governor,
    budget: &Budget,
    seed: u64,
    sink: &dyn AuditSink,
) -> Result<WhyStopped, ProposerError> {
    loop {
        if let ReactNext::Halt { why } = react_step(state, proposer, governor, budget, seed, sink)? {
            return Ok(why);
        }
    }
}
