use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::message::{Message, MessageDraft, ProtocolViolation, RoleDescriptor, SpeechAct};
use crate::assurance::{check_budget, BudgetDecision, BudgetLedger, StopCode, Verdict, WhyStopped};
use crate::audit::{AuditSink, Component, EventKind};
use crate::canonical::{hash_of, hash_value, Digest};

pub const DEFAULT_VIOLATION_LIMIT: u32 = 3;
pub const ARBITER_RULE_VERSION: &str = "max-evidence/lowest-seq@1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueConfig {
    pub max_rounds: u32,
    pub max_total_ticks: u64,
    pub fixed_point_window: u32,
    pub no_new_info_window: u32,
    pub citation_required: bool,
    #[serde(default = "default_violation_limit")]
    pub violation_limit: u32,
    /// Role pre-empting a deadlock with a decision.
    #[serde(default)]
    pub arbiter_role: Option<String>,
}

fn default_violation_limit() -> u32 {
    DEFAULT_VIOLATION_LIMIT
}

impl DialogueConfig {
    pub fn new(max_rounds: u32) -> Self {
        Self {
            max_rounds,
            max_total_ticks: u64::MAX,
            fixed_point_window: 2,
            no_new_info_window: 2,
            citation_required: false,
            violation_limit: DEFAULT_VIOLATION_LIMIT,
            arbiter_role: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DialogueError {
    #[error("invalid dialogue config: {0}")]
    Config(String),
    #[error("invalid roster: {0}")]
    Roster(String),
}

/// What an agent sees: typed entries only, one per accepted message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewEntry {
    pub seq: u64,
    pub round: u32,
    pub role_id: String,
    pub speech_act: SpeechAct,
    pub payload: Value,
    pub payload_hash: Digest,
    pub evidence_refs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentView {
    pub role_id: String,
    pub round: u32,
    pub entries: Vec<ViewEntry>,
}

impl AgentView {
    pub fn prefix_hash(&self) -> Digest {
        hash_of(&self.entries)
    }

    pub fn latest_proposal(&self) -> Option<&ViewEntry> {
        self.entries.iter().rev().find(|e| e.speech_act == SpeechAct::Proposal)
    }
}

/// A participant. `None` is a pass.
pub trait DialogueAgent {
    fn respond(&mut self, view: &AgentView, seed: u64) -> Option<MessageDraft>;
}

/// Live dialogue state. Roles are fixed at construction.
pub struct Dialogue {
    roles: Vec<RoleDescriptor>,
    config: DialogueConfig,
    transcript: Vec<Message>,
    ledgers: BTreeMap<String, BudgetLedger>,
    violations: BTreeMap<String, u32>,
    muted: BTreeSet<String>,
    round: u32,
}

impl Dialogue {
    pub fn new(roles: Vec<RoleDescriptor>, config: DialogueConfig) -> Result<Self, DialogueError> {
        if config.max_rounds == 0
            || config.max_total_ticks == 0
            || config.fixed_point_window == 0
            || config.no_new_info_window == 0
            || config.violation_limit == 0
        {
            return Err(DialogueError::Config("all caps must be at least 1".into()));
        }
        let mut ids = BTreeSet::new();
        for r in &roles {
            if !ids.insert(r.role_id.as_str()) {
                return Err(DialogueError::Roster(format!("duplicate role {}", r.role_id)));
            }
        }
        if let Some(a) = &config.arbiter_role {
            if !roles.iter().any(|r| &r.role_id == a && r.may_decide) {
                return Err(DialogueError::Roster(format!("arbiter {a} missing or lacks decision right")));
            }
        }
        Ok(Self {
            roles,
            config,
            transcript: Vec::new(),
            ledgers: BTreeMap::new(),
            violations: BTreeMap::new(),
            muted: BTreeSet::new(),
            round: 1,
        })
    }

    pub fn roles(&self) -> &[RoleDescriptor] {
        &self.roles
    }

    pub fn config(&self) -> &DialogueConfig {
        &self.config
    }

    pub fn transcript(&self) -> &[Message] {
        &self.transcript
    }

    pub fn muted(&self) -> &BTreeSet<String> {
        &self.muted
    }

    pub fn violations(&self) -> &BTreeMap<String, u32> {
        &self.violations
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    fn role(&self, id: &str) -> Option<&RoleDescriptor> {
        self.roles.iter().find(|r| r.role_id == id)
    }

    pub fn view_for(&self, role_id: &str) -> AgentView {
        AgentView {
            role_id: role_id.to_string(),
            round: self.round,
            entries: self
                .transcript
                .iter()
                .map(|m| ViewEntry {
                    seq: m.seq,
                    round: m.round,
                    role_id: m.role_id.clone(),
                    speech_act: m.speech_act,
                    payload: m.payload.clone(),
                    payload_hash: m.payload_hash,
                    evidence_refs: m.evidence_refs.clone(),
                })
                .collect(),
        }
    }

    fn check(&self, draft: &MessageDraft) -> Result<(), ProtocolViolation> {
        let role_id = draft.role_id.clone();
        let Some(role) = self.role(&draft.role_id) else {
            return Err(ProtocolViolation::UnknownRole { role_id });
        };
        if self.muted.contains(&role.role_id) {
            return Err(ProtocolViolation::Quarantined { role_id });
        }
        let acts = [Some(draft.speech_act), draft.decision_flag.then_some(SpeechAct::Decision)];
        if let Some(act) = acts.into_iter().flatten().find(|a| !role.permits(*a)) {
            return Err(ProtocolViolation::UnauthorizedSpeechAct { role_id, act });
        }
        if let Some(tc) = draft
            .tool_calls
            .iter()
            .find(|tc| !role.token.allows_tool(&tc.tool) || tc.scope > role.token.scope_ceiling)
        {
            return Err(ProtocolViolation::AuthorityEscalation {
                role_id,
                tool: tc.tool.clone(),
            });
        }
        if self.config.citation_required
            && matches!(draft.speech_act, SpeechAct::Proposal | SpeechAct::Critique)
            && draft.evidence_refs.is_empty()
        {
            return Err(ProtocolViolation::MissingEvidence {
                role_id,
                act: draft.speech_act,
            });
        }
        let ledger = self.ledgers.get(&role.role_id).cloned().unwrap_or_default();
        if let BudgetDecision::Halt { why } = check_budget(&ledger, &role.per_role_budget, &BudgetLedger::step()) {
            return Err(ProtocolViolation::RoleBudgetExceeded {
                role_id,
                dimension: why.detail,
            });
        }
        Ok(())
    }

    /// Admits a message or reports why not. Rejected messages never reach
    /// the transcript; a role exceeding the violation limit is muted.
    pub fn post(&mut self, draft: MessageDraft, sink: &dyn AuditSink) -> Result<Message, ProtocolViolation> {
        if let Err(v) = self.check(&draft) {
            let mut muted_now = false;
            if self.role(v.role_id()).is_some() && !matches!(v, ProtocolViolation::Quarantined { .. }) {
                let count = self.violations.entry(v.role_id().to_string()).or_insert(0);
                *count += 1;
                if *count > self.config.violation_limit {
                    muted_now = self.muted.insert(v.role_id().to_string());
                }
            }
            sink.emit(
                Component::Protocol,
                EventKind::ProtocolViolation,
                json!({"draft": draft, "muted": muted_now, "round": self.round, "violation": v}),
            );
            return Err(v);
        }
        let ledger = self.ledgers.entry(draft.role_id.clone()).or_default();
        *ledger = ledger.plus(&BudgetLedger::step());
        let msg = Message {
            seq: self.transcript.len() as u64,
            round: self.round,
            payload_hash: hash_value(&draft.payload),
            role_id: draft.role_id,
            speech_act: draft.speech_act,
            payload: draft.payload,
            evidence_refs: draft.evidence_refs,
            tool_calls: draft.tool_calls,
            decision_flag: draft.decision_flag,
        };
        sink.emit(Component::Protocol, EventKind::MessagePosted, json!({ "message": msg }));
        self.transcript.push(msg.clone());
        Ok(msg)
    }

    /// Proposal hash every unmuted role without decision rights stands
    /// behind, if they all agree. A role's stance is its latest proposal or
    /// accept marker; a critique clears it.
    pub fn consensus(&self) -> Option<Digest> {
        let proposals: BTreeSet<Digest> = self
            .transcript
            .iter()
            .filter(|m| m.speech_act == SpeechAct::Proposal)
            .map(|m| m.payload_hash)
            .collect();
        let voters: Vec<&RoleDescriptor> = self
            .roles
            .iter()
            .filter(|r| !r.may_decide && Some(&r.role_id) != self.config.arbiter_role.as_ref())
            .filter(|r| !self.muted.contains(&r.role_id))
            .collect();
        if voters.is_empty() {
            return None;
        }
        let mut agreed = None;
        for r in voters {
            let stance = self
                .transcript
                .iter()
                .rev()
                .filter(|m| m.role_id == r.role_id)
                .find_map(|m| match m.speech_act {
                    SpeechAct::Proposal => Some(Some(m.payload_hash)),
                    SpeechAct::Critique => Some(None),
                    _ => m.accepted().filter(|h| proposals.contains(h)).map(Some),
                })
                .flatten()?;
            match agreed {
                None => agreed = Some(stance),
                Some(h) if h == stance => {}
                Some(_) => return None,
            }
        }
        agreed
    }

    fn proposal_by_hash(&self, h: &Digest) -> Option<&Message> {
        self.transcript
            .iter()
            .find(|m| m.speech_act == SpeechAct::Proposal && &m.payload_hash == h)
    }
}

/// True iff the multiset of proposal hashes in the last `window` rounds
/// equals that of the `window` rounds before, and is non-empty. Rounds are
/// counted back from the latest round present in the transcript.
pub fn detect_fixed_point(transcript: &[Message], window: u32) -> bool {
    let Some(last) = transcript.last().map(|m| m.round) else {
        return false;
    };
    if window == 0 || last < 2 * window {
        return false;
    }
    let bag = |lo: u32, hi: u32| -> BTreeMap<Digest, usize> {
        let mut b = BTreeMap::new();
        for m in transcript {
            if m.speech_act == SpeechAct::Proposal && m.round > lo && m.round <= hi {
                *b.entry(m.payload_hash).or_insert(0) += 1;
            }
        }
        b
    };
    let recent = bag(last - window, last);
    !recent.is_empty() && recent == bag(last - 2 * window, last - window)
}

/// Fraction of `payload.claims` whose `verdict_ref` names a passing
/// verdict, matched by verdict id or subject ref. No claims scores 0.
pub fn evidence_score(payload: &Value, verdicts: &[Verdict]) -> f64 {
    let Some(claims) = payload.get("claims").and_then(Value::as_array) else {
        return 0.0;
    };
    if claims.is_empty() {
        return 0.0;
    }
    let backed = claims
        .iter()
        .filter(|c| {
            c.get("verdict_ref").and_then(Value::as_str).is_some_and(|r| {
                verdicts
                    .iter()
                    .any(|v| v.pass && (v.verdict_id == r || v.subject_ref == r))
            })
        })
        .count();
    backed as f64 / claims.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredProposal {
    pub seq: u64,
    pub payload_hash: Digest,
    pub payload: Value,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArbiterDecision {
    pub selected_seq: u64,
    pub payload_hash: Digest,
    pub payload: Value,
    pub score: f64,
    pub low_confidence: bool,
    pub rule_version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no proposals to arbitrate")]
pub struct NoProposals;

/// Highest evidence score wins; ties go to the earliest proposal. A
/// winning score of zero marks the decision low-confidence.
pub fn arbitrate(proposals: &[ScoredProposal], rule_version: &str) -> Result<ArbiterDecision, NoProposals> {
    let best = proposals
        .iter()
        .min_by(|a, b| b.score.total_cmp(&a.score).then(a.seq.cmp(&b.seq)))
        .ok_or(NoProposals)?;
    Ok(ArbiterDecision {
        selected_seq: best.seq,
        payload_hash: best.payload_hash,
        payload: best.payload.clone(),
        score: best.score,
        low_confidence: best.score == 0.0,
        rule_version: rule_version.to_string(),
    })
}

pub fn scored_proposals(transcript: &[Message], verdicts: &[Verdict]) -> Vec<ScoredProposal> {
    let mut seen = BTreeSet::new();
    transcript
        .iter()
        .filter(|m| m.speech_act == SpeechAct::Proposal && seen.insert(m.payload_hash))
        .map(|m| ScoredProposal {
            seq: m.seq,
            payload_hash: m.payload_hash,
            payload: m.payload.clone(),
            score: evidence_score(&m.payload, verdicts),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueOutcome {
    pub adopted: Option<Value>,
    pub why_stopped: WhyStopped,
    /// Digest of the final transcript.
    pub transcript_ref: Digest,
    pub rounds_used: u32,
    pub messages: usize,
    pub muted: Vec<String>,
    pub violations: BTreeMap<String, u32>,
    #[serde(default)]
    pub low_confidence: bool,
}

/// Runs a dialogue in roster order, one turn per role per round, until a
/// stop rule fires. Roles without an agent always pass.
pub fn run_dialogue(
    roles: Vec<RoleDescriptor>,
    agents: &mut BTreeMap<String, Box<dyn DialogueAgent>>,
    config: DialogueConfig,
    verdicts: &[Verdict],
    seed: u64,
    sink: &dyn AuditSink,
) -> Result<(DialogueOutcome, Vec<Message>), DialogueError> {
    let mut d = Dialogue::new(roles, config)?;
    let order: Vec<String> = d.roles.iter().map(|r| r.role_id.clone()).collect();
    let mut ticks = 0u64;
    let mut seen: BTreeSet<Digest> = BTreeSet::new();
    let mut stale_rounds = 0u32;
    let mut adopted = None;
    let mut low_confidence = false;

    let why = 'rounds: loop {
        let mut passes = 0usize;
        let mut active = 0usize;
        let mut new_info = false;
        for role_id in &order {
            if d.muted.contains(role_id) {
                continue;
            }
            active += 1;
            if ticks >= d.config.max_total_ticks {
                break 'rounds WhyStopped::new(StopCode::BudgetExceeded, format!("tick cap {ticks}"));
            }
            ticks += 1;
            let view = d.view_for(role_id);
            let Some(mut draft) = agents.get_mut(role_id).and_then(|a| a.respond(&view, seed)) else {
                passes += 1;
                continue;
            };
            if draft.role_id.is_empty() {
                draft.role_id = role_id.clone();
            }
            if &draft.role_id != role_id {
                // Speaking under another role's identity.
                let v = ProtocolViolation::AuthorityEscalation {
                    role_id: role_id.clone(),
                    tool: format!("role:{}", draft.role_id),
                };
                *d.violations.entry(role_id.clone()).or_insert(0) += 1;
                if d.violations[role_id] > d.config.violation_limit {
                    d.muted.insert(role_id.clone());
                }
                sink.emit(
                    Component::Protocol,
                    EventKind::ProtocolViolation,
                    json!({"draft": draft, "round": d.round, "violation": v}),
                );
                continue;
            }
            let Ok(msg) = d.post(draft, sink) else { continue };
            new_info |= seen.insert(msg.payload_hash);
            if msg.speech_act == SpeechAct::Decision {
                adopted = Some(msg.payload.clone());
                break 'rounds WhyStopped::new(StopCode::ConsensusReached, format!("decision by {role_id}"));
            }
            if let Some(h) = d.consensus() {
                adopted = d.proposal_by_hash(&h).map(|m| m.payload.clone());
                break 'rounds WhyStopped::new(StopCode::ConsensusReached, format!("agreed on {}", h.short()));
            }
        }

        if passes == active {
            let proposals = scored_proposals(&d.transcript, verdicts);
            let decision = arbitrate(&proposals, ARBITER_RULE_VERSION).ok();
            sink.emit(
                Component::Protocol,
                EventKind::Arbitration,
                json!({"candidates": proposals, "decision": decision, "round": d.round}),
            );
            if let (Some(arbiter), Some(dec)) = (d.config.arbiter_role.clone(), decision) {
                let mut draft = MessageDraft::new(arbiter, SpeechAct::Decision, json!({"adopt": dec}));
                draft.evidence_refs = vec![format!("seq:{}", dec.selected_seq)];
                if d.post(draft, sink).is_ok() {
                    adopted = Some(dec.payload.clone());
                    low_confidence = dec.low_confidence;
                }
            }
            break WhyStopped::new(StopCode::Deadlock, format!("all roles passed in round {}", d.round));
        }
        if detect_fixed_point(&d.transcript, d.config.fixed_point_window) {
            break WhyStopped::new(StopCode::NonConvergence, "fixed point");
        }
        stale_rounds = if new_info { 0 } else { stale_rounds + 1 };
        if stale_rounds >= d.config.no_new_info_window {
            break WhyStopped::new(StopCode::NonConvergence, format!("no new information for {stale_rounds} rounds"));
        }
        if d.round >= d.config.max_rounds {
            break WhyStopped::new(StopCode::BudgetExceeded, format!("round cap {}", d.config.max_rounds));
        }
        d.round += 1;
    };

    let outcome = DialogueOutcome {
        adopted,
        transcript_ref: hash_of(&d.transcript),
        rounds_used: d.round,
        messages: d.transcript.len(),
        muted: d.muted.iter().cloned().collect(),
        violations: d.violations.clone(),
        low_confidence,
        why_stopped: why,
    };
    sink.emit(Component::Protocol, EventKind::WhyStopped, json!({ "dialogue": outcome }));
    Ok((outcome, d.transcript))
}
