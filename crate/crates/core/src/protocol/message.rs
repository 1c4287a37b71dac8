use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::assurance::Budget;
use crate::canonical::Digest;
use crate::contracts::{CapabilityToken, ToolScope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SpeechAct {
    Proposal,
    Critique,
    Evidence,
    Decision,
    Info,
}

/// A participant's fixed identity and rights; never changes during a
/// dialogue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleDescriptor {
    pub role_id: String,
    pub display_name: String,
    /// Bounds the tool calls a role may attach to its messages.
    pub token: CapabilityToken,
    pub per_role_budget: Budget,
    #[serde(default)]
    pub may_propose: bool,
    #[serde(default)]
    pub may_critique: bool,
    #[serde(default)]
    pub may_decide: bool,
}

impl RoleDescriptor {
    pub fn permits(&self, act: SpeechAct) -> bool {
        match act {
            SpeechAct::Proposal => self.may_propose,
            SpeechAct::Critique => self.may_critique,
            SpeechAct::Decision => self.may_decide,
            SpeechAct::Evidence | SpeechAct::Info => true,
        }
    }
}

/// A tool call attached to a message, with the scope it would run at.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCallRef {
    pub call_id: String,
    pub tool: String,
    pub scope: ToolScope,
}

/// What an agent submits; the engine assigns seq, round and hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageDraft {
    #[serde(default)]
    pub role_id: String,
    pub speech_act: SpeechAct,
    pub payload: Value,
    #[serde(default)]
    pub evidence_refs: Vec<String>,
    #[serde(default)]
    pub tool_calls: Vec<ToolCallRef>,
    #[serde(default)]
    pub decision_flag: bool,
}

impl MessageDraft {
    pub fn new(role_id: impl Into<String>, speech_act: SpeechAct, payload: Value) -> Self {
        Self {
            role_id: role_id.into(),
            speech_act,
            payload,
            evidence_refs: Vec::new(),
            tool_calls: Vec::new(),
            decision_flag: speech_act == SpeechAct::Decision,
        }
    }

    pub fn citing(mut self, evidence: impl Into<String>) -> Self {
        self.evidence_refs.push(evidence.into());
        self
    }

    /// Acceptance of a proposal, identified by its payload hash.
    pub fn accept(role_id: impl Into<String>, proposal: &Digest) -> Self {
        Self::new(role_id, SpeechAct::Info, serde_json::json!({ ACCEPT_KEY: proposal.to_hex() }))
    }
}

pub const ACCEPT_KEY: &str = "accept";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub seq: u64,
    pub round: u32,
    pub role_id: String,
    pub speech_act: SpeechAct,
    pub payload: Value,
    pub evidence_refs: Vec<String>,
    pub tool_calls: Vec<ToolCallRef>,
    pub decision_flag: bool,
    pub payload_hash: Digest,
}

impl Message {
    /// The proposal hash this message accepts, if it is an accept marker.
    pub fn accepted(&self) -> Option<Digest> {
        if self.speech_act != SpeechAct::Info {
            return None;
        }
        let obj = self.payload.as_object()?;
        if obj.len() != 1 {
            return None;
        }
        Digest::from_hex(obj.get(ACCEPT_KEY)?.as_str()?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "violation")]
pub enum ProtocolViolation {
    #[error("unknown role {role_id}")]
    UnknownRole { role_id: String },
    #[error("role {role_id} may not post {act:?}")]
    UnauthorizedSpeechAct { role_id: String, act: SpeechAct },
    #[error("{act:?} from {role_id} cites no evidence")]
    MissingEvidence { role_id: String, act: SpeechAct },
    #[error("role {role_id} exceeded its budget ({dimension})")]
    RoleBudgetExceeded { role_id: String, dimension: String },
    #[error("role {role_id} attached {tool} beyond its authority")]
    AuthorityEscalation { role_id: String, tool: String },
    #[error("role {role_id} is quarantined")]
    Quarantined { role_id: String },
}

impl ProtocolViolation {
    pub fn role_id(&self) -> &str {
        match self {
            ProtocolViolation::UnknownRole { role_id }
            | ProtocolViolation::UnauthorizedSpeechAct { role_id, .. }
            | ProtocolViolation::MissingEvidence { role_id, .. }
            | ProtocolViolation::RoleBudgetExceeded { role_id, .. }
            | ProtocolViolation::AuthorityEscalation { role_id, .. }
            | ProtocolViolation::Quarantined { role_id } => role_id,
        }
    }
}
