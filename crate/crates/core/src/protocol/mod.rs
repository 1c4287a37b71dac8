//! Multi-agent dialogues: typed messages, fixed roles, round-robin turns,
//! stop rules and deterministic arbitration.

mod engine;
mod message;
mod script;

pub use engine::{
    arbitrate, detect_fixed_point, evidence_score, run_dialogue, scored_proposals, AgentView, ArbiterDecision,
    Dialogue, DialogueAgent, DialogueConfig, DialogueError, DialogueOutcome, NoProposals, ScoredProposal, ViewEntry,
    ARBITER_RULE_VERSION, DEFAULT_VIOLATION_LIMIT,
};
pub use message::{Message, MessageDraft, ProtocolViolation, RoleDescriptor, SpeechAct, ToolCallRef, ACCEPT_KEY};
pub use script::{conversation_dag, ScriptedAgent, LATEST_PROPOSAL};
