use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::engine::{AgentView, DialogueAgent};
use super::message::{Message, MessageDraft, SpeechAct};

/// Stands for the payload hash of the latest proposal in the agent's view.
pub const LATEST_PROPOSAL: &str = "$latest_proposal";

/// Deterministic agent read from a fixture: a reply keyed by transcript
/// prefix hash wins, then the entry for the current round, then the
/// fallback. A null entry is a pass.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptedAgent {
    pub role_id: String,
    #[serde(default)]
    pub by_prefix: BTreeMap<String, Option<MessageDraft>>,
    #[serde(default)]
    pub turns: Vec<Option<MessageDraft>>,
    #[serde(default)]
    pub fallback: Option<MessageDraft>,
}

impl ScriptedAgent {
    pub fn new(role_id: impl Into<String>, turns: Vec<Option<MessageDraft>>) -> Self {
        Self {
            role_id: role_id.into(),
            turns,
            ..Self::default()
        }
    }
}

fn resolve(v: &Value, latest: Option<&str>) -> Value {
    match v {
        Value::String(s) if s == LATEST_PROPOSAL => latest.map_or(Value::Null, |h| Value::String(h.to_string())),
        Value::Array(items) => Value::Array(items.iter().map(|i| resolve(i, latest)).collect()),
        Value::Object(map) => Value::Object(map.iter().map(|(k, i)| (k.clone(), resolve(i, latest))).collect()),
        other => other.clone(),
    }
}

impl DialogueAgent for ScriptedAgent {
    fn respond(&mut self, view: &AgentView, _seed: u64) -> Option<MessageDraft> {
        let key = view.prefix_hash().to_hex();
        let scripted = match self.by_prefix.get(&key) {
            Some(entry) => entry.clone(),
            None => match self.turns.get(view.round.saturating_sub(1) as usize) {
                Some(entry) => entry.clone(),
                None => self.fallback.clone(),
            },
        };
        let mut draft = scripted?;
        let latest = view.latest_proposal().map(|e| e.payload_hash.to_hex());
        draft.payload = resolve(&draft.payload, latest.as_deref());
        if draft.role_id.is_empty() {
            draft.role_id = self.role_id.clone();
        }
        Some(draft)
    }
}

fn reply_target(m: &Message) -> Option<String> {
    if let Some(h) = m.accepted() {
        return Some(h.to_hex());
    }
    let p = &m.payload;
    let field = match m.speech_act {
        SpeechAct::Critique => p.get("target"),
        SpeechAct::Decision => p.get("adopt").and_then(|a| a.get("payload_hash")),
        _ => None,
    };
    field.and_then(Value::as_str).map(str::to_string)
}

/// Conversation graph for audits: message and artifact nodes, reply and
/// evidence edges.
pub fn conversation_dag(transcript: &[Message]) -> Value {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    let mut artifacts = std::collections::BTreeSet::new();
    let mut by_hash: BTreeMap<String, u64> = BTreeMap::new();
    for m in transcript {
        let id = format!("m{}", m.seq);
        nodes.push(json!({
            "id": id,
            "kind": "message",
            "payload_hash": m.payload_hash,
            "role": m.role_id,
            "round": m.round,
            "speech_act": m.speech_act,
        }));
        if let Some(target) = reply_target(m).and_then(|t| by_hash.get(&t).copied()) {
            edges.push(json!({"from": id, "kind": "reply", "to": format!("m{target}")}));
        }
        for e in &m.evidence_refs {
            artifacts.insert(e.clone());
            edges.push(json!({"from": id, "kind": "evidence", "to": e}));
        }
        if m.speech_act == SpeechAct::Proposal {
            by_hash.entry(m.payload_hash.to_hex()).or_insert(m.seq);
        }
    }
    nodes.extend(artifacts.into_iter().map(|a| json!({"id": a, "kind": "artifact"})));
    json!({ "edges": edges, "nodes": nodes })
}
