//! Scripted triage dialogues (proposer, critic, referee) loaded from
//! scenario files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::ConfigError;
use crate::assurance::Verdict;
use crate::audit::{AuditEvent, AuditSink, Component, EpisodeFactory, EpisodeTrace, EventKind, Playback, Recorder, TraceHeader, TraceKind, TRACE_FORMAT};
use crate::canonical::{hash_of, hash_value, to_value, Digest, HashAlgorithm};
use crate::clock::LogicalClock;
use crate::protocol::{run_dialogue, DialogueAgent, DialogueConfig, DialogueOutcome, Message, RoleDescriptor, ScriptedAgent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DialogueScenario {
    pub dialogue_id: String,
    pub seed: u64,
    pub roles: Vec<RoleDescriptor>,
    pub config: DialogueConfig,
    pub agents: Vec<ScriptedAgent>,
    #[serde(default)]
    pub verdicts: Vec<Verdict>,
}

#[derive(Debug, Clone)]
pub struct DialogueRun {
    pub trace: EpisodeTrace,
    pub outcome: DialogueOutcome,
    pub transcript: Vec<Message>,
}

impl DialogueScenario {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let s: DialogueScenario = serde_json::from_str(text).map_err(|e| ConfigError::Malformed(e.to_string()))?;
        if s.dialogue_id.is_empty() || s.dialogue_id.contains(['/', '\\']) {
            return Err(ConfigError::Malformed(format!("bad dialogue_id {:?}", s.dialogue_id)));
        }
        if let Some(a) = s.agents.iter().find(|a| !s.roles.iter().any(|r| r.role_id == a.role_id)) {
            return Err(ConfigError::Malformed(format!("agent {} has no role", a.role_id)));
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Everything but the seed.
    pub fn config_hash(&self) -> Digest {
        let mut v = to_value(self);
        if let Some(obj) = v.as_object_mut() {
            obj.remove("seed");
        }
        hash_value(&v)
    }

    pub fn header(&self, seed: u64, config_path: Option<String>) -> TraceHeader {
        TraceHeader {
            format: TRACE_FORMAT.into(),
            kind: TraceKind::Dialogue,
            episode_id: self.dialogue_id.clone(),
            seed,
            hash_algorithm: HashAlgorithm::Sha256,
            config_hash: self.config_hash(),
            registry_hash: hash_of(&self.roles),
            policy_hash: hash_of(&self.config),
            component_versions: crate::component_versions(),
            config_path,
        }
    }

    pub fn run(&self, seed: u64, config_path: Option<String>) -> Result<DialogueRun, ConfigError> {
        let header = self.header(seed, config_path);
        let rec = Recorder::new(header.hash_algorithm, LogicalClock::new());
        rec.emit(Component::Harness, EventKind::EpisodeStarted, json!({ "header": header }));
        let mut agents: BTreeMap<String, Box<dyn DialogueAgent>> = self
            .agents
            .iter()
            .map(|a| (a.role_id.clone(), Box::new(a.clone()) as Box<dyn DialogueAgent>))
            .collect();
        let (outcome, transcript) = run_dialogue(
            self.roles.clone(),
            &mut agents,
            self.config.clone(),
            &self.verdicts,
            seed,
            &rec,
        )
        .map_err(|e| ConfigError::Malformed(e.to_string()))?;
        Ok(DialogueRun {
            trace: EpisodeTrace {
                header,
                events: rec.events(),
            },
            outcome,
            transcript,
        })
    }
}

/// Replays dialogue traces; scripted agents make no adapter calls, so the
/// playback queues go unused.
pub struct DialogueFactory<'a> {
    pub scenario: &'a DialogueScenario,
}

impl EpisodeFactory for DialogueFactory<'_> {
    fn component_versions(&self) -> BTreeMap<String, String> {
        crate::component_versions()
    }

    fn config_hash(&self) -> Digest {
        self.scenario.config_hash()
    }

    fn rerun(&self, header: &TraceHeader, _playback: Playback) -> Result<Vec<AuditEvent>, String> {
        if header.kind != TraceKind::Dialogue {
            return Err("not a dialogue trace".into());
        }
        self.scenario
            .run(header.seed, header.config_path.clone())
            .map(|r| r.trace.events)
            .map_err(|e| e.to_string())
    }
}
