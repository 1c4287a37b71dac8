use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::schema::{check_schema, FieldSchema};
use super::scope::ToolScope;
use crate::canonical::{hash_of, Digest};
use crate::clock::Tick;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateLimit {
    /// Max admitted calls per rolling window.
    pub count: u32,
    pub window_ticks: Tick,
}

impl Default for RateLimit {
    fn default() -> Self {
        Self {
            count: u32::MAX,
            window_ticks: 1,
        }
    }
}

/// The contract for one tool version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolSpec {
    pub name: String,
    pub version: String,
    pub scope: ToolScope,
    pub arg_schema: Vec<FieldSchema>,
    /// Logical ticks an adapter may consume per attempt.
    pub timeout_ticks: Tick,
    #[serde(default)]
    pub rate_limit: RateLimit,
    pub requires_idempotency_key: bool,
    #[serde(default)]
    pub transient_error_codes: BTreeSet<String>,
}

impl ToolSpec {
    /// Invariant check; returns one message per problem.
    pub fn check(&self) -> Vec<String> {
        let mut problems: Vec<String> = check_schema(&self.arg_schema)
            .into_iter()
            .map(|p| format!("{}: {p}", self.name))
            .collect();
        if self.name.is_empty() {
            problems.push("tool name is empty".into());
        }
        if self.scope > ToolScope::Simulate && !self.requires_idempotency_key {
            problems.push(format!(
                "{}: scope {} requires an idempotency key",
                self.name, self.scope
            ));
        }
        if self.rate_limit.count == 0 || self.rate_limit.window_ticks == 0 {
            problems.push(format!("{}: rate limit must be at least 1 per 1 tick", self.name));
        }
        if self.timeout_ticks == 0 {
            problems.push(format!("{}: timeout must be positive", self.name));
        }
        problems
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RegistryError {
    #[error("registry document is not valid: {0}")]
    Parse(String),
    #[error("duplicate tool {name}@{version}")]
    Duplicate { name: String, version: String },
    #[error("invalid tool spec: {0:?}")]
    InvalidSpec(Vec<String>),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryDocument {
    tools: Vec<ToolSpec>,
}

/// Tool specs by name and version.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ToolRegistry {
    tools: BTreeMap<String, BTreeMap<String, ToolSpec>>,
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, spec: ToolSpec) -> Result<(), RegistryError> {
        let problems = spec.check();
        if !problems.is_empty() {
            return Err(RegistryError::InvalidSpec(problems));
        }
        let versions = self.tools.entry(spec.name.clone()).or_default();
        if versions.contains_key(&spec.version) {
            return Err(RegistryError::Duplicate {
                name: spec.name,
                version: spec.version,
            });
        }
        versions.insert(spec.version.clone(), spec);
        Ok(())
    }

    pub fn from_specs(specs: impl IntoIterator<Item = ToolSpec>) -> Result<Self, RegistryError> {
        let mut reg = Self::new();
        for s in specs {
            reg.register(s)?;
        }
        Ok(reg)
    }

    /// Loads the declarative JSON form `{"tools": [ToolSpec, ...]}`.
    pub fn from_json(text: &str) -> Result<Self, RegistryError> {
        let doc: RegistryDocument =
            serde_json::from_str(text).map_err(|e| RegistryError::Parse(e.to_string()))?;
        Self::from_specs(doc.tools)
    }

    pub fn to_json(&self) -> String {
        crate::canonical::canonical_of(&RegistryDocument {
            tools: self.specs().cloned().collect(),
        })
    }

    pub fn get(&self, name: &str, version: &str) -> Option<&ToolSpec> {
        self.tools.get(name)?.get(version)
    }

    /// Any registered version of `name` (the lexicographically greatest).
    pub fn any_version(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.get(name)?.values().next_back()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tools.contains_key(name)
    }

    pub fn specs(&self) -> impl Iterator<Item = &ToolSpec> {
        self.tools.values().flat_map(|v| v.values())
    }

    /// Digest over the canonical registry document, recorded in trace headers.
    pub fn registry_hash(&self) -> Digest {
        hash_of(&RegistryDocument {
            tools: self.specs().cloned().collect(),
        })
    }
}
