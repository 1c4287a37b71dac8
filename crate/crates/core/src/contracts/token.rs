use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::scope::ToolScope;
use crate::clock::Tick;

/// Bound on one argument path. Numeric bounds apply to number values;
/// `allowed` applies to enumeration values.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamCap {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed: Option<BTreeSet<String>>,
}

impl ParamCap {
    pub fn at_most(max: f64) -> Self {
        Self {
            max: Some(max),
            ..Self::default()
        }
    }

    pub fn one_of<I: IntoIterator<Item = S>, S: Into<String>>(values: I) -> Self {
        Self {
            allowed: Some(values.into_iter().map(Into::into).collect()),
            ..Self::default()
        }
    }

    pub fn is_numeric(&self) -> bool {
        self.min.is_some() || self.max.is_some()
    }
}

/// A time- and count-limited grant binding a role to tools, a scope ceiling
/// and parameter caps. Value-immutable: [`authorize`](super::authorize)
/// returns an updated copy with one more invocation used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapabilityToken {
    pub token_id: String,
    pub subject: String,
    /// Exact names or a single trailing wildcard (`telemetry.*`, `*`).
    pub tool_allowlist: Vec<String>,
    pub scope_ceiling: ToolScope,
    #[serde(default)]
    pub parameter_caps: BTreeMap<String, ParamCap>,
    pub expiry: Tick,
    pub max_invocations: u32,
    #[serde(default)]
    pub invocations_used: u32,
}

impl CapabilityToken {
    pub fn allows_tool(&self, tool: &str) -> bool {
        self.tool_allowlist.iter().any(|p| pattern_matches(p, tool))
    }

    pub fn remaining(&self) -> u32 {
        self.max_invocations.saturating_sub(self.invocations_used)
    }

    pub(crate) fn consumed(&self) -> Self {
        let mut t = self.clone();
        t.invocations_used += 1;
        t
    }
}

pub fn pattern_matches(pattern: &str, name: &str) -> bool {
    match pattern.strip_suffix('*') {
        Some(prefix) => name.starts_with(prefix),
        None => pattern == name,
    }
}
