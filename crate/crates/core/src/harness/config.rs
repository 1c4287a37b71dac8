use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::assurance::{Budget, Goal, SupervisorPolicy};
use crate::canonical::{hash_value, to_value, Digest};
use crate::contracts::CapabilityToken;
use crate::gateway::GatewayConfig;

use super::tools::TOOL_NAMES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultMode {
    SchemaMismatch,
    TransientFlake,
    MissingData,
    PermanentFailure,
}

impl FaultMode {
    pub const ALL: [FaultMode; 4] = [
        FaultMode::SchemaMismatch,
        FaultMode::TransientFlake,
        FaultMode::MissingData,
        FaultMode::PermanentFailure,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FaultMode::SchemaMismatch => "schema_mismatch",
            FaultMode::TransientFlake => "transient_flake",
            FaultMode::MissingData => "missing_data",
            FaultMode::PermanentFailure => "permanent_failure",
        }
    }
}

impl FromStr for FaultMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FaultMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown fault mode {s}"))
    }
}

/// A fault applied to the `at_call_index`-th (1-based) call of a tool and
/// the `count - 1` calls after it; no count means every later call.
/// Schema mismatches corrupt the bound call before validation; the other
/// modes act at the adapter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub target_tool: String,
    pub mode: FaultMode,
    pub at_call_index: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u32>,
}

impl FaultSpec {
    pub fn new(target_tool: impl Into<String>, mode: FaultMode, at_call_index: u32) -> Self {
        Self {
            target_tool: target_tool.into(),
            mode,
            at_call_index,
            count: None,
        }
    }

    pub fn times(mut self, count: u32) -> Self {
        self.count = Some(count);
        self
    }

    pub fn hits(&self, call_index: u32) -> bool {
        call_index >= self.at_call_index
            && self
                .count
                .is_none_or(|c| u64::from(call_index) < u64::from(self.at_call_index) + u64::from(c))
    }
}

impl fmt::Display for FaultSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.target_tool, self.mode.as_str(), self.at_call_index)?;
        if let Some(c) = self.count {
            write!(f, ":{c}")?;
        }
        Ok(())
    }
}

/// `tool:mode:at[:count]`, or a JSON document.
impl FromStr for FaultSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.starts_with('{') {
            return serde_json::from_str(s).map_err(|e| e.to_string());
        }
        let parts: Vec<&str> = s.split(':').collect();
        if !(3..=4).contains(&parts.len()) {
            return Err(format!("expected tool:mode:at[:count], got {s}"));
        }
        let at = parts[2].parse().map_err(|_| format!("bad call index {}", parts[2]))?;
        let mut spec = FaultSpec::new(parts[0], parts[1].parse()?, at);
        if let Some(c) = parts.get(3) {
            spec.count = Some(c.parse().map_err(|_| format!("bad count {c}"))?);
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixturePaths {
    pub thermal: String,
    pub risk_table: String,
    pub firmware: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub episode_id: String,
    pub seed: u64,
    pub asset: String,
    pub goal: Goal,
    pub budget: Budget,
    pub supervisor_policy: SupervisorPolicy,
    /// Grants by role; the episode executes under `executor`.
    pub tokens: BTreeMap<String, CapabilityToken>,
    pub derate_fraction: f64,
    #[serde(default = "default_window")]
    pub telemetry_window: u64,
    pub fixtures: FixturePaths,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    #[serde(default)]
    pub gateway: GatewayConfig,
    /// Whether operator approvals may be granted; off auto-denies them.
    #[serde(default)]
    pub interactive: bool,
}

fn default_window() -> u64 {
    60
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Malformed(String),
    #[error("fixture missing: {0}")]
    FixtureMissing(PathBuf),
    #[error("malformed fixture {path}: {reason}")]
    BadFixture { path: PathBuf, reason: String },
    #[error("unknown tool {0}")]
    UnknownTool(String),
}

/// Fixture documents, loaded once per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixtures {
    pub thermal: Value,
    pub risk_table: Value,
    pub firmware: Value,
}

impl Fixtures {
    pub fn hashes(&self) -> Value {
        json!({
            "firmware": hash_value(&self.firmware),
            "risk_table": hash_value(&self.risk_table),
            "thermal": hash_value(&self.thermal),
        })
    }
}

/// A config together with the directory its relative paths resolve from.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub base_dir: PathBuf,
    pub fixtures: Fixtures,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| ConfigError::Malformed(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if self.episode_id.is_empty() || self.episode_id.contains(['/', '\\']) {
            return Err(ConfigError::Malformed(format!("bad episode_id {:?}", self.episode_id)));
        }
        self.goal.check().map_err(|e| ConfigError::Malformed(e.to_string()))?;
        self.supervisor_policy
            .check()
            .map_err(|e| ConfigError::Malformed(e.to_string()))?;
        if !self.tokens.contains_key("executor") {
            return Err(ConfigError::Malformed("no executor token".into()));
        }
        if !self.derate_fraction.is_finite() {
            return Err(ConfigError::Malformed("derate_fraction must be finite".into()));
        }
        for f in &self.faults {
            check_fault(f)?;
        }
        Ok(())
    }

    /// Canonical config text.
    pub fn to_canonical(&self) -> String {
        crate::canonical::canonical_of(self)
    }
}

fn check_fault(f: &FaultSpec) -> Result<(), ConfigError> {
    if !TOOL_NAMES.contains(&f.target_tool.as_str()) {
        return Err(ConfigError::UnknownTool(f.target_tool.clone()));
    }
    if f.at_call_index == 0 {
        return Err(ConfigError::Malformed("fault call index is 1-based".into()));
    }
    Ok(())
}

/// Returns `config` with `fault` appended.
pub fn inject(config: &ScenarioConfig, fault: FaultSpec) -> Result<ScenarioConfig, ConfigError> {
    check_fault(&fault)?;
    let mut out = config.clone();
    out.faults.push(fault);
    Ok(out)
}

fn read_json(path: &Path) -> Result<Value, ConfigError> {
    if !path.exists() {
        return Err(ConfigError::FixtureMissing(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| ConfigError::BadFixture {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

impl Scenario {
    pub fn from_config(config: ScenarioConfig, base_dir: &Path) -> Result<Self, ConfigError> {
        config.check()?;
        let fx = &config.fixtures;
        let fixtures = Fixtures {
            thermal: read_json(&base_dir.join(&fx.thermal))?,
            risk_table: read_json(&base_dir.join(&fx.risk_table))?,
            firmware: read_json(&base_dir.join(&fx.firmware))?,
        };
        Ok(Self {
            config,
            base_dir: base_dir.to_path_buf(),
            fixtures,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config = ScenarioConfig::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_config(config, base)
    }

    /// Covers the config (minus the seed, which the header records
    /// separately) and every fixture document.
    pub fn config_hash(&self) -> Digest {
        let mut cfg = to_value(&self.config);
        if let Some(obj) = cfg.as_object_mut() {
            obj.remove("seed");
        }
        hash_value(&json!({"config": cfg, "fixtures": self.fixtures.hashes()}))
    }
}
