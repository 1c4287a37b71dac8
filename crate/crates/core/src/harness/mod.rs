//! The over-temperature diagnosis scenario end to end: mock tools over
//! fixture files, the scripted plan, fault injection, scripted dialogues and
//! the `agentk` command line.

pub mod calc;
mod cli;
mod config;
mod dialogue;
mod episode;
mod planner;
mod tools;

pub use cli::{cli, cli_with, EXIT_CONFIG, EXIT_FAILURE, EXIT_USAGE};
pub use config::{inject, ConfigError, FaultMode, FaultSpec, FixturePaths, Fixtures, Scenario, ScenarioConfig};
pub use dialogue::{DialogueFactory, DialogueRun, DialogueScenario};
pub use episode::{
    registry_hash, run_episode, run_to_dir, trace_header, AdapterSource, EpisodeRun, EpisodeSummary, HarnessFactory,
};
pub use planner::diagnosis_plan;
pub use tools::{
    mock_adapters, registry, thermal_features, tool_specs, twin_risk, FaultAdapter, PERMANENT_CODE, TOOL_NAMES,
    TOOL_VERSION, TRANSIENT_CODE,
};
