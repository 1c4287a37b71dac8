//! A deterministic reliability kernel for tool-using agents.
//!
//! Proposals from pluggable, scripted planners pass through typed tool
//! contracts ([`contracts`]), a permissioned execution gateway
//! ([`gateway`]), assurance gates ([`assurance`]) and governed memory
//! ([`memory`]). Multi-agent dialogues run under [`protocol`]. Every decision
//! lands in a hash-chained audit log ([`audit`]) that supports bit-exact
//! replay. [`harness`] wires it all into the over-temperature diagnosis
//! scenario and the `agentk` CLI.

pub mod assurance;
pub mod audit;
pub mod canonical;
pub mod clock;
pub mod contracts;
pub mod gateway;
pub mod harness;
pub mod memory;
pub mod planner;
pub mod predicate;
pub mod protocol;

/// Component versions recorded in trace headers; a replay refuses to run
/// against a build whose versions differ.
pub fn component_versions() -> std::collections::BTreeMap<String, String> {
    [
        ("contracts", "1.0.0"),
        ("gateway", "1.0.0"),
        ("memory", "1.0.0"),
        ("planner", "1.0.0"),
        ("assurance", "1.0.0"),
        ("protocol", "1.0.0"),
        ("audit", "1.0.0"),
        ("harness", "1.0.0"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}
