mod common;

use std::path::Path;

use agentk_core::assurance::StopCode;
use agentk_core::audit::{AuditEvent, EventKind};
use agentk_core::harness::{
    cli_with, inject, run_episode, thermal_features, twin_risk, AdapterSource, ConfigError, FaultMode, FaultSpec,
    Scenario, ScenarioConfig, EXIT_CONFIG, EXIT_USAGE,
};
use serde_json::json;

fn events_of(kind: EventKind, events: &[AuditEvent]) -> Vec<&AuditEvent> {
    events.iter().filter(|e| e.kind == kind).collect()
}

fn actuations(events: &[AuditEvent]) -> Vec<&AuditEvent> {
    events
        .iter()
        .filter(|e| e.kind == EventKind::AdapterInvoked && e.payload["scope"].as_str().is_some_and(|s| s.starts_with("Actuate")))
        .collect()
}

fn run_with(base: &str, faults: &[FaultSpec]) -> agentk_core::harness::EpisodeRun {
    let mut cfg = common::load(base).config;
    for f in faults {
        cfg = inject(&cfg, f.clone()).unwrap();
    }
    let scenario = common::with_config(cfg);
    run_episode(&scenario, scenario.config.seed, AdapterSource::Live, None)
}

fn mode_changes(events: &[AuditEvent]) -> Vec<String> {
    events_of(EventKind::ModeChange, events)
        .iter()
        .map(|e| e.payload["to"].as_str().unwrap().to_string())
        .collect()
}

#[test]
fn nominal_risk_means_no_actuation() {
    let run = run_with("nominal", &[]);
    assert_eq!(run.summary.why_stopped.code, StopCode::GoalSatisfied);
    assert_eq!(run.summary.exit_code, 0);
    assert!(run.summary.actions_taken.is_empty());
    assert!(actuations(&run.trace.events).is_empty());
    assert_eq!(events_of(EventKind::StepSkipped, &run.trace.events).len(), 2);
}

#[test]
fn high_risk_derates_within_cap_and_raises_ticket() {
    let run = run_with("high_risk", &[]);
    assert_eq!(run.summary.why_stopped.code, StopCode::GoalSatisfied);
    assert_eq!(run.summary.actions_taken, vec!["E3:derate_command", "E4:schedule_service"]);
    assert!(run.summary.escalations >= 1);
    assert!(!events_of(EventKind::Escalation, &run.trace.events).is_empty());

    let validated = events_of(EventKind::CallValidated, &run.trace.events);
    let derate = validated
        .iter()
        .find(|e| e.payload["call"]["tool_name"] == "derate_command")
        .expect("derate validated");
    let fraction = derate.payload["call"]["args"]["fraction"].as_f64().unwrap();
    let cap = common::load("high_risk").config.tokens["executor"].parameter_caps["fraction"].max.unwrap();
    assert!(fraction <= cap);

    let ticket = events_of(EventKind::AdapterInvoked, &run.trace.events)
        .into_iter()
        .find(|e| e.payload["tool"] == "schedule_service")
        .expect("ticket issued");
    assert!(ticket.payload["reply"]["ok"].is_object(), "{}", ticket.payload);
}

#[test]
fn over_cap_fraction_is_refused_and_halts() {
    let run = run_with("over_cap", &[]);
    assert_eq!(run.summary.why_stopped.code, StopCode::SafetyHalt);
    assert_eq!(run.summary.exit_code, 20);
    let refused = events_of(EventKind::Refused, &run.trace.events);
    assert!(refused
        .iter()
        .any(|e| e.payload["errors"].as_array().unwrap().iter().any(|x| x["code"] == "CapExceeded")));
    assert!(!events_of(EventKind::SafeHalt, &run.trace.events).is_empty());
    assert!(actuations(&run.trace.events).is_empty());
}

#[test]
fn schema_mismatch_on_twin_halts_without_actuation() {
    let run = run_with("high_risk", &[FaultSpec::new("twin_simulate", FaultMode::SchemaMismatch, 1)]);
    assert_eq!(run.summary.why_stopped.code, StopCode::SafetyHalt);
    assert_ne!(run.summary.exit_code, 0);
    assert!(actuations(&run.trace.events).is_empty());
    assert!(!events_of(EventKind::SafeHalt, &run.trace.events).is_empty());
    assert!(!events_of(EventKind::Escalation, &run.trace.events).is_empty());
}

#[test]
fn schema_mismatch_is_rejected_before_any_adapter_call() {
    let run = run_with("high_risk", &[FaultSpec::new("telemetry_query", FaultMode::SchemaMismatch, 1)]);
    let events = &run.trace.events;
    let rejected = events.iter().position(|e| e.kind == EventKind::CallRejected).expect("rejection logged");
    assert!(events[rejected].payload["call"]["tool_name"] == "telemetry_query");
    assert!(events.iter().all(|e| e.kind != EventKind::AdapterInvoked));
    assert_eq!(run.summary.why_stopped.code, StopCode::SafetyHalt);
}

#[test]
fn two_transient_flakes_are_absorbed_by_retries() {
    let run = run_with(
        "high_risk",
        &[FaultSpec::new("telemetry_query", FaultMode::TransientFlake, 1).times(2)],
    );
    assert_eq!(run.summary.why_stopped.code, StopCode::GoalSatisfied);
    let outcome = events_of(EventKind::GatewayOutcome, &run.trace.events)
        .into_iter()
        .find(|e| e.payload["outcome"]["call_id"].as_str().unwrap().ends_with("-E1"))
        .expect("E1 outcome");
    assert_eq!(outcome.payload["outcome"]["attempts"], 3);
    assert_eq!(outcome.payload["outcome"]["status"], "Ok");
}

#[test]
fn persistent_flake_degrades_to_read_only() {
    let run = run_with("high_risk", &[FaultSpec::new("telemetry_query", FaultMode::TransientFlake, 1)]);
    assert_eq!(run.summary.why_stopped.code, StopCode::SafetyHalt);
    assert_eq!(mode_changes(&run.trace.events).first().map(String::as_str), Some("read_only"));
    let outcome = &events_of(EventKind::GatewayOutcome, &run.trace.events)[0].payload["outcome"];
    assert_eq!(outcome["attempts"], 4);
}

#[test]
fn permanent_telemetry_failure_degrades_to_monitor_only() {
    let run = run_with("high_risk", &[FaultSpec::new("telemetry_query", FaultMode::PermanentFailure, 1)]);
    assert_eq!(run.summary.why_stopped.code, StopCode::SafetyHalt);
    assert_eq!(mode_changes(&run.trace.events).first().map(String::as_str), Some("monitor_only"));
}

#[test]
fn failure_after_derate_compensates_it() {
    let run = run_with("high_risk", &[FaultSpec::new("schedule_service", FaultMode::PermanentFailure, 1)]);
    assert_eq!(run.summary.why_stopped.code, StopCode::SafetyHalt);
    assert_eq!(run.summary.compensated, vec!["E3"]);
    let comps = events_of(EventKind::CompensationInvoked, &run.trace.events);
    assert_eq!(comps.len(), 1);
    assert_eq!(comps[0].payload["tool"], "restore_command");
}

#[test]
fn runs_are_byte_identical() {
    let scenario = common::load("high_risk");
    let a = run_episode(&scenario, 7, AdapterSource::Live, None).trace.to_text();
    let b = run_episode(&scenario, 7, AdapterSource::Live, None).trace.to_text();
    assert_eq!(a, b);
}

#[test]
fn summary_matches_trace() {
    let run = run_with("high_risk", &[]);
    let last = run.trace.events.last().unwrap();
    assert_eq!(last.kind, EventKind::WhyStopped);
    assert_eq!(last.payload["summary"], serde_json::to_value(&run.summary).unwrap());
    assert_eq!(run.summary.escalations, events_of(EventKind::Escalation, &run.trace.events).len());
}

#[test]
fn thermal_features_match_hand_computation() {
    // Last 12 samples of BESS-12: 60.5 + 2.5i for i in 0..12.
    let series: Vec<f64> = (0..12).map(|i| 60.5 + 2.5 * i as f64).collect();
    let f = thermal_features(&series, 5.0);
    assert_eq!(f["peak_c"], json!(88.0));
    assert_eq!(f["mean_c"], json!(74.25));
    assert_eq!(f["slope_c_per_min"], json!(0.5));
}

#[test]
fn twin_risk_matches_hand_computation() {
    let table = json!({
        "bias": -1.2,
        "weights": {"peak_c": 0.02, "mean_c": 0.0, "slope_c_per_min": 0.5},
        "derate_gain": 1.6
    });
    let hot = json!({"peak_c": 88.0, "mean_c": 74.25, "slope_c_per_min": 0.5});
    // -1.2 + 1.76 + 0.25 = 0.81; the derate subtracts 1.6 * 0.25 = 0.4.
    assert_eq!(twin_risk(&table, &hot, 0.0), 0.81);
    assert_eq!(twin_risk(&table, &hot, 0.25), 0.41);
    // 62.0..64.2 in steps of 0.2: -1.2 + 1.284 + 0.5 * 0.04 = 0.104.
    let mild = json!({"peak_c": 64.2, "mean_c": 63.1, "slope_c_per_min": 0.04});
    assert_eq!(twin_risk(&table, &mild, 0.0), 0.104);
    assert_eq!(twin_risk(&table, &json!({"peak_c": 500.0}), 0.0), 1.0);
    assert_eq!(twin_risk(&table, &json!({"peak_c": 0.0}), 0.0), 0.0);
}

#[test]
fn fault_spec_text_round_trips() {
    let f: FaultSpec = "twin_simulate:schema_mismatch:1".parse().unwrap();
    assert_eq!(f, FaultSpec::new("twin_simulate", FaultMode::SchemaMismatch, 1));
    let g: FaultSpec = "telemetry_query:transient_flake:2:3".parse().unwrap();
    assert_eq!(g.count, Some(3));
    assert_eq!(g.to_string().parse::<FaultSpec>().unwrap(), g);
    assert!(!g.hits(1) && g.hits(2) && g.hits(4) && !g.hits(5));
    let json_form: FaultSpec = r#"{"target_tool":"calc","mode":"missing_data","at_call_index":1}"#.parse().unwrap();
    assert_eq!(json_form.mode, FaultMode::MissingData);
    assert!("calc:melted:1".parse::<FaultSpec>().is_err());
    assert!("calc:missing_data".parse::<FaultSpec>().is_err());
}

#[test]
fn config_errors_are_typed() {
    let base = common::load("nominal").config;
    assert!(matches!(
        inject(&base, FaultSpec::new("teleport", FaultMode::MissingData, 1)),
        Err(ConfigError::UnknownTool(_))
    ));
    assert!(matches!(ScenarioConfig::from_json("{"), Err(ConfigError::Malformed(_))));
    let mut missing = base.clone();
    missing.fixtures.thermal = "nope.json".into();
    assert!(matches!(
        Scenario::from_config(missing, &common::diagnosis_dir()),
        Err(ConfigError::FixtureMissing(_))
    ));
    let mut zero = base;
    zero.faults.push(FaultSpec::new("calc", FaultMode::MissingData, 0));
    assert!(zero.check().is_err());
}

// ---------------------------------------------------------------------------
// CLI

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["agentk"];
    argv.extend_from_slice(args);
    let code = cli_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn config_arg(name: &str) -> String {
    common::diagnosis_dir().join(format!("{name}.json")).display().to_string()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn cli_run_then_replay_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = cli(&["--non-interactive", "run", &config_arg("high_risk"), "--out", path_str(dir.path())]);
    assert_eq!(code, 0, "{out}");
    let trace = dir.path().join("diag-high-risk.trace");
    assert!(trace.exists());

    let (code, out, _) = cli(&["verify", path_str(&trace)]);
    assert_eq!(code, 0);
    assert!(out.starts_with("ok: "), "{out}");

    let (code, out, _) = cli(&["replay", path_str(&trace)]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("identical=true"), "{out}");
}

#[test]
fn cli_replay_of_tampered_trace_names_the_seq() {
    let dir = tempfile::tempdir().unwrap();
    cli(&["run", &config_arg("nominal"), "--out", path_str(dir.path())]);
    let trace = dir.path().join("diag-nominal.trace");
    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    // Line 0 is the header, so event 12 is line 13.
    lines[13] = lines[13].replacen("\"payload\":{", "\"payload\":{\"x\":1,", 1);
    std::fs::write(&trace, lines.join("\n") + "\n").unwrap();

    let (code, out, _) = cli(&["replay", path_str(&trace)]);
    assert_ne!(code, 0);
    assert!(out.contains("divergence at seq 12"), "{out}");
    let (code, out, _) = cli(&["verify", path_str(&trace)]);
    assert_ne!(code, 0);
    assert!(out.contains("seq 12"), "{out}");
}

#[test]
fn cli_seed_override_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    cli(&["--seed", "99", "run", &config_arg("nominal"), "--out", path_str(dir.path())]);
    let trace = agentk_core::audit::EpisodeTrace::read(&dir.path().join("diag-nominal.trace")).unwrap();
    assert_eq!(trace.header.seed, 99);
    let (code, _, _) = cli(&["replay", path_str(&dir.path().join("diag-nominal.trace"))]);
    assert_eq!(code, 0);
}

#[test]
fn cli_inject_prints_or_runs() {
    let (code, out, _) = cli(&["inject", &config_arg("high_risk"), "twin_simulate:schema_mismatch:1"]);
    assert_eq!(code, 0);
    let cfg: ScenarioConfig = serde_json::from_str(&out).unwrap();
    assert_eq!(cfg.faults, vec![FaultSpec::new("twin_simulate", FaultMode::SchemaMismatch, 1)]);

    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = cli(&[
        "inject",
        &config_arg("high_risk"),
        "twin_simulate:schema_mismatch:1",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code, 20, "{out}");
    let (code, out, _) = cli(&["replay", path_str(&dir.path().join("diag-high-risk.trace"))]);
    assert_eq!(code, 0, "{out}");

    let (code, _, err) = cli(&["inject", &config_arg("high_risk"), "teleport:missing_data:1"]);
    assert_eq!(code, EXIT_CONFIG, "{err}");
    let (code, _, _) = cli(&["inject", &config_arg("high_risk"), "garbage"]);
    assert_eq!(code, EXIT_USAGE);
}

#[test]
fn cli_usage_and_help() {
    let (code, _, err) = cli(&[]);
    assert_eq!(code, EXIT_USAGE);
    assert!(!err.is_empty());
    let (code, _, _) = cli(&["frobnicate"]);
    assert_eq!(code, EXIT_USAGE);
    let (code, out, _) = cli(&["--help"]);
    assert_eq!(code, 0);
    for line in ["0  goal_satisfied", "10  budget_exceeded", "20  safety_halt", "30  verifier_rejection", "40  non_convergence", "64  usage"] {
        assert!(out.contains(line), "help lacks {line:?}");
    }
    let (code, _, _) = cli(&["run", "/definitely/not/here.json"]);
    assert_eq!(code, EXIT_CONFIG);
}

#[test]
fn cli_dialogue_scripts_exit_with_their_codes() {
    let dir = tempfile::tempdir().unwrap();
    for (name, want) in [("agreeing", 0), ("looping", 40), ("exhausting", 10)] {
        let path = common::dialogue_path(name);
        let (code, out, _) = cli(&["dialogue", path_str(&path), "--out", path_str(dir.path()), "--dag"]);
        assert_eq!(code, want, "{name}: {out}");
        let trace = dir.path().join(format!("triage-{name}.trace"));
        let (code, out, _) = cli(&["replay", path_str(&trace)]);
        assert_eq!(code, 0, "{name}: {out}");
    }
}
