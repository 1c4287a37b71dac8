#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use agentk_core::assurance::{Budget, BudgetLedger};
use agentk_core::audit::{AuditEvent, EventKind};
use agentk_core::contracts::{ErrorCode, FieldKind, FieldSchema, ToolCall, ToolSpec};
use agentk_core::harness::{FaultMode, FaultSpec, Scenario, ScenarioConfig, TOOL_NAMES};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn scenario_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

pub fn diagnosis_dir() -> PathBuf {
    scenario_root().join("diagnosis")
}

pub fn dialogue_path(name: &str) -> PathBuf {
    scenario_root().join("dialogue").join(format!("{name}.json"))
}

pub fn load(name: &str) -> Scenario {
    Scenario::load(&diagnosis_dir().join(format!("{name}.json"))).expect("shipped scenario loads")
}

pub fn with_config(cfg: ScenarioConfig) -> Scenario {
    Scenario::from_config(cfg, &diagnosis_dir()).expect("config is valid")
}

// ---------------------------------------------------------------------------
// Scenario generator

/// A high-risk-derived config with randomized asset, seed, derate fraction,
/// threshold, budget, retry limit and faults.
pub fn random_config(rng: &mut ChaCha8Rng, idx: usize) -> ScenarioConfig {
    let base = load("high_risk").config;
    let mut v = serde_json::to_value(&base).unwrap();
    let threshold = (rng.gen_range(20..=80) as f64) / 100.0;
    v["episode_id"] = json!(format!("rand-{idx}"));
    v["seed"] = json!(rng.gen_range(0..1_000_000u64));
    v["asset"] = json!(["BESS-07", "BESS-12"][rng.gen_range(0..2)]);
    v["derate_fraction"] = json!((rng.gen_range(5..=35) as f64) / 100.0);
    v["supervisor_policy"]["risk_threshold"] = json!(threshold);
    v["goal"]["objective"]["target"]["value"] = json!(threshold);
    v["budget"] = json!({
        "max_steps": rng.gen_range(2..=20),
        "max_cost_units": rng.gen_range(4..=40),
    });
    v["gateway"]["retry_max"] = json!(rng.gen_range(0..=4));
    let faults: Vec<FaultSpec> = (0..rng.gen_range(0..=2))
        .map(|_| {
            let mut f = FaultSpec::new(
                *TOOL_NAMES.choose(rng).unwrap(),
                *FaultMode::ALL.choose(rng).unwrap(),
                rng.gen_range(1..=3),
            );
            if rng.gen_bool(0.6) {
                f = f.times(rng.gen_range(1..=3));
            }
            f
        })
        .collect();
    v["faults"] = serde_json::to_value(faults).unwrap();
    serde_json::from_value(v).expect("generated config parses")
}

// ---------------------------------------------------------------------------
// Trace scanners

/// Seqs of actuating adapter invocations not preceded by a passing
/// simulation verdict for the same step.
pub fn ungated_actuations(events: &[AuditEvent]) -> Vec<u64> {
    let mut cleared: BTreeSet<String> = BTreeSet::new();
    let mut bad = Vec::new();
    for e in events {
        match e.kind {
            EventKind::VerdictIssued => {
                let v = &e.payload["verdict"];
                if e.payload["subject_kind"] == "simulation" && v["pass"] == true {
                    if let Some(s) = v["subject_ref"].as_str() {
                        cleared.insert(s.to_string());
                    }
                }
            }
            EventKind::AdapterInvoked => {
                let scope = e.payload["scope"].as_str().unwrap_or("");
                if scope.starts_with("Actuate") {
                    let step = e.payload["step"]
                        .as_str()
                        .or_else(|| e.payload["call_id"].as_str())
                        .unwrap_or("");
                    if !cleared.contains(step) {
                        bad.push(e.seq);
                    }
                }
            }
            _ => {}
        }
    }
    bad
}

/// Replays every logged budget check: the ledger must equal the sum of
/// previously admitted increments, every admitted prefix must stay within
/// budget, and every halt must be a genuine overrun.
pub fn budget_prefix_problems(events: &[AuditEvent]) -> Vec<String> {
    let mut expected: BTreeMap<String, BudgetLedger> = BTreeMap::new();
    let mut problems = Vec::new();
    for e in events.iter().filter(|e| e.kind == EventKind::BudgetCheck) {
        let scope = e.payload["scope"].as_str().unwrap_or("").to_string();
        let ledger: BudgetLedger = serde_json::from_value(e.payload["ledger"].clone()).unwrap();
        let inc: BudgetLedger = serde_json::from_value(e.payload["increment"].clone()).unwrap();
        let budget: Budget = serde_json::from_value(e.payload["budget"].clone()).unwrap();
        let want = expected.entry(scope.clone()).or_default();
        if ledger != *want {
            problems.push(format!("seq {}: ledger does not match admitted prefix", e.seq));
        }
        if !ledger.within(&budget) {
            problems.push(format!("seq {}: ledger already over budget", e.seq));
        }
        let next = ledger.plus(&inc);
        match e.payload["decision"]["decision"].as_str() {
            Some("continue") => {
                if !next.within(&budget) {
                    problems.push(format!("seq {}: admitted an overrun", e.seq));
                }
                *want = next;
            }
            Some("halt") => {
                if next.within(&budget) {
                    problems.push(format!("seq {}: halted within budget", e.seq));
                }
            }
            other => problems.push(format!("seq {}: bad decision {other:?}", e.seq)),
        }
    }
    problems
}

/// Flips one byte of one event line (never the header) and returns the
/// tampered file with the seq of the touched event.
pub fn tamper(text: &str, rng: &mut ChaCha8Rng) -> (Vec<u8>, u64) {
    let mut bytes = text.as_bytes().to_vec();
    let header_end = bytes.iter().position(|b| *b == b'\n').unwrap() + 1;
    let pos = rng.gen_range(header_end..bytes.len());
    let seq = bytes[header_end..pos].iter().filter(|b| **b == b'\n').count() as u64;
    bytes[pos] ^= rng.gen_range(1..=255u8);
    (bytes, seq)
}

// ---------------------------------------------------------------------------
// Schema and argument fuzzing with an independent oracle

const NAMES: [&str; 8] = ["a", "b", "speed", "mode", "target", "items", "limit", "note"];

fn random_field(rng: &mut ChaCha8Rng, name: &str, depth: u32) -> FieldSchema {
    let kinds: &[FieldKind] = if depth >= 2 {
        &[FieldKind::Text, FieldKind::Integer, FieldKind::Decimal, FieldKind::Boolean, FieldKind::Enumeration]
    } else {
        &[
            FieldKind::Text,
            FieldKind::Integer,
            FieldKind::Decimal,
            FieldKind::Boolean,
            FieldKind::Enumeration,
            FieldKind::NestedDocument,
            FieldKind::List,
        ]
    };
    let kind = *kinds.choose(rng).unwrap();
    let mut f = FieldSchema::new(name, kind);
    f.required = rng.gen_bool(0.5);
    match kind {
        FieldKind::Integer | FieldKind::Decimal => {
            let lo = rng.gen_range(-10..=10) as f64;
            let hi = lo + rng.gen_range(0..=20) as f64;
            f.min = rng.gen_bool(0.6).then_some(lo);
            f.max = rng.gen_bool(0.6).then_some(hi);
        }
        FieldKind::Text => f.max_len = rng.gen_bool(0.5).then(|| rng.gen_range(0..6)),
        FieldKind::Enumeration => {
            f.allowed = ["low", "mid", "high", "é"]
                .iter()
                .filter(|_| rng.gen_bool(0.6))
                .map(|s| s.to_string())
                .collect();
            if f.allowed.is_empty() {
                f.allowed.push("low".into());
            }
        }
        FieldKind::NestedDocument => f.children = random_fields(rng, depth + 1),
        FieldKind::List => f.children = vec![random_field(rng, "item", depth + 1)],
        FieldKind::Boolean => {}
    }
    f
}

fn random_fields(rng: &mut ChaCha8Rng, depth: u32) -> Vec<FieldSchema> {
    let mut names: Vec<&str> = NAMES.to_vec();
    names.shuffle(rng);
    let n = rng.gen_range(if depth == 0 { 0 } else { 1 }..=4);
    names[..n].iter().map(|name| random_field(rng, name, depth)).collect()
}

pub fn random_spec(rng: &mut ChaCha8Rng) -> ToolSpec {
    ToolSpec {
        name: "fuzz".into(),
        version: "1".into(),
        scope: agentk_core::contracts::ToolScope::ReadOnly,
        arg_schema: random_fields(rng, 0),
        timeout_ticks: 1,
        rate_limit: Default::default(),
        requires_idempotency_key: rng.gen_bool(0.3),
        transient_error_codes: BTreeSet::new(),
    }
}

fn random_scalar(rng: &mut ChaCha8Rng) -> Value {
    match rng.gen_range(0..7) {
        0 => Value::Null,
        1 => json!(rng.gen_bool(0.5)),
        2 => json!(rng.gen_range(-30..=30)),
        3 => json!(rng.gen_range(-30.0..30.0)),
        4 => json!(["low", "mid", "high", "é", "x", ""][rng.gen_range(0..6)]),
        5 => json!("ünïcødé text"),
        _ => json!([]),
    }
}

fn value_for(rng: &mut ChaCha8Rng, f: &FieldSchema) -> Value {
    if rng.gen_bool(0.2) {
        return random_scalar(rng);
    }
    match f.kind {
        FieldKind::Integer => json!(rng.gen_range(-15..=35)),
        FieldKind::Decimal => {
            if rng.gen_bool(0.5) {
                json!(rng.gen_range(-15.0..35.0))
            } else {
                json!(rng.gen_range(-15..=35))
            }
        }
        FieldKind::Text => {
            let len = rng.gen_range(0..8);
            json!("ab✓défg".chars().cycle().take(len).collect::<String>())
        }
        FieldKind::Boolean => json!(rng.gen_bool(0.5)),
        FieldKind::Enumeration => {
            if rng.gen_bool(0.7) {
                json!(f.allowed.choose(rng).unwrap())
            } else {
                json!("unlisted")
            }
        }
        FieldKind::NestedDocument => object_for(rng, &f.children),
        FieldKind::List => {
            let n = rng.gen_range(0..4);
            Value::Array((0..n).map(|_| value_for(rng, &f.children[0])).collect())
        }
    }
}

fn object_for(rng: &mut ChaCha8Rng, fields: &[FieldSchema]) -> Value {
    let mut m = Map::new();
    for f in fields {
        if rng.gen_bool(0.85) {
            m.insert(f.name.clone(), value_for(rng, f));
        }
    }
    if rng.gen_bool(0.2) {
        m.insert(["zz", "extra", "a_b"][rng.gen_range(0..3)].into(), random_scalar(rng));
    }
    Value::Object(m)
}

pub fn random_call(rng: &mut ChaCha8Rng, spec: &ToolSpec) -> ToolCall {
    let args = if rng.gen_bool(0.03) { random_scalar(rng) } else { object_for(rng, &spec.arg_schema) };
    let version = if rng.gen_bool(0.02) { "2" } else { "1" };
    let mut call = ToolCall::new("c", "fuzz", version, args, "fuzzer");
    match rng.gen_range(0..3) {
        0 => {}
        1 => call.idempotency_key = Some(String::new()),
        _ => call.idempotency_key = Some("k".into()),
    }
    call
}

/// Independent reference walker: the violation multiset as (code, path).
pub fn oracle(spec: &ToolSpec, call: &ToolCall) -> Vec<(ErrorCode, String)> {
    let mut out = Vec::new();
    if call.tool_name != spec.name || call.tool_version != spec.version {
        return vec![(ErrorCode::UnknownTool, "tool_name".into())];
    }
    match call.args.as_object() {
        Some(obj) => walk_object(&spec.arg_schema, obj, "", &mut out),
        None => out.push((ErrorCode::TypeMismatch, "$".into())),
    }
    if spec.requires_idempotency_key && call.idempotency_key.as_deref().unwrap_or("").is_empty() {
        out.push((ErrorCode::MissingIdempotencyKey, "idempotency_key".into()));
    }
    out.sort();
    out
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

fn walk_object(fields: &[FieldSchema], obj: &Map<String, Value>, prefix: &str, out: &mut Vec<(ErrorCode, String)>) {
    let declared: BTreeSet<&str> = fields.iter().map(|f| f.name.as_str()).collect();
    for key in obj.keys().filter(|k| !declared.contains(k.as_str())) {
        out.push((ErrorCode::UnknownField, join(prefix, key)));
    }
    for f in fields {
        let path = join(prefix, &f.name);
        match obj.get(&f.name) {
            None if f.required => out.push((ErrorCode::MissingField, path)),
            None => {}
            Some(v) => walk_value(f, v, &path, out),
        }
    }
}

fn walk_value(f: &FieldSchema, v: &Value, path: &str, out: &mut Vec<(ErrorCode, String)>) {
    let type_ok = match f.kind {
        FieldKind::Integer => v.as_i64().is_some() || v.as_u64().is_some(),
        FieldKind::Decimal => v.is_number(),
        FieldKind::Text | FieldKind::Enumeration => v.is_string(),
        FieldKind::Boolean => v.is_boolean(),
        FieldKind::NestedDocument => v.is_object(),
        FieldKind::List => v.is_array(),
    };
    if !type_ok {
        out.push((ErrorCode::TypeMismatch, path.to_string()));
        return;
    }
    match f.kind {
        FieldKind::Integer | FieldKind::Decimal => {
            let x = v.as_f64().unwrap();
            let over = f.max.is_some_and(|hi| x > hi);
            let under = f.min.is_some_and(|lo| x < lo);
            if over || under {
                out.push((ErrorCode::OutOfRange, path.to_string()));
            }
        }
        FieldKind::Text => {
            if f.max_len.is_some_and(|n| v.as_str().unwrap().chars().count() > n) {
                out.push((ErrorCode::OutOfRange, path.to_string()));
            }
        }
        FieldKind::Enumeration => {
            if !f.allowed.iter().any(|a| a == v.as_str().unwrap()) {
                out.push((ErrorCode::NotInEnumeration, path.to_string()));
            }
        }
        FieldKind::NestedDocument => walk_object(&f.children, v.as_object().unwrap(), path, out),
        FieldKind::List => {
            for (i, item) in v.as_array().unwrap().iter().enumerate() {
                walk_value(&f.children[0], item, &format!("{path}[{i}]"), out);
            }
        }
        FieldKind::Boolean => {}
    }
}
