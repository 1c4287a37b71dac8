//! Deterministic mock tools for the diagnosis scenario.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;

use serde_json::{json, Value};

use super::calc::eval_fixed;
use super::config::{FaultMode, FaultSpec, Fixtures};
use crate::canonical::seeded_u64;
use crate::contracts::{FieldKind, FieldSchema, RateLimit, ToolRegistry, ToolScope, ToolSpec};
use crate::gateway::{AdapterReply, ToolAdapter};

pub const TOOL_VERSION: &str = "1.0.0";
pub const TRANSIENT_CODE: &str = "transient_unavailable";
pub const PERMANENT_CODE: &str = "device_unreachable";

pub const TOOL_NAMES: [&str; 8] = [
    "telemetry_query",
    "firmware_status",
    "twin_simulate",
    "derate_command",
    "restore_command",
    "schedule_service",
    "cancel_service",
    "calc",
];

fn spec(name: &str, scope: ToolScope, arg_schema: Vec<FieldSchema>) -> ToolSpec {
    ToolSpec {
        name: name.into(),
        version: TOOL_VERSION.into(),
        scope,
        arg_schema,
        timeout_ticks: 5,
        rate_limit: RateLimit::default(),
        requires_idempotency_key: scope.is_actuating(),
        transient_error_codes: BTreeSet::from([TRANSIENT_CODE.to_string()]),
    }
}

fn asset() -> FieldSchema {
    FieldSchema::new("asset", FieldKind::Text).required().max_len(32)
}

fn decimal(name: &str) -> FieldSchema {
    FieldSchema::new(name, FieldKind::Decimal).required()
}

pub fn tool_specs() -> Vec<ToolSpec> {
    vec![
        spec(
            "telemetry_query",
            ToolScope::ReadOnly,
            vec![
                asset(),
                FieldSchema::new("window_min", FieldKind::Integer).required().range(Some(1.0), Some(1440.0)),
            ],
        ),
        spec("firmware_status", ToolScope::ReadOnly, vec![asset()]),
        spec(
            "twin_simulate",
            ToolScope::Simulate,
            vec![
                FieldSchema::new("features", FieldKind::NestedDocument)
                    .required()
                    .children(vec![decimal("peak_c"), decimal("mean_c"), decimal("slope_c_per_min")]),
                FieldSchema::new("derate_fraction", FieldKind::Decimal).range(Some(0.0), Some(1.0)),
            ],
        ),
        spec(
            "derate_command",
            ToolScope::ActuateReversible,
            vec![asset(), decimal("fraction").range(Some(0.0), Some(1.0))],
        ),
        spec("restore_command", ToolScope::ActuateReversible, vec![asset()]),
        spec(
            "schedule_service",
            ToolScope::ActuateReversible,
            vec![
                asset(),
                FieldSchema::new("priority", FieldKind::Enumeration)
                    .required()
                    .allowed(["low", "normal", "high", "urgent"]),
                FieldSchema::new("reason", FieldKind::Text).max_len(200),
            ],
        ),
        spec(
            "cancel_service",
            ToolScope::ActuateReversible,
            vec![asset(), FieldSchema::new("request_key", FieldKind::Text).required()],
        ),
        spec(
            "calc",
            ToolScope::ReadOnly,
            vec![FieldSchema::new("expr", FieldKind::Text).required().max_len(256)],
        ),
    ]
}

pub fn registry() -> ToolRegistry {
    ToolRegistry::from_specs(tool_specs()).expect("mock tool specs are valid")
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn str_arg<'a>(args: &'a Value, key: &str) -> &'a str {
    args.get(key).and_then(Value::as_str).unwrap_or_default()
}

fn f64_arg(args: &Value, key: &str) -> f64 {
    args.get(key).and_then(Value::as_f64).unwrap_or(0.0)
}

/// Peak, mean and end-to-end slope of a sample series.
pub fn thermal_features(series: &[f64], interval_min: f64) -> Value {
    let n = series.len();
    let peak = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = series.iter().sum::<f64>() / n as f64;
    let slope = if n > 1 {
        (series[n - 1] - series[0]) / ((n - 1) as f64 * interval_min)
    } else {
        0.0
    };
    json!({"mean_c": round6(mean), "peak_c": round6(peak), "slope_c_per_min": round6(slope)})
}

fn telemetry(fx: &Fixtures, args: &Value) -> AdapterReply {
    let asset = str_arg(args, "asset");
    let Some(entry) = fx.thermal.get("assets").and_then(|a| a.get(asset)) else {
        return AdapterReply::err("unknown_asset", 1);
    };
    let interval = entry.get("interval_min").and_then(Value::as_f64).unwrap_or(1.0);
    let all: Vec<f64> = entry
        .get("series")
        .and_then(Value::as_array)
        .map(|s| s.iter().filter_map(Value::as_f64).collect())
        .unwrap_or_default();
    if all.is_empty() {
        return AdapterReply::ok(json!({"asset": asset, "status": "no_data"}), 1);
    }
    let window = args.get("window_min").and_then(Value::as_u64).unwrap_or(60) as f64;
    let take = ((window / interval).floor() as usize).clamp(2, all.len().max(2)).min(all.len());
    let series = &all[all.len() - take..];
    AdapterReply::ok(
        json!({
            "asset": asset,
            "features": thermal_features(series, interval),
            "interval_min": interval,
            "series": series,
            "unit": entry.get("unit").cloned().unwrap_or(json!("C")),
        }),
        1,
    )
}

fn firmware(fx: &Fixtures, args: &Value) -> AdapterReply {
    let asset = str_arg(args, "asset");
    match fx.firmware.get("assets").and_then(|a| a.get(asset)) {
        Some(doc) => AdapterReply::ok(json!({"asset": asset, "firmware": doc}), 1),
        None => AdapterReply::err("unknown_asset", 1),
    }
}

/// clamp(bias + Σ weight·feature − derate_gain·derate_fraction, 0, 1)
pub fn twin_risk(table: &Value, features: &Value, derate_fraction: f64) -> f64 {
    let bias = table.get("bias").and_then(Value::as_f64).unwrap_or(0.0);
    let gain = table.get("derate_gain").and_then(Value::as_f64).unwrap_or(0.0);
    let weighted: f64 = table
        .get("weights")
        .and_then(Value::as_object)
        .map(|w| {
            w.iter()
                .map(|(k, wk)| wk.as_f64().unwrap_or(0.0) * features.get(k).and_then(Value::as_f64).unwrap_or(0.0))
                .sum()
        })
        .unwrap_or(0.0);
    round6((bias + weighted - gain * derate_fraction).clamp(0.0, 1.0))
}

fn twin(fx: &Fixtures, args: &Value) -> AdapterReply {
    let fraction = f64_arg(args, "derate_fraction");
    let risk = twin_risk(&fx.risk_table, &args["features"], fraction);
    AdapterReply::ok(
        json!({
            "derate_fraction": fraction,
            "model": fx.risk_table.get("version").cloned().unwrap_or(Value::Null),
            "risk": risk,
        }),
        2,
    )
}

fn ident(prefix: &str, seed: u64, parts: &[&str]) -> String {
    format!("{prefix}-{:08x}", seeded_u64(seed, parts) >> 32)
}

/// Adapters for every mock tool, bound to the scenario fixtures.
pub fn mock_adapters(fixtures: Arc<Fixtures>) -> Vec<(&'static str, Arc<dyn ToolAdapter>)> {
    let fx = fixtures.clone();
    let telemetry_a = move |a: &Value, _: u64, _: u64| telemetry(&fx, a);
    let fx = fixtures.clone();
    let firmware_a = move |a: &Value, _: u64, _: u64| firmware(&fx, a);
    let fx = fixtures;
    let twin_a = move |a: &Value, _: u64, _: u64| twin(&fx, a);
    let derate_a = |a: &Value, _: u64, seed: u64| {
        let asset = str_arg(a, "asset");
        let fraction = f64_arg(a, "fraction");
        AdapterReply::ok(
            json!({
                "applied_fraction": fraction,
                "asset": asset,
                "command_id": ident("DR", seed, &[asset, &fraction.to_string()]),
            }),
            1,
        )
    };
    let restore_a = |a: &Value, _: u64, _: u64| AdapterReply::ok(json!({"asset": str_arg(a, "asset"), "restored": true}), 1);
    let schedule_a = |a: &Value, _: u64, seed: u64| {
        let asset = str_arg(a, "asset");
        let priority = str_arg(a, "priority");
        AdapterReply::ok(
            json!({"asset": asset, "priority": priority, "ticket_id": ident("SV", seed, &[asset, priority])}),
            1,
        )
    };
    let cancel_a = |a: &Value, _: u64, _: u64| {
        AdapterReply::ok(json!({"asset": str_arg(a, "asset"), "cancelled": str_arg(a, "request_key")}), 1)
    };
    let calc_a = |a: &Value, _: u64, _: u64| match eval_fixed(str_arg(a, "expr")) {
        Ok(v) => AdapterReply::ok(json!({"value": v.to_string()}), 1),
        Err(_) => AdapterReply::err("calc_error", 1),
    };
    vec![
        ("telemetry_query", Arc::new(telemetry_a)),
        ("firmware_status", Arc::new(firmware_a)),
        ("twin_simulate", Arc::new(twin_a)),
        ("derate_command", Arc::new(derate_a)),
        ("restore_command", Arc::new(restore_a)),
        ("schedule_service", Arc::new(schedule_a)),
        ("cancel_service", Arc::new(cancel_a)),
        ("calc", Arc::new(calc_a)),
    ]
}

/// Applies adapter-level faults by invocation index (1-based, retries
/// included).
pub struct FaultAdapter {
    inner: Arc<dyn ToolAdapter>,
    faults: Vec<FaultSpec>,
    calls: AtomicU32,
}

impl FaultAdapter {
    pub fn new(inner: Arc<dyn ToolAdapter>, faults: Vec<FaultSpec>) -> Self {
        Self {
            inner,
            faults,
            calls: AtomicU32::new(0),
        }
    }
}

impl ToolAdapter for FaultAdapter {
    fn invoke(&self, args: &Value, tick_budget: u64, seed: u64) -> AdapterReply {
        let index = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
        match self.faults.iter().find(|f| f.hits(index)).map(|f| f.mode) {
            Some(FaultMode::TransientFlake) => AdapterReply::err(TRANSIENT_CODE, 1),
            Some(FaultMode::PermanentFailure) => AdapterReply::err(PERMANENT_CODE, 1),
            Some(FaultMode::MissingData) => {
                let mut reply = self.inner.invoke(args, tick_budget, seed);
                if let Ok(doc) = &reply.result {
                    let mut stripped = serde_json::Map::new();
                    if let Some(a) = doc.get("asset") {
                        stripped.insert("asset".into(), a.clone());
                    }
                    stripped.insert("status".into(), json!("no_data"));
                    reply.result = Ok(Value::Object(stripped));
                }
                reply
            }
            Some(FaultMode::SchemaMismatch) | None => self.inner.invoke(args, tick_budget, seed),
        }
    }
}
