use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde_json::{json, Value};

use crate::audit::Playback;

/// What an adapter hands back: a result document or an error code, plus
/// the logical ticks it consumed.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterReply {
    pub result: Result<Value, String>,
    pub ticks: u64,
}

impl AdapterReply {
    pub fn ok(result: Value, ticks: u64) -> Self {
        Self { result: Ok(result), ticks }
    }

    pub fn err(code: impl Into<String>, ticks: u64) -> Self {
        Self {
            result: Err(code.into()),
            ticks,
        }
    }

    /// Form stored in `AdapterInvoked` events and read back by playback.
    pub fn to_value(&self) -> Value {
        match &self.result {
            Ok(v) => json!({"ok": v, "ticks": self.ticks}),
            Err(code) => json!({"error": code, "ticks": self.ticks}),
        }
    }

    pub fn from_value(v: &Value) -> Option<Self> {
        let ticks = v.get("ticks")?.as_u64()?;
        if let Some(ok) = v.get("ok") {
            return Some(Self::ok(ok.clone(), ticks));
        }
        let code = v.get("error")?.as_str()?;
        Some(Self::err(code, ticks))
    }
}

pub trait ToolAdapter: Send + Sync {
    fn invoke(&self, args: &Value, tick_budget: u64, seed: u64) -> AdapterReply;
}

impl<F> ToolAdapter for F
where
    F: Fn(&Value, u64, u64) -> AdapterReply + Send + Sync,
{
    fn invoke(&self, args: &Value, tick_budget: u64, seed: u64) -> AdapterReply {
        self(args, tick_budget, seed)
    }
}

/// Replies from a fixed script; the last reply repeats once the script is
/// used up. Counts invocations.
pub struct ScriptedAdapter {
    script: Vec<AdapterReply>,
    calls: AtomicUsize,
}

impl ScriptedAdapter {
    pub fn new(script: Vec<AdapterReply>) -> Self {
        assert!(!script.is_empty(), "script needs at least one reply");
        Self {
            script,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn invocations(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ToolAdapter for ScriptedAdapter {
    fn invoke(&self, _args: &Value, _tick_budget: u64, _seed: u64) -> AdapterReply {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        self.script[n.min(self.script.len() - 1)].clone()
    }
}

/// Wraps another adapter and counts invocations.
pub struct CountingAdapter {
    inner: Arc<dyn ToolAdapter>,
    calls: AtomicUsize,
    seen: Mutex<Vec<Value>>,
}

impl CountingAdapter {
    pub fn new(inner: Arc<dyn ToolAdapter>) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn invocations(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn seen_args(&self) -> Vec<Value> {
        self.seen.lock().expect("poisoned").clone()
    }
}

impl ToolAdapter for CountingAdapter {
    fn invoke(&self, args: &Value, tick_budget: u64, seed: u64) -> AdapterReply {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.seen.lock().expect("poisoned").push(args.clone());
        self.inner.invoke(args, tick_budget, seed)
    }
}

/// Returns recorded replies in order; used by replay. An exhausted or
/// malformed queue yields the `playback_exhausted` error, which then shows
/// up as a divergence.
pub struct PlaybackAdapter {
    playback: Playback,
    tool: String,
}

impl PlaybackAdapter {
    pub fn new(playback: Playback, tool: impl Into<String>) -> Self {
        Self {
            playback,
            tool: tool.into(),
        }
    }
}

impl ToolAdapter for PlaybackAdapter {
    fn invoke(&self, _args: &Value, _tick_budget: u64, _seed: u64) -> AdapterReply {
        self.playback
            .next_reply(&self.tool)
            .and_then(|v| AdapterReply::from_value(&v))
            .unwrap_or_else(|| AdapterReply::err("playback_exhausted", 0))
    }
}
