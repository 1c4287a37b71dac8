use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use super::config::{inject, FaultSpec, Scenario};
use super::dialogue::{DialogueFactory, DialogueScenario};
use super::episode::{run_to_dir, HarnessFactory};
use crate::audit::{replay, verify_bytes, EpisodeTrace, ReplayError, ReplayReport, TraceCheck, TraceKind};
use crate::canonical::to_value;
use crate::protocol::conversation_dag;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_CONFIG: i32 = 65;

const EXIT_CODES: &str = "\
Exit codes:
   0  goal_satisfied / consensus_reached; verify or replay succeeded
   1  verify found a broken chain, or replay diverged
  10  budget_exceeded / budget_exhausted
  20  safety_halt / operator_abort
  30  verifier_rejection / contradiction
  40  non_convergence / deadlock
  64  usage error
  65  malformed config, missing fixture or unreadable trace";

#[derive(Debug, Parser)]
#[command(name = "agentk", version, about = "Run, verify and replay governed agent episodes", after_help = EXIT_CODES)]
struct Args {
    /// Never wait for an operator; approvals are denied.
    #[arg(long, global = true)]
    non_interactive: bool,
    /// Overrides the seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the diagnosis episode described by a scenario config.
    Run {
        config: PathBuf,
        /// Directory for `<episode_id>.trace`.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Re-run a trace with recorded tool replies and compare event hashes.
    Replay {
        trace: PathBuf,
        /// Config to rebuild the episode from; defaults to the path in the trace header.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Check a trace's hash chain.
    Verify { trace: PathBuf },
    /// Add a fault (`tool:mode:at[:count]` or JSON) to a config and print it.
    Inject {
        config: PathBuf,
        fault: String,
        /// Also run the faulted episode, writing its config and trace here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scripted triage dialogue.
    Dialogue {
        config: PathBuf,
        /// Directory for `<dialogue_id>.trace`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the conversation graph.
        #[arg(long)]
        dag: bool,
    },
}

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

macro_rules! say {
    ($w:expr, $($arg:tt)*) => {{
        let _ = writeln!($w, $($arg)*);
    }};
}

/// Entry point with injectable output streams.
pub fn cli_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let text = e.render().to_string();
            if e.use_stderr() {
                say!(err, "{}", text.trim_end());
            } else {
                say!(out, "{}", text.trim_end());
            }
            return code;
        }
    };
    let mut io = Io { out, err };
    match args.command {
        Command::Run { ref config, ref out } => cmd_run(&args, config, out, &mut io),
        Command::Replay { ref trace, ref config } => cmd_replay(trace, config.as_deref(), &mut io),
        Command::Verify { ref trace } => cmd_verify(trace, &mut io),
        Command::Inject {
            ref config,
            ref fault,
            ref out,
        } => cmd_inject(&args, config, fault, out.as_deref(), &mut io),
        Command::Dialogue { ref config, ref out, dag } => cmd_dialogue(&args, config, out.as_deref(), dag, &mut io),
    }
}

pub fn cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    cli_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(&to_value(v)).unwrap_or_default()
}

fn run_scenario(args: &Args, scenario: &Scenario, config_path: &Path, out_dir: &Path, io: &mut Io) -> i32 {
    let seed = args.seed.unwrap_or(scenario.config.seed);
    match run_to_dir(scenario, seed, out_dir, Some(config_path.display().to_string())) {
        Ok((run, path)) => {
            say!(io.out, "{}", pretty(&run.summary));
            say!(io.out, "trace: {}", path.display());
            run.summary.exit_code
        }
        Err(e) => {
            say!(io.err, "cannot write trace: {e}");
            EXIT_CONFIG
        }
    }
}

fn cmd_run(args: &Args, config: &Path, out_dir: &Path, io: &mut Io) -> i32 {
    let scenario = match Scenario::load(config) {
        Ok(s) => s,
        Err(e) => {
            say!(io.err, "{e}");
            return EXIT_CONFIG;
        }
    };
    run_scenario(args, &scenario, config, out_dir, io)
}

fn cmd_inject(args: &Args, config: &Path, fault: &str, out_dir: Option<&Path>, io: &mut Io) -> i32 {
    let fault: FaultSpec = match fault.parse() {
        Ok(f) => f,
        Err(e) => {
            say!(io.err, "bad fault spec: {e}");
            return EXIT_USAGE;
        }
    };
    let scenario = match Scenario::load(config) {
        Ok(s) => s,
        Err(e) => {
            say!(io.err, "{e}");
            return EXIT_CONFIG;
        }
    };
    let mut faulted = match inject(&scenario.config, fault) {
        Ok(c) => c,
        Err(e) => {
            say!(io.err, "{e}");
            return EXIT_CONFIG;
        }
    };
    let Some(out_dir) = out_dir else {
        say!(io.out, "{}", pretty(&faulted));
        return 0;
    };
    // The written config lives next to the trace, so fixture paths are
    // made absolute.
    for p in [
        &mut faulted.fixtures.thermal,
        &mut faulted.fixtures.risk_table,
        &mut faulted.fixtures.firmware,
    ] {
        let abs = scenario.base_dir.join(&*p);
        *p = abs.canonicalize().unwrap_or(abs).display().to_string();
    }
    if let Err(e) = std::fs::create_dir_all(out_dir) {
        say!(io.err, "cannot create {}: {e}", out_dir.display());
        return EXIT_CONFIG;
    }
    let cfg_path = out_dir.join(format!("{}.config.json", faulted.episode_id));
    if let Err(e) = std::fs::write(&cfg_path, pretty(&faulted)) {
        say!(io.err, "cannot write {}: {e}", cfg_path.display());
        return EXIT_CONFIG;
    }
    let scenario = match Scenario::load(&cfg_path) {
        Ok(s) => s,
        Err(e) => {
            say!(io.err, "{e}");
            return EXIT_CONFIG;
        }
    };
    say!(io.out, "config: {}", cfg_path.display());
    run_scenario(args, &scenario, &cfg_path, out_dir, io)
}

fn cmd_verify(trace: &Path, io: &mut Io) -> i32 {
    let bytes = match std::fs::read(trace) {
        Ok(b) => b,
        Err(e) => {
            say!(io.err, "cannot read {}: {e}", trace.display());
            return EXIT_CONFIG;
        }
    };
    match verify_bytes(&bytes) {
        TraceCheck::Ok { events } => {
            say!(io.out, "ok: {events} events, chain intact");
            0
        }
        TraceCheck::Broken { first_bad_seq, reason } => {
            say!(io.out, "broken at seq {first_bad_seq}: {reason}");
            EXIT_FAILURE
        }
        TraceCheck::BadHeader { reason } => {
            say!(io.out, "bad header: {reason}");
            EXIT_FAILURE
        }
    }
}

fn report(result: Result<ReplayReport, ReplayError>, io: &mut Io) -> i32 {
    match result {
        Ok(r) if r.identical => {
            say!(io.out, "identical=true ({} events compared)", r.events_compared);
            0
        }
        Ok(r) => {
            say!(io.out, "identical=false ({} events compared)", r.events_compared);
            if let Some(d) = r.first_divergence {
                let role = d.fault_role.unwrap_or_else(|| "-".into());
                let component = d.component.map(|c| format!("{c:?}")).unwrap_or_else(|| "-".into());
                say!(io.out, "divergence at seq {} field {} (component {component}, role {role})", d.seq, d.field);
            }
            EXIT_FAILURE
        }
        Err(e) => {
            say!(io.out, "replay failed: {e}");
            EXIT_FAILURE
        }
    }
}

fn cmd_replay(trace: &Path, config: Option<&Path>, io: &mut Io) -> i32 {
    let bytes = match std::fs::read(trace) {
        Ok(b) => b,
        Err(e) => {
            say!(io.err, "cannot read {}: {e}", trace.display());
            return EXIT_CONFIG;
        }
    };
    match verify_bytes(&bytes) {
        TraceCheck::Ok { .. } => {}
        TraceCheck::Broken { first_bad_seq, reason } => {
            say!(io.out, "identical=false");
            say!(io.out, "divergence at seq {first_bad_seq}: {reason}");
            return EXIT_FAILURE;
        }
        TraceCheck::BadHeader { reason } => {
            say!(io.out, "bad header: {reason}");
            return EXIT_FAILURE;
        }
    }
    let parsed = match EpisodeTrace::parse(&bytes) {
        Ok(t) => t,
        Err(e) => {
            say!(io.out, "{e}");
            return EXIT_FAILURE;
        }
    };
    let cfg_path = match config.map(Path::to_path_buf).or_else(|| parsed.header.config_path.as_ref().map(PathBuf::from)) {
        Some(p) => p,
        None => {
            say!(io.err, "trace names no config; pass --config");
            return EXIT_USAGE;
        }
    };
    match parsed.header.kind {
        TraceKind::Episode => match Scenario::load(&cfg_path) {
            Ok(scenario) => report(replay(&parsed, &HarnessFactory { scenario: &scenario }), io),
            Err(e) => {
                say!(io.err, "{e}");
                EXIT_CONFIG
            }
        },
        TraceKind::Dialogue => match DialogueScenario::load(&cfg_path) {
            Ok(scenario) => report(replay(&parsed, &DialogueFactory { scenario: &scenario }), io),
            Err(e) => {
                say!(io.err, "{e}");
                EXIT_CONFIG
            }
        },
    }
}

fn cmd_dialogue(args: &Args, config: &Path, out_dir: Option<&Path>, dag: bool, io: &mut Io) -> i32 {
    let scenario = match DialogueScenario::load(config) {
        Ok(s) => s,
        Err(e) => {
            say!(io.err, "{e}");
            return EXIT_CONFIG;
        }
    };
    let seed = args.seed.unwrap_or(scenario.seed);
    let run = match scenario.run(seed, Some(config.display().to_string())) {
        Ok(r) => r,
        Err(e) => {
            say!(io.err, "{e}");
            return EXIT_CONFIG;
        }
    };
    say!(io.out, "{}", pretty(&run.outcome));
    if dag {
        say!(io.out, "{}", pretty(&conversation_dag(&run.transcript)));
    }
    if let Some(dir) = out_dir {
        let path = dir.join(format!("{}.trace", scenario.dialogue_id));
        if let Err(e) = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(&path, run.trace.to_text())) {
            say!(io.err, "cannot write trace: {e}");
            return EXIT_CONFIG;
        }
        say!(io.out, "trace: {}", path.display());
    }
    run.outcome.why_stopped.code.exit_code()
}
