//! Scripted scenarios: user turns, listener passes and assertions over the
//! resulting kernel state, with symbolic references to turns and events.
//!
//! References: `$turn_N` is the N-th user turn of the script (1-based) and
//! `$<label>` a labelled turn. As an event, a turn reference means its reply
//! event; `$<turn>.user` and `$<turn>.reply` pick explicitly. `$refusal_N` is
//! the N-th refusal event appended during the run.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::cold_storage::DEFAULT_TAU;
use crate::concierge::{Route, TurnResult};
use crate::event_log::{Author, EventId};
use crate::expert::ExpertExecutor;
use crate::expert_registry::DEFAULT_CAPACITY;
use crate::kernel::{Kernel, KernelConfig, Notice, NoticeKind};
use crate::listener::DEFAULT_OPT_THRESHOLD;
use crate::telemetry::{self, MetricsRow};

pub const DEFAULT_LISTENER_INTERVAL_MS: u64 = 2_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub name: String,
    pub setup: ScenarioSetup,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSetup {
    /// Directory of toolset records, relative to the script.
    pub registry: String,
    /// Provider rule file, relative to the script.
    pub rules: String,
    #[serde(default = "default_capacity")]
    pub capacity: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_opt_threshold")]
    pub opt_threshold: u32,
    #[serde(default)]
    pub listener_mode: ListenerMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_instruction: Option<String>,
}

fn default_capacity() -> usize {
    DEFAULT_CAPACITY
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

fn default_opt_threshold() -> u32 {
    DEFAULT_OPT_THRESHOLD
}

impl ScenarioSetup {
    pub fn kernel_config(&self) -> KernelConfig {
        let mut config = KernelConfig {
            capacity: self.capacity,
            tau: self.tau,
            opt_threshold: self.opt_threshold,
            ..KernelConfig::default()
        };
        if let Some(base) = &self.base_instruction {
            config.base_instruction = base.clone();
        }
        config
    }
}

/// When the listener runs. `deterministic` runs it only at `run_listener`
/// steps; `interval` also runs it whenever the accumulated simulated latency
/// since the last pass reaches `interval_ms`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ListenerMode {
    #[default]
    Deterministic,
    Interval {
        #[serde(default = "default_interval")]
        interval_ms: u64,
    },
}

fn default_interval() -> u64 {
    DEFAULT_LISTENER_INTERVAL_MS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Step {
    UserTurn {
        session: String,
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    RunListener,
    Assert(Assertion),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Assertion {
    RouteEquals { turn: String, route: Route },
    ReplyEquals { turn: String, text: String },
    ManifestContains { text: String },
    ManifestLacks { text: String },
    EventPresent { event: String },
    EventAbsent { event: String },
    ContextContains { session: String, author: Author, content: String },
    ContextLacks { session: String, content: String },
    ExpertActive { name: String },
    ExpertAbsent { name: String },
    ActiveExpertsEqual { names: Vec<String> },
    GapReportLineEquals { line: String },
    GapReportLinesEqual { lines: Vec<String> },
    MetricsEquals { turn: String, tokens_out: u64, simulated_latency_ms: u64 },
    DeltaPctEquals { before: String, after: String, latency_pct: i64, token_pct: i64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AssertionOutcome {
    pub step: usize,
    pub assertion: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TurnRecord {
    pub reference: String,
    pub session_id: String,
    pub turn_index: u32,
    pub user_text: String,
    pub route: Route,
    pub reply_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    pub passed: bool,
    pub assertions: Vec<AssertionOutcome>,
    pub turns: Vec<TurnRecord>,
    pub timeline: Vec<Notice>,
    pub metrics: Vec<MetricsRow>,
    pub final_manifest: String,
    pub errors: Vec<String>,
}

impl ScenarioReport {
    pub fn failed_assertions(&self) -> impl Iterator<Item = &AssertionOutcome> {
        self.assertions.iter().filter(|a| !a.passed)
    }
}

struct Bindings {
    turns: BTreeMap<String, TurnResult>,
    refusals: Vec<EventId>,
}

impl Bindings {
    fn turn(&self, reference: &str) -> Result<&TurnResult, String> {
        self.turns
            .get(reference)
            .ok_or_else(|| format!("unbound turn reference `{reference}`"))
    }

    fn event(&self, reference: &str) -> Result<EventId, String> {
        if let Some(n) = reference.strip_prefix("$refusal_") {
            let n: usize = n.parse().map_err(|_| format!("bad reference `{reference}`"))?;
            return n
                .checked_sub(1)
                .and_then(|i| self.refusals.get(i))
                .copied()
                .ok_or_else(|| format!("unbound event reference `{reference}`"));
        }
        let (turn, part) = match reference.rsplit_once('.') {
            Some((t, p @ ("user" | "reply"))) => (t, p),
            _ => (reference, "reply"),
        };
        let t = self.turn(turn)?;
        let id = if part == "user" {
            t.events_appended.first()
        } else {
            t.events_appended.last()
        };
        id.copied()
            .ok_or_else(|| format!("turn `{turn}` appended no events"))
    }
}

/// Executes every step in order. Kernel errors on a step are recorded and
/// fail the report; they never abort the run.
pub fn run_scenario(
    script: &ScenarioScript,
    kernel: &mut Kernel,
    executor: &dyn ExpertExecutor,
) -> ScenarioReport {
    let mut b = Bindings {
        turns: BTreeMap::new(),
        refusals: Vec::new(),
    };
    let mut assertions = Vec::new();
    let mut turns = Vec::new();
    let mut errors = Vec::new();
    let mut turn_no = 0;
    let mut last_pass_ms = kernel.simulated_ms();
    let notice_start = kernel.notices().last().map_or(0, |n| n.seq);
    let metrics_start = kernel.metrics().len();

    for (i, step) in script.steps.iter().enumerate() {
        let step_no = i + 1;
        match step {
            Step::UserTurn {
                session,
                text,
                label,
            } => {
                turn_no += 1;
                match kernel.handle_turn(session, text, executor) {
                    Ok(result) => {
                        if result.route == Route::Refusal {
                            if let Some(id) = result
                                .events_appended
                                .iter()
                                .find(|id| kernel.store().get(**id).is_some_and(|e| e.refusal.is_some()))
                            {
                                b.refusals.push(*id);
                            }
                        }
                        let reference = match label {
                            Some(l) => format!("${l}"),
                            None => format!("$turn_{turn_no}"),
                        };
                        turns.push(TurnRecord {
                            reference: reference.clone(),
                            session_id: result.session_id.clone(),
                            turn_index: result.turn_index,
                            user_text: text.clone(),
                            route: result.route.clone(),
                            reply_text: result.reply_text.clone(),
                        });
                        b.turns.insert(format!("$turn_{turn_no}"), result.clone());
                        b.turns.insert(reference, result);
                    }
                    Err(e) => errors.push(format!("step {step_no}: {e}")),
                }
                if let ListenerMode::Interval { interval_ms } = script.setup.listener_mode {
                    if kernel.simulated_ms() - last_pass_ms >= interval_ms {
                        last_pass_ms = kernel.simulated_ms();
                        if let Err(e) = kernel.run_listener() {
                            errors.push(format!("step {step_no}: listener: {e}"));
                        }
                    }
                }
            }
            Step::RunListener => {
                last_pass_ms = kernel.simulated_ms();
                if let Err(e) = kernel.run_listener() {
                    errors.push(format!("step {step_no}: listener: {e}"));
                }
            }
            Step::Assert(a) => {
                let (passed, detail) = match check(a, kernel, &b) {
                    Ok(()) => (true, String::new()),
                    Err(d) => (false, d),
                };
                assertions.push(AssertionOutcome {
                    step: step_no,
                    assertion: serde_json::to_string(a).unwrap_or_default(),
                    passed,
                    detail,
                });
            }
        }
    }

    ScenarioReport {
        name: script.name.clone(),
        passed: errors.is_empty() && assertions.iter().all(|a| a.passed),
        assertions,
        turns,
        timeline: kernel.notices_since(notice_start).to_vec(),
        metrics: kernel.metrics()[metrics_start..].to_vec(),
        final_manifest: kernel.manifest().rendered,
        errors,
    }
}

fn expect_eq<T: PartialEq + core::fmt::Debug>(what: &str, actual: T, expected: T) -> Result<(), String> {
    if actual == expected {
        Ok(())
    } else {
        Err(format!("{what}: expected {expected:?}, got {actual:?}"))
    }
}

fn check(a: &Assertion, kernel: &Kernel, b: &Bindings) -> Result<(), String> {
    match a {
        Assertion::RouteEquals { turn, route } => expect_eq("route", &b.turn(turn)?.route, route),
        Assertion::ReplyEquals { turn, text } => {
            expect_eq("reply", b.turn(turn)?.reply_text.as_str(), text.as_str())
        }
        Assertion::ManifestContains { text } => {
            let m = kernel.manifest().rendered;
            if m.contains(text.as_str()) {
                Ok(())
            } else {
                Err(format!("manifest lacks {text:?}"))
            }
        }
        Assertion::ManifestLacks { text } => {
            if kernel.manifest().rendered.contains(text.as_str()) {
                Err(format!("manifest contains {text:?}"))
            } else {
                Ok(())
            }
        }
        Assertion::EventPresent { event } => {
            let id = b.event(event)?;
            match kernel.store().get(id) {
                Some(_) => Ok(()),
                None => Err(format!("event {id} ({event}) is not live")),
            }
        }
        Assertion::EventAbsent { event } => {
            let id = b.event(event)?;
            match kernel.store().get(id) {
                None => Ok(()),
                Some(_) => Err(format!("event {id} ({event}) is still live")),
            }
        }
        Assertion::ContextContains {
            session,
            author,
            content,
        } => {
            if kernel
                .context(session)
                .iter()
                .any(|e| &e.author == author && e.content == *content)
            {
                Ok(())
            } else {
                Err(format!("no {author} event {content:?} in {session}"))
            }
        }
        Assertion::ContextLacks { session, content } => {
            if kernel.context(session).iter().any(|e| e.content == *content) {
                Err(format!("{session} still contains {content:?}"))
            } else {
                Ok(())
            }
        }
        Assertion::ExpertActive { name } => {
            if kernel.registry().contains(name) {
                Ok(())
            } else {
                Err(format!("{name} is not active"))
            }
        }
        Assertion::ExpertAbsent { name } => {
            if kernel.registry().contains(name) {
                Err(format!("{name} is active"))
            } else {
                Ok(())
            }
        }
        Assertion::ActiveExpertsEqual { names } => {
            let active: Vec<&str> = kernel.registry().experts().iter().map(|e| e.name.as_str()).collect();
            let want: Vec<&str> = names.iter().map(String::as_str).collect();
            expect_eq("active experts", active, want)
        }
        Assertion::GapReportLineEquals { line } => {
            expect_eq("gap reports", kernel.gaps().lines(), alloc::vec![line.clone()])
        }
        Assertion::GapReportLinesEqual { lines } => {
            expect_eq("gap reports", &kernel.gaps().lines(), lines)
        }
        Assertion::MetricsEquals {
            turn,
            tokens_out,
            simulated_latency_ms,
        } => {
            let m = &b.turn(turn)?.metrics;
            expect_eq(
                "metrics (tokens, latency)",
                (m.tokens_out, m.simulated_latency_ms),
                (*tokens_out, *simulated_latency_ms),
            )
        }
        Assertion::DeltaPctEquals {
            before,
            after,
            latency_pct,
            token_pct,
        } => {
            let d = telemetry::compare(&b.turn(before)?.metrics, &b.turn(after)?.metrics)
                .map_err(|e| e.to_string())?;
            expect_eq(
                "delta % (latency, tokens)",
                (d.latency_delta_pct, d.token_delta_pct),
                (*latency_pct, *token_pct),
            )
        }
    }
}

/// One line per notice, as printed in timelines.
pub fn describe_notice(n: &Notice) -> String {
    let body = match &n.kind {
        NoticeKind::Turn {
            session_id,
            turn_index,
            route,
            tokens_out,
            simulated_latency_ms,
            ..
        } => format!(
            "turn {session_id}#{turn_index} -> {route} ({tokens_out} tokens, {simulated_latency_ms} ms)"
        ),
        NoticeKind::Hydrated {
            expert,
            toolset,
            score,
        } => format!("hydrated {expert} from {toolset} (score {score:.4})"),
        NoticeKind::Evicted { expert } => format!("evicted {expert}"),
        NoticeKind::Pruned {
            session_id,
            event_ids,
        } => {
            let ids: Vec<String> = event_ids.iter().map(|i| i.to_string()).collect();
            format!("pruned {} from {session_id}", ids.join(", "))
        }
        NoticeKind::GapReport { line } => format!("gap report {line}"),
        NoticeKind::ManifestUpdated { manifest } => {
            format!("manifest updated ({} experts)", manifest.lines().count().saturating_sub(1))
        }
    };
    format!("{:>3} {:<5} {body}", n.seq, n.logical_time.to_string())
}

/// Plain-text rendering of a report.
pub fn render_text(report: &ScenarioReport) -> String {
    let mut out = String::new();
    let verdict = if report.passed { "PASS" } else { "FAIL" };
    let _ = writeln!(out, "scenario {}: {verdict}", report.name);
    let _ = writeln!(out, "turns:");
    for t in &report.turns {
        let _ = writeln!(
            out,
            "  {} [{}] {:?} -> {}: {:?}",
            t.reference, t.session_id, t.user_text, t.route, t.reply_text
        );
    }
    let _ = writeln!(out, "timeline:");
    for n in &report.timeline {
        let _ = writeln!(out, "  {}", describe_notice(n));
    }
    let _ = writeln!(out, "metrics:");
    for m in &report.metrics {
        let _ = writeln!(
            out,
            "  {}#{} {} tokens={} latency_ms={}",
            m.session_id, m.turn_index, m.metrics.route, m.metrics.tokens_out, m.metrics.simulated_latency_ms
        );
    }
    let _ = writeln!(out, "assertions:");
    for a in &report.assertions {
        let mark = if a.passed { "ok  " } else { "FAIL" };
        let _ = write!(out, "  {mark} step {} {}", a.step, a.assertion);
        if !a.passed {
            let _ = write!(out, " -- {}", a.detail);
        }
        out.push('\n');
    }
    for e in &report.errors {
        let _ = writeln!(out, "error: {e}");
    }
    let _ = writeln!(out, "manifest:");
    for line in report.final_manifest.lines() {
        let _ = writeln!(out, "  {line}");
    }
    out
}
