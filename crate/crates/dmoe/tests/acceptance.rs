//! One line per acceptance criterion, then a single verdict.

mod common;
#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::fmt::Debug;
use std::time::{Duration, Instant};

use dmoe_core::expert_registry::ExpertRegistry;
use dmoe_core::kernel::NoticeKind;
use dmoe_core::scenario::{render_text, ScenarioReport};
use dmoe_core::telemetry::compare;
use dmoe_core::{IntentDescriptor, Route};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn property<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String>
where
    S::Value: Debug,
{
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

fn ensure(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {took:?}, limit {limit:?}"))
}

fn scenario_passes(report: &ScenarioReport) -> Result<(), String> {
    let failed: Vec<String> = report
        .failed_assertions()
        .map(|a| format!("step {} {}: {}", a.step, a.assertion, a.detail))
        .chain(report.errors.iter().cloned())
        .collect();
    ensure(report.passed && failed.is_empty(), || failed.join("; "))
}

fn cricket() -> Outcome {
    let start = Instant::now();
    let (report, kernel) = common::replay("cricket");
    scenario_passes(&report)?;
    ensure(kernel.registry().contains("CricketExpert"), || "CricketExpert not active".into())?;
    let m = &report.metrics;
    ensure(m.len() == 5, || format!("{} turns", m.len()))?;
    ensure(m[..4].iter().all(|r| r.metrics.route == Route::Generic), || "first four turns not generic".into())?;
    ensure(m[4].metrics.route == Route::Expert("CricketExpert".into()), || {
        format!("fifth turn routed to {}", m[4].metrics.route)
    })?;
    let before = &m[0].metrics;
    let after = &m[4].metrics;
    ensure(
        (before.simulated_latency_ms, before.tokens_out, after.simulated_latency_ms, after.tokens_out)
            == (3500, 800, 2100, 320),
        || format!("{before:?} -> {after:?}"),
    )?;
    let d = compare(before, after).map_err(|e| e.to_string())?;
    ensure((d.latency_delta_pct, d.token_delta_pct) == (40, 60), || format!("{d:?}"))?;
    within(start, Duration::from_secs(5))?;
    Ok("score query vs expert turn: latency 3500->2100 ms (40%), tokens 800->320 (60%)".into())
}

fn email() -> Outcome {
    let start = Instant::now();
    let (report, kernel) = common::replay("email");
    scenario_passes(&report)?;
    let kinds: Vec<&str> = report.timeline.iter().map(|n| n.kind.name()).collect();
    ensure(
        kinds == ["turn", "hydrated", "pruned", "manifest_updated", "turn"],
        || format!("timeline {kinds:?}"),
    )?;
    let refusal = report
        .timeline
        .iter()
        .find_map(|n| match &n.kind {
            NoticeKind::Pruned { event_ids, .. } => event_ids.first().copied(),
            _ => None,
        })
        .ok_or("no pruned notice")?;
    let context = kernel.context("UserID_001");
    ensure(context.iter().all(|e| e.id != refusal), || format!("refusal {refusal} still in context"))?;
    ensure(context.iter().any(|e| e.content == "[EmailExpert activated]"), || "no activation event".into())?;
    ensure(report.turns[1].route == Route::Expert("EmailExpert".into()), || {
        format!("follow-up routed to {}", report.turns[1].route)
    })?;
    within(start, Duration::from_secs(5))?;
    Ok(format!("refusal {refusal} pruned, follow-up routed to EmailExpert"))
}

fn flight() -> Outcome {
    let start = Instant::now();
    let (report, kernel) = common::replay("flight");
    scenario_passes(&report)?;
    ensure(kernel.registry().is_empty(), || "an expert was created".into())?;
    ensure(report.final_manifest == kernel.config().base_instruction, || "manifest changed".into())?;
    let lines = kernel.gaps().lines();
    ensure(
        lines == ["[MISSING_FEATURE]: FlightBooking requested by UserID_001"],
        || format!("gap log {lines:?}"),
    )?;
    within(start, Duration::from_secs(5))?;
    Ok(lines[0].clone())
}

fn lru_cases() -> impl Strategy<Value = (usize, Vec<oracles::lru::Op>)> {
    (
        prop::sample::select(vec![1usize, 2, 3, 5]),
        prop::collection::vec(oracles::lru::op(), 1..50),
    )
}

fn lru() -> Outcome {
    let start = Instant::now();
    property(1000, lru_cases(), |(k, ops)| oracles::lru::check_sequence(k, &ops))?;
    within(start, Duration::from_secs(10))?;
    Ok("1000 sequences, K in {1,2,3,5}".into())
}

fn manifest() -> Outcome {
    let empty = ExpertRegistry::new(5).unwrap().render_manifest(oracles::lru::BASE);
    ensure(empty.rendered == oracles::lru::BASE, || format!("empty manifest {:?}", empty.rendered))?;
    // The sequence checker compares the rendered manifest with the oracle
    // renderer after every operation.
    property(1000, lru_cases(), |(k, ops)| oracles::lru::check_sequence(k, &ops))?;
    let (report, kernel) = common::replay("cricket");
    let rendered = kernel.manifest().rendered;
    ensure(report.final_manifest == rendered, || "report manifest differs from kernel".into())?;
    Ok("byte-equal after every mutation; empty registry renders the base instruction".into())
}

fn event_log() -> Outcome {
    property(
        1000,
        prop::collection::vec(oracles::event_log::op(), 1..60),
        |ops| oracles::event_log::check(&ops),
    )?;
    Ok("1000 interleavings".into())
}

fn similarity() -> Outcome {
    use oracles::similarity::{check_lookup, intent, record, registry, words};
    let taus = prop::sample::select(vec![0.0, 0.2, 0.35, 0.5, 0.8]);
    property(200, (registry(), intent(), taus), |(records, intent, tau)| {
        check_lookup(&records, &intent, tau)
    })?;
    property(200, words(8), |desc| {
        let r = record("Self_MCP".into(), desc.clone(), vec![]);
        let s = dmoe_core::cold_storage::similarity(&IntentDescriptor::new("", "", desc), &r);
        prop_assert!(s == 0.0 || (s - 1.0).abs() < 1e-12, "self similarity {}", s);
        Ok(())
    })?;
    let disjoint = record("D_MCP".into(), "weather forecast city".into(), vec![]);
    let s = dmoe_core::cold_storage::similarity(&IntentDescriptor::new("", "", "cricket score"), &disjoint);
    ensure(s == 0.0, || format!("disjoint similarity {s}"))?;

    let cold = oracles::fixtures::bundled_cold();
    let send = IntentDescriptor::new("SendEmail", "", "Send an email to the team regarding the meeting");
    let hit = cold.lookup(&send, 0.35).ok_or("SendEmail missed")?;
    ensure(hit.record.name == "Email_MCP", || hit.record.name.clone())?;
    let flight = IntentDescriptor::new("BookFlight", "Travel", common::FLIGHT);
    ensure(cold.lookup(&flight, 0.35).is_none(), || "BookFlight matched".into())?;
    Ok(format!("200 registries; lookup(SendEmail)=Email_MCP ({:.4}), lookup(BookFlight)=none", hit.score))
}

fn hollow() -> Outcome {
    property(
        500,
        (1usize..4, prop::collection::vec(oracles::hollow::step(), 1..25)),
        |(capacity, steps)| oracles::hollow::run(capacity, &steps),
    )?;
    Ok("500 conversations".into())
}

fn determinism() -> Outcome {
    for name in ["cricket", "email", "flight"] {
        let (a, ka) = common::replay(name);
        let (b, kb) = common::replay(name);
        ensure(render_text(&a) == render_text(&b), || format!("{name}: text reports differ"))?;
        let json = |r: &ScenarioReport| serde_json::to_string(r).unwrap();
        ensure(json(&a) == json(&b), || format!("{name}: reports differ"))?;
        let state = |k: &dmoe_core::Kernel| serde_json::to_string(&k.state()).unwrap();
        ensure(state(&ka) == state(&kb), || format!("{name}: kernel state differs"))?;
    }
    Ok("three scenarios, byte-identical reports, timelines and metrics".into())
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        ("scenario 1 cricket optimization replay", cricket),
        ("scenario 2 email installation and pruning replay", email),
        ("scenario 3 flight dead end replay", flight),
        ("LRU property suite", lru),
        ("manifest invariant suite", manifest),
        ("event-log oracle suite", event_log),
        ("similarity/lookup oracle suite", similarity),
        ("hollow-evolution guard", hollow),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                println!("FAIL {name}: {why}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
