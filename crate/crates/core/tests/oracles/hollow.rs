//! Fuzzed conversations checked against the rule that evolution only ever
//! draws on cold storage, and that every cold-storage miss is reported once.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use dmoe_core::expert::InlineExecutor;
use dmoe_core::listener::{ActionKind, Signal};
use dmoe_core::{Author, EventId, IntentDescriptor, Kernel, KernelConfig, Route};
use proptest::prelude::*;
use serde_json::json;

/// Refused intents, some backed by a bundled toolset and some not.
pub const REFUSED: [(&str, &str); 7] = [
    ("SendEmail", "Email"),
    ("BookFlight", "Travel"),
    ("OrderPizza", "Food"),
    ("TranslateText", "Language"),
    ("CheckWeather", "Weather"),
    ("TrackParcel", "Shipping"),
    ("DraftEmail", ""),
];

pub const FILLER: [&str; 10] = [
    "please", "team", "meeting", "city", "forecast", "cricket", "score", "tomorrow", "message", "london",
];

#[derive(Debug, Clone)]
pub enum Step {
    Refused(usize, Vec<&'static str>),
    Sports(Vec<&'static str>),
    Listen,
}

pub fn step() -> impl Strategy<Value = Step> {
    let words = || prop::collection::vec(prop::sample::select(FILLER.to_vec()), 0..4);
    prop_oneof![
        4 => (0..REFUSED.len(), words()).prop_map(|(i, w)| Step::Refused(i, w)),
        2 => words().prop_map(Step::Sports),
        2 => Just(Step::Listen),
    ]
}

pub fn fuzz_kernel(capacity: usize) -> Kernel {
    let mut rules = vec![
        json!({"match": {"author_scope": "concierge", "pattern": "zsports"},
               "produce": {"tool_invocations": [{"tool_name": "generic_search", "arguments": {"query": "cricket score"}}],
                           "intent": {"topic": "Sports"}}}),
        json!({"match": {"author_scope": "expert", "pattern": "z"}, "produce": {"text": "Done."}, "priority": -1}),
    ];
    for (i, (action, topic)) in REFUSED.iter().enumerate() {
        rules.push(json!({"match": {"author_scope": "concierge", "pattern": format!("zq{i}")},
                          "produce": {"text": "I currently lack the capability to do that.", "is_refusal": true,
                                      "intent": {"action": action, "topic": topic}}}));
    }
    let config = KernelConfig {
        capacity,
        ..KernelConfig::default()
    };
    Kernel::new(
        config,
        super::fixtures::bundled_cold(),
        Arc::new(super::fixtures::provider(json!(rules))),
        super::fixtures::fixtures(json!([{"tool": "generic_search", "key": "*", "result": "Cricket scores from around the web."}])),
    )
    .unwrap()
}

pub fn run(capacity: usize, steps: &[Step]) -> Result<(), TestCaseError> {
    let mut kernel = fuzz_kernel(capacity);
    let cold = kernel.cold().clone();
    let tau = kernel.config().tau;
    let mut refusals: BTreeMap<EventId, (IntentDescriptor, String)> = BTreeMap::new();
    let mut reported: BTreeMap<EventId, usize> = BTreeMap::new();
    let mut pruned: BTreeSet<EventId> = BTreeSet::new();

    let listen = |kernel: &mut Kernel,
                  reported: &mut BTreeMap<EventId, usize>,
                  pruned: &mut BTreeSet<EventId>|
     -> Result<(), TestCaseError> {
        for action in kernel.run_listener().unwrap() {
            let intent = match &action.triggered_by {
                Signal::Gap(g) => g.intent.clone(),
                Signal::Opt(o) => o.intent(),
            };
            match &action.kind {
                ActionKind::Hydrated { toolset, score, .. } => {
                    let hit = cold.lookup(&intent, tau);
                    prop_assert!(hit.is_some(), "hydrated {} from a cold-storage miss", toolset);
                    let hit = hit.unwrap();
                    prop_assert_eq!(&hit.record.name, toolset);
                    prop_assert_eq!(hit.score, *score);
                    prop_assert!(*score >= tau);
                }
                ActionKind::GapReported { report, .. } => {
                    prop_assert!(cold.lookup(&intent, tau).is_none(), "gap report for a capability in cold storage");
                    *reported.entry(report.originating_event_id).or_insert(0) += 1;
                }
                ActionKind::Pruned { event_ids, .. } => {
                    let Signal::Gap(g) = &action.triggered_by else {
                        return Err(TestCaseError::fail("prune triggered by a non-gap signal"));
                    };
                    prop_assert_eq!(event_ids, &vec![g.refusal_event_id]);
                    prop_assert!(pruned.insert(g.refusal_event_id), "refusal pruned twice");
                }
                ActionKind::None => {}
            }
        }
        prop_assert!(kernel.registry().len() <= kernel.registry().capacity());
        Ok(())
    };

    for (n, step) in steps.iter().enumerate() {
        let text = match step {
            Step::Refused(i, w) => format!("zq{i} {}", w.join(" ")),
            Step::Sports(w) => format!("zsports {}", w.join(" ")),
            Step::Listen => {
                listen(&mut kernel, &mut reported, &mut pruned)?;
                continue;
            }
        };
        let session = format!("UserID_{:03}", n % 2 + 1);
        let result = kernel.handle_turn(&session, &text, &InlineExecutor).unwrap();
        if result.route == Route::Refusal {
            let id = *result.events_appended.last().unwrap();
            let marker = kernel.store().get(id).unwrap().refusal.clone().unwrap();
            refusals.insert(id, (marker.intent, session.clone()));
        }
    }
    listen(&mut kernel, &mut reported, &mut pruned)?;
    listen(&mut kernel, &mut reported, &mut pruned)?;

    for (id, (intent, session)) in &refusals {
        let count = reported.get(id).copied().unwrap_or(0);
        prop_assert!(count <= 1, "refusal {} reported {} times", id, count);
        if cold.lookup(intent, tau).is_some() {
            prop_assert_eq!(count, 0);
        } else if count == 1 {
            prop_assert!(kernel.store().get(*id).is_some(), "reported refusal {} was deleted", id);
        } else {
            // A miss in cold storage is only silent when an active expert
            // already served the intent and the refusal was pruned.
            prop_assert!(pruned.contains(id), "refusal {} missed cold storage without a report", id);
        }
        if kernel.store().is_tombstoned(*id) {
            prop_assert!(pruned.contains(id));
            let activated = kernel
                .context(session)
                .iter()
                .any(|e| e.author == Author::System && e.content.ends_with(" activated]"));
            prop_assert!(activated, "pruned refusal {} without an activation event", id);
        }
    }
    prop_assert_eq!(kernel.gaps().len(), reported.values().sum::<usize>());
    Ok(())
}

