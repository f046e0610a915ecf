//! Naive TF-cosine with exact rational ties.

use std::collections::BTreeMap;

use dmoe_core::{ColdStorage, IntentDescriptor, ToolSchema, ToolsetRecord};
use proptest::prelude::*;

pub const STOP: [&str; 30] = [
    "a", "an", "the", "i", "me", "my", "we", "our", "you", "your", "he", "she", "it", "its",
    "they", "them", "their", "is", "are", "was", "were", "be", "been", "am", "do", "does", "did",
    "have", "has", "had",
];

pub const VOCAB: [&str; 14] = [
    "cricket", "score", "email", "send", "team", "weather", "flight", "book", "match", "forecast",
    "the", "a", "player", "city",
];

pub fn naive_tf(text: &str, weight: u64, into: &mut BTreeMap<String, u64>) {
    let mut word = String::new();
    for c in text.chars().chain(std::iter::once(' ')) {
        if c.is_alphanumeric() {
            word.extend(c.to_lowercase());
        } else if !word.is_empty() {
            if !STOP.contains(&word.as_str()) {
                *into.entry(word.clone()).or_insert(0) += weight;
            }
            word.clear();
        }
    }
}

/// Score as an exact pair `(dot, |a|^2 * |b|^2)`.
pub fn naive_score(intent: &IntentDescriptor, record: &ToolsetRecord) -> (u64, u128) {
    let mut q = BTreeMap::new();
    naive_tf(&intent.action, 1, &mut q);
    naive_tf(&intent.topic, 1, &mut q);
    naive_tf(&intent.raw_text, 1, &mut q);
    let mut r = BTreeMap::new();
    naive_tf(&record.description, 1, &mut r);
    for tag in &record.capability_tags {
        naive_tf(tag, 3, &mut r);
    }
    let dot: u64 = q.iter().map(|(k, v)| v * r.get(k).copied().unwrap_or(0)).sum();
    let nq: u64 = q.values().map(|v| v * v).sum();
    let nr: u64 = r.values().map(|v| v * v).sum();
    (dot, u128::from(nq) * u128::from(nr))
}

pub fn as_f64((dot, norms): (u64, u128)) -> f64 {
    if dot == 0 {
        0.0
    } else {
        dot as f64 / (norms as f64).sqrt()
    }
}

/// Exact argmax with score >= tau; ties go to the smaller name.
pub fn brute_force(cold: &[ToolsetRecord], intent: &IntentDescriptor, tau: f64) -> Option<String> {
    let mut sorted: Vec<&ToolsetRecord> = cold.iter().collect();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));
    let mut best: Option<(&ToolsetRecord, (u64, u128))> = None;
    for r in sorted {
        let s = naive_score(intent, r);
        if s.0 == 0 || as_f64(s) < tau {
            continue;
        }
        let better = match best {
            None => true,
            Some((_, b)) => u128::from(s.0).pow(2) * b.1 > u128::from(b.0).pow(2) * s.1,
        };
        if better {
            best = Some((r, s));
        }
    }
    best.map(|(r, _)| r.name.clone())
}

pub fn record(name: String, description: String, tags: Vec<String>) -> ToolsetRecord {
    ToolsetRecord {
        name,
        description,
        capability_tags: tags,
        tool_schemas: vec![ToolSchema {
            tool_name: "t".into(),
            parameters: serde_json::json!({}),
            description: String::new(),
        }],
        prompt_template: String::new(),
        credentials_ref: String::new(),
    }
}

pub fn words(max: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(VOCAB.to_vec()), 1..max).prop_map(|w| w.join(" "))
}

pub fn capitalized(w: &str) -> String {
    let mut c = w.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

pub fn registry() -> impl Strategy<Value = Vec<ToolsetRecord>> {
    prop::collection::vec(
        (words(6), prop::collection::vec(prop::sample::select(VOCAB.to_vec()), 0..3)),
        1..6,
    )
    .prop_map(|specs| {
        specs
            .into_iter()
            .enumerate()
            .map(|(i, (desc, tags))| {
                record(
                    format!("R{i}_MCP"),
                    desc,
                    tags.into_iter().map(capitalized).collect(),
                )
            })
            .collect()
    })
}

pub fn intent() -> impl Strategy<Value = IntentDescriptor> {
    (
        prop::option::of(prop::sample::select(VOCAB.to_vec())),
        prop::option::of(prop::sample::select(VOCAB.to_vec())),
        words(8),
    )
        .prop_map(|(a, t, raw)| {
            IntentDescriptor::new(
                a.map(capitalized).unwrap_or_default(),
                t.map(capitalized).unwrap_or_default(),
                raw,
            )
        })
}

/// Lookup must equal the exact brute-force argmax.
pub fn check_lookup(records: &[ToolsetRecord], intent: &IntentDescriptor, tau: f64) -> Result<(), TestCaseError> {
    let cold = ColdStorage::from_records(records.to_vec()).unwrap();
    let got = cold.lookup(intent, tau);
    let want = brute_force(records, intent, tau);
    prop_assert_eq!(got.as_ref().map(|m| m.record.name.clone()), want);
    if let Some(m) = got {
        let exact = as_f64(naive_score(intent, &m.record));
        prop_assert!((m.score - exact).abs() < 1e-12);
        prop_assert!(m.score >= tau);
    }
    Ok(())
}
