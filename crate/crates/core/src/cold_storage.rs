//! Cold storage: the static registry of dormant toolsets.
//!
//! Toolsets are never placed in a prompt until an expert is hydrated from
//! them. Matching an intent to a toolset uses cosine similarity over term
//! frequency vectors; capability tags count three times so action verbs
//! dominate the match.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::event_log::IntentDescriptor;
use crate::text;

/// Weight of each capability tag in a record's token stream.
pub const TAG_WEIGHT: u32 = 3;

/// Default confidence threshold for [`ColdStorage::lookup`].
pub const DEFAULT_TAU: f64 = 0.35;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub tool_name: String,
    pub parameters: serde_json::Value,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolsetRecord {
    pub name: String,
    pub description: String,
    pub capability_tags: Vec<String>,
    pub tool_schemas: Vec<ToolSchema>,
    pub prompt_template: String,
    pub credentials_ref: String,
}

impl ToolsetRecord {
    pub fn validate(&self) -> Result<(), LoadError> {
        let fail = |reason: &str| {
            Err(LoadError::Invalid {
                record: self.name.clone(),
                reason: reason.into(),
            })
        };
        if self.name.trim().is_empty() {
            return fail("name is empty");
        }
        if self.description.trim().is_empty() {
            return fail("description is empty");
        }
        if self.tool_schemas.is_empty() {
            return fail("no tool schemas");
        }
        if self.tool_schemas.iter().any(|t| t.tool_name.trim().is_empty()) {
            return fail("tool schema with empty tool_name");
        }
        Ok(())
    }

    /// Term-frequency vector of description plus weighted tags.
    pub fn term_frequencies(&self) -> BTreeMap<String, u32> {
        let mut tf = term_frequencies(&self.description);
        for tag in &self.capability_tags {
            for token in text::tokens(tag) {
                *tf.entry(token).or_insert(0) += TAG_WEIGHT;
            }
        }
        tf
    }

    pub fn tool_names(&self) -> impl Iterator<Item = &str> {
        self.tool_schemas.iter().map(|t| t.tool_name.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchResult {
    pub record: ToolsetRecord,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LoadError {
    #[error("toolset `{record}` is invalid: {reason}")]
    Invalid { record: String, reason: String },
    #[error("duplicate toolset name `{0}`")]
    Duplicate(String),
    #[error("failed to parse `{source_name}`: {message}")]
    Parse { source_name: String, message: String },
}

pub fn term_frequencies(text: &str) -> BTreeMap<String, u32> {
    let mut tf = BTreeMap::new();
    for token in text::tokens(text) {
        *tf.entry(token).or_insert(0) += 1;
    }
    tf
}

/// Cosine of two term-frequency vectors, clamped to `[0, 1]`. Empty vectors
/// score 0.
pub fn cosine(a: &BTreeMap<String, u32>, b: &BTreeMap<String, u32>) -> f64 {
    let (dot, norms) = cosine_parts(a, b);
    if dot == 0 {
        return 0.0;
    }
    let score = dot as f64 / libm::sqrt(norms as f64);
    score.clamp(0.0, 1.0)
}

/// Dot product and product of squared norms. The cosine is
/// `dot / sqrt(norms)`; both parts are exact so scores can be compared
/// without rounding.
fn cosine_parts(a: &BTreeMap<String, u32>, b: &BTreeMap<String, u32>) -> (u64, u128) {
    let norm = |v: &BTreeMap<String, u32>| v.values().map(|&c| u64::from(c) * u64::from(c)).sum::<u64>();
    let norms = u128::from(norm(a)) * u128::from(norm(b));
    if norms == 0 {
        return (0, 0);
    }
    let dot = a
        .iter()
        .filter_map(|(t, &ca)| b.get(t).map(|&cb| u64::from(ca) * u64::from(cb)))
        .sum();
    (dot, norms)
}

/// `dot_a / sqrt(norms_a) > dot_b / sqrt(norms_b)`, exactly.
fn beats(a: (u64, u128), b: (u64, u128)) -> bool {
    let lhs = u128::from(a.0).pow(2).checked_mul(b.1);
    let rhs = u128::from(b.0).pow(2).checked_mul(a.1);
    match (lhs, rhs) {
        (Some(l), Some(r)) => l > r,
        _ => {
            let score = |(dot, norms): (u64, u128)| dot as f64 / libm::sqrt(norms as f64);
            score(a) > score(b)
        }
    }
}

/// Similarity of an intent to a toolset record.
pub fn similarity(intent: &IntentDescriptor, record: &ToolsetRecord) -> f64 {
    cosine(
        &term_frequencies(&intent.match_text()),
        &record.term_frequencies(),
    )
}

/// Immutable, name-ordered collection of toolsets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ColdStorage {
    records: BTreeMap<String, ToolsetRecord>,
}

impl ColdStorage {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Validates every record and rejects duplicate names.
    pub fn from_records(records: impl IntoIterator<Item = ToolsetRecord>) -> Result<Self, LoadError> {
        let mut map = BTreeMap::new();
        for record in records {
            record.validate()?;
            if map.contains_key(&record.name) {
                return Err(LoadError::Duplicate(record.name));
            }
            map.insert(record.name.clone(), record);
        }
        Ok(Self { records: map })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&ToolsetRecord> {
        self.records.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.records.contains_key(name)
    }

    /// Records in lexicographic name order.
    pub fn iter(&self) -> impl Iterator<Item = &ToolsetRecord> {
        self.records.values()
    }

    /// Highest-scoring record with score >= `tau`. Ties go to the smaller
    /// name, which is the first one seen in name order.
    pub fn lookup(&self, intent: &IntentDescriptor, tau: f64) -> Option<MatchResult> {
        let query = term_frequencies(&intent.match_text());
        let mut best: Option<(&ToolsetRecord, f64, (u64, u128))> = None;
        for record in self.records.values() {
            let tf = record.term_frequencies();
            let parts = cosine_parts(&query, &tf);
            let score = cosine(&query, &tf);
            if parts.0 == 0 || score < tau {
                continue;
            }
            match best {
                Some((_, _, top)) if !beats(parts, top) => {}
                _ => best = Some((record, score, parts)),
            }
        }
        best.map(|(record, score, _)| MatchResult {
            record: record.clone(),
            score,
        })
    }
}
