//! Simulated token and latency accounting.
//!
//! Tokens are `max(1, ceil(chars / 4))` per reply or tool-result text.
//! Latency is the sum of a per-step table; the defaults put a generic search
//! turn at 3500 ms and an expert API turn at 2100 ms.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::concierge::Route;
use crate::event_log::{Author, EventRecord};
use crate::tools;

pub const STEP_PROVIDER_CALL: &str = "provider_call";
pub const STEP_EXPERT_API_CALL: &str = "expert_api_call";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    pub latency_table: BTreeMap<String, u64>,
}

impl Default for CostModel {
    fn default() -> Self {
        let mut latency_table = BTreeMap::new();
        latency_table.insert(tools::GENERIC_SEARCH.to_string(), 3000);
        latency_table.insert(tools::GENERIC_EVAL.to_string(), 100);
        latency_table.insert(STEP_PROVIDER_CALL.to_string(), 500);
        latency_table.insert(STEP_EXPERT_API_CALL.to_string(), 1600);
        Self { latency_table }
    }
}

impl CostModel {
    pub fn latency(&self, step: &str) -> Result<u64, TelemetryError> {
        self.latency_table
            .get(step)
            .copied()
            .ok_or_else(|| TelemetryError::UnknownStep(step.into()))
    }
}

pub fn tokens(text: &str) -> u64 {
    let chars = text.chars().count() as u64;
    chars.div_ceil(4).max(1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnMetrics {
    pub tokens_out: u64,
    pub simulated_latency_ms: u64,
    pub route: Route,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsDelta {
    pub latency_delta_pct: i64,
    pub token_delta_pct: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TelemetryError {
    #[error("unknown step kind `{0}`")]
    UnknownStep(String),
    #[error("baseline metric is zero")]
    ZeroBaseline,
}

/// Step kind an event accounts for, if any. Agent replies are provider
/// calls; generic tools are their own step; any other tool is an expert API
/// call.
pub fn step_kind(event: &EventRecord) -> Option<String> {
    match &event.author {
        Author::Concierge | Author::Expert(_) => Some(STEP_PROVIDER_CALL.into()),
        Author::Tool(name) if tools::is_generic(name) => Some(name.clone()),
        Author::Tool(_) => Some(STEP_EXPERT_API_CALL.into()),
        Author::User | Author::System => None,
    }
}

/// Tokens over agent and tool texts, latency over the step sequence.
pub fn measure_turn(
    events: &[EventRecord],
    route: Route,
    model: &CostModel,
) -> Result<TurnMetrics, TelemetryError> {
    let steps: Vec<String> = events.iter().filter_map(step_kind).collect();
    measure_steps(
        events
            .iter()
            .filter(|e| step_kind(e).is_some())
            .map(|e| e.content.as_str()),
        &steps,
        route,
        model,
    )
}

/// Same as [`measure_turn`] with the texts and steps given directly.
pub fn measure_steps<'a>(
    texts: impl IntoIterator<Item = &'a str>,
    steps: &[String],
    route: Route,
    model: &CostModel,
) -> Result<TurnMetrics, TelemetryError> {
    let mut latency = 0;
    for step in steps {
        latency += model.latency(step)?;
    }
    let mut tokens_out: u64 = texts.into_iter().map(tokens).sum();
    if tokens_out == 0 {
        tokens_out = 1;
    }
    Ok(TurnMetrics {
        tokens_out,
        simulated_latency_ms: latency,
        route,
    })
}

/// `100 * (before - after) / before`, rounded half up.
pub fn delta_pct(before: u64, after: u64) -> Result<i64, TelemetryError> {
    if before == 0 {
        return Err(TelemetryError::ZeroBaseline);
    }
    let num = 100 * (i128::from(before) - i128::from(after));
    let den = i128::from(before);
    Ok((2 * num + den).div_euclid(2 * den) as i64)
}

pub fn compare(before: &TurnMetrics, after: &TurnMetrics) -> Result<MetricsDelta, TelemetryError> {
    Ok(MetricsDelta {
        latency_delta_pct: delta_pct(before.simulated_latency_ms, after.simulated_latency_ms)?,
        token_delta_pct: delta_pct(before.tokens_out, after.tokens_out)?,
    })
}

/// One row of the per-session metrics log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub session_id: String,
    pub turn_index: u32,
    #[serde(flatten)]
    pub metrics: TurnMetrics,
}
