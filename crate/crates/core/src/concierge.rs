//! The generic concierge: route types and the routing precedence.
//!
//! Precedence is total: an active expert whose routing tags contain the
//! classified topic or action wins; otherwise the concierge answers with its
//! generic tools; otherwise it refuses with a canonical phrase. The turn
//! pipeline itself lives on [`crate::kernel::Kernel`].

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::event_log::{EventId, IntentDescriptor};
use crate::expert_registry::ExpertInstance;
use crate::provider::ProviderResponse;
use crate::telemetry::TurnMetrics;

pub const DEFAULT_BASE_INSTRUCTION: &str = "You are the Concierge, a generic assistant. \
When a request falls in the domain of an active expert listed below, route it to that expert. \
Otherwise answer with your generic tools (generic_search, generic_eval), and if you cannot, \
say that you lack the capability.";

/// Default per-dispatch deadline, in simulated milliseconds.
pub const DEFAULT_DISPATCH_DEADLINE_MS: u64 = 10_000;

/// How a turn was answered. Written as `expert(<Name>)`, `generic` or
/// `refusal`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Route {
    Expert(String),
    Generic,
    Refusal,
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Route::Expert(name) => write!(f, "expert({name})"),
            Route::Generic => f.write_str("generic"),
            Route::Refusal => f.write_str("refusal"),
        }
    }
}

impl FromStr for Route {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "generic" => Ok(Route::Generic),
            "refusal" => Ok(Route::Refusal),
            _ => s
                .strip_prefix("expert(")
                .and_then(|r| r.strip_suffix(')'))
                .filter(|n| !n.is_empty())
                .map(|n| Route::Expert(n.into()))
                .ok_or_else(|| alloc::format!("unknown route `{s}`")),
        }
    }
}

impl Serialize for Route {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Route {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnResult {
    pub session_id: String,
    pub turn_index: u32,
    pub reply_text: String,
    pub route: Route,
    pub events_appended: Vec<EventId>,
    pub metrics: TurnMetrics,
}

/// First active expert, in manifest order, whose domain contains the intent.
pub fn expert_for<'a>(
    experts: &'a [ExpertInstance],
    intent: &IntentDescriptor,
) -> Option<&'a ExpertInstance> {
    experts
        .iter()
        .find(|e| e.handles(&intent.topic) || e.handles(&intent.action))
}

/// Route of a concierge-handled turn given the provider's answer.
pub fn concierge_route(response: &ProviderResponse) -> Route {
    if response.is_refusal {
        Route::Refusal
    } else {
        Route::Generic
    }
}
