//! Deterministic kernel of a self-evolving concierge system.
//!
//! A generic concierge routes user turns to hydrated experts, generic tools,
//! or a refusal. A background listener mines the append-only event log for
//! refusals and over-used generic tools, hydrates experts from cold storage
//! under an LRU-bounded capacity, prunes stale refusals from the log, and
//! files gap reports when no toolset exists.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, threads, the
//! CLI and the HTTP service live in the `dmoe` companion crate.

#![no_std]
extern crate alloc;

pub mod clock;
pub mod cold_storage;
pub mod concierge;
pub mod event_log;
pub mod expert;
pub mod expert_registry;
pub mod kernel;
pub mod listener;
pub mod provider;
pub mod scenario;
pub mod telemetry;
pub mod text;
pub mod tools;

pub use clock::LogicalTime;
pub use cold_storage::{ColdStorage, MatchResult, ToolSchema, ToolsetRecord};
pub use concierge::{Route, TurnResult};
pub use event_log::{Author, EventId, EventRecord, EventStore, IntentDescriptor, NewEvent};
pub use expert_registry::{ExpertInstance, ExpertRegistry, ExpertStatus, ManifestDocument};
pub use kernel::{Kernel, KernelConfig, Notice, NoticeKind};
pub use listener::{EvolutionAction, GapReport, ListenerLearner};
pub use provider::{Provider, ProviderRequest, ProviderResponse, ScriptedProvider};
pub use telemetry::{CostModel, TurnMetrics};
