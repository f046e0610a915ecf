//! Listener-learner: mines event-log batches for capability gaps and
//! over-used generic tools and evolves the expert registry.
//!
//! Gap signals come from the structured refusal marker on concierge events,
//! never from text sniffing. Optimization signals count generic-tool events
//! per topic since the last hydration that served the topic and fire when
//! the count strictly exceeds the threshold.
//!
//! Resolution never hydrates from a cold-storage miss: a miss on a gap
//! signal files a gap report instead, and a miss on an optimization signal
//! does nothing.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::clock::LogicalTime;
use crate::cold_storage::{ColdStorage, DEFAULT_TAU};
use crate::event_log::{Author, EventId, EventRecord, EventStore, IntentDescriptor, NewEvent, StoreError};
use crate::expert_registry::{ExpertInstance, ExpertRegistry, RegistryError};
use crate::text;
use crate::tools;

pub const DEFAULT_OPT_THRESHOLD: u32 = 3;
pub const MISSING_FEATURE_TAG: &str = "[MISSING_FEATURE]";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapSignal {
    pub refusal_event_id: EventId,
    pub intent: IntentDescriptor,
    pub session_id: String,
    pub turn_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptSignal {
    pub topic: String,
    pub generic_tool_count: u32,
    pub window: (EventId, EventId),
    /// Tool queries counted in the window, oldest first.
    pub queries: Vec<String>,
}

impl OptSignal {
    pub fn intent(&self) -> IntentDescriptor {
        IntentDescriptor::new("", self.topic.clone(), self.queries.join(" "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "signal", rename_all = "snake_case")]
pub enum Signal {
    Gap(GapSignal),
    Opt(OptSignal),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapReport {
    pub capability: String,
    pub user_id: String,
    pub originating_event_id: EventId,
    pub logical_time: LogicalTime,
}

impl GapReport {
    pub fn line(&self) -> String {
        format!(
            "{MISSING_FEATURE_TAG}: {} requested by {}",
            self.capability, self.user_id
        )
    }
}

/// Append-only sink of gap reports. Duplicate capabilities are kept: the
/// log is an audit trail, not a set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct GapReportLog {
    reports: Vec<GapReport>,
}

impl GapReportLog {
    pub fn emit(&mut self, report: GapReport) -> Result<String, ListenerError> {
        if report.capability.trim().is_empty() {
            return Err(ListenerError::EmptyCapability);
        }
        let line = report.line();
        self.reports.push(report);
        Ok(line)
    }

    pub fn reports(&self) -> &[GapReport] {
        &self.reports
    }

    pub fn lines(&self) -> Vec<String> {
        self.reports.iter().map(GapReport::line).collect()
    }

    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionKind {
    Hydrated {
        expert: String,
        toolset: String,
        score: f64,
        evicted: Option<String>,
    },
    Pruned {
        session_id: String,
        event_ids: Vec<EventId>,
    },
    GapReported {
        report: GapReport,
        line: String,
    },
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvolutionAction {
    pub kind: ActionKind,
    pub triggered_by: Signal,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ListenerError {
    #[error("gap report capability is empty")]
    EmptyCapability,
    #[error("cannot prune refusal {0}: no active expert serves its intent")]
    PruneWithoutHydration(EventId),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

/// Mutable kernel state the listener acts on.
pub struct EvolutionWorld<'a> {
    pub store: &'a mut EventStore,
    pub registry: &'a mut ExpertRegistry,
    pub cold: &'a ColdStorage,
    pub gaps: &'a mut GapReportLog,
    pub now: LogicalTime,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
struct TopicWindow {
    /// Only events with a larger id count.
    reset_after: EventId,
    counted: BTreeMap<EventId, String>,
    signalled_at: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
struct ListenerState {
    windows: BTreeMap<String, TopicWindow>,
    pending: Vec<Signal>,
    reported: BTreeSet<EventId>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ListenerLearner {
    tau: f64,
    opt_threshold: u32,
    state: ListenerState,
}

impl Default for ListenerLearner {
    fn default() -> Self {
        Self::new(DEFAULT_TAU, DEFAULT_OPT_THRESHOLD)
    }
}

/// True when an active expert would receive a turn with this intent.
pub fn served_by<'a>(registry: &'a ExpertRegistry, intent: &IntentDescriptor) -> Option<&'a ExpertInstance> {
    registry.route_for(&intent.action, &intent.topic)
}

/// One gap signal per live refusal-marked concierge event whose intent no
/// active expert serves.
pub fn detect_gap(events: &[EventRecord], registry: &ExpertRegistry) -> Vec<GapSignal> {
    refusals(events)
        .filter(|s| served_by(registry, &s.intent).is_none())
        .collect()
}

fn refusals(events: &[EventRecord]) -> impl Iterator<Item = GapSignal> + '_ {
    events.iter().filter_map(|e| {
        let marker = e.refusal.as_ref()?;
        (e.author == Author::Concierge).then(|| GapSignal {
            refusal_event_id: e.id,
            intent: marker.intent.clone(),
            session_id: e.session_id.clone(),
            turn_index: e.turn_index,
        })
    })
}

/// `(topic, query)` of a generic-tool event, if it is one.
pub fn generic_tool_use(event: &EventRecord) -> Option<(&str, String)> {
    let Author::Tool(name) = &event.author else {
        return None;
    };
    if !tools::is_generic(name) {
        return None;
    }
    let topic = event.topic.as_deref()?;
    let query = event
        .tool_calls
        .first()
        .map(|c| tools::argument_key(&c.arguments))
        .unwrap_or_default();
    Some((topic, query))
}

/// Per-topic generic-tool counts over a slice of events.
pub fn generic_counts_by_topic(events: &[EventRecord]) -> BTreeMap<String, u32> {
    let mut counts = BTreeMap::new();
    for (topic, _) in events.iter().filter_map(generic_tool_use) {
        *counts.entry(String::from(topic)).or_insert(0) += 1;
    }
    counts
}

impl ListenerLearner {
    pub fn new(tau: f64, opt_threshold: u32) -> Self {
        Self {
            tau,
            opt_threshold: opt_threshold.max(1),
            state: ListenerState::default(),
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn opt_threshold(&self) -> u32 {
        self.opt_threshold
    }

    /// Signals waiting for a retry because hydration was deferred.
    pub fn pending(&self) -> &[Signal] {
        &self.state.pending
    }

    /// Generic-tool count currently in the window for `topic`.
    pub fn window_count(&self, topic: &str) -> u32 {
        self.state
            .windows
            .get(topic)
            .map_or(0, |w| w.counted.len() as u32)
    }

    /// Scans events after `cursor`, resolves every signal and applies the
    /// resulting actions. On error nothing about the listener's own state
    /// changes and the cursor is not advanced; already-applied actions are
    /// idempotent under replay.
    pub fn process_batch(
        &mut self,
        cursor: EventId,
        world: &mut EvolutionWorld<'_>,
    ) -> Result<(Vec<EvolutionAction>, EventId), ListenerError> {
        let (events, next_cursor) = world.store.scan_since(cursor);
        let mut state = self.state.clone();

        let mut signals: Vec<Signal> = core::mem::take(&mut state.pending);
        // Refusals already served get a prune-only resolution, so every
        // refusal in the batch is carried through.
        signals.extend(refusals(&events).map(Signal::Gap));
        signals.extend(
            Self::detect_opt_in(&mut state, &events, self.opt_threshold, world.registry)
                .into_iter()
                .map(Signal::Opt),
        );

        let mut actions = Vec::new();
        for signal in signals {
            actions.extend(self.resolve_in(&mut state, signal, world)?);
        }
        self.state = state;
        Ok((actions, next_cursor))
    }

    /// Optimization signals for `events`, updating the per-topic windows.
    pub fn detect_opt(&mut self, events: &[EventRecord], registry: &ExpertRegistry) -> Vec<OptSignal> {
        let threshold = self.opt_threshold;
        Self::detect_opt_in(&mut self.state, events, threshold, registry)
    }

    fn detect_opt_in(
        state: &mut ListenerState,
        events: &[EventRecord],
        threshold: u32,
        registry: &ExpertRegistry,
    ) -> Vec<OptSignal> {
        let mut touched: BTreeSet<String> = BTreeSet::new();
        for event in events {
            let Some((topic, query)) = generic_tool_use(event) else {
                continue;
            };
            let window = state.windows.entry(topic.into()).or_default();
            if event.id <= window.reset_after {
                continue;
            }
            if window.counted.insert(event.id, query).is_none() {
                touched.insert(topic.into());
            }
        }
        let mut signals = Vec::new();
        for topic in touched {
            let window = state.windows.get_mut(&topic).expect("window exists");
            let count = window.counted.len();
            if count as u64 <= u64::from(threshold) || count <= window.signalled_at {
                continue;
            }
            if registry.route_for("", &topic).is_some() {
                continue;
            }
            window.signalled_at = count;
            let first = *window.counted.keys().next().expect("non-empty");
            let last = *window.counted.keys().next_back().expect("non-empty");
            signals.push(OptSignal {
                topic: topic.clone(),
                generic_tool_count: count as u32,
                window: (first, last),
                queries: window.counted.values().cloned().collect(),
            });
        }
        signals
    }

    /// Resolves one signal against cold storage and applies its effects.
    pub fn resolve_signal(
        &mut self,
        signal: Signal,
        world: &mut EvolutionWorld<'_>,
    ) -> Result<Vec<EvolutionAction>, ListenerError> {
        let mut state = self.state.clone();
        let actions = self.resolve_in(&mut state, signal, world)?;
        self.state = state;
        Ok(actions)
    }

    fn resolve_in(
        &self,
        state: &mut ListenerState,
        signal: Signal,
        world: &mut EvolutionWorld<'_>,
    ) -> Result<Vec<EvolutionAction>, ListenerError> {
        let mut actions = Vec::new();
        let action = |kind| EvolutionAction {
            kind,
            triggered_by: signal.clone(),
        };
        match &signal {
            Signal::Gap(gap) => {
                if served_by(world.registry, &gap.intent).is_some() {
                    let pruned = prune_refusal(gap, world)?;
                    if !pruned.is_empty() {
                        actions.push(action(ActionKind::Pruned {
                            session_id: gap.session_id.clone(),
                            event_ids: pruned,
                        }));
                    }
                    return Ok(actions);
                }
                match world.cold.lookup(&gap.intent, self.tau) {
                    Some(hit) => match world.registry.hydrate(&hit.record, world.now) {
                        Ok(h) => {
                            reset_windows(state, &h.expert, world.store.last_id());
                            actions.push(action(ActionKind::Hydrated {
                                expert: h.expert.name.clone(),
                                toolset: hit.record.name.clone(),
                                score: hit.score,
                                evicted: h.evicted,
                            }));
                            if served_by(world.registry, &gap.intent).is_some() {
                                let pruned = prune_refusal(gap, world)?;
                                if !pruned.is_empty() {
                                    actions.push(action(ActionKind::Pruned {
                                        session_id: gap.session_id.clone(),
                                        event_ids: pruned,
                                    }));
                                }
                            }
                        }
                        Err(RegistryError::Deferred) => state.pending.push(signal.clone()),
                        // Matching expert already active but outside this
                        // intent's routing: nothing to do.
                        Err(RegistryError::Duplicate(_)) => actions.push(action(ActionKind::None)),
                        Err(e) => return Err(e.into()),
                    },
                    None => {
                        if state.reported.insert(gap.refusal_event_id) {
                            let report = GapReport {
                                capability: text::capability_label(&gap.intent.action),
                                user_id: gap.session_id.clone(),
                                originating_event_id: gap.refusal_event_id,
                                logical_time: world.now,
                            };
                            let line = world.gaps.emit(report.clone())?;
                            let phrase = text::capability_phrase(&report.capability);
                            world.store.append(NewEvent::new(
                                gap.session_id.clone(),
                                gap.turn_index,
                                Author::System,
                                format!(
                                    "I have logged a request for {phrase} capabilities with our engineering team."
                                ),
                                world.now,
                            ))?;
                            actions.push(action(ActionKind::GapReported { report, line }));
                        }
                    }
                }
            }
            Signal::Opt(opt) => {
                let intent = opt.intent();
                if served_by(world.registry, &intent).is_some() {
                    return Ok(actions);
                }
                match world.cold.lookup(&intent, self.tau) {
                    Some(hit) => match world.registry.hydrate(&hit.record, world.now) {
                        Ok(h) => {
                            reset_windows(state, &h.expert, world.store.last_id());
                            actions.push(action(ActionKind::Hydrated {
                                expert: h.expert.name.clone(),
                                toolset: hit.record.name.clone(),
                                score: hit.score,
                                evicted: h.evicted,
                            }));
                        }
                        Err(RegistryError::Deferred) => state.pending.push(signal.clone()),
                        Err(RegistryError::Duplicate(_)) => actions.push(action(ActionKind::None)),
                        Err(e) => return Err(e.into()),
                    },
                    None => actions.push(action(ActionKind::None)),
                }
            }
        }
        Ok(actions)
    }
}

fn reset_windows(state: &mut ListenerState, expert: &ExpertInstance, last_id: EventId) {
    for (topic, window) in state.windows.iter_mut() {
        if expert.handles(topic) {
            *window = TopicWindow {
                reset_after: last_id,
                ..TopicWindow::default()
            };
        }
    }
    for tag in &expert.routing_tags {
        state.windows.entry(tag.clone()).or_insert_with(|| TopicWindow {
            reset_after: last_id,
            ..TopicWindow::default()
        });
    }
}

/// Deletes the refusal and appends an activation notice to its session so
/// the next context reads request, then activation. A second call finds
/// nothing to delete and returns an empty list.
pub fn prune_refusal(
    signal: &GapSignal,
    world: &mut EvolutionWorld<'_>,
) -> Result<Vec<EventId>, ListenerError> {
    let expert = served_by(world.registry, &signal.intent)
        .ok_or(ListenerError::PruneWithoutHydration(signal.refusal_event_id))?
        .name
        .clone();
    if !world.store.delete(signal.refusal_event_id)? {
        return Ok(Vec::new());
    }
    world.store.append(NewEvent::new(
        signal.session_id.clone(),
        signal.turn_index,
        Author::System,
        format!("[{expert} activated]"),
        world.now,
    ))?;
    Ok(alloc::vec![signal.refusal_event_id])
}
