//! The kernel: one logical timeline owning the event store, the active
//! registry, cold storage, the provider and the listener.
//!
//! A turn is split in two so an expert can run outside the kernel's lock:
//! [`Kernel::begin_turn`] either finishes a concierge turn or hands back an
//! owned [`ExpertJob`], and [`Kernel::finish_dispatch`] records its outcome.
//! [`Kernel::handle_turn`] composes the two with an executor.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::clock::{LogicalClock, LogicalTime};
use crate::cold_storage::{ColdStorage, DEFAULT_TAU};
use crate::concierge::{self, Route, TurnResult, DEFAULT_BASE_INSTRUCTION, DEFAULT_DISPATCH_DEADLINE_MS};
use crate::event_log::{
    Author, EventId, EventRecord, EventStore, IntentDescriptor, NewEvent, RefusalMarker, StoreError,
    ToolCall,
};
use crate::expert::{DispatchBudget, DispatchError, ExpertExecutor, ExpertJob, ExpertOutcome, OutcomeStep};
use crate::expert_registry::{ExpertRegistry, ExpertStatus, ManifestDocument, RegistryError, RegistrySnapshot, DEFAULT_CAPACITY};
use crate::listener::{ActionKind, EvolutionAction, EvolutionWorld, GapReportLog, ListenerError, ListenerLearner, DEFAULT_OPT_THRESHOLD};
use crate::provider::{self, AgentRole, Provider, ProviderRequest};
use crate::telemetry::{self, CostModel, MetricsRow, TelemetryError};
use crate::tools::{self, ToolError, ToolFixtures};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub base_instruction: String,
    pub capacity: usize,
    pub tau: f64,
    pub opt_threshold: u32,
    pub cost_model: CostModel,
    pub dispatch_deadline_ms: u64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            base_instruction: DEFAULT_BASE_INSTRUCTION.into(),
            capacity: DEFAULT_CAPACITY,
            tau: DEFAULT_TAU,
            opt_threshold: DEFAULT_OPT_THRESHOLD,
            cost_model: CostModel::default(),
            dispatch_deadline_ms: DEFAULT_DISPATCH_DEADLINE_MS,
        }
    }
}

/// A state change broadcast to observers, numbered from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Notice {
    pub seq: u64,
    pub logical_time: LogicalTime,
    #[serde(flatten)]
    pub kind: NoticeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NoticeKind {
    Turn {
        session_id: String,
        turn_index: u32,
        route: Route,
        reply_text: String,
        tokens_out: u64,
        simulated_latency_ms: u64,
    },
    Hydrated {
        expert: String,
        toolset: String,
        score: f64,
    },
    Evicted {
        expert: String,
    },
    Pruned {
        session_id: String,
        event_ids: Vec<EventId>,
    },
    GapReport {
        line: String,
    },
    ManifestUpdated {
        manifest: String,
    },
}

impl NoticeKind {
    pub fn name(&self) -> &'static str {
        match self {
            NoticeKind::Turn { .. } => "turn",
            NoticeKind::Hydrated { .. } => "hydrated",
            NoticeKind::Evicted { .. } => "evicted",
            NoticeKind::Pruned { .. } => "pruned",
            NoticeKind::GapReport { .. } => "gap_report",
            NoticeKind::ManifestUpdated { .. } => "manifest_updated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KernelError {
    #[error("session `{0}` already has a turn in flight")]
    SessionBusy(String),
    #[error("expert `{0}` is busy with another turn")]
    ExpertBusy(String),
    #[error("unknown dispatch ticket {0}")]
    UnknownTicket(u64),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Listener(#[from] ListenerError),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error(transparent)]
    Tool(#[from] ToolError),
}

/// An expert turn waiting for its job to run.
#[derive(Debug)]
pub struct PendingTurn {
    pub ticket: u64,
    pub session_id: String,
    pub expert: String,
    pub job: ExpertJob,
}

#[derive(Debug)]
pub enum TurnStart {
    Done(TurnResult),
    Dispatch(PendingTurn),
}

#[derive(Debug, Clone)]
struct Dispatch {
    session_id: String,
    turn_index: u32,
    expert: String,
    topic: String,
    user_event: EventId,
}

#[derive(Debug, Clone, Default)]
struct SessionState {
    turns: u32,
    in_flight: bool,
}

/// Serializable view of everything observable about a kernel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelState {
    pub logical_time: LogicalTime,
    pub registry: RegistrySnapshot,
    pub events: Vec<EventRecord>,
    pub tombstones: Vec<EventId>,
    pub gap_reports: Vec<String>,
    pub metrics: Vec<MetricsRow>,
    pub notices: Vec<Notice>,
}

pub struct Kernel {
    config: KernelConfig,
    clock: LogicalClock,
    store: EventStore,
    registry: ExpertRegistry,
    cold: Arc<ColdStorage>,
    provider: Arc<dyn Provider>,
    fixtures: Arc<ToolFixtures>,
    listener: ListenerLearner,
    listener_cursor: EventId,
    gaps: GapReportLog,
    metrics: Vec<MetricsRow>,
    notices: Vec<Notice>,
    sessions: BTreeMap<String, SessionState>,
    next_session: u64,
    next_ticket: u64,
    dispatches: BTreeMap<u64, Dispatch>,
    simulated_ms: u64,
}

impl core::fmt::Debug for Kernel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Kernel")
            .field("now", &self.clock.now())
            .field("store", &self.store)
            .field("active", &self.registry.len())
            .finish_non_exhaustive()
    }
}

impl Kernel {
    pub fn new(
        config: KernelConfig,
        cold: ColdStorage,
        provider: Arc<dyn Provider>,
        fixtures: ToolFixtures,
    ) -> Result<Self, KernelError> {
        Self::with_store(config, EventStore::new(), cold, provider, fixtures)
    }

    /// Builds a kernel over an existing (possibly restored) event store.
    /// Session turn counters and the clock resume after the stored events.
    pub fn with_store(
        config: KernelConfig,
        store: EventStore,
        cold: ColdStorage,
        provider: Arc<dyn Provider>,
        fixtures: ToolFixtures,
    ) -> Result<Self, KernelError> {
        let registry = ExpertRegistry::new(config.capacity)?;
        let mut sessions: BTreeMap<String, SessionState> = BTreeMap::new();
        for e in store.iter() {
            let s = sessions.entry(e.session_id.clone()).or_default();
            s.turns = s.turns.max(e.turn_index + 1);
        }
        Ok(Self {
            listener: ListenerLearner::new(config.tau, config.opt_threshold),
            clock: LogicalClock::starting_at(store.last_time()),
            next_session: sessions.len() as u64,
            config,
            store,
            registry,
            cold: Arc::new(cold),
            provider,
            fixtures: Arc::new(fixtures),
            listener_cursor: EventId(0),
            gaps: GapReportLog::default(),
            metrics: Vec::new(),
            notices: Vec::new(),
            sessions,
            next_ticket: 0,
            dispatches: BTreeMap::new(),
            simulated_ms: 0,
        })
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    pub fn now(&self) -> LogicalTime {
        self.clock.now()
    }

    pub fn store(&self) -> &EventStore {
        &self.store
    }

    pub fn registry(&self) -> &ExpertRegistry {
        &self.registry
    }

    pub fn cold(&self) -> &ColdStorage {
        &self.cold
    }

    pub fn provider(&self) -> &Arc<dyn Provider> {
        &self.provider
    }

    pub fn fixtures(&self) -> &ToolFixtures {
        &self.fixtures
    }

    pub fn listener(&self) -> &ListenerLearner {
        &self.listener
    }

    pub fn listener_cursor(&self) -> EventId {
        self.listener_cursor
    }

    pub fn gaps(&self) -> &GapReportLog {
        &self.gaps
    }

    pub fn metrics(&self) -> &[MetricsRow] {
        &self.metrics
    }

    pub fn session_metrics(&self, session_id: &str) -> Vec<MetricsRow> {
        self.metrics
            .iter()
            .filter(|m| m.session_id == session_id)
            .cloned()
            .collect()
    }

    pub fn notices(&self) -> &[Notice] {
        &self.notices
    }

    /// Notices with `seq > cursor`.
    pub fn notices_since(&self, cursor: u64) -> &[Notice] {
        let start = self.notices.partition_point(|n| n.seq <= cursor);
        &self.notices[start..]
    }

    /// Total simulated latency of every finished turn.
    pub fn simulated_ms(&self) -> u64 {
        self.simulated_ms
    }

    pub fn manifest(&self) -> ManifestDocument {
        self.registry.render_manifest(&self.config.base_instruction)
    }

    pub fn context(&self, session_id: &str) -> Vec<EventRecord> {
        self.store.get_context(session_id)
    }

    pub fn sessions(&self) -> impl Iterator<Item = &str> {
        self.sessions.keys().map(String::as_str)
    }

    pub fn has_session(&self, session_id: &str) -> bool {
        self.sessions.contains_key(session_id)
    }

    /// Opens a new session named `UserID_001`, `UserID_002`, ...
    pub fn create_session(&mut self) -> String {
        loop {
            self.next_session += 1;
            let id = format!("UserID_{:03}", self.next_session);
            if !self.sessions.contains_key(&id) {
                self.sessions.insert(id.clone(), SessionState::default());
                return id;
            }
        }
    }

    pub fn state(&self) -> KernelState {
        KernelState {
            logical_time: self.clock.now(),
            registry: self.registry.snapshot(&self.config.base_instruction),
            events: self.store.iter().cloned().collect(),
            tombstones: self.store.tombstones().collect(),
            gap_reports: self.gaps.lines(),
            metrics: self.metrics.clone(),
            notices: self.notices.clone(),
        }
    }

    fn notify(&mut self, kind: NoticeKind) {
        let seq = self.notices.last().map_or(1, |n| n.seq + 1);
        self.notices.push(Notice {
            seq,
            logical_time: self.clock.now(),
            kind,
        });
    }

    /// Runs a whole turn, executing any expert dispatch on `executor`.
    pub fn handle_turn(
        &mut self,
        session_id: &str,
        user_text: &str,
        executor: &dyn ExpertExecutor,
    ) -> Result<TurnResult, KernelError> {
        match self.begin_turn(session_id, user_text)? {
            TurnStart::Done(result) => Ok(result),
            TurnStart::Dispatch(pending) => {
                let outcome = executor.execute(pending.job);
                self.finish_dispatch(pending.ticket, outcome)
            }
        }
    }

    /// Appends the user event and routes the turn. Concierge turns finish
    /// here; expert turns return a job and leave the expert busy until
    /// [`Kernel::finish_dispatch`].
    pub fn begin_turn(&mut self, session_id: &str, user_text: &str) -> Result<TurnStart, KernelError> {
        if self.sessions.get(session_id).is_some_and(|s| s.in_flight) {
            return Err(KernelError::SessionBusy(session_id.into()));
        }
        let manifest = self.manifest();
        let intent = self.provider.classify_intent(user_text);
        let target = concierge::expert_for(self.registry.experts(), &intent).cloned();
        if let Some(expert) = &target {
            if expert.status == ExpertStatus::Busy {
                return Err(KernelError::ExpertBusy(expert.name.clone()));
            }
        }

        let now = self.clock.tick();
        let session = self.sessions.entry(session_id.into()).or_default();
        let turn_index = session.turns;
        let user_event = self.store.append(NewEvent::new(
            session_id,
            turn_index,
            Author::User,
            user_text,
            now,
        ))?;
        let session = self.sessions.get_mut(session_id).expect("session exists");
        session.turns += 1;

        if let Some(expert) = target {
            self.registry.mark_busy(&expert.name)?;
            self.sessions.get_mut(session_id).expect("session exists").in_flight = true;
            self.next_ticket += 1;
            let ticket = self.next_ticket;
            let model = &self.config.cost_model;
            let job = ExpertJob {
                agent: expert.name.clone(),
                system_prompt: expert.system_prompt.clone(),
                context: self.store.get_context(session_id),
                user_text: user_text.into(),
                tools: expert.toolset.tool_schemas.clone(),
                provider: self.provider.clone(),
                fixtures: self.fixtures.clone(),
                budget: DispatchBudget {
                    deadline_ms: self.config.dispatch_deadline_ms,
                    provider_call_ms: model.latency(telemetry::STEP_PROVIDER_CALL)?,
                    api_call_ms: model.latency(telemetry::STEP_EXPERT_API_CALL)?,
                },
                depth: 0,
            };
            self.dispatches.insert(
                ticket,
                Dispatch {
                    session_id: session_id.into(),
                    turn_index,
                    expert: expert.name.clone(),
                    topic: intent.topic.clone(),
                    user_event,
                },
            );
            return Ok(TurnStart::Dispatch(PendingTurn {
                ticket,
                session_id: session_id.into(),
                expert: expert.name,
                job,
            }));
        }

        let result = self.concierge_turn(session_id, turn_index, user_text, user_event, &manifest, &intent, now)?;
        Ok(TurnStart::Done(result))
    }

    #[allow(clippy::too_many_arguments)]
    fn concierge_turn(
        &mut self,
        session_id: &str,
        turn_index: u32,
        user_text: &str,
        user_event: EventId,
        manifest: &ManifestDocument,
        classified: &IntentDescriptor,
        now: LogicalTime,
    ) -> Result<TurnResult, KernelError> {
        let request = ProviderRequest {
            agent: AgentRole::Concierge,
            system_prompt: manifest.rendered.clone(),
            context: self.store.get_context(session_id),
            latest_user_text: user_text.into(),
            available_tools: tools::generic_tool_schemas(),
        };
        let response = self.provider.complete(&request);
        let route = concierge::concierge_route(&response);
        let mut appended = alloc::vec![user_event];
        let mut turn_events = Vec::new();

        let reply_text = if response.is_refusal {
            let mut intent = response.intent.clone();
            if intent.action.is_empty() {
                intent.action = if classified.action.is_empty() {
                    String::from("Unknown")
                } else {
                    classified.action.clone()
                };
            }
            let text = match provider::canonical_phrase(&response.text) {
                Some(_) => response.text.clone(),
                None => provider::DEFAULT_REFUSAL_TEXT.into(),
            };
            let phrase = provider::canonical_phrase(&text).unwrap_or_default();
            let id = self.store.append(
                NewEvent::new(session_id, turn_index, Author::Concierge, text.clone(), now).with_refusal(
                    RefusalMarker {
                        canonical_phrase: phrase.into(),
                        intent,
                    },
                ),
            )?;
            appended.push(id);
            text
        } else {
            let topic = response.intent.topic.clone();
            let mut last_output = None;
            for inv in &response.tool_invocations {
                let out = tools::run_generic_tool(&inv.tool_name, &inv.arguments, &topic, &self.fixtures)?;
                let id = self.store.append(
                    NewEvent::new(session_id, turn_index, Author::Tool(inv.tool_name.clone()), out.text.clone(), now)
                        .with_topic(out.topic.clone())
                        .with_tool_call(ToolCall {
                            tool_name: inv.tool_name.clone(),
                            arguments: inv.arguments.clone(),
                            result_summary: tools::summarize(&out.text),
                        }),
                )?;
                appended.push(id);
                last_output = Some(out.text);
            }
            // A rule with no text relays the last tool output verbatim.
            let text = match last_output {
                Some(out) if response.text.is_empty() => out,
                _ => response.text.clone(),
            };
            let id = self.store.append(NewEvent::new(
                session_id,
                turn_index,
                Author::Concierge,
                text.clone(),
                now,
            ))?;
            appended.push(id);
            text
        };
        for id in &appended[1..] {
            turn_events.push(self.store.get(*id).expect("just appended").clone());
        }
        self.finish_turn(session_id, turn_index, reply_text, route, appended, &turn_events)
    }

    /// Records the outcome of a dispatched expert job. The expert is marked
    /// idle whatever the outcome.
    pub fn finish_dispatch(
        &mut self,
        ticket: u64,
        outcome: Result<ExpertOutcome, DispatchError>,
    ) -> Result<TurnResult, KernelError> {
        let d = self
            .dispatches
            .remove(&ticket)
            .ok_or(KernelError::UnknownTicket(ticket))?;
        if let Some(s) = self.sessions.get_mut(&d.session_id) {
            s.in_flight = false;
        }
        let idle = self.registry.mark_idle(&d.expert);
        let now = self.clock.tick();
        idle?;
        self.registry.touch(&d.expert, now)?;

        let mut appended = alloc::vec![d.user_event];
        let mut turn_events = Vec::new();
        let reply_text = match outcome {
            Ok(outcome) => {
                for step in outcome.steps {
                    let event = match step {
                        OutcomeStep::Tool {
                            tool_name,
                            arguments,
                            result,
                            ..
                        } => NewEvent::new(&*d.session_id, d.turn_index, Author::Tool(tool_name.clone()), result.clone(), now)
                            .with_topic(d.topic.clone())
                            .with_tool_call(ToolCall {
                                tool_name,
                                arguments,
                                result_summary: tools::summarize(&result),
                            }),
                        OutcomeStep::Reply { agent, text } => {
                            NewEvent::new(&*d.session_id, d.turn_index, Author::Expert(agent), text, now)
                        }
                    };
                    let id = self.store.append(event)?;
                    appended.push(id);
                    turn_events.push(self.store.get(id).expect("just appended").clone());
                }
                turn_events
                    .last()
                    .map(|e| e.content.clone())
                    .unwrap_or_default()
            }
            Err(e) => {
                let text = format!("{} could not complete the request: {e}", d.expert);
                let id = self.store.append(NewEvent::new(
                    &*d.session_id,
                    d.turn_index,
                    Author::Expert(d.expert.clone()),
                    text.clone(),
                    now,
                ))?;
                appended.push(id);
                turn_events.push(self.store.get(id).expect("just appended").clone());
                text
            }
        };
        self.finish_turn(
            &d.session_id,
            d.turn_index,
            reply_text,
            Route::Expert(d.expert.clone()),
            appended,
            &turn_events,
        )
    }

    fn finish_turn(
        &mut self,
        session_id: &str,
        turn_index: u32,
        reply_text: String,
        route: Route,
        events_appended: Vec<EventId>,
        turn_events: &[EventRecord],
    ) -> Result<TurnResult, KernelError> {
        let metrics = telemetry::measure_turn(turn_events, route.clone(), &self.config.cost_model)?;
        self.simulated_ms += metrics.simulated_latency_ms;
        self.metrics.push(MetricsRow {
            session_id: session_id.into(),
            turn_index,
            metrics: metrics.clone(),
        });
        self.notify(NoticeKind::Turn {
            session_id: session_id.into(),
            turn_index,
            route: route.clone(),
            reply_text: reply_text.clone(),
            tokens_out: metrics.tokens_out,
            simulated_latency_ms: metrics.simulated_latency_ms,
        });
        Ok(TurnResult {
            session_id: session_id.into(),
            turn_index,
            reply_text,
            route,
            events_appended,
            metrics,
        })
    }

    /// One listener pass over everything appended since the last pass.
    /// On error the cursor stays put and the next pass rescans.
    pub fn run_listener(&mut self) -> Result<Vec<EvolutionAction>, KernelError> {
        let now = self.clock.tick();
        let before = self.manifest().rendered;
        let mut world = EvolutionWorld {
            store: &mut self.store,
            registry: &mut self.registry,
            cold: &self.cold,
            gaps: &mut self.gaps,
            now,
        };
        let (actions, next) = self.listener.process_batch(self.listener_cursor, &mut world)?;
        self.listener_cursor = next;
        for action in &actions {
            match &action.kind {
                ActionKind::Hydrated {
                    expert,
                    toolset,
                    score,
                    evicted,
                } => {
                    if let Some(name) = evicted {
                        self.notify(NoticeKind::Evicted { expert: name.clone() });
                    }
                    self.notify(NoticeKind::Hydrated {
                        expert: expert.clone(),
                        toolset: toolset.clone(),
                        score: *score,
                    });
                }
                ActionKind::Pruned {
                    session_id,
                    event_ids,
                } => self.notify(NoticeKind::Pruned {
                    session_id: session_id.clone(),
                    event_ids: event_ids.clone(),
                }),
                ActionKind::GapReported { line, .. } => {
                    self.notify(NoticeKind::GapReport { line: line.clone() })
                }
                ActionKind::None => {}
            }
        }
        let after = self.manifest().rendered;
        if after != before {
            self.notify(NoticeKind::ManifestUpdated { manifest: after });
        }
        Ok(actions)
    }

    /// Hydrates a toolset by name outside the listener, as an operator
    /// action.
    pub fn hydrate(&mut self, toolset: &str) -> Result<String, KernelError> {
        let record = self
            .cold
            .get(toolset)
            .cloned()
            .ok_or_else(|| RegistryError::Unknown(toolset.into()))?;
        let now = self.clock.tick();
        let h = self.registry.hydrate(&record, now)?;
        if let Some(name) = &h.evicted {
            self.notify(NoticeKind::Evicted { expert: name.clone() });
        }
        self.notify(NoticeKind::Hydrated {
            expert: h.expert.name.clone(),
            toolset: record.name.clone(),
            score: 1.0,
        });
        let manifest = self.manifest().rendered;
        self.notify(NoticeKind::ManifestUpdated { manifest });
        Ok(h.expert.name)
    }
}
