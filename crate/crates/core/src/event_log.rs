//! Append-only conversation log with surgical deletion.
//!
//! Ids are issued from a counter that never rewinds; deleted ids go into a
//! tombstone set so a replayed journal can prove they were never reissued.
//! Readers never see deleted events or any placeholder for them.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::clock::LogicalTime;

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct EventId(pub u64);

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Who produced an event. Serialized as `user`, `concierge`, `system`,
/// `expert:<name>` or `tool:<name>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Author {
    User,
    Concierge,
    Expert(String),
    Tool(String),
    System,
}

impl Author {
    pub fn is_agent(&self) -> bool {
        matches!(self, Author::Concierge | Author::Expert(_))
    }
}

impl fmt::Display for Author {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Author::User => f.write_str("user"),
            Author::Concierge => f.write_str("concierge"),
            Author::System => f.write_str("system"),
            Author::Expert(name) => write!(f, "expert:{name}"),
            Author::Tool(name) => write!(f, "tool:{name}"),
        }
    }
}

impl FromStr for Author {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "user" => Ok(Author::User),
            "concierge" => Ok(Author::Concierge),
            "system" => Ok(Author::System),
            _ => match s.split_once(':') {
                Some(("expert", name)) if !name.is_empty() => Ok(Author::Expert(name.into())),
                Some(("tool", name)) if !name.is_empty() => Ok(Author::Tool(name.into())),
                _ => Err(alloc::format!("unknown author `{s}`")),
            },
        }
    }
}

impl Serialize for Author {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Author {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// What the user wanted, as classified by the provider.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentDescriptor {
    pub action: String,
    pub topic: String,
    pub raw_text: String,
}

impl IntentDescriptor {
    pub fn new(action: impl Into<String>, topic: impl Into<String>, raw: impl Into<String>) -> Self {
        Self {
            action: action.into(),
            topic: topic.into(),
            raw_text: raw.into(),
        }
    }

    /// Text used for cold-storage matching: action, topic and utterance.
    pub fn match_text(&self) -> String {
        alloc::format!("{} {} {}", self.action, self.topic, self.raw_text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub tool_name: String,
    pub arguments: serde_json::Value,
    pub result_summary: String,
}

/// Marker carried by a concierge event that refused a request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefusalMarker {
    pub canonical_phrase: String,
    pub intent: IntentDescriptor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub id: EventId,
    pub session_id: String,
    pub turn_index: u32,
    pub author: Author,
    pub content: String,
    pub tool_calls: Vec<ToolCall>,
    pub topic: Option<String>,
    pub refusal: Option<RefusalMarker>,
    pub logical_time: LogicalTime,
}

/// An event before the store assigns its id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewEvent {
    pub session_id: String,
    pub turn_index: u32,
    pub author: Author,
    pub content: String,
    pub tool_calls: Vec<ToolCall>,
    pub topic: Option<String>,
    pub refusal: Option<RefusalMarker>,
    pub logical_time: LogicalTime,
}

impl NewEvent {
    pub fn new(
        session_id: impl Into<String>,
        turn_index: u32,
        author: Author,
        content: impl Into<String>,
        logical_time: LogicalTime,
    ) -> Self {
        Self {
            session_id: session_id.into(),
            turn_index,
            author,
            content: content.into(),
            tool_calls: Vec::new(),
            topic: None,
            refusal: None,
            logical_time,
        }
    }

    pub fn with_topic(mut self, topic: impl Into<String>) -> Self {
        self.topic = Some(topic.into());
        self
    }

    pub fn with_tool_call(mut self, call: ToolCall) -> Self {
        self.tool_calls.push(call);
        self
    }

    pub fn with_refusal(mut self, refusal: RefusalMarker) -> Self {
        self.refusal = Some(refusal);
        self
    }

    fn into_record(self, id: EventId) -> EventRecord {
        EventRecord {
            id,
            session_id: self.session_id,
            turn_index: self.turn_index,
            author: self.author,
            content: self.content,
            tool_calls: self.tool_calls,
            topic: self.topic,
            refusal: self.refusal,
            logical_time: self.logical_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StoreError {
    #[error("session id must not be empty")]
    EmptySession,
    #[error("logical time regressed: {attempted} < {last}")]
    TimeRegression {
        attempted: LogicalTime,
        last: LogicalTime,
    },
    #[error("refusal marker on a non-concierge event (author {0})")]
    MisplacedRefusal(String),
    #[error("refusal intent has an empty action")]
    EmptyRefusalAction,
    #[error("journal replay out of order: id {0} after {1}")]
    ReplayOrder(u64, u64),
    #[error("journal failure: {0}")]
    Journal(String),
}

/// Durability hook. The in-memory store calls it after validating and before
/// publishing each mutation; an error aborts the mutation.
pub trait Journal: Send {
    fn appended(&mut self, event: &EventRecord) -> Result<(), String>;
    fn deleted(&mut self, id: EventId) -> Result<(), String>;
}

/// Journal that keeps nothing. Used in deterministic runs and tests.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullJournal;

impl Journal for NullJournal {
    fn appended(&mut self, _: &EventRecord) -> Result<(), String> {
        Ok(())
    }

    fn deleted(&mut self, _: EventId) -> Result<(), String> {
        Ok(())
    }
}

pub struct EventStore {
    live: BTreeMap<EventId, EventRecord>,
    by_session: BTreeMap<String, BTreeSet<EventId>>,
    tombstones: BTreeSet<EventId>,
    last_id: EventId,
    last_time: LogicalTime,
    journal: Box<dyn Journal>,
}

impl fmt::Debug for EventStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EventStore")
            .field("live", &self.live.len())
            .field("tombstones", &self.tombstones.len())
            .field("last_id", &self.last_id)
            .finish()
    }
}

impl Default for EventStore {
    fn default() -> Self {
        Self::new()
    }
}

impl EventStore {
    pub fn new() -> Self {
        Self::with_journal(Box::new(NullJournal))
    }

    pub fn with_journal(journal: Box<dyn Journal>) -> Self {
        Self {
            live: BTreeMap::new(),
            by_session: BTreeMap::new(),
            tombstones: BTreeSet::new(),
            last_id: EventId(0),
            last_time: LogicalTime::ZERO,
            journal,
        }
    }

    /// Rebuilds a store from journaled appends and deletions. Appends must be
    /// in strictly increasing id order. The journal is attached afterwards and
    /// receives only new mutations.
    pub fn restore(
        appends: impl IntoIterator<Item = EventRecord>,
        deletions: impl IntoIterator<Item = EventId>,
        journal: Box<dyn Journal>,
    ) -> Result<Self, StoreError> {
        let mut store = Self::new();
        for record in appends {
            if record.id <= store.last_id {
                return Err(StoreError::ReplayOrder(record.id.0, store.last_id.0));
            }
            store.last_id = record.id;
            store.last_time = store.last_time.max(record.logical_time);
            store
                .by_session
                .entry(record.session_id.clone())
                .or_default()
                .insert(record.id);
            store.live.insert(record.id, record);
        }
        for id in deletions {
            store.remove_live(id);
            // A deletion of an id beyond the last append still burns the id.
            if id > store.last_id {
                store.last_id = id;
            }
            store.tombstones.insert(id);
        }
        store.journal = journal;
        Ok(store)
    }

    pub fn append(&mut self, event: NewEvent) -> Result<EventId, StoreError> {
        if event.session_id.is_empty() {
            return Err(StoreError::EmptySession);
        }
        if event.logical_time < self.last_time {
            return Err(StoreError::TimeRegression {
                attempted: event.logical_time,
                last: self.last_time,
            });
        }
        if let Some(refusal) = &event.refusal {
            if event.author != Author::Concierge {
                return Err(StoreError::MisplacedRefusal(event.author.to_string()));
            }
            if refusal.intent.action.is_empty() {
                return Err(StoreError::EmptyRefusalAction);
            }
        }
        let id = EventId(self.last_id.0 + 1);
        let record = event.into_record(id);
        self.journal
            .appended(&record)
            .map_err(StoreError::Journal)?;
        self.last_id = id;
        self.last_time = record.logical_time;
        self.by_session
            .entry(record.session_id.clone())
            .or_default()
            .insert(id);
        self.live.insert(id, record);
        Ok(id)
    }

    /// Removes the event from every future read. Returns whether a live
    /// record was removed; unknown and already-deleted ids return false.
    pub fn delete(&mut self, id: EventId) -> Result<bool, StoreError> {
        if !self.live.contains_key(&id) {
            return Ok(false);
        }
        self.journal.deleted(id).map_err(StoreError::Journal)?;
        self.remove_live(id);
        self.tombstones.insert(id);
        Ok(true)
    }

    fn remove_live(&mut self, id: EventId) {
        if let Some(record) = self.live.remove(&id) {
            if let Some(ids) = self.by_session.get_mut(&record.session_id) {
                ids.remove(&id);
            }
        }
    }

    /// Live events of one session in id order.
    pub fn get_context(&self, session_id: &str) -> Vec<EventRecord> {
        self.by_session
            .get(session_id)
            .map(|ids| ids.iter().filter_map(|id| self.live.get(id).cloned()).collect())
            .unwrap_or_default()
    }

    /// Live events with id greater than `cursor`, across sessions, plus the
    /// largest id returned (or `cursor` when the batch is empty).
    pub fn scan_since(&self, cursor: EventId) -> (Vec<EventRecord>, EventId) {
        let batch: Vec<EventRecord> = self
            .live
            .range(EventId(cursor.0 + 1)..)
            .map(|(_, r)| r.clone())
            .collect();
        let next = batch.last().map(|r| r.id).unwrap_or(cursor);
        (batch, next)
    }

    pub fn get(&self, id: EventId) -> Option<&EventRecord> {
        self.live.get(&id)
    }

    pub fn is_tombstoned(&self, id: EventId) -> bool {
        self.tombstones.contains(&id)
    }

    pub fn tombstones(&self) -> impl Iterator<Item = EventId> + '_ {
        self.tombstones.iter().copied()
    }

    pub fn last_id(&self) -> EventId {
        self.last_id
    }

    pub fn last_time(&self) -> LogicalTime {
        self.last_time
    }

    pub fn len(&self) -> usize {
        self.live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.live.is_empty()
    }

    pub fn sessions(&self) -> impl Iterator<Item = &str> {
        self.by_session.keys().map(String::as_str)
    }

    /// Every live event in id order.
    pub fn iter(&self) -> impl Iterator<Item = &EventRecord> {
        self.live.values()
    }
}
