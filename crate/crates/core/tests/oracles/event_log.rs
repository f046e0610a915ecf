//! Event-store model: rows with a deleted flag; every read is a filter.

use std::collections::BTreeSet;

use dmoe_core::event_log::{Author, EventId, EventStore, NewEvent};
use dmoe_core::LogicalTime;
use proptest::prelude::*;

pub const SESSIONS: [&str; 3] = ["UserID_001", "UserID_002", "UserID_003"];

#[derive(Debug, Clone)]
pub enum Op {
    Append { session: usize, advance: u64 },
    Delete(u64),
    Scan(u64),
    Context(usize),
}

pub fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (0..SESSIONS.len(), 0u64..3).prop_map(|(session, advance)| Op::Append { session, advance }),
        2 => (0u64..40).prop_map(Op::Delete),
        1 => (0u64..40).prop_map(Op::Scan),
        1 => (0..SESSIONS.len()).prop_map(Op::Context),
    ]
}

#[derive(Debug, Clone)]
struct Row {
    id: u64,
    session: usize,
    deleted: bool,
}

struct Oracle {
    rows: Vec<Row>,
}

impl Oracle {
    fn live(&self) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(|r| !r.deleted)
    }

    fn next_id(&self) -> u64 {
        self.rows.last().map_or(1, |r| r.id + 1)
    }
}

pub fn ids(events: &[dmoe_core::EventRecord]) -> Vec<u64> {
    events.iter().map(|e| e.id.0).collect()
}

/// Runs `ops` against the store and a filter-over-rows model.
pub fn check(ops: &[Op]) -> Result<(), TestCaseError> {
    let mut store = EventStore::new();
    let mut oracle = Oracle { rows: Vec::new() };
    let mut now = 0;
    let mut issued = BTreeSet::new();

    for op in ops.iter().cloned() {
        match op {
            Op::Append { session, advance } => {
                now += advance;
                let id = store
                    .append(NewEvent::new(SESSIONS[session], 0, Author::User, "hi", LogicalTime(now)))
                    .unwrap();
                prop_assert_eq!(id.0, oracle.next_id());
                prop_assert!(issued.insert(id.0), "id {} reused", id.0);
                oracle.rows.push(Row { id: id.0, session, deleted: false });
            }
            Op::Delete(id) => {
                let was_live = oracle.live().any(|r| r.id == id);
                prop_assert_eq!(store.delete(EventId(id)).unwrap(), was_live);
                // A second delete of the same id is a no-op.
                prop_assert!(!store.delete(EventId(id)).unwrap());
                if let Some(r) = oracle.rows.iter_mut().find(|r| r.id == id) {
                    r.deleted = true;
                }
            }
            Op::Scan(cursor) => {
                let (batch, next) = store.scan_since(EventId(cursor));
                let want: Vec<u64> = oracle.live().filter(|r| r.id > cursor).map(|r| r.id).collect();
                prop_assert_eq!(ids(&batch), want.clone());
                prop_assert_eq!(next.0, want.last().copied().unwrap_or(cursor));
            }
            Op::Context(session) => {
                let got = store.get_context(SESSIONS[session]);
                let want: Vec<u64> = oracle.live().filter(|r| r.session == session).map(|r| r.id).collect();
                prop_assert_eq!(ids(&got), want);
                prop_assert!(got.iter().all(|e| e.session_id == SESSIONS[session]));
            }
        }
        let tombstones: Vec<u64> = store.tombstones().map(|id| id.0).collect();
        let want: Vec<u64> = oracle.rows.iter().filter(|r| r.deleted).map(|r| r.id).collect();
        prop_assert_eq!(tombstones, want);
        prop_assert_eq!(store.len(), oracle.live().count());
    }
    Ok(())
}
