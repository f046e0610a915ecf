//! Registry model: capacity bound, brute-force LRU victim and manifest
//! rendering, checked after every operation.

use dmoe_core::expert_registry::{expert_name_for, ExpertRegistry, ExpertStatus, RegistryError};
use dmoe_core::{LogicalTime, ToolSchema, ToolsetRecord};
use proptest::prelude::*;

pub const BASE: &str = "You are the Concierge.";
pub const POOL: usize = 8;

pub fn record(i: usize) -> ToolsetRecord {
    ToolsetRecord {
        name: format!("Kit{i}_MCP"),
        description: format!("Toolkit number {i}"),
        capability_tags: vec![format!("Topic{i}"), format!("Act{}", i % 3)],
        tool_schemas: vec![ToolSchema {
            tool_name: format!("tool_{i}"),
            parameters: serde_json::json!({}),
            description: String::new(),
        }],
        prompt_template: "You are {name}.".into(),
        credentials_ref: String::new(),
    }
}

#[derive(Debug, Clone)]
pub enum Op {
    Hydrate(usize),
    Touch(usize),
    Busy(usize),
    Idle(usize),
    Evict,
    Remove(usize),
}

pub fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (0..POOL).prop_map(Op::Hydrate),
        3 => (0..POOL).prop_map(Op::Touch),
        1 => (0..POOL).prop_map(Op::Busy),
        2 => (0..POOL).prop_map(Op::Idle),
        1 => Just(Op::Evict),
        1 => (0..POOL).prop_map(Op::Remove),
    ]
}

#[derive(Debug, Clone)]
struct Slot {
    index: usize,
    name: String,
    last: u64,
    created: u64,
    busy: bool,
}

/// Brute-force LRU victim: idle slot with minimal (last, created, name).
fn oracle_victim(slots: &[Slot]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in slots.iter().enumerate() {
        if s.busy {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => {
                let o = &slots[b];
                s.last < o.last
                    || (s.last == o.last && s.created < o.created)
                    || (s.last == o.last && s.created == o.created && s.name < o.name)
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

fn oracle_manifest(slots: &[Slot]) -> String {
    let mut out = BASE.to_string();
    for s in slots {
        let r = record(s.index);
        out += &format!(
            "\n- {}: {} (handles: {})",
            s.name,
            r.description,
            r.capability_tags.join(", ")
        );
    }
    out
}

fn slot_of(slots: &[Slot], index: usize) -> Option<usize> {
    slots.iter().position(|s| s.index == index)
}

pub fn check_sequence(k: usize, ops: &[Op]) -> Result<(), TestCaseError> {
    let mut reg = ExpertRegistry::new(k).unwrap();
    let mut slots: Vec<Slot> = Vec::new();
    let mut now = 0u64;
    prop_assert_eq!(reg.render_manifest(BASE).rendered, BASE);

    for op in ops {
        now += 1;
        let t = LogicalTime(now);
        match *op {
            Op::Hydrate(i) => {
                let name = expert_name_for(&record(i).name);
                let got = reg.hydrate(&record(i), t);
                if slot_of(&slots, i).is_some() {
                    prop_assert_eq!(got, Err(RegistryError::Duplicate(name)));
                } else if slots.len() >= k {
                    match oracle_victim(&slots) {
                        None => prop_assert_eq!(got, Err(RegistryError::Deferred)),
                        Some(v) => {
                            let victim = slots.remove(v);
                            prop_assert!(!victim.busy);
                            let h = got.unwrap();
                            prop_assert_eq!(h.evicted, Some(victim.name));
                            slots.push(Slot { index: i, name, last: now, created: now, busy: false });
                        }
                    }
                } else {
                    let h = got.unwrap();
                    prop_assert_eq!(h.evicted, None);
                    slots.push(Slot { index: i, name, last: now, created: now, busy: false });
                }
            }
            Op::Touch(i) => {
                let name = expert_name_for(&record(i).name);
                let got = reg.touch(&name, t);
                match slot_of(&slots, i) {
                    Some(s) => {
                        prop_assert_eq!(got, Ok(t));
                        slots[s].last = now;
                    }
                    None => prop_assert_eq!(got, Err(RegistryError::Unknown(name))),
                }
            }
            Op::Busy(i) => {
                let name = expert_name_for(&record(i).name);
                let got = reg.mark_busy(&name);
                match slot_of(&slots, i) {
                    Some(s) if slots[s].busy => prop_assert_eq!(got, Err(RegistryError::Busy(name))),
                    Some(s) => {
                        prop_assert!(got.is_ok());
                        slots[s].busy = true;
                    }
                    None => prop_assert!(got.is_err()),
                }
            }
            Op::Idle(i) => {
                let name = expert_name_for(&record(i).name);
                let got = reg.mark_idle(&name);
                match slot_of(&slots, i) {
                    Some(s) => {
                        prop_assert!(got.is_ok());
                        slots[s].busy = false;
                    }
                    None => prop_assert!(got.is_err()),
                }
            }
            Op::Evict => {
                let got = reg.evict_lru(t);
                match oracle_victim(&slots) {
                    Some(v) => {
                        let victim = slots.remove(v);
                        prop_assert_eq!(got, Ok(victim.name));
                    }
                    None => prop_assert_eq!(got, Err(RegistryError::NoCandidate)),
                }
            }
            Op::Remove(i) => {
                let name = expert_name_for(&record(i).name);
                let got = reg.remove(&name);
                match slot_of(&slots, i) {
                    Some(s) if slots[s].busy => prop_assert_eq!(got, Err(RegistryError::Busy(name))),
                    Some(s) => {
                        prop_assert!(got.is_ok());
                        slots.remove(s);
                    }
                    None => prop_assert!(got.is_err()),
                }
            }
        }

        prop_assert!(reg.len() <= k, "|E| = {} > K = {}", reg.len(), k);
        let names: Vec<&str> = reg.experts().iter().map(|e| e.name.as_str()).collect();
        let want: Vec<&str> = slots.iter().map(|s| s.name.as_str()).collect();
        prop_assert_eq!(names, want);
        for (e, s) in reg.experts().iter().zip(&slots) {
            prop_assert_eq!(e.last_interaction, LogicalTime(s.last));
            prop_assert_eq!(e.status == ExpertStatus::Busy, s.busy);
        }
        prop_assert_eq!(reg.render_manifest(BASE).rendered, oracle_manifest(&slots));
    }
    Ok(())
}
