//! Reference models shared by the property suites and the acceptance run.

#![allow(dead_code)]

pub mod event_log;
pub mod fixtures;
pub mod hollow;
pub mod lru;
pub mod similarity;
