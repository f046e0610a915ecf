//! Logical time. Every timestamp in the kernel is a tick of this clock; the
//! wall clock is never consulted.

use core::fmt;

use serde::{Deserialize, Serialize};

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct LogicalTime(pub u64);

impl LogicalTime {
    pub const ZERO: LogicalTime = LogicalTime(0);

    pub fn next(self) -> LogicalTime {
        LogicalTime(self.0 + 1)
    }
}

impl fmt::Display for LogicalTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

/// Monotonic tick source owned by the kernel.
#[derive(Debug, Clone, Default)]
pub struct LogicalClock {
    now: LogicalTime,
}

impl LogicalClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn starting_at(now: LogicalTime) -> Self {
        Self { now }
    }

    pub fn now(&self) -> LogicalTime {
        self.now
    }

    /// Advances by one tick and returns the new time.
    pub fn tick(&mut self) -> LogicalTime {
        self.now = self.now.next();
        self.now
    }

    /// Moves the clock forward to `t` if it is ahead; never moves backwards.
    pub fn observe(&mut self, t: LogicalTime) {
        if t > self.now {
            self.now = t;
        }
    }
}
