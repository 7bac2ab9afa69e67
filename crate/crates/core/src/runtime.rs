//! Clock and id sources. The core never reads a wall clock or an entropy
//! source itself; hosts supply one of these.

use core::sync::atomic::{AtomicU64, Ordering};

use crate::memory::InvocationId;

/// Milliseconds since the Unix epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

pub trait Runtime: Send + Sync {
    fn now(&self) -> Timestamp;
    fn next_id(&self) -> InvocationId;
}

/// Deterministic runtime: a counter clock and counter-derived ids.
#[derive(Debug)]
pub struct LogicalRuntime {
    start: u64,
    tick: AtomicU64,
    ids: AtomicU64,
    prefix: u32,
}

impl LogicalRuntime {
    pub fn new(start: Timestamp, prefix: u32) -> Self {
        Self {
            start: start.0,
            tick: AtomicU64::new(0),
            ids: AtomicU64::new(0),
            prefix,
        }
    }
}

impl Default for LogicalRuntime {
    fn default() -> Self {
        Self::new(Timestamp(0), 0)
    }
}

impl Runtime for LogicalRuntime {
    fn now(&self) -> Timestamp {
        Timestamp(self.start + self.tick.fetch_add(1, Ordering::Relaxed))
    }

    fn next_id(&self) -> InvocationId {
        let n = self.ids.fetch_add(1, Ordering::Relaxed) + 1;
        let mut bytes = [0u8; 12];
        bytes[..4].copy_from_slice(&self.prefix.to_be_bytes());
        bytes[4..].copy_from_slice(&n.to_be_bytes());
        InvocationId(bytes)
    }
}
