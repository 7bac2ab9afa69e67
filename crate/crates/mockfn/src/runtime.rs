//! Wall-clock runtime.

use std::sync::atomic::{AtomicU32, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use mockfn_core::memory::InvocationId;
use mockfn_core::runtime::{Runtime, Timestamp};

/// Ids laid out like database object ids: 4 bytes of seconds, 5 random
/// bytes fixed per runtime, 3 bytes of counter.
pub struct SystemRuntime {
    random: [u8; 5],
    counter: AtomicU32,
}

impl SystemRuntime {
    pub fn new() -> Self {
        let random: [u8; 5] = rand::random();
        Self {
            random,
            counter: AtomicU32::new(rand::random::<u32>() & 0x00ff_ffff),
        }
    }
}

impl Default for SystemRuntime {
    fn default() -> Self {
        Self::new()
    }
}

impl Runtime for SystemRuntime {
    fn now(&self) -> Timestamp {
        let ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        Timestamp(ms)
    }

    fn next_id(&self) -> InvocationId {
        let secs = (self.now().0 / 1000) as u32;
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let mut id = [0u8; 12];
        id[..4].copy_from_slice(&secs.to_be_bytes());
        id[4..9].copy_from_slice(&self.random);
        id[9..].copy_from_slice(&n.to_be_bytes()[1..]);
        InvocationId(id)
    }
}
