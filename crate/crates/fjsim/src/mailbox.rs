//! Single-entry per-worker mailbox: multi-producer compare-and-claim deposit,
//! single-consumer swap-out pop, exactly-once delivery.

use std::sync::atomic::{AtomicU64, Ordering};

const EMPTY: u64 = u64::MAX;

/// Lock-free single-slot mailbox holding a frame index (thread mode).
pub struct AtomicMailbox {
    slot: AtomicU64,
}

impl AtomicMailbox {
    pub fn new() -> Self {
        AtomicMailbox {
            slot: AtomicU64::new(EMPTY),
        }
    }

    /// Deposit if empty. Any worker may call this.
    pub fn try_put(&self, frame: u32) -> bool {
        self.slot
            .compare_exchange(EMPTY, frame as u64, Ordering::AcqRel, Ordering::Relaxed)
            .is_ok()
    }

    /// Atomically empty the slot. Only the owning worker calls this.
    pub fn take(&self) -> Option<u32> {
        let v = self.slot.swap(EMPTY, Ordering::AcqRel);
        if v == EMPTY {
            None
        } else {
            Some(v as u32)
        }
    }

    pub fn is_empty(&self) -> bool {
        self.slot.load(Ordering::Acquire) == EMPTY
    }
}

impl Default for AtomicMailbox {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn put_take_cycle() {
        let m = AtomicMailbox::new();
        assert!(m.is_empty());
        assert_eq!(m.take(), None);
        assert!(m.try_put(7));
        assert!(!m.is_empty());
        assert!(!m.try_put(8), "second deposit must fail on a full slot");
        assert_eq!(m.take(), Some(7));
        assert_eq!(m.take(), None);
    }

    /// Both orders of a concurrent { deposit, pop } pair deliver the frame
    /// exactly once overall.
    #[test]
    fn deposit_pop_interleavings_deliver_exactly_once() {
        // Order 1: deposit then pop -> pop gets it.
        let m = AtomicMailbox::new();
        assert!(m.try_put(3));
        assert_eq!(m.take(), Some(3));
        // Order 2: pop then deposit -> frame stays for the next pop.
        let m = AtomicMailbox::new();
        assert_eq!(m.take(), None);
        assert!(m.try_put(3));
        assert_eq!(m.take(), Some(3));
    }

    #[test]
    fn racing_producers_deliver_exactly_once() {
        use std::sync::atomic::{AtomicU32, Ordering};
        use std::sync::Arc;
        let m = Arc::new(AtomicMailbox::new());
        let delivered = Arc::new(AtomicU32::new(0));
        let mut handles = Vec::new();
        for i in 0..4u32 {
            let m = Arc::clone(&m);
            let delivered = Arc::clone(&delivered);
            handles.push(std::thread::spawn(move || {
                if m.try_put(i) {
                    delivered.fetch_add(1, Ordering::SeqCst);
                }
            }));
        }
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(delivered.load(Ordering::SeqCst), 1);
        assert!(m.take().is_some());
        assert!(m.take().is_none());
    }
}
