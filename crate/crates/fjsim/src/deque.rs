//! Per-worker work deque with the owner-bottom / thief-top discipline.
//!
//! The contract: only the owner pushes and pops at the bottom, thieves take
//! the oldest item from the top, concurrent pop/steal on the last item hand
//! it to exactly one party, and nothing is ever duplicated or lost.
//!
//! Two implementations share the contract: `SimDeque` is a plain sequential
//! structure stepped atomically by the simulator's event loop, and
//! `ThreadDeque` wraps a lock-free production deque for real-thread mode.

use crossbeam_deque as cb;

/// Thief-side outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StealOutcome<T> {
    Taken(T),
    Empty,
    /// Lost a race with the owner or another thief; retry counts as a failed
    /// attempt.
    Abort,
}

/// Sequential deque for simulator mode. Operations are atomic simulator
/// steps, so races reduce to event ordering.
#[derive(Debug, Clone, Default)]
pub struct SimDeque<T> {
    items: std::collections::VecDeque<T>,
}

impl<T> SimDeque<T> {
    pub fn new() -> Self {
        SimDeque {
            items: std::collections::VecDeque::new(),
        }
    }

    pub fn push_bottom(&mut self, item: T) {
        self.items.push_back(item);
    }

    pub fn pop_bottom(&mut self) -> Option<T> {
        self.items.pop_back()
    }

    pub fn steal_top(&mut self) -> StealOutcome<T> {
        match self.items.pop_front() {
            Some(t) => StealOutcome::Taken(t),
            None => StealOutcome::Empty,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }
}

/// Owner handle for the concurrent deque (thread mode).
pub struct ThreadDeque<T> {
    worker: cb::Worker<T>,
}

/// Thief handle; cloneable and shareable across workers.
pub struct ThreadStealer<T> {
    stealer: cb::Stealer<T>,
}

impl<T> Clone for ThreadStealer<T> {
    fn clone(&self) -> Self {
        ThreadStealer {
            stealer: self.stealer.clone(),
        }
    }
}

impl<T> ThreadDeque<T> {
    pub fn new() -> (Self, ThreadStealer<T>) {
        let worker = cb::Worker::new_lifo();
        let stealer = worker.stealer();
        (ThreadDeque { worker }, ThreadStealer { stealer })
    }

    pub fn push_bottom(&self, item: T) {
        self.worker.push(item);
    }

    pub fn pop_bottom(&self) -> Option<T> {
        self.worker.pop()
    }

    pub fn is_empty(&self) -> bool {
        self.worker.is_empty()
    }
}

impl<T> ThreadStealer<T> {
    pub fn steal_top(&self) -> StealOutcome<T> {
        match self.stealer.steal() {
            cb::Steal::Success(t) => StealOutcome::Taken(t),
            cb::Steal::Empty => StealOutcome::Empty,
            cb::Steal::Retry => StealOutcome::Abort,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn owner_sees_lifo_thieves_see_fifo() {
        let mut d = SimDeque::new();
        d.push_bottom('a');
        d.push_bottom('b');
        assert_eq!(d.pop_bottom(), Some('b'));
        d.push_bottom('b');
        assert_eq!(d.steal_top(), StealOutcome::Taken('a'));
    }

    #[test]
    fn empty_cases() {
        let mut d: SimDeque<u32> = SimDeque::new();
        assert_eq!(d.pop_bottom(), None);
        assert_eq!(d.steal_top(), StealOutcome::Empty);
    }

    #[test]
    fn thread_deque_same_discipline() {
        let (d, s) = ThreadDeque::new();
        d.push_bottom(1);
        d.push_bottom(2);
        assert_eq!(s.steal_top(), StealOutcome::Taken(1));
        assert_eq!(d.pop_bottom(), Some(2));
        assert_eq!(d.pop_bottom(), None);
    }

    /// Exhaustive two-participant race on a size-1 deque: whichever order the
    /// two atomic steps interleave, exactly one party gets the item.
    #[test]
    fn size_one_race_interleavings() {
        for owner_first in [true, false] {
            let mut d = SimDeque::new();
            d.push_bottom(42);
            let (owner_got, thief_got) = if owner_first {
                let o = d.pop_bottom();
                let t = d.steal_top();
                (o, t)
            } else {
                let t = d.steal_top();
                let o = d.pop_bottom();
                (o, t)
            };
            let owner_n = owner_got.is_some() as u32;
            let thief_n = matches!(thief_got, StealOutcome::Taken(_)) as u32;
            assert_eq!(owner_n + thief_n, 1, "exactly one winner");
        }
    }

    /// All 3! interleavings of one owner pop and two thief steals over deques
    /// of size 1..=3: conservation and no duplication.
    #[test]
    fn three_participant_interleavings_conserve_items() {
        // Participants: 0 = owner pop, 1 = thief A, 2 = thief B.
        let orders: Vec<Vec<usize>> = permutations(&[0, 1, 2]);
        for size in 1..=3usize {
            for order in &orders {
                let mut d = SimDeque::new();
                for i in 0..size {
                    d.push_bottom(i);
                }
                let mut taken: Vec<usize> = Vec::new();
                for &p in order {
                    match p {
                        0 => {
                            if let Some(v) = d.pop_bottom() {
                                taken.push(v);
                            }
                        }
                        _ => {
                            if let StealOutcome::Taken(v) = d.steal_top() {
                                taken.push(v);
                            }
                        }
                    }
                }
                let mut remaining: Vec<usize> = Vec::new();
                while let Some(v) = d.pop_bottom() {
                    remaining.push(v);
                }
                taken.extend(remaining);
                taken.sort_unstable();
                assert_eq!(taken, (0..size).collect::<Vec<_>>());
            }
        }
    }

    fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
        if items.len() <= 1 {
            return vec![items.to_vec()];
        }
        let mut out = Vec::new();
        for (i, &x) in items.iter().enumerate() {
            let mut rest = items.to_vec();
            rest.remove(i);
            for mut p in permutations(&rest) {
                p.insert(0, x);
                out.push(p);
            }
        }
        out
    }
}
