//! Structured event trace emitted by the execution engines, plus the counter
//! block aggregated into run reports.

use serde::{Deserialize, Serialize};

use crate::dag::{FrameId, StrandId};

/// Where a unit of time is charged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeCategory {
    Work,
    Scheduling,
    Idle,
}

/// Which full-frame event triggered a push attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PushTrigger {
    /// A thief stole a frame earmarked for another socket.
    Steal,
    /// A successful nontrivial sync on a mismatched frame.
    Sync,
    /// The last spawned child returned to a suspended mismatched parent.
    ChildReturn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EventKind {
    /// A work strand ran; cost includes memory access charges.
    Strand {
        strand: StrandId,
        frame: FrameId,
        cost: u64,
    },
    /// A continuation was pushed at a spawn; spawn overhead rides the work
    /// path.
    SpawnPush { frame: FrameId, cost: u64 },
    StealOk {
        victim: u32,
        frame: FrameId,
        promoted: bool,
        via_mailbox: bool,
        mailbox_first: bool,
        cost: u64,
    },
    StealFail {
        victim: u32,
        mailbox_first: bool,
        cost: u64,
    },
    NontrivialSync {
        frame: FrameId,
        success: bool,
        cost: u64,
    },
    Suspend { frame: FrameId },
    /// A returning child checked its stolen parent; `resumed` means the
    /// parent's join count hit zero and the parent was handed back.
    CheckParent {
        frame: FrameId,
        resumed: bool,
        cost: u64,
    },
    Push {
        frame: FrameId,
        trigger: PushTrigger,
        attempts: u32,
        /// Receiving worker on success.
        target: Option<u32>,
        cost: u64,
    },
    /// The worker emptied its own mailbox.
    MailboxPop { frame: FrameId, cost: u64 },
    Resume { frame: FrameId },
    FrameReturn { frame: FrameId },
}

impl EventKind {
    pub fn category(&self) -> TimeCategory {
        match self {
            EventKind::Strand { .. } | EventKind::SpawnPush { .. } => TimeCategory::Work,
            EventKind::StealFail { .. } => TimeCategory::Idle,
            _ => TimeCategory::Scheduling,
        }
    }

    pub fn cost(&self) -> u64 {
        match self {
            EventKind::Strand { cost, .. }
            | EventKind::SpawnPush { cost, .. }
            | EventKind::StealOk { cost, .. }
            | EventKind::StealFail { cost, .. }
            | EventKind::NontrivialSync { cost, .. }
            | EventKind::CheckParent { cost, .. }
            | EventKind::Push { cost, .. }
            | EventKind::MailboxPop { cost, .. } => *cost,
            EventKind::Suspend { .. }
            | EventKind::Resume { .. }
            | EventKind::FrameReturn { .. } => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    /// Worker-local clock at which the event started.
    pub time: u64,
    pub worker: u32,
    pub kind: EventKind,
}

/// Scheduler activity counters for one run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub spawns: u64,
    pub steal_attempts: u64,
    pub successful_steals: u64,
    pub deque_steals: u64,
    pub mailbox_steals: u64,
    pub promotions: u64,
    pub mailbox_first_attempts: u64,
    pub nontrivial_syncs: u64,
    pub suspensions: u64,
    pub push_events: u64,
    pub push_attempts: u64,
    pub mailbox_deliveries: u64,
    pub mailbox_pops: u64,
    pub remote_accesses: u64,
    pub local_accesses: u64,
}

/// Per-worker time breakdown, in simulator work units or nanoseconds
/// depending on the execution mode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeBreakdown {
    pub work: u64,
    pub scheduling: u64,
    pub idle: u64,
}

impl TimeBreakdown {
    pub fn total(&self) -> u64 {
        self.work + self.scheduling + self.idle
    }

    pub fn add(&mut self, cat: TimeCategory, amount: u64) {
        match cat {
            TimeCategory::Work => self.work += amount,
            TimeCategory::Scheduling => self.scheduling += amount,
            TimeCategory::Idle => self.idle += amount,
        }
    }
}
