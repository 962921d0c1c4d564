//! Real-thread execution engine: one OS thread per worker, crossbeam-backed
//! deques, atomic single-slot mailboxes, and per-frame join locks on the
//! nontrivial-sync path. Time is wall-clock nanoseconds; the memory cost
//! model is not consulted in this mode.
//!
//! Event traces here are per-worker buffers merged after quiescence and
//! carry zero costs (they are event logs; the time figures come from the
//! per-worker accumulators).

use std::sync::atomic::{AtomicBool, AtomicU32, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dag::{Action, ComputationDag, FrameId, ParentEdge};
use crate::deque::{StealOutcome, ThreadDeque, ThreadStealer};
use crate::error::Result;
use crate::event::{Counters, EventKind, PushTrigger, TimeBreakdown, TimeCategory, TraceEvent};
use crate::mailbox::AtomicMailbox;
use crate::payload::DataArena;
use crate::policy::VictimTable;
use crate::sim::{SchedConfig, SchedulerKind};
use crate::topology::{Place, Topology};

const PLACE_ANY: u32 = u32::MAX;

fn encode_place(p: Place) -> u32 {
    match p {
        Place::Any => PLACE_ANY,
        Place::Socket(s) => s,
    }
}

struct Join {
    outstanding: u32,
    suspended: bool,
}

struct FrameTh {
    resume_at: AtomicUsize,
    place: AtomicU32,
    stolen: AtomicBool,
    full: AtomicBool,
    join: Mutex<Join>,
}

impl FrameTh {
    fn new() -> Self {
        FrameTh {
            resume_at: AtomicUsize::new(0),
            place: AtomicU32::new(PLACE_ANY),
            stolen: AtomicBool::new(false),
            full: AtomicBool::new(false),
            join: Mutex::new(Join {
                outstanding: 0,
                suspended: false,
            }),
        }
    }
}

struct Shared<'a> {
    dag: &'a ComputationDag,
    topo: &'a Topology,
    cfg: &'a SchedConfig,
    arena: Option<&'a DataArena>,
    frames: Vec<FrameTh>,
    stealers: Vec<ThreadStealer<u32>>,
    mailboxes: Vec<AtomicMailbox>,
    tables: Vec<VictimTable>,
    done: AtomicBool,
}

/// Per-run results from the thread engine; all times in nanoseconds.
#[derive(Debug, Clone)]
pub struct ThreadOutcome {
    pub makespan_ns: u64,
    pub breakdowns: Vec<TimeBreakdown>,
    pub counters: Counters,
    pub victim_attempts: Vec<Vec<u64>>,
    pub trace: Vec<TraceEvent>,
}

struct WorkerCtx<'a, 'b> {
    shared: &'b Shared<'a>,
    id: usize,
    socket: u32,
    deque: ThreadDeque<u32>,
    rng: ChaCha8Rng,
    breakdown: TimeBreakdown,
    counters: Counters,
    victim_attempts: Vec<u64>,
    trace: Vec<TraceEvent>,
    epoch: Instant,
    last: Instant,
}

enum NextAction {
    Steal,
    CheckParent(FrameId),
}

enum Mode {
    Executing(FrameId),
    Loop(NextAction),
}

enum FrameReturn {
    Done,
    Continue(FrameId),
    ToLoop(NextAction),
}

pub fn run_threads(
    dag: &ComputationDag,
    topo: &Topology,
    cfg: &SchedConfig,
    arena: Option<&DataArena>,
) -> Result<ThreadOutcome> {
    dag.validate()?;
    let workers = topo.workers;
    let mut deques = Vec::with_capacity(workers);
    let mut stealers = Vec::with_capacity(workers);
    for _ in 0..workers {
        let (d, s) = ThreadDeque::new();
        deques.push(d);
        stealers.push(s);
    }
    let tables: Vec<VictimTable> = (0..workers)
        .map(|w| match cfg.scheduler {
            SchedulerKind::Classic => VictimTable::uniform(w, topo),
            SchedulerKind::NumaWs => VictimTable::new(w, topo, cfg.policy.local_bias),
        })
        .collect();
    let shared = Shared {
        dag,
        topo,
        cfg,
        arena,
        frames: (0..dag.frames.len()).map(|_| FrameTh::new()).collect(),
        stealers,
        mailboxes: (0..workers).map(|_| AtomicMailbox::new()).collect(),
        tables,
        done: AtomicBool::new(false),
    };

    let start = Instant::now();
    let mut results: Vec<(usize, TimeBreakdown, Counters, Vec<u64>, Vec<TraceEvent>)> =
        Vec::with_capacity(workers);
    std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(workers);
        for (id, deque) in deques.into_iter().enumerate() {
            let shared = &shared;
            handles.push(scope.spawn(move || {
                let now = Instant::now();
                let mut ctx = WorkerCtx {
                    shared,
                    id,
                    socket: shared.topo.worker_socket(id),
                    deque,
                    rng: ChaCha8Rng::seed_from_u64(
                        shared
                            .cfg
                            .seed
                            .wrapping_mul(0x9e37_79b9)
                            .wrapping_add(id as u64),
                    ),
                    breakdown: TimeBreakdown::default(),
                    counters: Counters::default(),
                    victim_attempts: vec![0; shared.topo.workers],
                    trace: Vec::new(),
                    epoch: now,
                    last: now,
                };
                ctx.run(id == 0);
                (id, ctx.breakdown, ctx.counters, ctx.victim_attempts, ctx.trace)
            }));
        }
        for h in handles {
            results.push(h.join().expect("worker thread panicked"));
        }
    });
    let makespan_ns = start.elapsed().as_nanos() as u64;

    results.sort_by_key(|r| r.0);
    let mut counters = Counters::default();
    let mut breakdowns = Vec::with_capacity(workers);
    let mut victim_attempts = Vec::with_capacity(workers);
    let mut trace = Vec::new();
    for (_, b, c, v, t) in results {
        breakdowns.push(b);
        merge_counters(&mut counters, &c);
        victim_attempts.push(v);
        trace.extend(t);
    }
    trace.sort_by_key(|e| e.time);
    Ok(ThreadOutcome {
        makespan_ns,
        breakdowns,
        counters,
        victim_attempts,
        trace,
    })
}

fn merge_counters(into: &mut Counters, from: &Counters) {
    into.spawns += from.spawns;
    into.steal_attempts += from.steal_attempts;
    into.successful_steals += from.successful_steals;
    into.deque_steals += from.deque_steals;
    into.mailbox_steals += from.mailbox_steals;
    into.promotions += from.promotions;
    into.mailbox_first_attempts += from.mailbox_first_attempts;
    into.nontrivial_syncs += from.nontrivial_syncs;
    into.suspensions += from.suspensions;
    into.push_events += from.push_events;
    into.push_attempts += from.push_attempts;
    into.mailbox_deliveries += from.mailbox_deliveries;
    into.mailbox_pops += from.mailbox_pops;
    into.remote_accesses += from.remote_accesses;
    into.local_accesses += from.local_accesses;
}

impl<'a, 'b> WorkerCtx<'a, 'b> {
    fn charge(&mut self, cat: TimeCategory) {
        let now = Instant::now();
        self.breakdown
            .add(cat, now.duration_since(self.last).as_nanos() as u64);
        self.last = now;
    }

    fn emit(&mut self, kind: EventKind) {
        if self.shared.cfg.collect_trace {
            self.trace.push(TraceEvent {
                time: self.epoch.elapsed().as_nanos() as u64,
                worker: self.id as u32,
                kind,
            });
        }
    }

    fn frame(&self, f: FrameId) -> &FrameTh {
        &self.shared.frames[f.index()]
    }

    fn run(&mut self, leader: bool) {
        let mut mode = if leader {
            Mode::Executing(self.shared.dag.root())
        } else {
            Mode::Loop(NextAction::Steal)
        };
        loop {
            if self.shared.done.load(Ordering::Acquire) {
                return;
            }
            mode = match mode {
                Mode::Executing(f) => match self.execute(f) {
                    Some(m) => m,
                    None => return, // root retired
                },
                Mode::Loop(next) => self.scheduling_loop(next),
            };
        }
    }

    /// Run frame `f` from its continuation point until it hands back
    /// control: loop entry or computation end.
    fn execute(&mut self, f: FrameId) -> Option<Mode> {
        let mut cur = f;
        'frames: loop {
            let actions = &self.shared.dag.frame(cur).actions;
            loop {
                let pc = self.frame(cur).resume_at.load(Ordering::Relaxed);
                if pc >= actions.len() {
                    match self.frame_return(cur) {
                        FrameReturn::Done => return None,
                        FrameReturn::Continue(parent) => {
                            cur = parent;
                            continue 'frames;
                        }
                        FrameReturn::ToLoop(next) => return Some(Mode::Loop(next)),
                    }
                }
                self.frame(cur).resume_at.store(pc + 1, Ordering::Relaxed);
                match actions[pc].clone() {
                    Action::Work(s) => {
                        let strand = self.shared.dag.strand(s);
                        if let (Some(arena), Some(p)) = (self.shared.arena, &strand.payload) {
                            p.execute(arena);
                        } else {
                            for _ in 0..strand.duration {
                                std::hint::spin_loop();
                            }
                        }
                        self.emit(EventKind::Strand {
                            strand: s,
                            frame: cur,
                            cost: 0,
                        });
                        self.charge(TimeCategory::Work);
                    }
                    Action::SetLocality(p) => {
                        self.frame(cur).place.store(encode_place(p), Ordering::Relaxed);
                    }
                    Action::Spawn(child) => {
                        let hint = self.frame(cur).place.load(Ordering::Relaxed);
                        {
                            let mut j = self.frame(cur).join.lock().unwrap();
                            j.outstanding += 1;
                        }
                        self.counters.spawns += 1;
                        self.frame(child).place.store(hint, Ordering::Relaxed);
                        // The push publishes the continuation point and the
                        // writes above to thieves.
                        self.deque.push_bottom(cur.0);
                        self.emit(EventKind::SpawnPush { frame: cur, cost: 0 });
                        self.charge(TimeCategory::Work);
                        cur = child;
                        continue 'frames;
                    }
                    Action::Call(child) => {
                        let hint = self.frame(cur).place.load(Ordering::Relaxed);
                        self.frame(child).place.store(hint, Ordering::Relaxed);
                        cur = child;
                        continue 'frames;
                    }
                    Action::Sync => {
                        if let Some(next) = self.sync(cur) {
                            return Some(Mode::Loop(next));
                        }
                    }
                }
            }
        }
    }

    /// Returns `Some(next)` when the worker must fall back to the loop.
    fn sync(&mut self, f: FrameId) -> Option<NextAction> {
        if !self.frame(f).stolen.load(Ordering::Acquire) {
            // Trivial sync: the frame ran serially since its last sync.
            return None;
        }
        self.counters.nontrivial_syncs += 1;
        let success = {
            let mut j = self.frame(f).join.lock().unwrap();
            if j.outstanding == 0 {
                true
            } else {
                j.suspended = true;
                false
            }
        };
        self.emit(EventKind::NontrivialSync {
            frame: f,
            success,
            cost: 0,
        });
        if success {
            self.frame(f).stolen.store(false, Ordering::Release);
            if self.shared.cfg.scheduler == SchedulerKind::NumaWs {
                let place = self.frame(f).place.load(Ordering::Relaxed);
                if place != PLACE_ANY
                    && place != self.socket
                    && self.push_back(f, PushTrigger::Sync)
                {
                    self.charge(TimeCategory::Scheduling);
                    return Some(NextAction::Steal);
                }
            }
            self.charge(TimeCategory::Scheduling);
            None
        } else {
            self.counters.suspensions += 1;
            self.emit(EventKind::Suspend { frame: f });
            self.charge(TimeCategory::Scheduling);
            Some(NextAction::Steal)
        }
    }

    fn frame_return(&mut self, f: FrameId) -> FrameReturn {
        self.emit(EventKind::FrameReturn { frame: f });
        match self.shared.dag.frame(f).parent {
            None => {
                self.charge(TimeCategory::Work);
                self.shared.done.store(true, Ordering::Release);
                FrameReturn::Done
            }
            Some((parent, ParentEdge::Call)) => FrameReturn::Continue(parent),
            Some((parent, ParentEdge::Spawn)) => match self.deque.pop_bottom() {
                Some(popped) => {
                    // Work-first fast path: the parent was not stolen.
                    debug_assert_eq!(popped, parent.0);
                    let mut j = self.frame(parent).join.lock().unwrap();
                    j.outstanding -= 1;
                    drop(j);
                    FrameReturn::Continue(parent)
                }
                None => FrameReturn::ToLoop(NextAction::CheckParent(parent)),
            },
        }
    }

    fn scheduling_loop(&mut self, next: NextAction) -> Mode {
        let mut acquired: Option<FrameId> = None;

        if let NextAction::CheckParent(parent) = next {
            acquired = self.check_parent(parent);
        }

        if acquired.is_none() && self.shared.cfg.scheduler == SchedulerKind::NumaWs {
            if let Some(m) = self.shared.mailboxes[self.id].take() {
                let m = FrameId(m);
                self.counters.mailbox_pops += 1;
                self.emit(EventKind::MailboxPop { frame: m, cost: 0 });
                self.charge(TimeCategory::Scheduling);
                acquired = Some(m);
            }
        }

        if acquired.is_none() {
            acquired = self.steal();
        }

        match acquired {
            Some(f) => {
                self.emit(EventKind::Resume { frame: f });
                Mode::Executing(f)
            }
            None => Mode::Loop(NextAction::Steal),
        }
    }

    fn check_parent(&mut self, parent: FrameId) -> Option<FrameId> {
        debug_assert!(self.frame(parent).full.load(Ordering::Acquire));
        let resumed = {
            let mut j = self.frame(parent).join.lock().unwrap();
            j.outstanding -= 1;
            let r = j.outstanding == 0 && j.suspended;
            if r {
                j.suspended = false;
            }
            r
        };
        self.emit(EventKind::CheckParent {
            frame: parent,
            resumed,
            cost: 0,
        });
        if !resumed {
            self.charge(TimeCategory::Scheduling);
            return None;
        }
        self.frame(parent).stolen.store(false, Ordering::Release);
        if self.shared.cfg.scheduler == SchedulerKind::NumaWs {
            let place = self.frame(parent).place.load(Ordering::Relaxed);
            if place != PLACE_ANY
                && place != self.socket
                && self.push_back(parent, PushTrigger::ChildReturn)
            {
                self.charge(TimeCategory::Scheduling);
                return None;
            }
        }
        self.charge(TimeCategory::Scheduling);
        Some(parent)
    }

    fn steal(&mut self) -> Option<FrameId> {
        if self.shared.topo.workers < 2 {
            std::thread::yield_now();
            return None;
        }
        let numa = self.shared.cfg.scheduler == SchedulerKind::NumaWs;
        let victim = self.shared.tables[self.id].sample(&mut self.rng);
        let mailbox_first = numa && self.rng.gen::<bool>();
        self.counters.steal_attempts += 1;
        self.victim_attempts[victim] += 1;
        if mailbox_first {
            self.counters.mailbox_first_attempts += 1;
            if let Some(m) = self.shared.mailboxes[victim].take() {
                let m = FrameId(m);
                debug_assert!(self.frame(m).full.load(Ordering::Acquire));
                self.counters.successful_steals += 1;
                self.counters.mailbox_steals += 1;
                self.emit(EventKind::StealOk {
                    victim: victim as u32,
                    frame: m,
                    promoted: false,
                    via_mailbox: true,
                    mailbox_first,
                    cost: 0,
                });
                self.charge(TimeCategory::Scheduling);
                return Some(m);
            }
        }
        match self.shared.stealers[victim].steal_top() {
            StealOutcome::Taken(h) => {
                let h = FrameId(h);
                self.counters.successful_steals += 1;
                self.counters.deque_steals += 1;
                let promoted = self.promote(h);
                self.frame(h).stolen.store(true, Ordering::Release);
                self.emit(EventKind::StealOk {
                    victim: victim as u32,
                    frame: h,
                    promoted,
                    via_mailbox: false,
                    mailbox_first,
                    cost: 0,
                });
                if numa {
                    let place = self.frame(h).place.load(Ordering::Relaxed);
                    if place != PLACE_ANY
                        && place != self.socket
                        && self.push_back(h, PushTrigger::Steal)
                    {
                        self.charge(TimeCategory::Scheduling);
                        return None;
                    }
                }
                self.charge(TimeCategory::Scheduling);
                Some(h)
            }
            StealOutcome::Empty | StealOutcome::Abort => {
                self.emit(EventKind::StealFail {
                    victim: victim as u32,
                    mailbox_first,
                    cost: 0,
                });
                self.charge(TimeCategory::Idle);
                // Give real work a chance on oversubscribed hosts.
                std::thread::yield_now();
                None
            }
        }
    }

    fn promote(&mut self, f: FrameId) -> bool {
        if self.frame(f).full.swap(true, Ordering::AcqRel) {
            return false;
        }
        self.counters.promotions += 1;
        // Shadow call ancestors migrate with the stolen frame.
        let mut cur = f;
        while let Some((parent, edge)) = self.shared.dag.frame(cur).parent {
            if self.frame(parent).full.swap(true, Ordering::AcqRel) {
                break;
            }
            assert!(
                edge == ParentEdge::Call,
                "shadow spawn-ancestor above a stolen frame"
            );
            cur = parent;
        }
        true
    }

    fn push_back(&mut self, f: FrameId, trigger: PushTrigger) -> bool {
        let place = self.frame(f).place.load(Ordering::Relaxed);
        debug_assert!(place != PLACE_ANY && place != self.socket);
        self.counters.push_events += 1;
        let mut candidates = self.shared.topo.workers_on_socket(place);
        let k = self.shared.cfg.policy.push_threshold.min(candidates.len());
        for i in 0..k {
            let j = self.rng.gen_range(i..candidates.len());
            candidates.swap(i, j);
        }
        let mut attempts = 0u32;
        let mut delivered = None;
        for &target in candidates.iter().take(k) {
            attempts += 1;
            self.counters.push_attempts += 1;
            if self.shared.mailboxes[target].try_put(f.0) {
                self.counters.mailbox_deliveries += 1;
                delivered = Some(target as u32);
                break;
            }
        }
        self.emit(EventKind::Push {
            frame: f,
            trigger,
            attempts,
            target: delivered,
            cost: 0,
        });
        delivered.is_some()
    }
}
