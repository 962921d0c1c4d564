//! Deterministic execution engine: a single-threaded event loop interleaving
//! per-worker steps by worker-local clocks, running either the classic
//! work-stealing protocol or the NUMA-aware variant (locality-biased steals,
//! fair-coin mailbox checks, lazy work pushing at the three full-frame
//! events).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dag::{Action, ComputationDag, FrameId, ParentEdge, StrandId};
use crate::deque::{SimDeque, StealOutcome};
use crate::error::{Error, Result};
use crate::event::{Counters, EventKind, PushTrigger, TimeBreakdown, TimeCategory, TraceEvent};
use crate::payload::DataArena;
use crate::policy::{min_probability_constant, StealPolicy, VictimTable};
use crate::topology::{CostModel, MemoryState, Place, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchedulerKind {
    Classic,
    NumaWs,
}

impl std::str::FromStr for SchedulerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classic" => Ok(SchedulerKind::Classic),
            "numaws" => Ok(SchedulerKind::NumaWs),
            other => Err(Error::Config(format!("unknown scheduler '{other}'"))),
        }
    }
}

/// Scheduler and cost knobs for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedConfig {
    pub scheduler: SchedulerKind,
    pub policy: StealPolicy,
    /// Charge per steal attempt, failed (idle) or successful (scheduling).
    pub steal_cost: u64,
    /// Charge for promoting a shadow frame to a full frame.
    pub promote_cost: u64,
    pub nontrivial_sync_cost: u64,
    pub check_parent_cost: u64,
    pub mailbox_pop_cost: u64,
    pub push_attempt_cost: u64,
    /// Spawn overhead, charged to the work path.
    pub spawn_cost: u64,
    pub seed: u64,
    /// Memory cost model; `None` runs on pure strand durations.
    pub cost_model: Option<CostModel>,
    pub llc_capacity: usize,
    pub collect_trace: bool,
    /// Walk the whole frame tree after every step asserting full-frame
    /// ancestry (expensive; promotions are always checked).
    pub validate_ancestry: bool,
}

impl Default for SchedConfig {
    fn default() -> Self {
        SchedConfig {
            scheduler: SchedulerKind::Classic,
            policy: StealPolicy::default(),
            steal_cost: 1,
            promote_cost: 10,
            nontrivial_sync_cost: 5,
            check_parent_cost: 1,
            mailbox_pop_cost: 1,
            push_attempt_cost: 1,
            spawn_cost: 0,
            seed: 0,
            cost_model: None,
            llc_capacity: 256,
            collect_trace: false,
            validate_ancestry: false,
        }
    }
}

/// Everything measured in one simulated run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimOutcome {
    /// Completion time in work units (the clock of the worker that retired
    /// the root frame).
    pub makespan: u64,
    pub breakdowns: Vec<TimeBreakdown>,
    pub counters: Counters,
    /// Present only when trace collection was enabled.
    pub trace: Vec<TraceEvent>,
    /// Strand execution order (trace collection only).
    pub strand_order: Vec<StrandId>,
    /// Steal attempts per (thief, victim) pair.
    pub victim_attempts: Vec<Vec<u64>>,
    /// The c with per-victim steal probability >= 1/(cP); infinite when some
    /// victim is unreachable (local_bias = 1). `None` for classic runs.
    pub min_prob_constant: Option<f64>,
}

impl SimOutcome {
    pub fn total_work(&self) -> u64 {
        self.breakdowns.iter().map(|b| b.work).sum()
    }

    pub fn total_scheduling(&self) -> u64 {
        self.breakdowns.iter().map(|b| b.scheduling).sum()
    }

    pub fn total_idle(&self) -> u64 {
        self.breakdowns.iter().map(|b| b.idle).sum()
    }
}

/// Where a frame currently lives; used to enforce single ownership.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Location {
    /// Not yet spawned or called.
    Fresh,
    Executing(u32),
    InDeque(u32),
    InMailbox(u32),
    Suspended,
    Returned,
}

#[derive(Debug, Clone)]
struct FrameRt {
    resume_at: usize,
    place: Place,
    stolen: bool,
    full: bool,
    suspended: bool,
    outstanding: u32,
    location: Location,
}

impl FrameRt {
    fn fresh() -> Self {
        FrameRt {
            resume_at: 0,
            place: Place::Any,
            stolen: false,
            full: false,
            suspended: false,
            outstanding: 0,
            location: Location::Fresh,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NextAction {
    Steal,
    CheckParent(FrameId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Executing(FrameId),
    Loop(NextAction),
    Finished,
}

struct WorkerSim {
    socket: u32,
    clock: u64,
    mode: Mode,
    deque: SimDeque<FrameId>,
    mailbox: Option<FrameId>,
    rng: ChaCha8Rng,
    breakdown: TimeBreakdown,
}

pub struct Simulator<'a> {
    dag: &'a ComputationDag,
    topo: &'a Topology,
    cfg: SchedConfig,
    arena: Option<&'a DataArena>,
    mem: Option<MemoryState>,
    frames: Vec<FrameRt>,
    workers: Vec<WorkerSim>,
    tables: Vec<VictimTable>,
    counters: Counters,
    trace: Vec<TraceEvent>,
    strand_order: Vec<StrandId>,
    victim_attempts: Vec<Vec<u64>>,
    done: bool,
    makespan: u64,
}

/// Run `dag` on `topo` under `cfg`. `owners` preassigns data blocks to
/// socket DRAMs (`None` entries first-touch); `arena` supplies real payload
/// data when the computation carries any.
pub fn simulate(
    dag: &ComputationDag,
    topo: &Topology,
    cfg: &SchedConfig,
    owners: Option<Vec<Option<u32>>>,
    arena: Option<&DataArena>,
) -> Result<SimOutcome> {
    dag.validate()?;
    let mut sim = Simulator::new(dag, topo, cfg.clone(), owners, arena)?;
    sim.run()?;
    Ok(sim.into_outcome())
}

impl<'a> Simulator<'a> {
    fn new(
        dag: &'a ComputationDag,
        topo: &'a Topology,
        cfg: SchedConfig,
        owners: Option<Vec<Option<u32>>>,
        arena: Option<&'a DataArena>,
    ) -> Result<Self> {
        if let Some(cm) = &cfg.cost_model {
            cm.validate()?;
        }
        let mem = cfg.cost_model.map(|cm| {
            let owners = owners.unwrap_or_else(|| vec![None; dag.block_count as usize]);
            MemoryState::new(cm, topo.socket_count, owners, cfg.llc_capacity)
        });
        let tables: Vec<VictimTable> = (0..topo.workers)
            .map(|w| match cfg.scheduler {
                SchedulerKind::Classic => VictimTable::uniform(w, topo),
                SchedulerKind::NumaWs => VictimTable::new(w, topo, cfg.policy.local_bias),
            })
            .collect();
        let workers = (0..topo.workers)
            .map(|w| WorkerSim {
                socket: topo.worker_socket(w),
                clock: 0,
                mode: if w == 0 {
                    Mode::Executing(dag.root())
                } else {
                    Mode::Loop(NextAction::Steal)
                },
                deque: SimDeque::new(),
                mailbox: None,
                rng: ChaCha8Rng::seed_from_u64(splitmix(cfg.seed, w as u64)),
                breakdown: TimeBreakdown::default(),
            })
            .collect();
        let mut frames = vec![FrameRt::fresh(); dag.frames.len()];
        frames[dag.root().index()].location = Location::Executing(0);
        let victim_attempts = vec![vec![0u64; topo.workers]; topo.workers];
        Ok(Simulator {
            dag,
            topo,
            cfg,
            arena,
            mem,
            frames,
            workers,
            tables,
            counters: Counters::default(),
            trace: Vec::new(),
            strand_order: Vec::new(),
            victim_attempts,
            done: false,
            makespan: 0,
        })
    }

    fn run(&mut self) -> Result<()> {
        while !self.done {
            let w = self.next_worker();
            self.step(w)?;
            if self.cfg.validate_ancestry {
                self.assert_full_frame_ancestry();
            }
        }
        Ok(())
    }

    fn next_worker(&self) -> usize {
        let mut best = usize::MAX;
        let mut best_clock = u64::MAX;
        for (i, w) in self.workers.iter().enumerate() {
            if matches!(w.mode, Mode::Finished) {
                continue;
            }
            if w.clock < best_clock {
                best_clock = w.clock;
                best = i;
            }
        }
        debug_assert!(best != usize::MAX, "no runnable worker but not done");
        best
    }

    fn emit(&mut self, w: usize, kind: EventKind) {
        let cat = kind.category();
        let cost = kind.cost();
        self.workers[w].breakdown.add(cat, cost);
        self.workers[w].clock += cost;
        if self.cfg.collect_trace {
            self.trace.push(TraceEvent {
                time: self.workers[w].clock - cost,
                worker: w as u32,
                kind,
            });
        }
    }

    fn charge(&mut self, w: usize, cat: TimeCategory, cost: u64) {
        self.workers[w].breakdown.add(cat, cost);
        self.workers[w].clock += cost;
    }

    fn step(&mut self, w: usize) -> Result<()> {
        match self.workers[w].mode {
            Mode::Executing(f) => self.step_execute(w, f),
            Mode::Loop(next) => {
                self.step_loop(w, next);
                Ok(())
            }
            Mode::Finished => Ok(()),
        }
    }

    // ----- executing a frame -----

    fn step_execute(&mut self, w: usize, f: FrameId) -> Result<()> {
        debug_assert_eq!(self.frames[f.index()].location, Location::Executing(w as u32));
        let pc = self.frames[f.index()].resume_at;
        let actions = &self.dag.frame(f).actions;
        if pc >= actions.len() {
            self.frame_return(w, f);
            return Ok(());
        }
        let action = actions[pc].clone();
        self.frames[f.index()].resume_at = pc + 1;
        match action {
            Action::Work(s) => self.exec_strand(w, f, s)?,
            Action::SetLocality(place) => {
                self.topo.validate_place(place)?;
                self.frames[f.index()].place = place;
            }
            Action::Spawn(child) => {
                // Push the parent's continuation; run the child. The child
                // inherits the parent's current locality hint.
                let hint = self.frames[f.index()].place;
                self.frames[f.index()].outstanding += 1;
                self.frames[f.index()].location = Location::InDeque(w as u32);
                self.workers[w].deque.push_bottom(f);
                self.counters.spawns += 1;
                let cost = self.cfg.spawn_cost;
                self.emit(w, EventKind::SpawnPush { frame: f, cost });
                let c = &mut self.frames[child.index()];
                debug_assert_eq!(c.location, Location::Fresh);
                c.place = hint;
                c.location = Location::Executing(w as u32);
                self.workers[w].mode = Mode::Executing(child);
            }
            Action::Call(child) => {
                let hint = self.frames[f.index()].place;
                self.frames[f.index()].location = Location::Suspended;
                let c = &mut self.frames[child.index()];
                debug_assert_eq!(c.location, Location::Fresh);
                c.place = hint;
                c.location = Location::Executing(w as u32);
                self.workers[w].mode = Mode::Executing(child);
            }
            Action::Sync => self.exec_sync(w, f),
        }
        Ok(())
    }

    fn exec_strand(&mut self, w: usize, f: FrameId, s: StrandId) -> Result<()> {
        let strand = self.dag.strand(s);
        let mut cost = strand.duration;
        if let Some(mem) = &mut self.mem {
            let socket = self.workers[w].socket;
            for &b in &strand.blocks {
                let (class, c) = mem.access(socket, b)?;
                cost += c;
                if class.is_remote() {
                    self.counters.remote_accesses += 1;
                } else {
                    self.counters.local_accesses += 1;
                }
            }
        }
        if let (Some(arena), Some(payload)) = (self.arena, &strand.payload) {
            payload.execute(arena);
        }
        if self.cfg.collect_trace {
            self.strand_order.push(s);
        }
        self.emit(w, EventKind::Strand { strand: s, frame: f, cost });
        Ok(())
    }

    fn exec_sync(&mut self, w: usize, f: FrameId) {
        if !self.frames[f.index()].stolen {
            // Trivial sync: a frame not stolen since its last successful sync
            // ran serially, so no child can be outstanding.
            debug_assert_eq!(self.frames[f.index()].outstanding, 0);
            return;
        }
        debug_assert!(self.frames[f.index()].full, "stolen frame must be full");
        self.counters.nontrivial_syncs += 1;
        let success = self.frames[f.index()].outstanding == 0;
        let cost = self.cfg.nontrivial_sync_cost;
        self.emit(w, EventKind::NontrivialSync { frame: f, success, cost });
        if success {
            self.frames[f.index()].stolen = false;
            if self.cfg.scheduler == SchedulerKind::NumaWs {
                let place = self.frames[f.index()].place;
                if mismatched(place, self.workers[w].socket)
                    && self.push_back(w, f, PushTrigger::Sync)
                {
                    self.workers[w].mode = Mode::Loop(NextAction::Steal);
                }
            }
            // Otherwise keep executing f (resume_at already advanced).
        } else {
            self.counters.suspensions += 1;
            let fr = &mut self.frames[f.index()];
            fr.suspended = true;
            fr.location = Location::Suspended;
            self.emit(w, EventKind::Suspend { frame: f });
            debug_assert!(self.workers[w].deque.is_empty());
            self.workers[w].mode = Mode::Loop(NextAction::Steal);
        }
    }

    fn frame_return(&mut self, w: usize, f: FrameId) {
        debug_assert_eq!(self.frames[f.index()].outstanding, 0);
        self.frames[f.index()].location = Location::Returned;
        self.emit(w, EventKind::FrameReturn { frame: f });
        match self.dag.frame(f).parent {
            None => {
                // Root retired: computation done.
                debug_assert!(self.workers[w].deque.is_empty());
                self.done = true;
                self.makespan = self.workers[w].clock;
                self.workers[w].mode = Mode::Finished;
            }
            Some((parent, ParentEdge::Call)) => {
                // Sequential return to the caller.
                debug_assert_eq!(self.frames[parent.index()].location, Location::Suspended);
                self.frames[parent.index()].location = Location::Executing(w as u32);
                self.workers[w].mode = Mode::Executing(parent);
            }
            Some((parent, ParentEdge::Spawn)) => {
                match self.workers[w].deque.pop_bottom() {
                    Some(popped) => {
                        // Work-first fast path: the parent was not stolen.
                        debug_assert_eq!(popped, parent);
                        let p = &mut self.frames[parent.index()];
                        debug_assert_eq!(p.location, Location::InDeque(w as u32));
                        p.outstanding -= 1;
                        p.location = Location::Executing(w as u32);
                        self.workers[w].mode = Mode::Executing(parent);
                    }
                    None => {
                        // Parent stolen; resolve through the scheduling loop.
                        self.workers[w].mode = Mode::Loop(NextAction::CheckParent(parent));
                    }
                }
            }
        }
    }

    // ----- the scheduling loop -----

    fn step_loop(&mut self, w: usize, next: NextAction) {
        if self.done {
            self.workers[w].mode = Mode::Finished;
            return;
        }
        let mut acquired: Option<FrameId> = None;

        if let NextAction::CheckParent(parent) = next {
            acquired = self.check_parent(w, parent);
            self.workers[w].mode = Mode::Loop(NextAction::Steal);
        }

        if acquired.is_none() && self.cfg.scheduler == SchedulerKind::NumaWs {
            if let Some(m) = self.workers[w].mailbox.take() {
                debug_assert_eq!(self.frames[m.index()].location, Location::InMailbox(w as u32));
                debug_assert!(self.frames[m.index()].full);
                self.counters.mailbox_pops += 1;
                let cost = self.cfg.mailbox_pop_cost;
                self.emit(w, EventKind::MailboxPop { frame: m, cost });
                acquired = Some(m);
            }
        }

        if acquired.is_none() {
            acquired = self.steal(w);
        }

        if let Some(f) = acquired {
            self.resume(w, f);
        }
    }

    fn check_parent(&mut self, w: usize, parent: FrameId) -> Option<FrameId> {
        debug_assert!(self.frames[parent.index()].full, "loop handles only full frames");
        let p = &mut self.frames[parent.index()];
        debug_assert!(p.outstanding > 0);
        p.outstanding -= 1;
        let resumed = p.outstanding == 0 && p.suspended;
        if resumed {
            // The last child completes the parent's pending sync.
            p.suspended = false;
            p.stolen = false;
        }
        let cost = self.cfg.check_parent_cost;
        self.emit(w, EventKind::CheckParent { frame: parent, resumed, cost });
        if !resumed {
            return None;
        }
        if self.cfg.scheduler == SchedulerKind::NumaWs {
            let place = self.frames[parent.index()].place;
            if mismatched(place, self.workers[w].socket)
                && self.push_back(w, parent, PushTrigger::ChildReturn)
            {
                return None;
            }
        }
        Some(parent)
    }

    fn steal(&mut self, w: usize) -> Option<FrameId> {
        if self.topo.workers < 2 {
            return None;
        }
        let numa = self.cfg.scheduler == SchedulerKind::NumaWs;
        let (victim, mailbox_first) = {
            let table = &self.tables[w];
            let rng = &mut self.workers[w].rng;
            let victim = table.sample(rng);
            let coin = numa && rng.gen::<bool>();
            (victim, coin)
        };
        self.counters.steal_attempts += 1;
        self.victim_attempts[w][victim] += 1;
        if mailbox_first {
            self.counters.mailbox_first_attempts += 1;
            if let Some(m) = self.workers[victim].mailbox.take() {
                // Mailbox frames are always full; no promotion.
                debug_assert!(self.frames[m.index()].full);
                self.counters.successful_steals += 1;
                self.counters.mailbox_steals += 1;
                let cost = self.cfg.steal_cost;
                self.emit(
                    w,
                    EventKind::StealOk {
                        victim: victim as u32,
                        frame: m,
                        promoted: false,
                        via_mailbox: true,
                        mailbox_first,
                        cost,
                    },
                );
                return Some(m);
            }
            // Empty mailbox: fall through to the victim's deque.
        }
        match self.workers[victim].deque.steal_top() {
            StealOutcome::Taken(h) => {
                self.counters.successful_steals += 1;
                self.counters.deque_steals += 1;
                let promoted = self.promote(h);
                self.frames[h.index()].stolen = true;
                self.frames[h.index()].location = Location::Executing(w as u32);
                let cost = self.cfg.steal_cost;
                self.emit(
                    w,
                    EventKind::StealOk {
                        victim: victim as u32,
                        frame: h,
                        promoted,
                        via_mailbox: false,
                        mailbox_first,
                        cost,
                    },
                );
                if promoted {
                    self.charge(w, TimeCategory::Scheduling, self.cfg.promote_cost);
                }
                if self.cfg.scheduler == SchedulerKind::NumaWs {
                    let place = self.frames[h.index()].place;
                    if mismatched(place, self.workers[w].socket)
                        && self.push_back(w, h, PushTrigger::Steal)
                    {
                        // Deposited for its designated socket; keep stealing.
                        return None;
                    }
                }
                Some(h)
            }
            StealOutcome::Empty | StealOutcome::Abort => {
                let cost = self.cfg.steal_cost;
                self.emit(
                    w,
                    EventKind::StealFail {
                        victim: victim as u32,
                        mailbox_first,
                        cost,
                    },
                );
                None
            }
        }
    }

    /// Lazily hand `f` to a worker on its designated socket: up to
    /// `push_threshold` distinct mailboxes sampled without replacement, first
    /// empty one wins. Never blocks, never queues.
    fn push_back(&mut self, w: usize, f: FrameId, trigger: PushTrigger) -> bool {
        let fr = &self.frames[f.index()];
        debug_assert!(fr.full, "only full frames travel through mailboxes");
        let socket = match fr.place {
            Place::Any => unreachable!("push_back requires a concrete place"),
            Place::Socket(s) => s,
        };
        debug_assert_ne!(socket, self.workers[w].socket);
        self.counters.push_events += 1;

        let mut candidates = self.topo.workers_on_socket(socket);
        let k = self.cfg.policy.push_threshold.min(candidates.len());
        // Partial Fisher-Yates gives k distinct targets.
        {
            let rng = &mut self.workers[w].rng;
            for i in 0..k {
                let j = rng.gen_range(i..candidates.len());
                candidates.swap(i, j);
            }
        }
        let mut attempts = 0u32;
        let mut delivered: Option<u32> = None;
        for &target in candidates.iter().take(k) {
            attempts += 1;
            self.counters.push_attempts += 1;
            if self.workers[target].mailbox.is_none() {
                self.workers[target].mailbox = Some(f);
                self.frames[f.index()].location = Location::InMailbox(target as u32);
                self.counters.mailbox_deliveries += 1;
                delivered = Some(target as u32);
                break;
            }
        }
        let cost = attempts as u64 * self.cfg.push_attempt_cost;
        self.emit(
            w,
            EventKind::Push {
                frame: f,
                trigger,
                attempts,
                target: delivered,
                cost,
            },
        );
        delivered.is_some()
    }

    fn resume(&mut self, w: usize, f: FrameId) {
        debug_assert!(self.frames[f.index()].full, "loop resumes only full frames");
        self.frames[f.index()].location = Location::Executing(w as u32);
        self.emit(w, EventKind::Resume { frame: f });
        self.workers[w].mode = Mode::Executing(f);
    }

    /// Promote a stolen shadow frame, and any shadow frames up its call
    /// chain, to full frames. Returns whether promotion happened.
    fn promote(&mut self, f: FrameId) -> bool {
        if self.frames[f.index()].full {
            return false;
        }
        self.frames[f.index()].full = true;
        self.counters.promotions += 1;
        // A stolen frame's spawn ancestors are full already (deque order);
        // call ancestors migrate with it and must be promoted alongside.
        let mut cur = f;
        while let Some((parent, edge)) = self.dag.frame(cur).parent {
            if self.frames[parent.index()].full {
                break;
            }
            assert!(
                edge == ParentEdge::Call,
                "shadow spawn-ancestor above a stolen frame"
            );
            self.frames[parent.index()].full = true;
            cur = parent;
        }
        self.assert_ancestors_full(f);
        true
    }

    fn assert_ancestors_full(&self, f: FrameId) {
        let mut cur = f;
        while let Some((parent, _)) = self.dag.frame(cur).parent {
            assert!(
                self.frames[parent.index()].full,
                "full frame {f:?} has shadow ancestor {parent:?}"
            );
            cur = parent;
        }
    }

    fn assert_full_frame_ancestry(&self) {
        for (i, fr) in self.frames.iter().enumerate() {
            if fr.full {
                if let Some((parent, _)) = self.dag.frames[i].parent {
                    assert!(
                        self.frames[parent.index()].full,
                        "frame {i} is full but parent {parent:?} is not"
                    );
                }
            }
        }
    }

    fn into_outcome(self) -> SimOutcome {
        debug_assert!(self
            .frames
            .iter()
            .all(|f| f.location == Location::Returned));
        let min_prob_constant = match self.cfg.scheduler {
            SchedulerKind::Classic => None,
            SchedulerKind::NumaWs => {
                Some(min_probability_constant(&self.tables, self.topo.workers))
            }
        };
        SimOutcome {
            makespan: self.makespan,
            breakdowns: self.workers.iter().map(|w| w.breakdown).collect(),
            counters: self.counters,
            trace: self.trace,
            strand_order: self.strand_order,
            victim_attempts: self.victim_attempts,
            min_prob_constant,
        }
    }
}

fn mismatched(place: Place, socket: u32) -> bool {
    match place {
        Place::Any => false,
        Place::Socket(s) => s != socket,
    }
}

fn splitmix(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(stream.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Execute the serial elision with the cost model: strand durations plus
/// memory charges on worker 0's socket, payloads included. This is the
/// simulator-mode T_S.
pub fn execute_serial(
    dag: &ComputationDag,
    topo: &Topology,
    cost_model: Option<CostModel>,
    llc_capacity: usize,
    owners: Option<Vec<Option<u32>>>,
    arena: Option<&DataArena>,
) -> Result<u64> {
    let elision = crate::analysis::serial_elide(dag, 0)?;
    let mut mem = cost_model.map(|cm| {
        let owners = owners.unwrap_or_else(|| vec![None; dag.block_count as usize]);
        MemoryState::new(cm, topo.socket_count, owners, llc_capacity)
    });
    let socket = topo.worker_socket(0);
    let mut total = 0u64;
    for &s in &elision.order {
        let strand = dag.strand(s);
        total += strand.duration;
        if let Some(mem) = &mut mem {
            for &b in &strand.blocks {
                total += mem.access(socket, b)?.1;
            }
        }
        if let (Some(arena), Some(p)) = (arena, &strand.payload) {
            p.execute(arena);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{serial_elide, work_span};
    use crate::dag::DagBuilder;
    use crate::topology::WorkerPlacement;

    fn topo(p: usize) -> Topology {
        Topology::new(4, 8, p, WorkerPlacement::Packed).unwrap()
    }

    fn cfg(kind: SchedulerKind, seed: u64) -> SchedConfig {
        SchedConfig {
            scheduler: kind,
            seed,
            collect_trace: true,
            ..SchedConfig::default()
        }
    }

    fn fork_tree(depth: usize, leaf: u64) -> ComputationDag {
        fn rec(b: &mut DagBuilder, depth: usize, leaf: u64) {
            if depth == 0 {
                b.work(leaf, vec![]);
                return;
            }
            b.spawn(|b| rec(b, depth - 1, leaf));
            b.call(|b| rec(b, depth - 1, leaf));
            b.sync();
        }
        DagBuilder::build(|b| rec(b, depth, leaf)).unwrap()
    }

    #[test]
    fn single_worker_run_matches_serial_elision() {
        let dag = fork_tree(4, 3);
        let t = Topology::new(1, 1, 1, WorkerPlacement::Packed).unwrap();
        for kind in [SchedulerKind::Classic, SchedulerKind::NumaWs] {
            let out = simulate(&dag, &t, &cfg(kind, 1), None, None).unwrap();
            let elision = serial_elide(&dag, 0).unwrap();
            assert_eq!(out.strand_order, elision.order);
            assert_eq!(out.total_work(), elision.cost);
            assert_eq!(out.counters.steal_attempts, 0);
            assert_eq!(out.counters.nontrivial_syncs, 0);
            assert_eq!(out.counters.push_events, 0);
            assert_eq!(out.counters.mailbox_pops, 0);
            assert_eq!(out.total_idle(), 0);
            assert_eq!(out.makespan, elision.cost);
        }
    }

    #[test]
    fn work_is_conserved_across_worker_counts() {
        let dag = fork_tree(6, 5);
        let ws = work_span(&dag, 0).unwrap();
        for p in [1, 2, 4, 8, 16, 32] {
            for kind in [SchedulerKind::Classic, SchedulerKind::NumaWs] {
                for seed in 0..3 {
                    let out = simulate(&dag, &topo(p), &cfg(kind, seed), None, None).unwrap();
                    assert_eq!(out.total_work(), ws.t1, "P={p} kind={kind:?} seed={seed}");
                }
            }
        }
    }

    #[test]
    fn p2_steal_promotes_and_sets_stolen() {
        // Worker 0 executes a long leaf after spawning; worker 1 must steal
        // the root continuation.
        let dag = DagBuilder::build(|b| {
            b.spawn(|b| {
                b.work(1000, vec![]);
            });
            b.work(1, vec![]);
            b.sync();
            b.work(1, vec![]);
        })
        .unwrap();
        let t = Topology::new(1, 2, 2, WorkerPlacement::Packed).unwrap();
        let out = simulate(&dag, &t, &cfg(SchedulerKind::Classic, 3), None, None).unwrap();
        assert!(out.counters.successful_steals >= 1);
        assert_eq!(out.counters.promotions, 1);
        assert!(out.counters.nontrivial_syncs >= 1);
        // Span is 1001 (spawn point, long child, suffix); the run should sit
        // within a small scheduling margin of it.
        let ws = work_span(&dag, 0).unwrap();
        assert_eq!(ws.t_inf, 1001);
        assert!(out.makespan >= ws.t_inf);
        assert!(out.makespan <= ws.t_inf + 50, "makespan {}", out.makespan);
    }

    #[test]
    fn suspended_parent_resumes_exactly_once() {
        // Parent spawns a long child, then a short continuation, then syncs.
        // With the continuation stolen, the parent suspends and the last
        // returning child resumes it.
        let dag = DagBuilder::build(|b| {
            b.spawn(|b| {
                b.work(500, vec![]);
            });
            b.work(2, vec![]);
            b.sync();
            b.work(7, vec![]);
        })
        .unwrap();
        let t = Topology::new(1, 2, 2, WorkerPlacement::Packed).unwrap();
        let out = simulate(&dag, &t, &cfg(SchedulerKind::Classic, 5), None, None).unwrap();
        // All strands executed exactly once.
        let mut runs = std::collections::HashMap::new();
        for s in &out.strand_order {
            *runs.entry(*s).or_insert(0u32) += 1;
        }
        assert!(runs.values().all(|&c| c == 1));
        assert_eq!(runs.len(), 3);
        assert_eq!(out.counters.suspensions, 1);
    }

    #[test]
    fn victim_frequency_is_uniform_for_classic() {
        // One long strand on worker 0; three idle thieves hammer steals.
        let dag = DagBuilder::build(|b| {
            b.work(30_000, vec![]);
        })
        .unwrap();
        let t = Topology::new(2, 2, 4, WorkerPlacement::Packed).unwrap();
        let out = simulate(&dag, &t, &cfg(SchedulerKind::Classic, 9), None, None).unwrap();
        // Pool attempts from thief 1 (its victims: 0, 2, 3).
        let row = &out.victim_attempts[1];
        let total: u64 = row.iter().sum();
        assert!(total > 10_000);
        for v in [0usize, 2, 3] {
            let frac = row[v] as f64 / total as f64;
            assert!(
                (frac - 1.0 / 3.0).abs() < 0.02,
                "victim {v} got fraction {frac}"
            );
        }
        assert_eq!(row[1], 0, "no self-steals");
    }

    #[test]
    fn numa_run_with_hints_pushes_work_to_its_socket() {
        // Root pins a child to socket 1 while all workers start on socket 0's
        // side of a 2-socket machine; a push should deliver it.
        let dag = DagBuilder::build(|b| {
            b.set_locality(Place::Socket(1));
            b.spawn(|b| {
                b.work(400, vec![]);
            });
            b.set_locality(Place::Any);
            b.work(400, vec![]);
            b.sync();
        })
        .unwrap();
        let t = Topology::new(2, 2, 4, WorkerPlacement::Packed).unwrap();
        let mut c = cfg(SchedulerKind::NumaWs, 11);
        c.policy.local_bias = 0.5;
        let out = simulate(&dag, &t, &c, None, None).unwrap();
        // The computation finishes and any pushes observed the amortization
        // bound.
        assert!(out.counters.push_events <= 3 * out.counters.successful_steals);
        assert!(
            out.counters.push_attempts
                <= out.counters.push_events * c.policy.push_threshold as u64
        );
    }

    #[test]
    fn numa_without_hints_never_pushes() {
        let dag = fork_tree(7, 4);
        let out = simulate(&dag, &topo(16), &cfg(SchedulerKind::NumaWs, 21), None, None).unwrap();
        assert_eq!(out.counters.push_events, 0);
        assert_eq!(out.counters.mailbox_deliveries, 0);
        assert!(out.counters.successful_steals > 0);
    }

    #[test]
    fn identical_seeds_give_identical_outcomes() {
        let dag = fork_tree(6, 7);
        let a = simulate(&dag, &topo(8), &cfg(SchedulerKind::NumaWs, 33), None, None).unwrap();
        let b = simulate(&dag, &topo(8), &cfg(SchedulerKind::NumaWs, 33), None, None).unwrap();
        assert_eq!(a.makespan, b.makespan);
        assert_eq!(a.counters, b.counters);
        assert_eq!(a.strand_order, b.strand_order);
        let c = simulate(&dag, &topo(8), &cfg(SchedulerKind::NumaWs, 34), None, None).unwrap();
        // Different seed almost surely differs somewhere.
        assert!(a.counters != c.counters || a.makespan != c.makespan);
    }

    #[test]
    fn makespan_is_bounded_below_by_span() {
        let dag = fork_tree(6, 9);
        let ws = work_span(&dag, 0).unwrap();
        for p in [1, 4, 16] {
            let out = simulate(&dag, &topo(p), &cfg(SchedulerKind::Classic, 2), None, None).unwrap();
            assert!(out.makespan >= ws.t_inf);
            assert!(out.makespan >= ws.t1 / p as u64);
        }
    }

    #[test]
    fn ancestry_validation_passes_on_a_busy_run() {
        let dag = fork_tree(8, 2);
        let mut c = cfg(SchedulerKind::NumaWs, 17);
        c.validate_ancestry = true;
        simulate(&dag, &topo(16), &c, None, None).unwrap();
    }

    #[test]
    fn serial_executor_matches_unit_costs() {
        let dag = fork_tree(3, 5);
        let t = topo(4);
        let cost = execute_serial(&dag, &t, None, 256, None, None).unwrap();
        assert_eq!(cost, work_span(&dag, 0).unwrap().t1);
    }
}
