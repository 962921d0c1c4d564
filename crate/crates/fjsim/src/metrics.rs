//! Evaluation quantities: time-breakdown aggregation from event traces and
//! the headline ratios (spawn overhead, work inflation, scalability).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{Counters, TimeBreakdown, TraceEvent};
use crate::policy::StealPolicy;
use crate::sim::SchedulerKind;
use crate::topology::WorkerPlacement;

/// Spawn overhead T1/TS.
pub fn spawn_overhead(t1: f64, ts: f64) -> Result<f64> {
    if ts <= 0.0 {
        return Err(Error::Config("T_S must be positive".into()));
    }
    Ok(t1 / ts)
}

/// Work inflation W_P/T1.
pub fn work_inflation(w_p: f64, t1: f64) -> Result<f64> {
    if t1 <= 0.0 {
        return Err(Error::Config("T_1 must be positive".into()));
    }
    Ok(w_p / t1)
}

/// Scalability T1/TP.
pub fn scalability(t1: f64, tp: f64) -> Result<f64> {
    if tp <= 0.0 {
        return Err(Error::Config("T_P must be positive".into()));
    }
    Ok(t1 / tp)
}

/// Recompute per-worker time breakdowns from a trace. Every event carries
/// exactly one category; the result must agree with the engine's own
/// accumulators.
pub fn breakdown(trace: &[TraceEvent], workers: usize) -> Result<Vec<TimeBreakdown>> {
    let mut out = vec![TimeBreakdown::default(); workers];
    for ev in trace {
        let w = ev.worker as usize;
        if w >= workers {
            return Err(Error::Config(format!(
                "trace event for worker {w} outside 0..{workers}"
            )));
        }
        out[w].add(ev.kind.category(), ev.kind.cost());
    }
    Ok(out)
}

/// How a run was executed; figures are work units in simulator mode and
/// nanoseconds in thread mode, never mixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExecMode {
    Sim,
    Threads,
}

impl std::str::FromStr for ExecMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sim" => Ok(ExecMode::Sim),
            "threads" => Ok(ExecMode::Threads),
            other => Err(Error::Config(format!("unknown mode '{other}'"))),
        }
    }
}

/// Everything measured and derived for one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    // Configuration echo.
    pub benchmark: String,
    pub mode: ExecMode,
    pub scheduler: SchedulerKind,
    pub workers: usize,
    pub sockets: usize,
    pub cores_per_socket: usize,
    pub placement: WorkerPlacement,
    pub policy: StealPolicy,
    pub seed: u64,
    pub cost_model: bool,
    // Headline times (work units or ns per `mode`).
    pub t_serial: u64,
    pub t_one: u64,
    pub t_p: u64,
    // Abstract work/span of the computation (always work units).
    pub t1_units: u64,
    pub t_inf_units: u64,
    pub parallelism: f64,
    // Aggregated worker time.
    pub w_p: u64,
    pub s_p: u64,
    pub i_p: u64,
    pub per_worker: Vec<TimeBreakdown>,
    pub counters: Counters,
    /// Minimum-steal-probability constant c (biased stealing only); absent
    /// for classic runs, null when the bias starves remote victims.
    pub min_prob_constant: Option<f64>,
    // Derived ratios.
    pub spawn_overhead: f64,
    pub work_inflation: f64,
    pub scalability: f64,
    pub output_checksum: u64,
}

impl RunReport {
    /// Aligned one-line summary, matching the table emitters.
    pub fn table_row(&self) -> String {
        format!(
            "{:<10} {:<8} {:>3} {:<7} {:>10} {:>10} ({:>5.2}) {:>10} ({:>5.1}) {:>12} ({:>5.2}) {:>10} {:>10}",
            self.benchmark,
            match self.scheduler {
                SchedulerKind::Classic => "classic",
                SchedulerKind::NumaWs => "numaws",
            },
            self.workers,
            match self.placement {
                WorkerPlacement::Packed => "packed",
                WorkerPlacement::Spread => "spread",
            },
            self.t_serial,
            self.t_one,
            self.spawn_overhead,
            self.t_p,
            self.scalability,
            self.w_p,
            self.work_inflation,
            self.s_p,
            self.i_p,
        )
    }

    pub fn table_header() -> String {
        format!(
            "{:<10} {:<8} {:>3} {:<7} {:>10} {:>10} {:>7} {:>10} {:>7} {:>12} {:>7} {:>10} {:>10}",
            "benchmark", "sched", "P", "place", "T_S", "T_1", "(ovh)", "T_P", "(scal)", "W_P",
            "(infl)", "S_P", "I_P"
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::{FrameId, StrandId};
    use crate::event::EventKind;

    fn round(x: f64, places: u32) -> f64 {
        let p = 10f64.powi(places as i32);
        (x * p).round() / p
    }

    #[test]
    fn ratio_examples_from_measured_tables() {
        // Spawn overhead ratios as printed alongside T_1 columns.
        assert_eq!(round(spawn_overhead(385.41, 360.00).unwrap(), 2), 1.07);
        assert_eq!(round(spawn_overhead(20.47, 20.38).unwrap(), 2), 1.00);
        assert_eq!(round(spawn_overhead(5.0, 5.0).unwrap(), 2), 1.00);
        // Work inflation.
        assert_eq!(round(work_inflation(898.60, 385.41).unwrap(), 1), 2.3);
        assert_eq!(round(work_inflation(13.41, 13.39).unwrap(), 2), 1.00);
        // Scalability.
        assert_eq!(round(scalability(20.47, 0.96).unwrap(), 1), 21.3);
        assert_eq!(round(scalability(13.39, 0.44).unwrap(), 1), 30.4);
        assert_eq!(round(scalability(7.0, 7.0).unwrap(), 1), 1.0);
    }

    #[test]
    fn zero_denominators_error() {
        assert!(spawn_overhead(1.0, 0.0).is_err());
        assert!(work_inflation(1.0, 0.0).is_err());
        assert!(scalability(1.0, 0.0).is_err());
    }

    #[test]
    fn breakdown_aggregates_and_rejects_bad_workers() {
        let trace = vec![
            TraceEvent {
                time: 0,
                worker: 0,
                kind: EventKind::Strand {
                    strand: StrandId(0),
                    frame: FrameId(0),
                    cost: 7,
                },
            },
            TraceEvent {
                time: 7,
                worker: 0,
                kind: EventKind::StealFail {
                    victim: 1,
                    mailbox_first: false,
                    cost: 1,
                },
            },
            TraceEvent {
                time: 0,
                worker: 1,
                kind: EventKind::NontrivialSync {
                    frame: FrameId(0),
                    success: true,
                    cost: 5,
                },
            },
        ];
        let b = breakdown(&trace, 2).unwrap();
        assert_eq!(b[0].work, 7);
        assert_eq!(b[0].idle, 1);
        assert_eq!(b[1].scheduling, 5);
        assert!(breakdown(&trace, 1).is_err());
    }

    #[test]
    fn empty_trace_is_all_zeros() {
        let b = breakdown(&[], 3).unwrap();
        assert!(b.iter().all(|t| t.total() == 0));
    }
}
