//! Run orchestration and report emission: executes a benchmark under a
//! scheduler configuration in either mode, verifies its oracle, derives the
//! evaluation ratios, and renders reports as JSON, CSV, or aligned tables.

use serde::{Deserialize, Serialize};

use crate::analysis::work_span;
use crate::bench::{self, BenchmarkSpec};
use crate::error::{Error, Result};
use crate::event::TraceEvent;
use crate::layout::{assign_places, PlacementPolicy};
use crate::metrics::{ExecMode, RunReport};
use crate::sim::{execute_serial, simulate, SchedConfig, SchedulerKind};
use crate::threads::run_threads;
use crate::topology::{Topology, WorkerPlacement};

/// Everything needed to execute one benchmark run.
#[derive(Debug, Clone)]
pub struct RunParams {
    pub bench: BenchmarkSpec,
    pub sockets: usize,
    pub cores_per_socket: usize,
    pub workers: usize,
    pub placement: WorkerPlacement,
    pub mode: ExecMode,
    pub sched: SchedConfig,
    /// Overrides the benchmark's suggested data placement when set.
    pub placement_policy: Option<PlacementPolicy>,
}

impl RunParams {
    pub fn new(bench: BenchmarkSpec) -> Self {
        RunParams {
            bench,
            sockets: 4,
            cores_per_socket: 8,
            workers: 32,
            placement: WorkerPlacement::Packed,
            mode: ExecMode::Sim,
            sched: SchedConfig::default(),
            placement_policy: None,
        }
    }

    pub fn topology(&self) -> Result<Topology> {
        Topology::new(
            self.sockets,
            self.cores_per_socket,
            self.workers,
            self.placement,
        )
    }
}

pub struct RunOutput {
    pub report: RunReport,
    /// Event trace of the measured run (empty unless trace was requested).
    pub trace: Vec<TraceEvent>,
}

/// Execute a benchmark: a serial-elision reference, a one-worker baseline,
/// and the measured run, each on a fresh data arena. The output is checked
/// against the benchmark's oracle; a mismatch is fatal.
pub fn run_benchmark(params: &RunParams) -> Result<RunOutput> {
    let topo = params.topology()?;
    let cfg = &params.sched;

    // Build once to learn the placement, then resolve block owners.
    let probe = bench::build(&params.bench, &topo)?;
    let policy = params
        .placement_policy
        .clone()
        .unwrap_or_else(|| probe.placement.clone());
    let owners = assign_places(probe.dag.block_count as usize, &policy, &topo)?;
    let ws = work_span(&probe.dag, cfg.spawn_cost)?;

    // Serial elision reference (T_S).
    let t_serial = {
        let built = bench::build(&params.bench, &topo)?;
        let ts = match params.mode {
            ExecMode::Sim => execute_serial(
                &built.dag,
                &topo,
                cfg.cost_model,
                cfg.llc_capacity,
                Some(owners.clone()),
                Some(&built.arena),
            )?,
            ExecMode::Threads => {
                let start = std::time::Instant::now();
                execute_serial(&built.dag, &topo, None, cfg.llc_capacity, None, Some(&built.arena))?;
                start.elapsed().as_nanos() as u64
            }
        };
        built.verify()?;
        ts
    };

    // One-worker baseline (T_1) on the same machine shape.
    let topo_one = Topology::new(params.sockets, params.cores_per_socket, 1, params.placement)?;
    let t_one = {
        let built = bench::build(&params.bench, &topo)?;
        let t = match params.mode {
            ExecMode::Sim => {
                let out = simulate(&built.dag, &topo_one, cfg, Some(owners.clone()), Some(&built.arena))?;
                out.makespan
            }
            ExecMode::Threads => {
                run_threads(&built.dag, &topo_one, cfg, Some(&built.arena))?.makespan_ns
            }
        };
        built.verify()?;
        t
    };

    // The measured run.
    let built = bench::build(&params.bench, &topo)?;
    let (t_p, breakdowns, counters, min_prob_constant, trace) = match params.mode {
        ExecMode::Sim => {
            let out = simulate(&built.dag, &topo, cfg, Some(owners), Some(&built.arena))?;
            (
                out.makespan,
                out.breakdowns,
                out.counters,
                out.min_prob_constant,
                out.trace,
            )
        }
        ExecMode::Threads => {
            let out = run_threads(&built.dag, &topo, cfg, Some(&built.arena))?;
            let c = match cfg.scheduler {
                SchedulerKind::Classic => None,
                SchedulerKind::NumaWs => Some(crate::policy::min_probability_constant(
                    &(0..topo.workers)
                        .map(|w| crate::policy::VictimTable::new(w, &topo, cfg.policy.local_bias))
                        .collect::<Vec<_>>(),
                    topo.workers,
                )),
            };
            (out.makespan_ns, out.breakdowns, out.counters, c, out.trace)
        }
    };
    built.verify()?;
    let output_checksum = built.checksum();

    let w_p: u64 = breakdowns.iter().map(|b| b.work).sum();
    let s_p: u64 = breakdowns.iter().map(|b| b.scheduling).sum();
    let i_p: u64 = breakdowns.iter().map(|b| b.idle).sum();

    let report = RunReport {
        benchmark: params.bench.name.as_str().to_string(),
        mode: params.mode,
        scheduler: cfg.scheduler,
        workers: params.workers,
        sockets: params.sockets,
        cores_per_socket: params.cores_per_socket,
        placement: params.placement,
        policy: cfg.policy,
        seed: cfg.seed,
        cost_model: cfg.cost_model.is_some(),
        t_serial,
        t_one,
        t_p,
        t1_units: ws.t1,
        t_inf_units: ws.t_inf,
        parallelism: ws.parallelism,
        w_p,
        s_p,
        i_p,
        per_worker: breakdowns,
        counters,
        min_prob_constant,
        spawn_overhead: crate::metrics::spawn_overhead(t_one as f64, t_serial as f64)?,
        work_inflation: crate::metrics::work_inflation(w_p as f64, t_one as f64)?,
        scalability: crate::metrics::scalability(t_one as f64, t_p as f64)?,
        output_checksum,
    };
    Ok(RunOutput { report, trace })
}

/// Parameter grid for sweeps. Each axis defaults to the base value when
/// empty.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SweepGrid {
    pub workers: Vec<usize>,
    pub placements: Vec<WorkerPlacement>,
    pub schedulers: Vec<SchedulerKind>,
    pub local_bias: Vec<f64>,
    pub push_threshold: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl SweepGrid {
    /// The sensitivity sweep: bias and threshold axes at their studied
    /// values.
    pub fn sensitivity() -> Self {
        SweepGrid {
            local_bias: vec![0.5, 0.7, 0.9, 0.98, 1.0],
            push_threshold: vec![2, 4, 8],
            schedulers: vec![SchedulerKind::NumaWs],
            ..SweepGrid::default()
        }
    }

    /// The scalability sweep: worker counts under both thread placements.
    pub fn scalability() -> Self {
        SweepGrid {
            workers: vec![1, 8, 16, 24, 32],
            placements: vec![WorkerPlacement::Packed, WorkerPlacement::Spread],
            ..SweepGrid::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub workers: usize,
    pub placement: WorkerPlacement,
    pub scheduler: SchedulerKind,
    pub local_bias: f64,
    pub push_threshold: usize,
    pub seed: u64,
    pub report: Option<RunReport>,
    pub error: Option<String>,
}

/// Run every grid point, propagating per-run failures as row errors without
/// aborting the sweep.
pub fn sweep(base: &RunParams, grid: &SweepGrid) -> Vec<SweepRow> {
    let or = |axis: &[usize], d: usize| if axis.is_empty() { vec![d] } else { axis.to_vec() };
    let workers = or(&grid.workers, base.workers);
    let thresholds = or(&grid.push_threshold, base.sched.policy.push_threshold);
    let placements = if grid.placements.is_empty() {
        vec![base.placement]
    } else {
        grid.placements.clone()
    };
    let schedulers = if grid.schedulers.is_empty() {
        vec![base.sched.scheduler]
    } else {
        grid.schedulers.clone()
    };
    let biases = if grid.local_bias.is_empty() {
        vec![base.sched.policy.local_bias]
    } else {
        grid.local_bias.clone()
    };
    let seeds = if grid.seeds.is_empty() {
        vec![base.sched.seed]
    } else {
        grid.seeds.clone()
    };

    let mut rows = Vec::new();
    for &p in &workers {
        for &placement in &placements {
            for &scheduler in &schedulers {
                for &beta in &biases {
                    for &k in &thresholds {
                        for &seed in &seeds {
                            let mut params = base.clone();
                            params.workers = p;
                            params.placement = placement;
                            params.sched.scheduler = scheduler;
                            params.sched.policy.local_bias = beta;
                            params.sched.policy.push_threshold = k;
                            params.sched.seed = seed;
                            let (report, error) = match run_benchmark(&params) {
                                Ok(out) => (Some(out.report), None),
                                Err(e) => (None, Some(e.to_string())),
                            };
                            rows.push(SweepRow {
                                workers: p,
                                placement,
                                scheduler,
                                local_bias: beta,
                                push_threshold: k,
                                seed,
                                report,
                                error,
                            });
                        }
                    }
                }
            }
        }
    }
    rows
}

/// Flat CSV of sweep rows (one line per run).
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "benchmark,mode,scheduler,workers,placement,local_bias,push_threshold,seed,\
         t_serial,t_one,t_p,w_p,s_p,i_p,spawn_overhead,work_inflation,scalability,\
         steal_attempts,successful_steals,push_events,push_attempts,mailbox_deliveries,\
         remote_accesses,local_accesses,checksum,error\n",
    );
    for row in rows {
        let sched = match row.scheduler {
            SchedulerKind::Classic => "classic",
            SchedulerKind::NumaWs => "numaws",
        };
        let placement = match row.placement {
            WorkerPlacement::Packed => "packed",
            WorkerPlacement::Spread => "spread",
        };
        match &row.report {
            Some(r) => {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.4},{:.4},{:.4},{},{},{},{},{},{},{},{},\n",
                    r.benchmark,
                    match r.mode {
                        ExecMode::Sim => "sim",
                        ExecMode::Threads => "threads",
                    },
                    sched,
                    row.workers,
                    placement,
                    row.local_bias,
                    row.push_threshold,
                    row.seed,
                    r.t_serial,
                    r.t_one,
                    r.t_p,
                    r.w_p,
                    r.s_p,
                    r.i_p,
                    r.spawn_overhead,
                    r.work_inflation,
                    r.scalability,
                    r.counters.steal_attempts,
                    r.counters.successful_steals,
                    r.counters.push_events,
                    r.counters.push_attempts,
                    r.counters.mailbox_deliveries,
                    r.counters.remote_accesses,
                    r.counters.local_accesses,
                    r.output_checksum,
                ));
            }
            None => {
                out.push_str(&format!(
                    ",,{},{},{},{},{},{},,,,,,,,,,,,,,,,,,{}\n",
                    sched,
                    row.workers,
                    placement,
                    row.local_bias,
                    row.push_threshold,
                    row.seed,
                    row.error.clone().unwrap_or_default().replace(',', ";"),
                ));
            }
        }
    }
    out
}

/// Mean and dispersion of T_P and scalability per grid point across seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSummary {
    pub workers: usize,
    pub placement: WorkerPlacement,
    pub scheduler: SchedulerKind,
    pub local_bias: f64,
    pub push_threshold: usize,
    pub runs: usize,
    pub failures: usize,
    pub mean_t_p: f64,
    pub std_t_p: f64,
    pub mean_scalability: f64,
}

pub fn summarize(rows: &[SweepRow]) -> Vec<SweepSummary> {
    use std::collections::BTreeMap;
    // Bias keyed by bit pattern: sweep axes are exact config values.
    let mut groups: BTreeMap<(usize, u8, u8, u64, usize), Vec<&SweepRow>> = BTreeMap::new();
    for row in rows {
        let key = (
            row.workers,
            matches!(row.placement, WorkerPlacement::Spread) as u8,
            matches!(row.scheduler, SchedulerKind::NumaWs) as u8,
            row.local_bias.to_bits(),
            row.push_threshold,
        );
        groups.entry(key).or_default().push(row);
    }
    groups
        .into_values()
        .map(|rows| {
            let ok: Vec<&RunReport> = rows.iter().filter_map(|r| r.report.as_ref()).collect();
            let n = ok.len().max(1) as f64;
            let mean_t_p = ok.iter().map(|r| r.t_p as f64).sum::<f64>() / n;
            let var = ok
                .iter()
                .map(|r| (r.t_p as f64 - mean_t_p).powi(2))
                .sum::<f64>()
                / n;
            let mean_scal = ok.iter().map(|r| r.scalability).sum::<f64>() / n;
            let first = rows[0];
            SweepSummary {
                workers: first.workers,
                placement: first.placement,
                scheduler: first.scheduler,
                local_bias: first.local_bias,
                push_threshold: first.push_threshold,
                runs: rows.len(),
                failures: rows.len() - ok.len(),
                mean_t_p,
                std_t_p: var.sqrt(),
                mean_scalability: mean_scal,
            }
        })
        .collect()
}

/// Serialize a report (or any serializable value) as pretty JSON.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{BenchmarkName, HintScheme};
    use crate::topology::CostModel;

    fn small_params() -> RunParams {
        let mut spec = BenchmarkSpec::new(BenchmarkName::Scan);
        spec.n = 4096;
        spec.base_case = 256;
        let mut p = RunParams::new(spec);
        p.sockets = 2;
        p.cores_per_socket = 2;
        p.workers = 4;
        p.sched.seed = 5;
        p
    }

    #[test]
    fn run_produces_consistent_report() {
        let out = run_benchmark(&small_params()).unwrap();
        let r = &out.report;
        assert_eq!(r.w_p, r.t1_units, "unit-cost work conservation");
        assert!(r.t_p >= r.t_inf_units);
        assert!(r.spawn_overhead >= 1.0);
        assert!(r.scalability >= 1.0);
    }

    #[test]
    fn identical_params_give_byte_identical_reports() {
        let a = run_benchmark(&small_params()).unwrap();
        let b = run_benchmark(&small_params()).unwrap();
        assert_eq!(to_json(&a.report).unwrap(), to_json(&b.report).unwrap());
    }

    #[test]
    fn single_point_sweep_equals_run() {
        let params = small_params();
        let rows = sweep(&params, &SweepGrid::default());
        assert_eq!(rows.len(), 1);
        let row = rows[0].report.as_ref().unwrap();
        let direct = run_benchmark(&params).unwrap().report;
        assert_eq!(to_json(row).unwrap(), to_json(&direct).unwrap());
    }

    #[test]
    fn sweep_propagates_errors_without_aborting() {
        let mut params = small_params();
        params.workers = 4;
        let grid = SweepGrid {
            // 64 workers overflows the 2x2 machine; other points still run.
            workers: vec![4, 64],
            ..SweepGrid::default()
        };
        let rows = sweep(&params, &grid);
        assert_eq!(rows.len(), 2);
        assert!(rows[0].report.is_some());
        assert!(rows[1].error.is_some());
        let csv = sweep_csv(&rows);
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn cost_model_run_keeps_inflation_nonnegative() {
        let mut spec = BenchmarkSpec::new(BenchmarkName::Heat);
        spec.n = 128;
        spec.base_case = 16;
        spec.steps = 8;
        spec.hints = HintScheme::TopLevelQuarters;
        let mut p = RunParams::new(spec);
        p.sockets = 4;
        p.cores_per_socket = 2;
        p.workers = 8;
        p.sched.cost_model = Some(CostModel::default());
        p.sched.llc_capacity = 1024;
        p.sched.seed = 9;
        let out = run_benchmark(&p).unwrap();
        assert!(out.report.work_inflation >= 1.0 - 1e-9);
        assert!(out.report.counters.local_accesses + out.report.counters.remote_accesses > 0);
    }
}
