//! Benchmark computations: divide-and-conquer kernels with real payloads,
//! sequential oracles, block-touch footprints, and optional locality hints.

mod cg;
mod cilksort;
mod heat;
mod lu;
mod scan;
mod strassen;
pub mod synth;

use serde::{Deserialize, Serialize};

use crate::dag::ComputationDag;
use crate::error::{Error, Result};
use crate::layout::{ArrayLayout, PlacementPolicy};
use crate::payload::{BufId, DataArena};
use crate::topology::{Place, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BenchmarkName {
    Cilksort,
    Heat,
    Strassen,
    Lu,
    /// Parallel prefix sum; the locality-poor kernel.
    Scan,
    CgLite,
}

impl BenchmarkName {
    pub fn all() -> [BenchmarkName; 6] {
        [
            BenchmarkName::Cilksort,
            BenchmarkName::Heat,
            BenchmarkName::Strassen,
            BenchmarkName::Lu,
            BenchmarkName::Scan,
            BenchmarkName::CgLite,
        ]
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            BenchmarkName::Cilksort => "cilksort",
            BenchmarkName::Heat => "heat",
            BenchmarkName::Strassen => "strassen",
            BenchmarkName::Lu => "lu",
            BenchmarkName::Scan => "scan",
            BenchmarkName::CgLite => "cg_lite",
        }
    }
}

impl std::str::FromStr for BenchmarkName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cilksort" => Ok(BenchmarkName::Cilksort),
            "heat" => Ok(BenchmarkName::Heat),
            "strassen" => Ok(BenchmarkName::Strassen),
            "lu" => Ok(BenchmarkName::Lu),
            "scan" => Ok(BenchmarkName::Scan),
            "cg_lite" | "cg" => Ok(BenchmarkName::CgLite),
            other => Err(Error::Config(format!("unknown benchmark '{other}'"))),
        }
    }
}

/// How locality hints get attached to the computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HintScheme {
    None,
    /// Four top-level partitions pinned to the first four active sockets;
    /// partitions beyond the active socket count stay unhinted.
    TopLevelQuarters,
    /// Explicit places for the top-level partitions.
    Custom(Vec<Place>),
}

impl std::str::FromStr for HintScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(HintScheme::None),
            "top-level-quarters" | "quarters" => Ok(HintScheme::TopLevelQuarters),
            other => {
                // "0,1,2,any" style custom lists.
                let places = other
                    .split(',')
                    .map(|t| {
                        if t == "any" {
                            Ok(Place::Any)
                        } else {
                            t.parse::<u32>()
                                .map(Place::Socket)
                                .map_err(|_| Error::Config(format!("bad place '{t}' in hints")))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(HintScheme::Custom(places))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub name: BenchmarkName,
    /// Input size: element count for the 1-D kernels, matrix/grid side for
    /// the 2-D ones.
    pub n: usize,
    pub base_case: usize,
    pub hints: HintScheme,
    pub layout: ArrayLayout,
    pub reps: usize,
    /// Time steps (heat) or solver iterations (cg_lite); ignored elsewhere.
    pub steps: usize,
    /// Seed for input data generation, independent of the scheduler seed so
    /// output checksums compare across runs.
    pub data_seed: u64,
}

impl BenchmarkSpec {
    pub fn new(name: BenchmarkName) -> Self {
        let (n, base_case, steps) = match name {
            BenchmarkName::Cilksort => (1 << 16, 1 << 10, 0),
            BenchmarkName::Heat => (512, 32, 50),
            BenchmarkName::Strassen => (256, 64, 0),
            BenchmarkName::Lu => (256, 64, 0),
            BenchmarkName::Scan => (1 << 16, 1 << 10, 0),
            BenchmarkName::CgLite => (32, 128, 48),
        };
        BenchmarkSpec {
            name,
            n,
            base_case,
            hints: HintScheme::None,
            layout: ArrayLayout::Blocked,
            reps: 1,
            steps,
            data_seed: 42,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps < 1 {
            return Err(Error::Config("reps must be >= 1".into()));
        }
        if self.base_case == 0 || self.n == 0 {
            return Err(Error::Config("n and base_case must be positive".into()));
        }
        match self.name {
            BenchmarkName::Heat | BenchmarkName::Strassen | BenchmarkName::Lu => {
                if !self.n.is_power_of_two()
                    || !self.base_case.is_power_of_two()
                    || self.base_case > self.n
                {
                    return Err(Error::Config(
                        "matrix benchmarks need power-of-two n >= base_case".into(),
                    ));
                }
            }
            BenchmarkName::Cilksort | BenchmarkName::Scan => {
                if self.base_case > self.n {
                    return Err(Error::Config("base_case exceeds n".into()));
                }
            }
            BenchmarkName::CgLite => {
                if self.steps == 0 {
                    return Err(Error::Config("cg_lite needs steps >= 1".into()));
                }
            }
        }
        Ok(())
    }
}

/// Post-run output check, carrying whatever reference data it needs.
pub(crate) enum Oracle {
    /// Buffer must equal this exact i64 sequence.
    I64Equals { buf: BufId, expect: Vec<i64> },
    /// Buffer must equal this exact f64 sequence bitwise.
    F64Equals { buf: BufId, expect: Vec<f64> },
    /// Buffer must match within elementwise relative tolerance.
    F64Close {
        buf: BufId,
        expect: Vec<f64>,
        rel_tol: f64,
    },
    /// cg_lite: the maintained residual must match b - A x, and (when the
    /// run is long enough to guarantee convergence) the true residual norm
    /// must have dropped below `factor` times ||b||.
    CgResidual {
        x: BufId,
        r: BufId,
        b: Vec<f64>,
        grid: usize,
        factor: f64,
        check_norm: bool,
    },
    /// In-place LU result: L (unit lower) times U must reproduce the
    /// original matrix within elementwise relative tolerance.
    LuProduct {
        buf: BufId,
        original: Vec<f64>,
        n: usize,
        rel_tol: f64,
    },
}

/// A benchmark instance ready to execute: computation, fresh data arena, the
/// placement its hint scheme implies, and the oracle for its output.
pub struct BuiltBenchmark {
    pub dag: ComputationDag,
    pub arena: DataArena,
    pub placement: PlacementPolicy,
    /// Buffers hashed into the output checksum.
    pub output_bufs: Vec<BufId>,
    pub(crate) oracle: Oracle,
}

impl BuiltBenchmark {
    pub fn checksum(&self) -> u64 {
        self.arena.checksum(&self.output_bufs)
    }

    /// Check the computed output against the sequential oracle.
    pub fn verify(&self) -> Result<()> {
        match &self.oracle {
            Oracle::I64Equals { buf, expect } => {
                let got = self.arena.i64_vec(*buf);
                if &got != expect {
                    let idx = got
                        .iter()
                        .zip(expect.iter())
                        .position(|(a, b)| a != b)
                        .unwrap_or(got.len().min(expect.len()));
                    return Err(Error::OracleMismatch(format!(
                        "i64 output diverges from reference at index {idx}"
                    )));
                }
                Ok(())
            }
            Oracle::F64Equals { buf, expect } => {
                let got = self.arena.f64_vec(*buf);
                if got.len() != expect.len()
                    || got
                        .iter()
                        .zip(expect.iter())
                        .any(|(a, b)| a.to_bits() != b.to_bits())
                {
                    return Err(Error::OracleMismatch(
                        "f64 output diverges bitwise from reference".into(),
                    ));
                }
                Ok(())
            }
            Oracle::F64Close {
                buf,
                expect,
                rel_tol,
            } => {
                let got = self.arena.f64_vec(*buf);
                if got.len() != expect.len() {
                    return Err(Error::OracleMismatch("output length mismatch".into()));
                }
                for (i, (a, b)) in got.iter().zip(expect.iter()).enumerate() {
                    let scale = b.abs().max(1.0);
                    if (a - b).abs() > rel_tol * scale {
                        return Err(Error::OracleMismatch(format!(
                            "output[{i}] = {a}, reference {b} (rel tol {rel_tol})"
                        )));
                    }
                }
                Ok(())
            }
            Oracle::LuProduct {
                buf,
                original,
                n,
                rel_tol,
            } => {
                let lu = self.arena.f64_vec(*buf);
                let n = *n;
                for i in 0..n {
                    for j in 0..n {
                        let mut acc = 0.0;
                        for k in 0..=i.min(j) {
                            let l = if k == i { 1.0 } else { lu[i * n + k] };
                            acc += l * lu[k * n + j];
                        }
                        let want = original[i * n + j];
                        if (acc - want).abs() > rel_tol * want.abs().max(1.0) {
                            return Err(Error::OracleMismatch(format!(
                                "(L*U)[{i},{j}] = {acc}, original {want}"
                            )));
                        }
                    }
                }
                Ok(())
            }
            Oracle::CgResidual {
                x,
                r,
                b,
                grid,
                factor,
                check_norm,
            } => {
                let xv = self.arena.f64_vec(*x);
                let rv = self.arena.f64_vec(*r);
                let grid = *grid;
                let n = grid * grid;
                let mut true_r = vec![0.0f64; n];
                for i in 0..n {
                    let mut ax = 4.0 * xv[i];
                    if i % grid > 0 {
                        ax -= xv[i - 1];
                    }
                    if i % grid < grid - 1 {
                        ax -= xv[i + 1];
                    }
                    if i >= grid {
                        ax -= xv[i - grid];
                    }
                    if i + grid < n {
                        ax -= xv[i + grid];
                    }
                    true_r[i] = b[i] - ax;
                }
                let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
                let b_norm = norm(b);
                let true_norm = norm(&true_r);
                let drift: f64 = rv
                    .iter()
                    .zip(true_r.iter())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                if drift > 1e-6 * b_norm.max(1.0) {
                    return Err(Error::OracleMismatch(format!(
                        "maintained residual drifted {drift} from b - Ax"
                    )));
                }
                if *check_norm && true_norm > factor * b_norm {
                    return Err(Error::OracleMismatch(format!(
                        "residual norm {true_norm} did not drop below {factor} * ||b|| = {}",
                        factor * b_norm
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Places for the four top-level partitions under a hint scheme, given which
/// sockets actually have workers. Partitions without a matching active
/// socket stay at `Any` (they fall back to first-touch placement).
pub fn partition_places(hints: &HintScheme, topo: &Topology) -> Vec<Place> {
    match hints {
        HintScheme::None => vec![Place::Any; 4],
        HintScheme::TopLevelQuarters => {
            let active = topo.active_sockets();
            (0..4)
                .map(|i| active.get(i).map(|&s| Place::Socket(s)).unwrap_or(Place::Any))
                .collect()
        }
        HintScheme::Custom(places) => {
            let mut v = places.clone();
            v.resize(4, Place::Any);
            v
        }
    }
}

/// Contiguous quarter ranges of `count` blocks starting at `base`, mapped
/// onto the partition places in order.
pub(crate) fn quarter_ranges(
    base: u32,
    count: u32,
    places: &[Place],
) -> Vec<(std::ops::Range<u32>, Place)> {
    let per = count.div_ceil(4);
    (0..4)
        .map(|i| {
            let lo = base + (i * per).min(count);
            let hi = base + ((i + 1) * per).min(count);
            (lo..hi, places[i as usize])
        })
        .collect()
}

/// Build a benchmark instance for this topology.
pub fn build(spec: &BenchmarkSpec, topo: &Topology) -> Result<BuiltBenchmark> {
    spec.validate()?;
    match spec.name {
        BenchmarkName::Cilksort => cilksort::build(spec, topo),
        BenchmarkName::Heat => heat::build(spec, topo),
        BenchmarkName::Strassen => strassen::build(spec, topo),
        BenchmarkName::Lu => lu::build(spec, topo),
        BenchmarkName::Scan => scan::build(spec, topo),
        BenchmarkName::CgLite => cg::build(spec, topo),
    }
}

/// Deterministic input generator shared by the benchmark builders.
pub(crate) fn gen_i64(seed: u64, n: usize, range: i64) -> Vec<i64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(0..range)).collect()
}

/// Small integers as f64 so tree reductions re-associate exactly.
pub(crate) fn gen_small_f64(seed: u64, n: usize, range: u32) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(0..range) as f64).collect()
}
