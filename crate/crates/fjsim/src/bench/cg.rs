//! Conjugate gradient on the 2D Laplacian stencil matrix (matrix-free SPD
//! system), with vectors split into four row bands. Every vector operation
//! and both dot-product reductions run band-parallel; the band structure
//! carries the locality hints and the data partitioning.

use crate::dag::DagBuilder;
use crate::error::{Error, Result};
use crate::layout::PlacementPolicy;
use crate::payload::{BufId, DataArena, Payload};
use crate::topology::{BlockId, Place, Topology};

use super::{gen_small_f64, partition_places, BenchmarkSpec, BuiltBenchmark, HintScheme, Oracle};

// Scalar slots.
const RS_OLD: usize = 0;
const RS_NEW: usize = 1;
const PAP: usize = 2;
const ALPHA: usize = 3;
const BETA: usize = 4;
const ONE: usize = 5;

// Buffer ids in allocation order.
const X: BufId = 0;
const B: BufId = 1;
const R: BufId = 2;
const P: BufId = 3;
const AP: BufId = 4;
const PARTIALS: BufId = 5;
const SCALARS: BufId = 6;

struct Cg {
    w: usize,
    n: usize,
    band: usize,
    base: usize,
    nb: u32,
    places: Vec<Place>,
}

impl Cg {
    fn partials_block(&self) -> BlockId {
        5 * self.nb
    }

    fn scalars_block(&self) -> BlockId {
        5 * self.nb + 1
    }

    fn range_blocks(&self, buf: BufId, lo: usize, hi: usize) -> Vec<BlockId> {
        (lo / self.base..=(hi - 1) / self.base)
            .map(|t| buf * self.nb + t as u32)
            .collect()
    }

    fn band_range(&self, i: usize) -> (usize, usize) {
        (i * self.band, (i + 1) * self.band)
    }

    /// Run `leaf(i)` for the four bands in parallel under the band hints.
    fn banded(&self, bd: &mut DagBuilder, leaf: &mut dyn FnMut(&Cg, &mut DagBuilder, usize)) {
        for i in 0..4 {
            bd.set_locality(self.places[i]);
            if i < 3 {
                bd.spawn(|bd| leaf(self, bd, i));
            } else {
                bd.call(|bd| leaf(self, bd, i));
            }
        }
        bd.set_locality(Place::Any);
        bd.sync();
    }

    /// partials[i] = band dots of a . b, reduced into scalars[out_idx] by a
    /// single strand (fixed combining order keeps the sum bitwise stable).
    fn dot_reduce(&self, bd: &mut DagBuilder, a: BufId, b: BufId, out_idx: usize) {
        self.banded(bd, &mut |cg, bd, i| {
            let (lo, hi) = cg.band_range(i);
            let mut blocks = cg.range_blocks(a, lo, hi);
            if a != b {
                blocks.extend(cg.range_blocks(b, lo, hi));
            }
            blocks.push(cg.partials_block());
            bd.work_payload(
                (((hi - lo) / 8).max(1)) as u64,
                blocks,
                Payload::DotRange {
                    a,
                    b,
                    lo,
                    hi,
                    out: PARTIALS,
                    out_idx: i,
                },
            );
        });
        bd.work_payload(
            1,
            vec![self.partials_block(), self.scalars_block()],
            Payload::SumRun {
                buf: PARTIALS,
                lo: 0,
                hi: 4,
                out: SCALARS,
                out_idx,
            },
        );
    }

    fn scalar_div(&self, bd: &mut DagBuilder, num_idx: usize, den_idx: usize, out_idx: usize) {
        bd.work_payload(
            1,
            vec![self.scalars_block()],
            Payload::ScalarDiv {
                num: SCALARS,
                num_idx,
                den: SCALARS,
                den_idx,
                out: SCALARS,
                out_idx,
            },
        );
    }
}

pub fn build(spec: &BenchmarkSpec, topo: &Topology) -> Result<BuiltBenchmark> {
    let w = spec.n;
    if w < 4 {
        return Err(Error::Config("cg_lite needs grid side >= 4".into()));
    }
    let n = w * w;
    let base = spec.base_case.clamp(w, n);
    let nb = n.div_ceil(base) as u32;

    let b_data = gen_small_f64(spec.data_seed, n, 8);

    let mut arena = DataArena::new();
    assert_eq!(arena.alloc_f64(vec![0.0; n]), X);
    assert_eq!(arena.alloc_f64(b_data.clone()), B);
    assert_eq!(arena.alloc_f64(vec![0.0; n]), R);
    assert_eq!(arena.alloc_f64(vec![0.0; n]), P);
    assert_eq!(arena.alloc_f64(vec![0.0; n]), AP);
    assert_eq!(arena.alloc_f64(vec![0.0; 4]), PARTIALS);
    let mut scalars_init = vec![0.0; 6];
    scalars_init[ONE] = 1.0;
    assert_eq!(arena.alloc_f64(scalars_init), SCALARS);

    let cg = Cg {
        w,
        n,
        band: n / 4,
        base,
        nb,
        places: partition_places(&spec.hints, topo),
    };

    let dag = DagBuilder::build(|bd| {
        bd.declare_blocks(5 * nb + 2);

        // r = b; p = b.
        cg.banded(bd, &mut |cg, bd, i| {
            let (lo, hi) = cg.band_range(i);
            for dst in [R, P] {
                let mut blocks = cg.range_blocks(B, lo, hi);
                blocks.extend(cg.range_blocks(dst, lo, hi));
                bd.work_payload(
                    (((hi - lo) / 8).max(1)) as u64,
                    blocks,
                    Payload::VecCopy {
                        src: B,
                        dst,
                        lo,
                        hi,
                        dst_lo: lo,
                    },
                );
            }
        });
        cg.dot_reduce(bd, R, R, RS_OLD);

        for _ in 0..spec.steps {
            bd.call(|bd| {
                // Ap = A p (with halo rows at band seams).
                cg.banded(bd, &mut |cg, bd, i| {
                    let (lo, hi) = cg.band_range(i);
                    let halo_lo = lo.saturating_sub(cg.w);
                    let halo_hi = (hi + cg.w).min(cg.n);
                    let mut blocks = cg.range_blocks(P, halo_lo, halo_hi);
                    blocks.extend(cg.range_blocks(AP, lo, hi));
                    bd.work_payload(
                        (((hi - lo) * 5 / 8).max(1)) as u64,
                        blocks,
                        Payload::SpmvLap {
                            x: P,
                            y: AP,
                            w: cg.w,
                            r0: lo,
                            r1: hi,
                        },
                    );
                });
                cg.dot_reduce(bd, P, AP, PAP);
                cg.scalar_div(bd, RS_OLD, PAP, ALPHA);
                // x += alpha p ; r -= alpha Ap.
                cg.banded(bd, &mut |cg, bd, i| {
                    let (lo, hi) = cg.band_range(i);
                    for (y, xv, scale) in [(X, P, 1.0), (R, AP, -1.0)] {
                        let mut blocks = cg.range_blocks(y, lo, hi);
                        blocks.extend(cg.range_blocks(xv, lo, hi));
                        blocks.push(cg.scalars_block());
                        bd.work_payload(
                            (((hi - lo) / 8).max(1)) as u64,
                            blocks,
                            Payload::AxpySlot {
                                y,
                                x: xv,
                                alpha: SCALARS,
                                alpha_idx: ALPHA,
                                scale,
                                lo,
                                hi,
                            },
                        );
                    }
                });
                cg.dot_reduce(bd, R, R, RS_NEW);
                cg.scalar_div(bd, RS_NEW, RS_OLD, BETA);
                cg.scalar_div(bd, RS_NEW, ONE, RS_OLD);
                // p = r + beta p.
                cg.banded(bd, &mut |cg, bd, i| {
                    let (lo, hi) = cg.band_range(i);
                    let mut blocks = cg.range_blocks(P, lo, hi);
                    blocks.extend(cg.range_blocks(R, lo, hi));
                    blocks.push(cg.scalars_block());
                    bd.work_payload(
                        (((hi - lo) / 8).max(1)) as u64,
                        blocks,
                        Payload::XpbySlot {
                            p: P,
                            r: R,
                            beta: SCALARS,
                            beta_idx: BETA,
                            lo,
                            hi,
                        },
                    );
                });
            });
        }
    })?;

    let placement = if spec.hints != HintScheme::None {
        let mut ranges = Vec::new();
        for vec_id in 0..5u32 {
            ranges.extend(super::quarter_ranges(vec_id * nb, nb, &cg.places));
        }
        PlacementPolicy::Partitioned(ranges)
    } else {
        PlacementPolicy::FirstTouch
    };

    Ok(BuiltBenchmark {
        dag,
        arena,
        placement,
        output_bufs: vec![X, R],
        oracle: Oracle::CgResidual {
            x: X,
            r: R,
            b: b_data,
            grid: w,
            factor: 0.9,
            // Enough iterations relative to the grid's condition number to
            // guarantee the 2-norm actually dropped.
            check_norm: 2 * spec.steps >= 3 * w,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::BenchmarkName;
    use crate::sim::{simulate, SchedConfig, SchedulerKind};
    use crate::topology::WorkerPlacement;

    #[test]
    fn cg_residual_tracks_and_converges() {
        let mut spec = BenchmarkSpec::new(BenchmarkName::CgLite);
        spec.n = 16;
        spec.steps = 24;
        spec.base_case = 64;
        let topo = Topology::new(4, 2, 8, WorkerPlacement::Packed).unwrap();
        for kind in [SchedulerKind::Classic, SchedulerKind::NumaWs] {
            let built = build(&spec, &topo).unwrap();
            let cfg = SchedConfig {
                scheduler: kind,
                seed: 77,
                ..SchedConfig::default()
            };
            simulate(&built.dag, &topo, &cfg, None, Some(&built.arena)).unwrap();
            built.verify().unwrap();
        }
    }

    #[test]
    fn hinted_build_partitions_every_vector() {
        let mut spec = BenchmarkSpec::new(BenchmarkName::CgLite);
        spec.n = 16;
        spec.steps = 4;
        spec.base_case = 64;
        spec.hints = HintScheme::TopLevelQuarters;
        let topo = Topology::new(4, 2, 8, WorkerPlacement::Spread).unwrap();
        let built = build(&spec, &topo).unwrap();
        match &built.placement {
            PlacementPolicy::Partitioned(ranges) => assert_eq!(ranges.len(), 20),
            other => panic!("expected partitioned placement, got {other:?}"),
        }
        let t1 = Topology::new(4, 2, 1, WorkerPlacement::Packed).unwrap();
        simulate(&built.dag, &t1, &SchedConfig::default(), None, Some(&built.arena)).unwrap();
        built.verify().unwrap();
    }
}
