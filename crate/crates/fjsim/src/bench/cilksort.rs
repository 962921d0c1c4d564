//! Parallel mergesort with parallel merge.
//!
//! The computation tree is materialized ahead of execution, so merge split
//! points are resolved at build time by executing each emitted payload
//! eagerly against a shadow arena (build order is elision order, which is
//! exactly the sequential semantics).

use crate::dag::DagBuilder;
use crate::error::Result;
use crate::layout::PlacementPolicy;
use crate::payload::{BufId, DataArena, Payload};
use crate::topology::{BlockId, Place, Topology};

use super::{gen_i64, partition_places, BenchmarkSpec, BuiltBenchmark, HintScheme, Oracle};

struct Ctx {
    shadow: DataArena,
    a: BufId,
    b: BufId,
    base: usize,
    /// Block id bases for the two buffers.
    a_blocks: u32,
    b_blocks: u32,
}

impl Ctx {
    fn buf_base(&self, buf: BufId) -> u32 {
        if buf == self.a {
            self.a_blocks
        } else {
            self.b_blocks
        }
    }

    fn range_blocks(&self, buf: BufId, lo: usize, hi: usize) -> Vec<BlockId> {
        if lo >= hi {
            return Vec::new();
        }
        let base = self.buf_base(buf);
        (lo / self.base..=(hi - 1) / self.base)
            .map(|t| base + t as u32)
            .collect()
    }

    fn emit(&mut self, b: &mut DagBuilder, dur: u64, blocks: Vec<BlockId>, p: Payload) {
        p.execute(&self.shadow);
        b.work_payload(dur.max(1), blocks, p);
    }
}

pub fn build(spec: &BenchmarkSpec, topo: &Topology) -> Result<BuiltBenchmark> {
    let n = spec.n;
    let input = gen_i64(spec.data_seed, n, 1 << 30);
    let mut expected = input.clone();
    expected.sort_unstable();

    let mut shadow = DataArena::new();
    let a = shadow.alloc_i64(input.clone());
    let b_buf = shadow.alloc_i64(vec![0; n]);
    let nb = n.div_ceil(spec.base_case) as u32;
    let mut ctx = Ctx {
        shadow,
        a,
        b: b_buf,
        base: spec.base_case,
        a_blocks: 0,
        b_blocks: nb,
    };

    let places = partition_places(&spec.hints, topo);
    let hinted = spec.hints != HintScheme::None;

    let dag = DagBuilder::build(|bd| {
        bd.declare_blocks(2 * nb);
        let (buf_a, buf_b) = (ctx.a, ctx.b);
        if hinted && n >= 4 * spec.base_case {
            // Four hinted quarter-sorts in place, pair merges into the temp
            // buffer, final merge back.
            let q = [0, n / 4, n / 2, 3 * n / 4, n];
            for i in 0..3 {
                bd.set_locality(places[i]);
                bd.spawn(|bd| msort(&mut ctx, bd, q[i], q[i + 1], true));
            }
            bd.set_locality(places[3]);
            bd.call(|bd| msort(&mut ctx, bd, q[3], q[4], true));
            bd.set_locality(Place::Any);
            bd.sync();
            bd.set_locality(places[0]);
            bd.spawn(|bd| pmerge(&mut ctx, bd, buf_a, q[0], q[1], q[1], q[2], buf_b, q[0]));
            bd.set_locality(places[2]);
            bd.call(|bd| pmerge(&mut ctx, bd, buf_a, q[2], q[3], q[3], q[4], buf_b, q[2]));
            bd.set_locality(Place::Any);
            bd.sync();
            pmerge(&mut ctx, bd, buf_b, 0, n / 2, n / 2, n, buf_a, 0);
        } else {
            msort(&mut ctx, bd, 0, n, true);
        }
    })?;

    let placement = if hinted {
        PlacementPolicy::Partitioned(
            super::quarter_ranges(0, nb, &places)
                .into_iter()
                .chain(super::quarter_ranges(nb, nb, &places))
                .collect(),
        )
    } else {
        PlacementPolicy::FirstTouch
    };

    let mut arena = DataArena::new();
    let a_out = arena.alloc_i64(input);
    debug_assert_eq!(a_out, a);
    arena.alloc_i64(vec![0; n]);

    Ok(BuiltBenchmark {
        dag,
        arena,
        placement,
        output_bufs: vec![a],
        oracle: Oracle::I64Equals { buf: a, expect: expected },
    })
}

/// Sort [lo, hi) of the primary buffer; the result lands in the primary
/// buffer when `into_a`, in the temp buffer otherwise.
fn msort(ctx: &mut Ctx, bd: &mut DagBuilder, lo: usize, hi: usize, into_a: bool) {
    let len = hi - lo;
    let (a, b) = (ctx.a, ctx.b);
    if len <= ctx.base {
        let blocks = ctx.range_blocks(a, lo, hi);
        ctx.emit(
            bd,
            4 * len as u64,
            blocks,
            Payload::SortRun { buf: a, lo, hi },
        );
        if !into_a {
            let mut blocks = ctx.range_blocks(a, lo, hi);
            blocks.extend(ctx.range_blocks(b, lo, hi));
            ctx.emit(
                bd,
                len as u64,
                blocks,
                Payload::CopyRun {
                    src: a,
                    dst: b,
                    lo,
                    hi,
                    dst_lo: lo,
                },
            );
        }
        return;
    }
    let mid = lo + len / 2;
    bd.spawn(|bd| msort(ctx, bd, lo, mid, !into_a));
    bd.call(|bd| msort(ctx, bd, mid, hi, !into_a));
    bd.sync();
    let (src, dst) = if into_a { (b, a) } else { (a, b) };
    pmerge(ctx, bd, src, lo, mid, mid, hi, dst, lo);
}

/// Merge sorted src[a_lo..a_hi) and src[b_lo..b_hi) into dst starting at out.
#[allow(clippy::too_many_arguments)]
fn pmerge(
    ctx: &mut Ctx,
    bd: &mut DagBuilder,
    src: BufId,
    a_lo: usize,
    a_hi: usize,
    b_lo: usize,
    b_hi: usize,
    dst: BufId,
    out: usize,
) {
    let total = (a_hi - a_lo) + (b_hi - b_lo);
    if total <= ctx.base {
        let mut blocks = ctx.range_blocks(src, a_lo, a_hi);
        blocks.extend(ctx.range_blocks(src, b_lo, b_hi));
        blocks.extend(ctx.range_blocks(dst, out, out + total));
        blocks.dedup();
        ctx.emit(
            bd,
            total as u64,
            blocks,
            Payload::MergeRuns {
                src,
                a_lo,
                a_hi,
                b_lo,
                b_hi,
                dst,
                out,
            },
        );
        return;
    }
    // Split the longer run at its midpoint and the other at the matching
    // position, found in the shadow data (sorted halves already computed).
    let data = ctx.shadow.i64_vec(src);
    let (ma, mb) = if a_hi - a_lo >= b_hi - b_lo {
        let ma = (a_lo + a_hi) / 2;
        (ma, lower_bound(&data, b_lo, b_hi, data[ma]))
    } else {
        let mb = (b_lo + b_hi) / 2;
        (lower_bound(&data, a_lo, a_hi, data[mb]), mb)
    };
    let out2 = out + (ma - a_lo) + (mb - b_lo);
    bd.spawn(|bd| pmerge(ctx, bd, src, a_lo, ma, b_lo, mb, dst, out));
    bd.call(|bd| pmerge(ctx, bd, src, ma, a_hi, mb, b_hi, dst, out2));
    bd.sync();
}

fn lower_bound(data: &[i64], lo: usize, hi: usize, key: i64) -> usize {
    let mut lo = lo;
    let mut hi = hi;
    while lo < hi {
        let mid = (lo + hi) / 2;
        if data[mid] < key {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::BenchmarkName;
    use crate::sim::{simulate, SchedConfig, SchedulerKind};
    use crate::topology::WorkerPlacement;

    #[test]
    fn build_time_shadow_equals_oracle() {
        let mut spec = BenchmarkSpec::new(BenchmarkName::Cilksort);
        spec.n = 4096;
        spec.base_case = 256;
        let topo = Topology::new(2, 2, 4, WorkerPlacement::Packed).unwrap();
        let built = build(&spec, &topo).unwrap();
        // Execute serially through the simulator at P=1 and verify.
        let cfg = SchedConfig {
            scheduler: SchedulerKind::Classic,
            ..SchedConfig::default()
        };
        let t1 = Topology::new(4, 2, 1, WorkerPlacement::Packed).unwrap();
        simulate(&built.dag, &t1, &cfg, None, Some(&built.arena)).unwrap();
        built.verify().unwrap();
    }

    #[test]
    fn parallel_run_sorts_and_matches_serial_checksum() {
        let mut spec = BenchmarkSpec::new(BenchmarkName::Cilksort);
        spec.n = 4096;
        spec.base_case = 128;
        spec.hints = HintScheme::TopLevelQuarters;
        let topo = Topology::new(4, 2, 8, WorkerPlacement::Packed).unwrap();

        let serial = build(&spec, &topo).unwrap();
        let t1 = Topology::new(4, 2, 1, WorkerPlacement::Packed).unwrap();
        let cfg = SchedConfig::default();
        simulate(&serial.dag, &t1, &cfg, None, Some(&serial.arena)).unwrap();
        serial.verify().unwrap();
        let want = serial.checksum();

        for kind in [SchedulerKind::Classic, SchedulerKind::NumaWs] {
            let built = build(&spec, &topo).unwrap();
            let cfg = SchedConfig {
                scheduler: kind,
                seed: 7,
                ..SchedConfig::default()
            };
            simulate(&built.dag, &topo, &cfg, None, Some(&built.arena)).unwrap();
            built.verify().unwrap();
            assert_eq!(built.checksum(), want, "checksum differs under {kind:?}");
        }
    }
}
