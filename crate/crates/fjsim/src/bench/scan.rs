//! Parallel prefix sum: an upsweep of tile sums, a sequential scan of the
//! per-tile partials, and a downsweep rescanning each tile with its offset.
//! The forward and backward passes touch every block from whichever worker
//! gets the work, so the kernel has little locality to exploit.

use crate::dag::DagBuilder;
use crate::error::Result;
use crate::layout::PlacementPolicy;
use crate::payload::Payload;
use crate::topology::BlockId;

use super::{gen_small_f64, BenchmarkSpec, BuiltBenchmark, Oracle};

pub fn build(spec: &BenchmarkSpec, _topo: &crate::topology::Topology) -> Result<BuiltBenchmark> {
    let n = spec.n;
    let base = spec.base_case.min(n);
    let nt = n.div_ceil(base); // tile count

    // Small integers: every partial sum is exact in f64, so the parallel
    // regrouping is bitwise identical to the sequential scan.
    let input = gen_small_f64(spec.data_seed, n, 16);

    let mut arena = crate::payload::DataArena::new();
    let data = arena.alloc_f64(input.clone());
    // Slot 0 stays zero so the inclusive scan of [0, s_0, .., s_{nt-1}]
    // yields each tile's exclusive offset at its own index.
    let partials = arena.alloc_f64(vec![0.0; nt + 1]);

    let tile_block = |i: usize| -> BlockId { i as u32 };
    let partials_block: BlockId = nt as u32;

    let tile_range = |i: usize| {
        let lo = i * base;
        let hi = ((i + 1) * base).min(n);
        (lo, hi)
    };

    let dag = DagBuilder::build(|bd| {
        bd.declare_blocks(nt as u32 + 1);
        // Upsweep: tile sums into partials[i + 1].
        bd.call(|bd| {
            tree(bd, 0, nt, &mut |bd, i| {
                let (lo, hi) = tile_range(i);
                bd.work_payload(
                    (hi - lo) as u64,
                    vec![tile_block(i), partials_block],
                    Payload::SumRun {
                        buf: data,
                        lo,
                        hi,
                        out: partials,
                        out_idx: i + 1,
                    },
                );
            });
        });
        // Exclusive offsets by one sequential scan over the partials.
        bd.work_payload(
            nt as u64,
            vec![partials_block],
            Payload::ScanSeq {
                buf: partials,
                lo: 0,
                hi: nt + 1,
            },
        );
        // Downsweep: rescan each tile seeded with its offset.
        bd.call(|bd| {
            tree(bd, 0, nt, &mut |bd, i| {
                let (lo, hi) = tile_range(i);
                bd.work_payload(
                    (hi - lo) as u64,
                    vec![tile_block(i), partials_block],
                    Payload::ScanRunOffset {
                        buf: data,
                        lo,
                        hi,
                        offsets: partials,
                        idx: i,
                    },
                );
            });
        });
    })?;

    let mut expect = input;
    let mut acc = 0.0;
    for x in &mut expect {
        acc += *x;
        *x = acc;
    }

    Ok(BuiltBenchmark {
        dag,
        arena,
        placement: PlacementPolicy::FirstTouch,
        output_bufs: vec![data],
        oracle: Oracle::F64Equals { buf: data, expect },
    })
}

/// Balanced spawn tree over tile indices [lo, hi).
fn tree(bd: &mut DagBuilder, lo: usize, hi: usize, leaf: &mut dyn FnMut(&mut DagBuilder, usize)) {
    if hi - lo == 1 {
        leaf(bd, lo);
        return;
    }
    let mid = (lo + hi) / 2;
    bd.spawn(|bd| tree(bd, lo, mid, leaf));
    bd.call(|bd| tree(bd, mid, hi, leaf));
    bd.sync();
}
