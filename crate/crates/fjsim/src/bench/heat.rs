//! Jacobi-style heat diffusion over a 2D plane: double-buffered five-point
//! stencil stepped over tile quadrants. With quarter hints and partitioned
//! placement each socket keeps its quadrant's tiles warm; without them the
//! tiles migrate with whoever steals the work.

use crate::dag::DagBuilder;
use crate::error::Result;
use crate::layout::{tile_blocks, PlacementPolicy};
use crate::payload::Payload;
use crate::topology::{BlockId, Place, Topology};

use super::{gen_small_f64, partition_places, quarter_ranges, BenchmarkSpec, BuiltBenchmark, HintScheme, Oracle};

pub fn build(spec: &BenchmarkSpec, topo: &Topology) -> Result<BuiltBenchmark> {
    let n = spec.n;
    let b = spec.base_case;
    let t = n / b; // tiles per side
    let tiles = (t * t) as u32;
    let steps = spec.steps.max(1);

    let initial = gen_small_f64(spec.data_seed, n * n, 64);
    let places = partition_places(&spec.hints, topo);
    let hinted = spec.hints != HintScheme::None;
    let leaf_dur = ((b * b / 8) as u64).max(1);

    let plane_base = |plane: usize| plane as u32 * tiles;
    let tile_touch = |plane: usize, ti: usize, tj: usize| -> Vec<BlockId> {
        tile_blocks(spec.layout, n, b, ti, tj, plane_base(plane))
    };

    let mut arena = crate::payload::DataArena::new();
    let plane_a = arena.alloc_f64(initial.clone());
    let plane_b = arena.alloc_f64(initial.clone());

    let dag = DagBuilder::build(|bd| {
        bd.declare_blocks(2 * tiles);
        for step in 0..steps {
            let (src_plane, dst_plane) = if step % 2 == 0 { (0, 1) } else { (1, 0) };
            let (src, dst) = if step % 2 == 0 {
                (plane_a, plane_b)
            } else {
                (plane_b, plane_a)
            };
            bd.call(|bd| {
                // Four tile quadrants, each pinned to its partition's place.
                let half = t / 2;
                let quads = [
                    (0, half, 0, half),
                    (0, half, half, t),
                    (half, t, 0, half),
                    (half, t, half, t),
                ];
                for (q, &(r0, r1, c0, c1)) in quads.iter().enumerate() {
                    if r1 == r0 || c1 == c0 {
                        continue;
                    }
                    bd.set_locality(places[q]);
                    let emit = |bd: &mut DagBuilder| {
                        quad(
                            bd, n, b, src, dst, src_plane, dst_plane, r0, r1, c0, c1, leaf_dur,
                            &tile_touch,
                        )
                    };
                    if q < 3 {
                        bd.spawn(emit);
                    } else {
                        bd.call(emit);
                    }
                }
                bd.set_locality(Place::Any);
                bd.sync();
            });
        }
    })?;

    let placement = if hinted {
        PlacementPolicy::Partitioned(
            quarter_ranges(0, tiles, &places)
                .into_iter()
                .chain(quarter_ranges(tiles, tiles, &places))
                .collect(),
        )
    } else {
        PlacementPolicy::FirstTouch
    };

    // Sequential reference: identical per-cell arithmetic, plain loops.
    let mut ref_src = initial.clone();
    let mut ref_dst = initial.clone();
    for _ in 0..steps {
        for r in 0..n {
            for c in 0..n {
                let i = r * n + c;
                ref_dst[i] = if r == 0 || c == 0 || r == n - 1 || c == n - 1 {
                    ref_src[i]
                } else {
                    0.25 * (ref_src[i - n] + ref_src[i + n] + ref_src[i - 1] + ref_src[i + 1])
                };
            }
        }
        std::mem::swap(&mut ref_src, &mut ref_dst);
    }
    // After the final swap the result sits in ref_src.
    let final_buf = if steps % 2 == 0 { plane_a } else { plane_b };

    Ok(BuiltBenchmark {
        dag,
        arena,
        placement,
        output_bufs: vec![final_buf],
        oracle: Oracle::F64Equals {
            buf: final_buf,
            expect: ref_src,
        },
    })
}

/// Recursive quadrant split down to single tiles.
#[allow(clippy::too_many_arguments)]
fn quad(
    bd: &mut DagBuilder,
    n: usize,
    b: usize,
    src: u32,
    dst: u32,
    src_plane: usize,
    dst_plane: usize,
    r0: usize,
    r1: usize,
    c0: usize,
    c1: usize,
    leaf_dur: u64,
    tile_touch: &dyn Fn(usize, usize, usize) -> Vec<BlockId>,
) {
    if r1 - r0 == 1 && c1 - c0 == 1 {
        let (ti, tj) = (r0, c0);
        let mut blocks = tile_touch(src_plane, ti, tj);
        blocks.extend(tile_touch(dst_plane, ti, tj));
        bd.work_payload(
            leaf_dur,
            blocks,
            Payload::JacobiTile {
                src,
                dst,
                n,
                r0: ti * b,
                r1: (ti + 1) * b,
                c0: tj * b,
                c1: (tj + 1) * b,
            },
        );
        return;
    }
    // Split the longer axis in two.
    if r1 - r0 >= c1 - c0 {
        let mid = (r0 + r1) / 2;
        bd.spawn(|bd| quad(bd, n, b, src, dst, src_plane, dst_plane, r0, mid, c0, c1, leaf_dur, tile_touch));
        bd.call(|bd| quad(bd, n, b, src, dst, src_plane, dst_plane, mid, r1, c0, c1, leaf_dur, tile_touch));
    } else {
        let mid = (c0 + c1) / 2;
        bd.spawn(|bd| quad(bd, n, b, src, dst, src_plane, dst_plane, r0, r1, c0, mid, leaf_dur, tile_touch));
        bd.call(|bd| quad(bd, n, b, src, dst, src_plane, dst_plane, r0, r1, mid, c1, leaf_dur, tile_touch));
    }
    bd.sync();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::BenchmarkName;
    use crate::sim::{simulate, SchedConfig, SchedulerKind};
    use crate::topology::WorkerPlacement;

    fn small_spec() -> BenchmarkSpec {
        let mut spec = BenchmarkSpec::new(BenchmarkName::Heat);
        spec.n = 64;
        spec.base_case = 16;
        spec.steps = 6;
        spec
    }

    #[test]
    fn serial_run_matches_reference_bitwise() {
        let spec = small_spec();
        let topo = Topology::new(1, 1, 1, WorkerPlacement::Packed).unwrap();
        let built = build(&spec, &topo).unwrap();
        simulate(&built.dag, &topo, &SchedConfig::default(), None, Some(&built.arena)).unwrap();
        built.verify().unwrap();
    }

    #[test]
    fn parallel_hinted_run_matches_reference() {
        let mut spec = small_spec();
        spec.hints = HintScheme::TopLevelQuarters;
        let topo = Topology::new(4, 2, 8, WorkerPlacement::Spread).unwrap();
        let built = build(&spec, &topo).unwrap();
        let cfg = SchedConfig {
            scheduler: SchedulerKind::NumaWs,
            seed: 13,
            ..SchedConfig::default()
        };
        simulate(&built.dag, &topo, &cfg, None, Some(&built.arena)).unwrap();
        built.verify().unwrap();
    }

    #[test]
    fn odd_step_count_lands_in_the_other_plane() {
        let mut spec = small_spec();
        spec.steps = 5;
        let topo = Topology::new(1, 1, 1, WorkerPlacement::Packed).unwrap();
        let built = build(&spec, &topo).unwrap();
        simulate(&built.dag, &topo, &SchedConfig::default(), None, Some(&built.arena)).unwrap();
        built.verify().unwrap();
    }
}
