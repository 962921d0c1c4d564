//! Strassen matrix multiplication: seven recursive half-size products built
//! from ten quadrant sums, with temporaries allocated per recursion node.
//!
//! With quarter hints the top level switches to the eight-way classical
//! split, which pins each output quadrant's pair of products to one socket
//! at the price of the extra eighth product.

use crate::dag::DagBuilder;
use crate::error::Result;
use crate::layout::{tile_blocks, ArrayLayout, PlacementPolicy};
use crate::payload::{DataArena, MatOp, MatView, Payload};
use crate::topology::{BlockId, Place, Topology};

use super::{partition_places, quarter_ranges, BenchmarkSpec, BuiltBenchmark, HintScheme, Oracle};

struct Ctx {
    base: usize,
    layout: ArrayLayout,
    arena: DataArena,
    /// Buffer id -> (matrix side, first block id).
    mats: Vec<(usize, u32)>,
    next_block: u32,
}

impl Ctx {
    fn register(&mut self, side: usize, data: Vec<f64>) -> MatView {
        let buf = self.arena.alloc_f64(data);
        let tiles = (side / self.base).max(1) as u32;
        self.mats.push((side, self.next_block));
        self.next_block += tiles * tiles;
        debug_assert_eq!(buf as usize, self.mats.len() - 1);
        MatView::whole(buf, side as u32)
    }

    fn temp(&mut self, side: usize) -> MatView {
        self.register(side, vec![0.0; side * side])
    }

    /// Blocks covered by an m x m view (tile aligned by construction).
    fn view_blocks(&self, v: MatView, m: usize) -> Vec<BlockId> {
        let (side, base_block) = self.mats[v.buf as usize];
        let b = self.base.min(side);
        let t0 = (v.row as usize / b, v.col as usize / b);
        let span = (m / b).max(1);
        let mut out = Vec::new();
        for ti in t0.0..t0.0 + span {
            for tj in t0.1..t0.1 + span {
                out.extend(tile_blocks(self.layout, side, b, ti, tj, base_block));
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    fn add(&mut self, bd: &mut DagBuilder, a: MatView, b: MatView, c: MatView, m: usize, op: MatOp) {
        let mut blocks = self.view_blocks(a, m);
        blocks.extend(self.view_blocks(b, m));
        blocks.extend(self.view_blocks(c, m));
        blocks.sort_unstable();
        blocks.dedup();
        bd.work_payload(
            ((m * m / 16) as u64).max(1),
            blocks,
            Payload::MatAdd { a, b, c, n: m, op },
        );
    }
}

pub fn build(spec: &BenchmarkSpec, topo: &Topology) -> Result<BuiltBenchmark> {
    let n = spec.n;
    let a_data = super::gen_small_f64(spec.data_seed, n * n, 8);
    let b_data = super::gen_small_f64(spec.data_seed.wrapping_add(1), n * n, 8);

    let mut ctx = Ctx {
        base: spec.base_case,
        layout: spec.layout,
        arena: DataArena::new(),
        mats: Vec::new(),
        next_block: 0,
    };
    let av = ctx.register(n, a_data.clone());
    let bv = ctx.register(n, b_data.clone());
    let cv = ctx.register(n, vec![0.0; n * n]);

    let places = partition_places(&spec.hints, topo);
    let top8 = spec.hints != HintScheme::None && n > spec.base_case;

    let dag = DagBuilder::build(|bd| {
        if top8 {
            let m = n / 2;
            let quads = |v: MatView| {
                [
                    v,
                    v.shifted(0, m as u32),
                    v.shifted(m as u32, 0),
                    v.shifted(m as u32, m as u32),
                ]
            };
            let aq = quads(av);
            let bq = quads(bv);
            let cq = quads(cv);
            // C_ij = A_i1 B_1j + A_i2 B_2j, one output quadrant per place.
            for (g, &(i, j)) in [(0, 0), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
                let (a1, a2) = (aq[i * 2], aq[i * 2 + 1]);
                let (b1, b2) = (bq[j], bq[2 + j]);
                let c = cq[i * 2 + j];
                bd.set_locality(places[g]);
                let body = |ctx: &mut Ctx, bd: &mut DagBuilder| {
                    let p = ctx.temp(m);
                    bd.spawn(|bd| strassen(ctx, bd, a1, b1, c, m));
                    bd.call(|bd| strassen(ctx, bd, a2, b2, p, m));
                    bd.sync();
                    ctx.add(bd, c, p, c, m, MatOp::Add);
                };
                if g < 3 {
                    bd.spawn(|bd| body(&mut ctx, bd));
                } else {
                    bd.call(|bd| body(&mut ctx, bd));
                }
            }
            bd.set_locality(Place::Any);
            bd.sync();
        } else {
            strassen(&mut ctx, bd, av, bv, cv, n);
        }
        bd.declare_blocks(ctx.next_block);
    })?;

    // Naive cubic reference on the original inputs.
    let mut expect = vec![0.0f64; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a_data[i * n + k];
            for j in 0..n {
                expect[i * n + j] += aik * b_data[k * n + j];
            }
        }
    }

    let placement = if spec.hints != HintScheme::None {
        let tiles = ((n / spec.base_case).max(1) as u32).pow(2);
        let mut ranges = Vec::new();
        for mat in 0..3u32 {
            ranges.extend(quarter_ranges(mat * tiles, tiles, &places));
        }
        PlacementPolicy::Partitioned(ranges)
    } else {
        PlacementPolicy::FirstTouch
    };

    let c_buf = cv.buf;
    Ok(BuiltBenchmark {
        dag,
        arena: ctx.arena,
        placement,
        output_bufs: vec![c_buf],
        oracle: Oracle::F64Close {
            buf: c_buf,
            expect,
            rel_tol: 1e-6,
        },
    })
}

fn strassen(ctx: &mut Ctx, bd: &mut DagBuilder, a: MatView, b: MatView, c: MatView, m: usize) {
    if m <= ctx.base {
        let mut blocks = ctx.view_blocks(a, m);
        blocks.extend(ctx.view_blocks(b, m));
        blocks.extend(ctx.view_blocks(c, m));
        blocks.sort_unstable();
        blocks.dedup();
        bd.work_payload(
            ((m * m * m / 16) as u64).max(1),
            blocks,
            Payload::MatMul {
                a,
                b,
                c,
                n: m,
                set: true,
                op: MatOp::Add,
            },
        );
        return;
    }
    let h = (m / 2) as u32;
    let m2 = m / 2;
    let (a11, a12, a21, a22) = (a, a.shifted(0, h), a.shifted(h, 0), a.shifted(h, h));
    let (b11, b12, b21, b22) = (b, b.shifted(0, h), b.shifted(h, 0), b.shifted(h, h));
    let (c11, c12, c21, c22) = (c, c.shifted(0, h), c.shifted(h, 0), c.shifted(h, h));

    let t: Vec<MatView> = (0..10).map(|_| ctx.temp(m2)).collect();
    let mm: Vec<MatView> = (0..7).map(|_| ctx.temp(m2)).collect();

    // Ten quadrant sums, in parallel.
    let sums: [(MatView, MatView, MatView, MatOp); 10] = [
        (a11, a22, t[0], MatOp::Add), // T0 = A11+A22
        (b11, b22, t[1], MatOp::Add), // T1 = B11+B22
        (a21, a22, t[2], MatOp::Add), // T2 = A21+A22
        (b12, b22, t[3], MatOp::Sub), // T3 = B12-B22
        (b21, b11, t[4], MatOp::Sub), // T4 = B21-B11
        (a11, a12, t[5], MatOp::Add), // T5 = A11+A12
        (a21, a11, t[6], MatOp::Sub), // T6 = A21-A11
        (b11, b12, t[7], MatOp::Add), // T7 = B11+B12
        (a12, a22, t[8], MatOp::Sub), // T8 = A12-A22
        (b21, b22, t[9], MatOp::Add), // T9 = B21+B22
    ];
    for (i, &(x, y, z, op)) in sums.iter().enumerate() {
        if i < 9 {
            bd.spawn(|bd| ctx.add(bd, x, y, z, m2, op));
        } else {
            bd.call(|bd| ctx.add(bd, x, y, z, m2, op));
        }
    }
    bd.sync();

    // Seven recursive products.
    let prods: [(MatView, MatView, MatView); 7] = [
        (t[0], t[1], mm[0]),  // M1 = T0 * T1
        (t[2], b11, mm[1]),   // M2 = T2 * B11
        (a11, t[3], mm[2]),   // M3 = A11 * T3
        (a22, t[4], mm[3]),   // M4 = A22 * T4
        (t[5], b22, mm[4]),   // M5 = T5 * B22
        (t[6], t[7], mm[5]),  // M6 = T6 * T7
        (t[8], t[9], mm[6]),  // M7 = T8 * T9
    ];
    for (i, &(x, y, z)) in prods.iter().enumerate() {
        if i < 6 {
            bd.spawn(|bd| strassen(ctx, bd, x, y, z, m2));
        } else {
            bd.call(|bd| strassen(ctx, bd, x, y, z, m2));
        }
    }
    bd.sync();

    // Combine into the four output quadrants.
    let combos: [&[(MatView, MatView, MatOp)]; 4] = [
        // C11 = M1 + M4 - M5 + M7
        &[
            (mm[0], mm[3], MatOp::Add),
            (c11, mm[4], MatOp::Sub),
            (c11, mm[6], MatOp::Add),
        ],
        // C12 = M3 + M5
        &[(mm[2], mm[4], MatOp::Add)],
        // C21 = M2 + M4
        &[(mm[1], mm[3], MatOp::Add)],
        // C22 = M1 - M2 + M3 + M6
        &[
            (mm[0], mm[1], MatOp::Sub),
            (c22, mm[2], MatOp::Add),
            (c22, mm[5], MatOp::Add),
        ],
    ];
    let targets = [c11, c12, c21, c22];
    for (i, (steps, target)) in combos.iter().zip(targets.iter()).enumerate() {
        let target = *target;
        let steps: Vec<(MatView, MatView, MatOp)> = steps.to_vec();
        let body = move |ctx: &mut Ctx, bd: &mut DagBuilder| {
            for &(x, y, op) in &steps {
                ctx.add(bd, x, y, target, m2, op);
            }
        };
        if i < 3 {
            bd.spawn(|bd| body(&mut *ctx, bd));
        } else {
            bd.call(|bd| body(&mut *ctx, bd));
        }
    }
    bd.sync();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::BenchmarkName;
    use crate::sim::{simulate, SchedConfig, SchedulerKind};
    use crate::topology::WorkerPlacement;

    #[test]
    fn strassen_matches_naive_product() {
        let mut spec = BenchmarkSpec::new(BenchmarkName::Strassen);
        spec.n = 64;
        spec.base_case = 16;
        let topo = Topology::new(2, 2, 4, WorkerPlacement::Packed).unwrap();
        let built = build(&spec, &topo).unwrap();
        let cfg = SchedConfig {
            scheduler: SchedulerKind::Classic,
            seed: 5,
            ..SchedConfig::default()
        };
        simulate(&built.dag, &topo, &cfg, None, Some(&built.arena)).unwrap();
        built.verify().unwrap();
    }

    #[test]
    fn top_eight_way_variant_matches_too() {
        let mut spec = BenchmarkSpec::new(BenchmarkName::Strassen);
        spec.n = 64;
        spec.base_case = 16;
        spec.hints = HintScheme::TopLevelQuarters;
        let topo = Topology::new(4, 2, 8, WorkerPlacement::Packed).unwrap();
        let built = build(&spec, &topo).unwrap();
        let cfg = SchedConfig {
            scheduler: SchedulerKind::NumaWs,
            seed: 6,
            ..SchedConfig::default()
        };
        simulate(&built.dag, &topo, &cfg, None, Some(&built.arena)).unwrap();
        built.verify().unwrap();
    }

    #[test]
    fn eight_way_does_more_work_than_seven_way() {
        let mut s7 = BenchmarkSpec::new(BenchmarkName::Strassen);
        s7.n = 64;
        s7.base_case = 16;
        let mut s8 = s7.clone();
        s8.hints = HintScheme::TopLevelQuarters;
        let topo = Topology::new(4, 2, 8, WorkerPlacement::Packed).unwrap();
        let b7 = build(&s7, &topo).unwrap();
        let b8 = build(&s8, &topo).unwrap();
        let w7 = crate::analysis::work_span(&b7.dag, 0).unwrap().t1;
        let w8 = crate::analysis::work_span(&b8.dag, 0).unwrap().t1;
        assert!(w8 > w7, "eight-way trades work for locality ({w8} <= {w7})");
    }
}
