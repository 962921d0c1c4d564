//! Recursive blocked LU decomposition (no pivoting) of a diagonally dominant
//! matrix, in place: factor the top-left quadrant, solve the two off-diagonal
//! panels in parallel, subtract their product from the trailing quadrant with
//! a parallel recursive multiply, then recurse on it.

use crate::dag::DagBuilder;
use crate::error::Result;
use crate::layout::{tile_blocks, ArrayLayout, PlacementPolicy};
use crate::payload::{DataArena, MatOp, MatView, Payload};
use crate::topology::{BlockId, Topology};

use super::{BenchmarkSpec, BuiltBenchmark, Oracle};

struct Ctx {
    base: usize,
    layout: ArrayLayout,
    n: usize,
}

impl Ctx {
    fn view_blocks(&self, v: MatView, m: usize) -> Vec<BlockId> {
        let b = self.base;
        let span = (m / b).max(1);
        let t0 = (v.row as usize / b, v.col as usize / b);
        let mut out = Vec::new();
        for ti in t0.0..t0.0 + span {
            for tj in t0.1..t0.1 + span {
                out.extend(tile_blocks(self.layout, self.n, b, ti, tj, 0));
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

pub fn build(spec: &BenchmarkSpec, _topo: &Topology) -> Result<BuiltBenchmark> {
    let n = spec.n;
    // Diagonally dominant input keeps unpivoted LU stable.
    let mut a_data = super::gen_small_f64(spec.data_seed, n * n, 8);
    for i in 0..n {
        a_data[i * n + i] += 8.0 * n as f64;
    }

    let mut arena = DataArena::new();
    let a_buf = arena.alloc_f64(a_data.clone());
    let av = MatView::whole(a_buf, n as u32);
    let ctx = Ctx {
        base: spec.base_case,
        layout: spec.layout,
        n,
    };

    let dag = DagBuilder::build(|bd| {
        bd.declare_blocks(((n / spec.base_case).max(1) as u32).pow(2));
        lu(&ctx, bd, av, n);
    })?;

    // Reference: the same factorization is checked structurally, L * U must
    // reproduce the original matrix.
    Ok(BuiltBenchmark {
        dag,
        arena,
        placement: PlacementPolicy::FirstTouch,
        output_bufs: vec![a_buf],
        oracle: Oracle::LuProduct {
            buf: a_buf,
            original: a_data,
            n,
            rel_tol: 1e-9,
        },
    })
}

fn lu(ctx: &Ctx, bd: &mut DagBuilder, a: MatView, m: usize) {
    if m <= ctx.base {
        bd.work_payload(
            ((m * m * m / 16) as u64).max(1),
            ctx.view_blocks(a, m),
            Payload::LuBase { a, n: m },
        );
        return;
    }
    let h = (m / 2) as u32;
    let m2 = m / 2;
    let a11 = a;
    let a12 = a.shifted(0, h);
    let a21 = a.shifted(h, 0);
    let a22 = a.shifted(h, h);

    lu(ctx, bd, a11, m2);
    bd.spawn(|bd| trsm_lower(ctx, bd, a11, a12, m2));
    bd.call(|bd| trsm_upper(ctx, bd, a11, a21, m2));
    bd.sync();
    matmul_sub(ctx, bd, a21, a12, a22, m2);
    lu(ctx, bd, a22, m2);
}

/// a12 := L(a11)^-1 a12, recursing on columns of a12.
fn trsm_lower(ctx: &Ctx, bd: &mut DagBuilder, l: MatView, a: MatView, m: usize) {
    if m <= ctx.base {
        let mut blocks = ctx.view_blocks(l, m);
        blocks.extend(ctx.view_blocks(a, m));
        blocks.sort_unstable();
        blocks.dedup();
        bd.work_payload(
            ((m * m * m / 32) as u64).max(1),
            blocks,
            Payload::TrsmLower { l, a, n: m },
        );
        return;
    }
    let h = (m / 2) as u32;
    let m2 = m / 2;
    let (l11, l21, l22) = (l, l.shifted(h, 0), l.shifted(h, h));
    // Column panels of a solve independently.
    for ac in [a, a.shifted(0, h)] {
        bd.spawn(move |bd| {
            let a_top = ac;
            let a_bot = ac.shifted(h, 0);
            trsm_lower(ctx, bd, l11, a_top, m2);
            matmul_sub(ctx, bd, l21, a_top, a_bot, m2);
            trsm_lower(ctx, bd, l22, a_bot, m2);
        });
    }
    bd.sync();
}

/// a21 := a21 U(a11)^-1, recursing on rows of a21.
fn trsm_upper(ctx: &Ctx, bd: &mut DagBuilder, u: MatView, a: MatView, m: usize) {
    if m <= ctx.base {
        let mut blocks = ctx.view_blocks(u, m);
        blocks.extend(ctx.view_blocks(a, m));
        blocks.sort_unstable();
        blocks.dedup();
        bd.work_payload(
            ((m * m * m / 32) as u64).max(1),
            blocks,
            Payload::TrsmUpper { u, a, n: m },
        );
        return;
    }
    let h = (m / 2) as u32;
    let m2 = m / 2;
    let (u11, u12, u22) = (u, u.shifted(0, h), u.shifted(h, h));
    for ar in [a, a.shifted(h, 0)] {
        bd.spawn(move |bd| {
            let a_left = ar;
            let a_right = ar.shifted(0, h);
            trsm_upper(ctx, bd, u11, a_left, m2);
            matmul_sub(ctx, bd, a_left, u12, a_right, m2);
            trsm_upper(ctx, bd, u22, a_right, m2);
        });
    }
    bd.sync();
}

/// c -= a * b with four-way parallel recursion over c's quadrants.
fn matmul_sub(ctx: &Ctx, bd: &mut DagBuilder, a: MatView, b: MatView, c: MatView, m: usize) {
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
                set: false,
                op: MatOp::Sub,
            },
        );
        return;
    }
    let h = (m / 2) as u32;
    let m2 = m / 2;
    for (i, j) in [(0u32, 0u32), (0, 1), (1, 0), (1, 1)] {
        let cq = c.shifted(i * h, j * h);
        let a1 = a.shifted(i * h, 0);
        let a2 = a.shifted(i * h, h);
        let b1 = b.shifted(0, j * h);
        let b2 = b.shifted(h, j * h);
        let body = move |ctx: &Ctx, bd: &mut DagBuilder| {
            matmul_sub(ctx, bd, a1, b1, cq, m2);
            matmul_sub(ctx, bd, a2, b2, cq, m2);
        };
        if (i, j) == (1, 1) {
            bd.call(|bd| body(ctx, bd));
        } else {
            bd.spawn(|bd| body(ctx, bd));
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
    fn lu_factors_reproduce_the_matrix() {
        let mut spec = BenchmarkSpec::new(BenchmarkName::Lu);
        spec.n = 64;
        spec.base_case = 16;
        let topo = Topology::new(2, 2, 4, WorkerPlacement::Packed).unwrap();
        for kind in [SchedulerKind::Classic, SchedulerKind::NumaWs] {
            let built = build(&spec, &topo).unwrap();
            let cfg = SchedConfig {
                scheduler: kind,
                seed: 8,
                ..SchedConfig::default()
            };
            simulate(&built.dag, &topo, &cfg, None, Some(&built.arena)).unwrap();
            built.verify().unwrap();
        }
    }
}
