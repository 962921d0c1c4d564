//! Seeded random fork-join computations with controlled work and
//! parallelism, used by the scheduler bound checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::work_span;
use crate::dag::{ComputationDag, DagBuilder};
use crate::error::Result;

/// Generate a random binary fork-join tree with total work near
/// `target_work` and parallelism at least `min_parallelism`.
///
/// Structure is drawn once from the seed; a second pass rescales leaf
/// durations so the total work lands in the target band.
pub fn random_fork_join(seed: u64, target_work: u64, min_parallelism: f64) -> Result<ComputationDag> {
    let depth = 12usize;
    let build_with = |scale: u64| -> Result<ComputationDag> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DagBuilder::build(|b| {
            gen(b, &mut rng, depth, scale);
        })
    };
    let probe = build_with(1)?;
    let t1 = work_span(&probe, 0)?.t1;
    let scale = (target_work as f64 / t1 as f64).round().max(1.0) as u64;
    let dag = if scale > 1 { build_with(scale)? } else { probe };
    let ws = work_span(&dag, 0)?;
    debug_assert!(
        ws.parallelism >= min_parallelism,
        "generated parallelism {} below {min_parallelism} (seed {seed})",
        ws.parallelism
    );
    Ok(dag)
}

fn gen(b: &mut DagBuilder, rng: &mut ChaCha8Rng, depth: usize, scale: u64) {
    if depth == 0 {
        b.work(rng.gen_range(16..=48) * scale, vec![]);
        return;
    }
    // A little pre-spawn work some of the time keeps trees irregular.
    if rng.gen_bool(0.3) {
        b.work(rng.gen_range(1..=3) * scale, vec![]);
    }
    // Occasionally drop a level on one side.
    let left = depth - 1;
    let right = if depth > 2 && rng.gen_bool(0.15) {
        depth - 2
    } else {
        depth - 1
    };
    b.spawn(|b| gen(b, rng, left, scale));
    b.call(|b| gen(b, rng, right, scale));
    b.sync();
    if rng.gen_bool(0.3) {
        b.work(rng.gen_range(1..=3) * scale, vec![]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_dags_hit_the_work_and_parallelism_targets() {
        for seed in 0..10 {
            let dag = random_fork_join(seed, 100_000, 320.0).unwrap();
            let ws = work_span(&dag, 0).unwrap();
            assert!(
                ws.t1 > 40_000 && ws.t1 < 250_000,
                "seed {seed}: t1 = {}",
                ws.t1
            );
            assert!(
                ws.parallelism >= 320.0,
                "seed {seed}: parallelism = {}",
                ws.parallelism
            );
        }
    }

    #[test]
    fn generation_is_deterministic_in_the_seed() {
        let a = random_fork_join(5, 100_000, 100.0).unwrap();
        let b = random_fork_join(5, 100_000, 100.0).unwrap();
        assert_eq!(
            crate::dag_text::export(&a).unwrap(),
            crate::dag_text::export(&b).unwrap()
        );
    }
}
