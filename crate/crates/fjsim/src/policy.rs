//! Victim-selection policy: uniform for the classic scheduler, locality-biased
//! for the NUMA-aware one.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::topology::Topology;

/// Locality-biased stealing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StealPolicy {
    /// Probability mass given to same-socket victims.
    pub local_bias: f64,
    /// Max mailbox deposit attempts per push event.
    pub push_threshold: usize,
}

impl Default for StealPolicy {
    fn default() -> Self {
        StealPolicy {
            local_bias: 0.7,
            push_threshold: 4,
        }
    }
}

/// Per-thief victim distribution: same-socket victims split `local_bias`
/// evenly, remote victims split the rest. Degenerate sockets renormalize.
#[derive(Debug, Clone)]
pub struct VictimTable {
    pub locals: Vec<usize>,
    pub remotes: Vec<usize>,
    /// Effective probability of picking a local victim.
    pub local_mass: f64,
}

impl VictimTable {
    pub fn new(thief: usize, topo: &Topology, local_bias: f64) -> Self {
        let my_socket = topo.worker_socket(thief);
        let mut locals = Vec::new();
        let mut remotes = Vec::new();
        for w in 0..topo.workers {
            if w == thief {
                continue;
            }
            if topo.worker_socket(w) == my_socket {
                locals.push(w);
            } else {
                remotes.push(w);
            }
        }
        let local_mass = if locals.is_empty() {
            0.0
        } else if remotes.is_empty() {
            1.0
        } else {
            local_bias
        };
        VictimTable {
            locals,
            remotes,
            local_mass,
        }
    }

    /// Uniform table (classic stealing) for comparison and the bias = uniform
    /// degenerate case.
    pub fn uniform(thief: usize, topo: &Topology) -> Self {
        let victims: Vec<usize> = (0..topo.workers).filter(|&w| w != thief).collect();
        VictimTable {
            local_mass: 0.0,
            locals: Vec::new(),
            remotes: victims,
        }
    }

    pub fn victim_count(&self) -> usize {
        self.locals.len() + self.remotes.len()
    }

    /// Probability of each victim, aligned with `victims()` order.
    pub fn probabilities(&self) -> Vec<(usize, f64)> {
        let mut out = Vec::with_capacity(self.victim_count());
        if !self.locals.is_empty() {
            let p = self.local_mass / self.locals.len() as f64;
            out.extend(self.locals.iter().map(|&w| (w, p)));
        }
        if !self.remotes.is_empty() {
            let p = (1.0 - self.local_mass) / self.remotes.len() as f64;
            out.extend(self.remotes.iter().map(|&w| (w, p)));
        }
        out
    }

    /// Smallest per-victim probability.
    pub fn min_probability(&self) -> f64 {
        self.probabilities()
            .iter()
            .map(|&(_, p)| p)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        debug_assert!(self.victim_count() > 0);
        if !self.locals.is_empty() && (self.remotes.is_empty() || rng.gen::<f64>() < self.local_mass)
        {
            self.locals[rng.gen_range(0..self.locals.len())]
        } else {
            self.remotes[rng.gen_range(0..self.remotes.len())]
        }
    }
}

/// The constant c such that every victim is picked with probability at least
/// 1/(cP). Infinite when some victim has probability zero (local_bias = 1.0
/// with remote victims present).
pub fn min_probability_constant(tables: &[VictimTable], workers: usize) -> f64 {
    let min_p = tables
        .iter()
        .filter(|t| t.victim_count() > 0)
        .map(|t| t.min_probability())
        .fold(f64::INFINITY, f64::min);
    if min_p <= 0.0 {
        f64::INFINITY
    } else {
        1.0 / (min_p * workers as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::WorkerPlacement;
    use rand::SeedableRng;

    fn topo_4x8() -> Topology {
        Topology::new(4, 8, 32, WorkerPlacement::Packed).unwrap()
    }

    #[test]
    fn biased_distribution_masses() {
        let topo = topo_4x8();
        let t = VictimTable::new(0, &topo, 0.7);
        assert_eq!(t.locals.len(), 7);
        assert_eq!(t.remotes.len(), 24);
        let probs = t.probabilities();
        let total: f64 = probs.iter().map(|&(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for &(w, p) in &probs {
            if w < 8 {
                assert!((p - 0.1).abs() < 1e-12, "local victim {w} got {p}");
            } else {
                assert!((p - 0.0125).abs() < 1e-12, "remote victim {w} got {p}");
            }
        }
    }

    #[test]
    fn uniform_bias_recovers_classic() {
        let topo = topo_4x8();
        let beta = 7.0 / 31.0;
        let t = VictimTable::new(0, &topo, beta);
        for (_, p) in t.probabilities() {
            assert!((p - 1.0 / 31.0).abs() < 1e-12);
        }
    }

    #[test]
    fn min_probability_constant_matches_hand_computation() {
        let topo = topo_4x8();
        let tables: Vec<VictimTable> = (0..32).map(|w| VictimTable::new(w, &topo, 0.7)).collect();
        let c = min_probability_constant(&tables, 32);
        // min p = 0.0125 = 1/80 = 1/(2.5 * 32)
        assert!((c - 2.5).abs() < 1e-9);
    }

    #[test]
    fn full_bias_yields_infinite_constant() {
        let topo = topo_4x8();
        let tables: Vec<VictimTable> = (0..32).map(|w| VictimTable::new(w, &topo, 1.0)).collect();
        assert!(min_probability_constant(&tables, 32).is_infinite());
    }

    #[test]
    fn lone_socket_renormalizes_to_remote() {
        // 2 sockets x 4 cores, 5 workers packed: worker 4 is alone on socket 1.
        let topo = Topology::new(2, 4, 5, WorkerPlacement::Packed).unwrap();
        let t = VictimTable::new(4, &topo, 0.7);
        assert!(t.locals.is_empty());
        assert_eq!(t.remotes.len(), 4);
        for (_, p) in t.probabilities() {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn single_socket_topology_keeps_all_mass_local() {
        let topo = Topology::new(1, 8, 8, WorkerPlacement::Packed).unwrap();
        let t = VictimTable::new(0, &topo, 0.7);
        assert_eq!(t.local_mass, 1.0);
        assert_eq!(t.victim_count(), 7);
    }

    #[test]
    fn sampling_tracks_the_distribution() {
        let topo = topo_4x8();
        let t = VictimTable::new(0, &topo, 0.7);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        let mut counts = vec![0u64; 32];
        for _ in 0..n {
            counts[t.sample(&mut rng)] += 1;
        }
        for (w, p) in t.probabilities() {
            let observed = counts[w] as f64 / n as f64;
            assert!(
                (observed - p).abs() < 0.01,
                "victim {w}: observed {observed}, expected {p}"
            );
        }
    }
}
