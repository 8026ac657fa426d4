//! Behavioral reconstructions of three prior selection schemes: broadcast
//! training with a static output priority, sequential allocation, and a
//! degree-tuple multi-armed bandit. All three share a plain recent-address
//! prefetch filter so comparisons against the sandbox-equipped framework
//! are not confounded by duplicate requests.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::alecto::pc_hash;
use crate::prefetchers::{Prefetcher, TrainOutcome};
use crate::trace::DemandRecord;

/// Static output priority: the first engine (in fixed order) with a
/// non-empty candidate list wins; everything else is discarded, never
/// merged.
pub fn static_priority_select(outcomes: &[TrainOutcome]) -> Option<(usize, &[u64])> {
    outcomes
        .iter()
        .enumerate()
        .find(|(_, o)| !o.candidates.is_empty())
        .map(|(i, o)| (i, o.candidates.as_slice()))
}

/// Sequential allocation: probe engines in order and train exactly the
/// first one that claims it can handle the record; if none can, the last
/// engine is trained as the fallback. Returns (engine index, outcome).
pub fn sequential_allocate(
    engines: &mut [Box<dyn Prefetcher>],
    record: &DemandRecord,
    degree: usize,
) -> (usize, TrainOutcome) {
    let chosen = engines
        .iter()
        .position(|e| e.has_prediction(record))
        .unwrap_or(engines.len() - 1);
    let out = engines[chosen].train(record, degree);
    (chosen, out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exploration {
    /// With probability epsilon pick a seeded-uniform arm, else the best
    /// mean (unpulled arms count as untried-best; ties go to the lowest
    /// index).
    EpsilonGreedy { epsilon: f64 },
    /// UCB1: unpulled arms first, then argmax mean + c * sqrt(ln t / pulls).
    Ucb1 { c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BanditConfig {
    /// Number of prefetchers; arms are degree tuples over {0, X}^P.
    pub num_prefetchers: usize,
    /// Degree X an arm grants to the engines it enables.
    pub degree: usize,
    /// Demand accesses per decision epoch.
    pub epoch_len: u32,
    pub exploration: Exploration,
    pub seed: u64,
}

impl BanditConfig {
    pub fn num_arms(&self) -> usize {
        1 << self.num_prefetchers
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ArmStats {
    pub pulls: u64,
    pub mean_reward: f64,
}

/// Degree-control bandit: each arm is a bitmask enabling a subset of the
/// engines at degree X (bit i = engine i enabled).
#[derive(Debug, Clone)]
pub struct DegreeBandit {
    cfg: BanditConfig,
    arms: Vec<ArmStats>,
    rng: StdRng,
}

impl DegreeBandit {
    pub fn new(cfg: BanditConfig) -> Self {
        assert!(cfg.degree >= 1, "arm degree must be at least 1");
        assert!(
            cfg.num_prefetchers >= 1 && cfg.num_prefetchers <= 16,
            "prefetcher count out of range"
        );
        Self {
            arms: vec![ArmStats::default(); cfg.num_arms()],
            rng: StdRng::seed_from_u64(cfg.seed),
            cfg,
        }
    }

    pub fn config(&self) -> &BanditConfig {
        &self.cfg
    }

    pub fn arms(&self) -> &[ArmStats] {
        &self.arms
    }

    /// Picks the arm for epoch `t` (1-based).
    pub fn select_arm(&mut self, t: u64) -> usize {
        debug_assert!(t >= 1);
        match self.cfg.exploration {
            Exploration::EpsilonGreedy { epsilon } => {
                if self.rng.gen_bool(epsilon) {
                    return self.rng.gen_range(0..self.arms.len());
                }
                self.argmax(|a| {
                    if a.pulls == 0 {
                        f64::INFINITY
                    } else {
                        a.mean_reward
                    }
                })
            }
            Exploration::Ucb1 { c } => {
                if let Some(i) = self.arms.iter().position(|a| a.pulls == 0) {
                    return i;
                }
                let ln_t = (t as f64).ln().max(0.0);
                self.argmax(|a| a.mean_reward + c * (ln_t / a.pulls as f64).sqrt())
            }
        }
    }

    fn argmax(&self, score: impl Fn(&ArmStats) -> f64) -> usize {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, a) in self.arms.iter().enumerate() {
            let s = score(a);
            if s > best_score {
                best_score = s;
                best = i;
            }
        }
        best
    }

    /// Records an epoch's reward for the pulled arm.
    pub fn update(&mut self, arm: usize, reward: f64) {
        let a = &mut self.arms[arm];
        a.pulls += 1;
        a.mean_reward += (reward - a.mean_reward) / a.pulls as f64;
    }
}

/// Storage in bytes of a bandit extended to `actions` degree choices per
/// prefetcher: 8 bytes per arm, actions^P arms.
pub fn extended_bandit_storage_bytes(actions: u64, num_prefetchers: u32) -> u64 {
    8 * actions.pow(num_prefetchers)
}

/// Recent-address prefetch filter shared by the baselines: the sandbox
/// geometry (512 entries, 6-bit tag over the bits above the index) without
/// per-engine claim bits or pc hashes.
#[derive(Debug, Clone)]
pub struct RecentAddressFilter {
    entries: Vec<(bool, u8)>,
    index_bits: u32,
}

impl RecentAddressFilter {
    pub fn new(entries: usize) -> Self {
        assert!(entries.is_power_of_two());
        Self {
            entries: vec![(false, 0); entries],
            index_bits: entries.trailing_zeros(),
        }
    }

    /// Returns true when the block passes (and records it); false when a
    /// live entry already covers it.
    pub fn admit(&mut self, block: u64) -> bool {
        let idx = pc_hash(block, self.index_bits) as usize;
        let tag = pc_hash(block >> self.index_bits, 6) as u8;
        let e = &mut self.entries[idx];
        if e.0 && e.1 == tag {
            return false;
        }
        *e = (true, tag);
        true
    }
}

impl Default for RecentAddressFilter {
    fn default() -> Self {
        Self::new(512)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prefetchers::{
        build_engine, EngineKind, StridePrefetcher, TemporalPrefetcher,
    };

    fn outcome(blocks: &[u64]) -> TrainOutcome {
        TrainOutcome {
            candidates: blocks.to_vec(),
            table_hit: true,
        }
    }

    #[test]
    fn static_priority_takes_first_nonempty() {
        let outs = [outcome(&[]), outcome(&[1, 2]), outcome(&[3])];
        assert_eq!(static_priority_select(&outs), Some((1, &[1u64, 2][..])));
        let empty = [outcome(&[]), outcome(&[]), outcome(&[])];
        assert_eq!(static_priority_select(&empty), None);
        // Strict priority: no merging of lower-priority candidates.
        let outs = [outcome(&[7]), outcome(&[]), outcome(&[7, 8])];
        assert_eq!(static_priority_select(&outs), Some((0, &[7u64][..])));
    }

    #[test]
    fn sequential_allocation_trains_exactly_one_engine() {
        let mut engines: Vec<Box<dyn Prefetcher>> = vec![
            build_engine(EngineKind::Stream),
            build_engine(EngineKind::Stride),
            build_engine(EngineKind::Spatial),
        ];
        let rec = |addr| DemandRecord {
            cycle: 0,
            pc: 0x400,
            addr,
        };
        // Cold engines: the fallback is the last one.
        let (idx, _) = sequential_allocate(&mut engines, &rec(0x1000), 3);
        assert_eq!(idx, 2);
        assert_eq!(engines[2].stats().train_count, 1);
        assert_eq!(engines[0].stats().train_count, 0);
        assert_eq!(engines[1].stats().train_count, 0);

        // Warm the stride engine directly, then the probe routes to it.
        engines[1].train(&rec(0x2000), 1);
        engines[1].train(&rec(0x2040), 1);
        let (idx, _) = sequential_allocate(&mut engines, &rec(0x2080), 3);
        assert_eq!(idx, 1);
        // Repeating the identical record picks the same engine.
        let probe_idx = engines
            .iter()
            .position(|e| e.has_prediction(&rec(0x2080)));
        assert_eq!(probe_idx, Some(1));
    }

    #[test]
    fn sequential_allocation_leaves_other_tables_untouched() {
        let mut stride = StridePrefetcher::new();
        stride.train(
            &DemandRecord {
                cycle: 0,
                pc: 0x1,
                addr: 0x9000,
            },
            1,
        );
        let before = format!("{stride:?}");
        let mut engines: Vec<Box<dyn Prefetcher>> = vec![
            Box::new(stride),
            Box::new(TemporalPrefetcher::new(64)),
        ];
        // Temporal is cold so it cannot claim the record; stride has no
        // stride yet either, so the fallback (temporal) trains.
        let (idx, _) = sequential_allocate(
            &mut engines,
            &DemandRecord {
                cycle: 0,
                pc: 0x1,
                addr: 0x9040,
            },
            1,
        );
        assert_eq!(idx, 1);
        assert_eq!(format!("{:?}", engines[0]), before);
    }

    #[test]
    fn bandit_greedy_settles_on_dominant_arm() {
        let cfg = BanditConfig {
            num_prefetchers: 2,
            degree: 3,
            epoch_len: 128,
            exploration: Exploration::EpsilonGreedy { epsilon: 0.0 },
            seed: 1,
        };
        let mut b = DegreeBandit::new(cfg);
        for t in 1..=20 {
            let arm = b.select_arm(t);
            let reward = if arm == 2 { 10.0 } else { 1.0 };
            b.update(arm, reward);
        }
        for t in 21..=40 {
            assert_eq!(b.select_arm(t), 2);
            b.update(2, 10.0);
        }
    }

    #[test]
    fn ucb1_tries_unpulled_arms_first() {
        let cfg = BanditConfig {
            num_prefetchers: 2,
            degree: 3,
            epoch_len: 128,
            exploration: Exploration::Ucb1 { c: 1.4 },
            seed: 1,
        };
        let mut b = DegreeBandit::new(cfg);
        let mut seen = Vec::new();
        for t in 1..=4 {
            let arm = b.select_arm(t);
            seen.push(arm);
            b.update(arm, arm as f64);
        }
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2, 3]);
    }

    #[test]
    fn bandit_selection_is_deterministic_for_a_seed() {
        let cfg = BanditConfig {
            num_prefetchers: 3,
            degree: 3,
            epoch_len: 128,
            exploration: Exploration::EpsilonGreedy { epsilon: 0.3 },
            seed: 99,
        };
        let run = || {
            let mut b = DegreeBandit::new(cfg);
            (1..=50u64)
                .map(|t| {
                    let arm = b.select_arm(t);
                    b.update(arm, (arm % 3) as f64);
                    arm
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn update_maintains_running_mean() {
        let cfg = BanditConfig {
            num_prefetchers: 1,
            degree: 1,
            epoch_len: 16,
            exploration: Exploration::EpsilonGreedy { epsilon: 0.0 },
            seed: 0,
        };
        let mut b = DegreeBandit::new(cfg);
        b.update(0, 4.0);
        assert_eq!(b.arms()[0].mean_reward, 4.0);
        b.update(0, 8.0);
        assert_eq!(b.arms()[0].mean_reward, 6.0);
        assert_eq!(b.arms()[0].pulls, 2);
    }

    #[test]
    fn extended_bandit_storage() {
        assert_eq!(extended_bandit_storage_bytes(8, 3), 4096);
        assert_eq!(extended_bandit_storage_bytes(2, 3), 64);
        assert_eq!(extended_bandit_storage_bytes(1, 7), 8);
    }

    #[test]
    fn recent_address_filter_suppresses_resident_blocks() {
        let mut f = RecentAddressFilter::default();
        assert!(f.admit(0x42));
        assert!(!f.admit(0x42));
        // Unrelated block passes; eviction reopens the original.
        assert!(f.admit(0x43));
        let evictor = (1u64..)
            .map(|b| 0x42 ^ (b << 9) ^ b)
            .find(|&b| {
                pc_hash(b, 9) == pc_hash(0x42, 9) && pc_hash(b >> 9, 6) != pc_hash(0x42 >> 9, 6)
            })
            .unwrap();
        assert!(f.admit(evictor));
        assert!(f.admit(0x42));
    }
}
