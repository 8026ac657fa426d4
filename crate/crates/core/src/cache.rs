//! Two-level set-associative cache model with prefetch-fill timing and a
//! shadow no-prefetch hierarchy supplying the coverage denominator.
//!
//! Latencies compose additively down the lookup path: an access that misses
//! L1 and L2 costs `l1.hit + l2.hit + memory`. A line installed by a
//! prefetch carries the cycle its fill completes; a demand arriving earlier
//! pays the remaining fill time on top of the hit latency, which is what
//! makes a covered miss "untimely".

use crate::trace::LINE_BYTES;
use thiserror::Error;

/// Geometry and hit latency of one cache level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheConfig {
    pub size_bytes: u64,
    pub ways: usize,
    /// Round-trip hit latency in cycles.
    pub hit_latency: u64,
}

impl CacheConfig {
    pub fn sets(&self) -> u64 {
        self.size_bytes / (self.ways as u64 * LINE_BYTES)
    }

    pub fn validate(&self) -> Result<(), CacheConfigError> {
        if self.ways == 0 || self.size_bytes == 0 {
            return Err(CacheConfigError::Zero);
        }
        if self.size_bytes % (self.ways as u64 * LINE_BYTES) != 0 {
            return Err(CacheConfigError::NotLineDivisible {
                size: self.size_bytes,
                ways: self.ways,
            });
        }
        let sets = self.sets();
        if !sets.is_power_of_two() {
            return Err(CacheConfigError::SetsNotPowerOfTwo { sets });
        }
        Ok(())
    }
}

/// L1 + L2 + flat memory latency.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HierarchyConfig {
    pub l1: CacheConfig,
    pub l2: CacheConfig,
    pub memory_latency: u64,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        Self {
            l1: CacheConfig {
                size_bytes: 32 * 1024,
                ways: 8,
                hit_latency: 4,
            },
            l2: CacheConfig {
                size_bytes: 256 * 1024,
                ways: 8,
                hit_latency: 15,
            },
            memory_latency: 200,
        }
    }
}

impl HierarchyConfig {
    pub fn validate(&self) -> Result<(), CacheConfigError> {
        self.l1.validate()?;
        self.l2.validate()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CacheConfigError {
    #[error("cache size and ways must be nonzero")]
    Zero,
    #[error("size {size} not divisible by ways {ways} x {LINE_BYTES}B lines")]
    NotLineDivisible { size: u64, ways: usize },
    #[error("set count {sets} is not a power of two")]
    SetsNotPowerOfTwo { sets: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    L1,
    L2,
    Mem,
}

/// Coverage classification of a single demand access against the main
/// hierarchy. Shadow-relative accounting is done by the caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coverage {
    NotPrefetched,
    /// Hit a prefetched line whose fill had completed.
    Timely,
    /// Hit a prefetched line whose fill was still in flight.
    Untimely,
}

#[derive(Debug, Clone, Copy)]
pub struct AccessOutcome {
    pub level: Level,
    pub latency: u64,
    pub covered: Coverage,
    /// Unused prefetched lines evicted by this access's fills.
    pub evicted_unused_prefetches: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct CacheLine {
    valid: bool,
    tag: u64,
    fill_complete_cycle: u64,
    prefetched: bool,
    prefetch_source: Option<usize>,
    /// PC that triggered the prefetch; kept for trace debugging.
    #[allow(dead_code)]
    trigger_pc: Option<u64>,
    used: bool,
    lru_stamp: u64,
}

/// One set-associative level with LRU replacement.
#[derive(Debug, Clone)]
struct LevelCache {
    sets: Vec<Vec<CacheLine>>,
    set_mask: u64,
    stamp: u64,
}

impl LevelCache {
    fn new(cfg: &CacheConfig) -> Self {
        let sets = cfg.sets() as usize;
        Self {
            sets: vec![vec![CacheLine::default(); cfg.ways]; sets],
            set_mask: cfg.sets() - 1,
            stamp: 0,
        }
    }

    fn index(&self, block: u64) -> (usize, u64) {
        ((block & self.set_mask) as usize, block >> self.set_mask.count_ones())
    }

    /// Looks up a block and refreshes its LRU position on hit.
    fn touch(&mut self, block: u64) -> Option<&mut CacheLine> {
        let (set, tag) = self.index(block);
        self.stamp += 1;
        let stamp = self.stamp;
        self.sets[set]
            .iter_mut()
            .find(|l| l.valid && l.tag == tag)
            .map(|l| {
                l.lru_stamp = stamp;
                l
            })
    }

    fn contains(&self, block: u64) -> bool {
        let (set, tag) = self.index(block);
        self.sets[set].iter().any(|l| l.valid && l.tag == tag)
    }

    /// Installs a block, evicting LRU. Returns the evicted line, if any
    /// was valid.
    fn install(&mut self, block: u64, line: CacheLine) -> Option<CacheLine> {
        let (set, tag) = self.index(block);
        self.stamp += 1;
        let stamp = self.stamp;
        let ways = &mut self.sets[set];
        let victim = match ways.iter_mut().find(|l| !l.valid) {
            Some(slot) => slot,
            None => ways.iter_mut().min_by_key(|l| l.lru_stamp).unwrap(),
        };
        let evicted = victim.valid.then_some(*victim);
        *victim = CacheLine {
            tag,
            lru_stamp: stamp,
            ..line
        };
        evicted
    }
}

fn unused_prefetch(line: &Option<CacheLine>) -> u64 {
    match line {
        Some(l) if l.prefetched && !l.used => 1,
        _ => 0,
    }
}

/// The main two-level hierarchy plus per-source usefulness counters.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    cfg: HierarchyConfig,
    l1: LevelCache,
    l2: LevelCache,
    useful_per_source: Vec<u64>,
    evicted_unused: u64,
}

impl Hierarchy {
    pub fn new(cfg: HierarchyConfig, num_sources: usize) -> Self {
        Self {
            cfg,
            l1: LevelCache::new(&cfg.l1),
            l2: LevelCache::new(&cfg.l2),
            useful_per_source: vec![0; num_sources],
            evicted_unused: 0,
        }
    }

    pub fn config(&self) -> &HierarchyConfig {
        &self.cfg
    }

    /// Miss latency of a level: the cost of fetching the block from memory
    /// through that level's lookup path.
    fn miss_latency(&self, level: Level) -> u64 {
        match level {
            Level::L1 => self.cfg.l1.hit_latency + self.cfg.l2.hit_latency + self.cfg.memory_latency,
            Level::L2 => self.cfg.l2.hit_latency + self.cfg.memory_latency,
            Level::Mem => self.cfg.memory_latency,
        }
    }

    /// First-use classification of a hit line, marking it used and
    /// crediting its source.
    fn classify_hit(&mut self, set_level: Level, block: u64, cycle: u64) -> (Coverage, u64) {
        let line = match set_level {
            Level::L1 => self.l1.touch(block).unwrap(),
            Level::L2 => self.l2.touch(block).unwrap(),
            Level::Mem => unreachable!(),
        };
        let remaining = line.fill_complete_cycle.saturating_sub(cycle);
        let covered = if line.prefetched && !line.used {
            if remaining > 0 {
                Coverage::Untimely
            } else {
                Coverage::Timely
            }
        } else {
            Coverage::NotPrefetched
        };
        if line.prefetched && !line.used {
            line.used = true;
            if let Some(src) = line.prefetch_source {
                if let Some(c) = self.useful_per_source.get_mut(src) {
                    *c += 1;
                }
            }
        }
        (covered, remaining)
    }

    /// Demand lookup: L1, then L2, then memory. Misses fill the missing
    /// levels (mostly-inclusive: a memory fill installs at both).
    ///
    /// A hit on a line whose fill is still in flight pays the remaining
    /// fill time on top of the hit latency, capped at the full miss
    /// latency: a prefetch can be worthless but never worse than a miss.
    pub fn access_demand(&mut self, addr: u64, cycle: u64) -> AccessOutcome {
        let block = addr / LINE_BYTES;
        let full_miss = self.miss_latency(Level::L1);
        if self.l1.contains(block) {
            let (covered, remaining) = self.classify_hit(Level::L1, block, cycle);
            return AccessOutcome {
                level: Level::L1,
                latency: (self.cfg.l1.hit_latency + remaining).min(full_miss),
                covered,
                evicted_unused_prefetches: 0,
            };
        }
        if self.l2.contains(block) {
            let (covered, remaining) = self.classify_hit(Level::L2, block, cycle);
            let latency =
                (self.cfg.l1.hit_latency + self.cfg.l2.hit_latency + remaining).min(full_miss);
            let evicted = self.l1.install(
                block,
                CacheLine {
                    valid: true,
                    fill_complete_cycle: cycle + latency,
                    ..Default::default()
                },
            );
            let unused = unused_prefetch(&evicted);
            self.evicted_unused += unused;
            return AccessOutcome {
                level: Level::L2,
                latency,
                covered,
                evicted_unused_prefetches: unused,
            };
        }
        let latency = self.miss_latency(Level::L1);
        let mut unused = 0;
        for level in [Level::L1, Level::L2] {
            let line = CacheLine {
                valid: true,
                fill_complete_cycle: cycle + latency,
                ..Default::default()
            };
            let evicted = match level {
                Level::L1 => self.l1.install(block, line),
                Level::L2 => self.l2.install(block, line),
                Level::Mem => unreachable!(),
            };
            unused += unused_prefetch(&evicted);
        }
        self.evicted_unused += unused;
        AccessOutcome {
            level: Level::Mem,
            latency,
            covered: Coverage::NotPrefetched,
            evicted_unused_prefetches: unused,
        }
    }

    /// Installs a prefetched block at the target level. No-op when the
    /// block is already resident there (or above it, for L2).
    pub fn install_prefetch(
        &mut self,
        addr: u64,
        level: Level,
        cycle: u64,
        source: usize,
        trigger_pc: u64,
    ) -> bool {
        let block = addr / LINE_BYTES;
        let resident = match level {
            Level::L1 => self.l1.contains(block),
            Level::L2 => self.l2.contains(block) || self.l1.contains(block),
            Level::Mem => return false,
        };
        if resident {
            return false;
        }
        let line = CacheLine {
            valid: true,
            fill_complete_cycle: cycle + self.miss_latency(level),
            prefetched: true,
            prefetch_source: Some(source),
            trigger_pc: Some(trigger_pc),
            ..Default::default()
        };
        let evicted = match level {
            Level::L1 => self.l1.install(block, line),
            Level::L2 => self.l2.install(block, line),
            Level::Mem => unreachable!(),
        };
        self.evicted_unused += unused_prefetch(&evicted);
        true
    }

    pub fn useful_per_source(&self) -> &[u64] {
        &self.useful_per_source
    }

    pub fn evicted_unused(&self) -> u64 {
        self.evicted_unused
    }

    /// Zeroes usefulness/eviction counters without touching cache contents.
    /// Used to start a measurement window after warmup.
    pub fn reset_metric_counters(&mut self) {
        self.useful_per_source.iter_mut().for_each(|c| *c = 0);
        self.evicted_unused = 0;
    }
}

/// The same two-level hierarchy with no prefetch path; its misses are the
/// baseline a prefetching run is measured against.
#[derive(Debug, Clone)]
pub struct ShadowHierarchy {
    l1: LevelCache,
    l2: LevelCache,
    misses: u64,
}

impl ShadowHierarchy {
    pub fn new(cfg: &HierarchyConfig) -> Self {
        Self {
            l1: LevelCache::new(&cfg.l1),
            l2: LevelCache::new(&cfg.l2),
            misses: 0,
        }
    }

    /// Returns true on hit (at either level). A full miss installs the
    /// block at both levels, mirroring the main hierarchy's fill rule.
    pub fn access(&mut self, addr: u64) -> bool {
        let block = addr / LINE_BYTES;
        if self.l1.touch(block).is_some() {
            return true;
        }
        if self.l2.touch(block).is_some() {
            self.l1.install(block, CacheLine { valid: true, ..Default::default() });
            return true;
        }
        self.misses += 1;
        self.l1.install(block, CacheLine { valid: true, ..Default::default() });
        self.l2.install(block, CacheLine { valid: true, ..Default::default() });
        false
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    pub fn reset_miss_counter(&mut self) {
        self.misses = 0;
    }
}
