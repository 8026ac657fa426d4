//! Stream engine: an 8-entry region table that watches for monotonic runs
//! inside 4KB regions and prefetches the next lines in the run's direction.
//!
//! A run whose deltas are all identical is a constant-stride pattern and is
//! deferred to the stride engine: this engine only fires on monotonic but
//! non-uniform streams, mirroring how a composite prefetcher partitions
//! classes between its members.

use super::{table_index, table_tag, EngineKind, EngineStats, Prefetcher, TrainOutcome};
use crate::trace::DemandRecord;

const ENTRIES: usize = 8;
const INDEX_BITS: u32 = 3;
const RUN_PREDICT: u8 = 3;
/// Lines per region (4KB of 64B lines).
const REGION_SHIFT: u32 = 6;

#[derive(Debug, Clone, Copy, Default)]
struct Entry {
    valid: bool,
    tag: u16,
    last_block: u64,
    dir: i8,
    run: u8,
    last_delta: i64,
    uniform: bool,
}

#[derive(Debug, Clone)]
pub struct StreamPrefetcher {
    table: Vec<Entry>,
    stats: EngineStats,
}

impl Default for StreamPrefetcher {
    fn default() -> Self {
        Self::new()
    }
}

impl StreamPrefetcher {
    pub fn new() -> Self {
        Self {
            table: vec![Entry::default(); ENTRIES],
            stats: EngineStats::default(),
        }
    }

    /// Next run state for an access `delta` blocks from the entry's last:
    /// (dir, run, last_delta, uniform).
    fn step(e: &Entry, delta: i64) -> (i8, u8, i64, bool) {
        let sign = delta.signum() as i8;
        if e.dir == 0 || sign == e.dir {
            let uniform = if e.run >= 2 && delta != e.last_delta {
                false
            } else {
                e.uniform
            };
            (sign, e.run.saturating_add(1), delta, uniform)
        } else {
            // Direction flip starts a fresh two-access run.
            (sign, 2, delta, true)
        }
    }

    fn fires(run: u8, uniform: bool) -> bool {
        run >= RUN_PREDICT && !uniform
    }
}

impl Prefetcher for StreamPrefetcher {
    fn train(&mut self, record: &DemandRecord, degree: usize) -> TrainOutcome {
        self.stats.train_count += 1;
        self.stats.table_lookups += 1;
        let region = record.block() >> REGION_SHIFT;
        let idx = table_index(region, INDEX_BITS);
        let tag = table_tag(region, INDEX_BITS);
        let e = &mut self.table[idx];

        if !e.valid || e.tag != tag {
            if e.valid {
                self.stats.table_misses += 1;
            }
            *e = Entry {
                valid: true,
                tag,
                last_block: record.block(),
                dir: 0,
                run: 1,
                last_delta: 0,
                uniform: true,
            };
            return TrainOutcome::default();
        }

        let block = record.block();
        let delta = block.wrapping_sub(e.last_block) as i64;
        if delta == 0 {
            return TrainOutcome {
                candidates: Vec::new(),
                table_hit: true,
            };
        }
        let (dir, run, last_delta, uniform) = Self::step(e, delta);
        e.dir = dir;
        e.run = run;
        e.last_delta = last_delta;
        e.uniform = uniform;
        e.last_block = block;

        let candidates = if Self::fires(run, uniform) {
            (1..=degree as u64)
                .map(|k| block.wrapping_add_signed(dir as i64 * k as i64))
                .collect()
        } else {
            Vec::new()
        };
        TrainOutcome {
            candidates,
            table_hit: true,
        }
    }

    fn has_prediction(&self, record: &DemandRecord) -> bool {
        let region = record.block() >> REGION_SHIFT;
        let idx = table_index(region, INDEX_BITS);
        let tag = table_tag(region, INDEX_BITS);
        let e = &self.table[idx];
        if !e.valid || e.tag != tag {
            return false;
        }
        let delta = record.block().wrapping_sub(e.last_block) as i64;
        if delta == 0 {
            return false;
        }
        let (_, run, _, uniform) = Self::step(e, delta);
        Self::fires(run, uniform)
    }

    fn stats(&self) -> EngineStats {
        self.stats
    }

    fn reset_stats(&mut self) {
        self.stats = EngineStats::default();
    }

    fn kind(&self) -> EngineKind {
        EngineKind::Stream
    }
}
