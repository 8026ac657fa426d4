//! Temporal engine: a direct-indexed address-correlation table mapping a
//! block to the block that followed it in the training stream. Output is
//! capped at one candidate per training event regardless of the requested
//! degree, since chained metadata lookups are out of scope for this model.

use super::{table_index, table_tag, EngineKind, EngineStats, Prefetcher, TrainOutcome};
use crate::trace::DemandRecord;

pub(super) const DEFAULT_ENTRIES: usize = 4096;

#[derive(Debug, Clone, Copy, Default)]
struct Entry {
    valid: bool,
    tag: u16,
    next_block: u64,
}

#[derive(Debug, Clone)]
pub struct TemporalPrefetcher {
    table: Vec<Entry>,
    index_bits: u32,
    last_block: Option<u64>,
    stats: EngineStats,
}

impl TemporalPrefetcher {
    /// `entries` must be a power of two.
    pub fn new(entries: usize) -> Self {
        assert!(entries.is_power_of_two() && entries >= 2);
        Self {
            table: vec![Entry::default(); entries],
            index_bits: entries.trailing_zeros(),
            last_block: None,
            stats: EngineStats::default(),
        }
    }

    fn lookup(&self, block: u64) -> Option<u64> {
        let e = &self.table[table_index(block, self.index_bits)];
        (e.valid && e.tag == table_tag(block, self.index_bits) && e.next_block != block)
            .then_some(e.next_block)
    }
}

impl Prefetcher for TemporalPrefetcher {
    fn train(&mut self, record: &DemandRecord, degree: usize) -> TrainOutcome {
        self.stats.train_count += 1;
        self.stats.table_lookups += 1;
        let block = record.block();

        let idx = table_index(block, self.index_bits);
        let tag = table_tag(block, self.index_bits);
        let e = &self.table[idx];
        let table_hit = e.valid && e.tag == tag;
        if e.valid && e.tag != tag {
            self.stats.table_misses += 1;
        }
        let candidates = match self.lookup(block) {
            Some(next) if degree >= 1 => vec![next],
            _ => Vec::new(),
        };

        // Record the correlation last -> current; self-loops are skipped.
        if let Some(last) = self.last_block {
            if last != block {
                let li = table_index(last, self.index_bits);
                self.table[li] = Entry {
                    valid: true,
                    tag: table_tag(last, self.index_bits),
                    next_block: block,
                };
            }
        }
        self.last_block = Some(block);

        TrainOutcome {
            candidates,
            table_hit,
        }
    }

    fn has_prediction(&self, record: &DemandRecord) -> bool {
        self.lookup(record.block()).is_some()
    }

    fn stats(&self) -> EngineStats {
        self.stats
    }

    fn reset_stats(&mut self) {
        self.stats = EngineStats::default();
    }

    fn kind(&self) -> EngineKind {
        EngineKind::Temporal
    }
}
