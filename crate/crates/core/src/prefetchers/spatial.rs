//! Spatial engine: a 16-entry accumulation table builds a 64-bit line
//! bitmap per active 4KB region and continuously writes it through to a
//! 64-entry pattern history table keyed by (pc XOR trigger offset).
//!
//! Prediction happens at region triggers (first access to a region not
//! currently being accumulated): the stored footprint for the trigger's
//! signature is replayed, nearest offsets first, excluding the trigger
//! line itself.

use super::{table_index, table_tag, EngineKind, EngineStats, Prefetcher, TrainOutcome};
use crate::trace::DemandRecord;

const ACCUM_ENTRIES: usize = 16;
const ACCUM_INDEX_BITS: u32 = 4;
const PHT_ENTRIES: usize = 64;
const PHT_INDEX_BITS: u32 = 6;
const REGION_SHIFT: u32 = 6;
const REGION_LINES: u64 = 64;

#[derive(Debug, Clone, Copy, Default)]
struct AccumEntry {
    valid: bool,
    tag: u16,
    bitmap: u64,
    signature: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct PhtEntry {
    valid: bool,
    tag: u16,
    bitmap: u64,
}

#[derive(Debug, Clone)]
pub struct SpatialPrefetcher {
    accum: Vec<AccumEntry>,
    pht: Vec<PhtEntry>,
    stats: EngineStats,
}

impl Default for SpatialPrefetcher {
    fn default() -> Self {
        Self::new()
    }
}

impl SpatialPrefetcher {
    pub fn new() -> Self {
        Self {
            accum: vec![AccumEntry::default(); ACCUM_ENTRIES],
            pht: vec![PhtEntry::default(); PHT_ENTRIES],
            stats: EngineStats::default(),
        }
    }

    fn pht_store(&mut self, signature: u64, bitmap: u64) {
        let idx = table_index(signature, PHT_INDEX_BITS);
        let tag = table_tag(signature, PHT_INDEX_BITS);
        self.pht[idx] = PhtEntry {
            valid: true,
            tag,
            bitmap,
        };
    }

    fn pht_lookup(&self, signature: u64) -> Option<u64> {
        let idx = table_index(signature, PHT_INDEX_BITS);
        let tag = table_tag(signature, PHT_INDEX_BITS);
        let e = &self.pht[idx];
        (e.valid && e.tag == tag).then_some(e.bitmap)
    }

    /// Footprint replay for a trigger at `offset`, nearest offsets first.
    fn replay(region: u64, offset: u64, bitmap: u64, degree: usize) -> Vec<u64> {
        let mut offsets: Vec<u64> = (0..REGION_LINES)
            .filter(|&o| o != offset && bitmap & (1u64 << o) != 0)
            .collect();
        offsets
            .sort_by_key(|&o| ((o as i64 - offset as i64).unsigned_abs(), o));
        offsets
            .into_iter()
            .take(degree)
            .map(|o| (region << REGION_SHIFT) + o)
            .collect()
    }
}

impl Prefetcher for SpatialPrefetcher {
    fn train(&mut self, record: &DemandRecord, degree: usize) -> TrainOutcome {
        self.stats.train_count += 1;
        self.stats.table_lookups += 1;
        let block = record.block();
        let region = block >> REGION_SHIFT;
        let offset = block & (REGION_LINES - 1);
        let idx = table_index(region, ACCUM_INDEX_BITS);
        let tag = table_tag(region, ACCUM_INDEX_BITS);

        let e = self.accum[idx];
        if e.valid && e.tag == tag {
            let entry = &mut self.accum[idx];
            entry.bitmap |= 1u64 << offset;
            let (sig, bm) = (entry.signature, entry.bitmap);
            self.pht_store(sig, bm);
            return TrainOutcome {
                candidates: Vec::new(),
                table_hit: true,
            };
        }

        // Region trigger: a conflicting occupant counts as a table miss;
        // its footprint is already in the PHT via write-through.
        if e.valid {
            self.stats.table_misses += 1;
        }
        let signature = record.pc ^ offset;
        let candidates = self
            .pht_lookup(signature)
            .map(|bm| Self::replay(region, offset, bm, degree))
            .unwrap_or_default();
        self.accum[idx] = AccumEntry {
            valid: true,
            tag,
            bitmap: 1u64 << offset,
            signature,
        };
        self.pht_store(signature, 1u64 << offset);
        TrainOutcome {
            candidates,
            table_hit: false,
        }
    }

    fn has_prediction(&self, record: &DemandRecord) -> bool {
        let block = record.block();
        let region = block >> REGION_SHIFT;
        let offset = block & (REGION_LINES - 1);
        let idx = table_index(region, ACCUM_INDEX_BITS);
        let tag = table_tag(region, ACCUM_INDEX_BITS);
        let e = &self.accum[idx];
        if e.valid && e.tag == tag {
            return false;
        }
        self.pht_lookup(record.pc ^ offset)
            .map(|bm| bm & !(1u64 << offset) != 0)
            .unwrap_or(false)
    }

    fn stats(&self) -> EngineStats {
        self.stats
    }

    fn reset_stats(&mut self) {
        self.stats = EngineStats::default();
    }

    fn kind(&self) -> EngineKind {
        EngineKind::Spatial
    }
}
