//! Constant-stride engine: a 64-entry direct-indexed IP table holding
//! (tag, last address, stride, 2-bit confidence). Predictions start once
//! the same stride has been seen twice in a row.

use super::{table_index, table_tag, EngineKind, EngineStats, Prefetcher, TrainOutcome};
use crate::trace::{DemandRecord, LINE_BYTES};

const ENTRIES: usize = 64;
const INDEX_BITS: u32 = 6;
const CONF_MAX: u8 = 3;
const CONF_PREDICT: u8 = 2;

#[derive(Debug, Clone, Copy, Default)]
struct Entry {
    valid: bool,
    tag: u16,
    last_addr: u64,
    stride: i64,
    conf: u8,
}

#[derive(Debug, Clone)]
pub struct StridePrefetcher {
    table: Vec<Entry>,
    stats: EngineStats,
}

impl Default for StridePrefetcher {
    fn default() -> Self {
        Self::new()
    }
}

impl StridePrefetcher {
    pub fn new() -> Self {
        Self {
            table: vec![Entry::default(); ENTRIES],
            stats: EngineStats::default(),
        }
    }

    /// Distinct predicted blocks along the stride, nearest first. Sub-line
    /// strides take several steps to leave the current block, so the walk
    /// is bounded rather than exactly `degree` iterations.
    fn candidates(addr: u64, stride: i64, degree: usize) -> Vec<u64> {
        let current = addr / LINE_BYTES;
        let mut out = Vec::with_capacity(degree);
        let mut target = addr;
        for _ in 0..degree.saturating_mul(LINE_BYTES as usize) {
            target = target.wrapping_add_signed(stride);
            let block = target / LINE_BYTES;
            if block != current && !out.contains(&block) {
                out.push(block);
                if out.len() == degree {
                    break;
                }
            }
        }
        out
    }

    /// Whether an established entry would predict given this access. A
    /// zero delta (re-access of the same address) neither strengthens nor
    /// breaks the pattern; an already-confident entry keeps predicting.
    fn would_predict(e: &Entry, addr: u64) -> bool {
        let delta = addr.wrapping_sub(e.last_addr) as i64;
        if delta == 0 {
            e.stride != 0 && e.conf >= CONF_PREDICT
        } else {
            delta == e.stride && e.conf >= CONF_PREDICT - 1
        }
    }
}

impl Prefetcher for StridePrefetcher {
    fn train(&mut self, record: &DemandRecord, degree: usize) -> TrainOutcome {
        self.stats.train_count += 1;
        self.stats.table_lookups += 1;
        let idx = table_index(record.pc, INDEX_BITS);
        let tag = table_tag(record.pc, INDEX_BITS);
        let e = &mut self.table[idx];

        if !e.valid || e.tag != tag {
            if e.valid {
                self.stats.table_misses += 1;
            }
            *e = Entry {
                valid: true,
                tag,
                last_addr: record.addr,
                stride: 0,
                conf: 0,
            };
            return TrainOutcome::default();
        }

        let delta = record.addr.wrapping_sub(e.last_addr) as i64;
        let predict = Self::would_predict(e, record.addr);
        if delta == 0 {
            let candidates = if predict {
                Self::candidates(record.addr, e.stride, degree)
            } else {
                Vec::new()
            };
            return TrainOutcome {
                candidates,
                table_hit: true,
            };
        }
        if delta == e.stride {
            e.conf = (e.conf + 1).min(CONF_MAX);
        } else {
            e.stride = delta;
            e.conf = 1;
        }
        e.last_addr = record.addr;

        let candidates = if predict {
            Self::candidates(record.addr, e.stride, degree)
        } else {
            Vec::new()
        };
        TrainOutcome {
            candidates,
            table_hit: true,
        }
    }

    fn has_prediction(&self, record: &DemandRecord) -> bool {
        let idx = table_index(record.pc, INDEX_BITS);
        let tag = table_tag(record.pc, INDEX_BITS);
        let e = &self.table[idx];
        e.valid && e.tag == tag && Self::would_predict(e, record.addr)
    }

    fn stats(&self) -> EngineStats {
        self.stats
    }

    fn reset_stats(&mut self) {
        self.stats = EngineStats::default();
    }

    fn kind(&self) -> EngineKind {
        EngineKind::Stride
    }
}
