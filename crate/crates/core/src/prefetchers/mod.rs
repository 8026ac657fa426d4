//! Uniform prefetch-engine interface and four simplified engines.
//!
//! Every engine consumes demand records via [`Prefetcher::train`], emitting
//! up to `degree` predicted block addresses ordered nearest-first, and
//! supports a pure [`Prefetcher::has_prediction`] probe so a sequential
//! allocator can ask "could you handle this?" without perturbing state.
//!
//! Table indexing is uniform across engines: index = XOR-fold of the key to
//! `log2(entries)` bits, tag = 9-bit XOR-fold of the remaining high bits.
//! A lookup that lands on a valid entry with a different tag is a table
//! miss (a conflict/replacement); cold fills are not counted.

mod spatial;
mod stream;
mod stride;
mod temporal;

pub use spatial::SpatialPrefetcher;
pub use stream::StreamPrefetcher;
pub use stride::StridePrefetcher;
pub use temporal::TemporalPrefetcher;

use crate::trace::DemandRecord;

/// Result of one training event.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrainOutcome {
    /// Predicted block addresses, nearest first, no duplicates, at most
    /// `degree` of them.
    pub candidates: Vec<u64>,
    /// False when the indexed table entry was cold or held a different tag.
    pub table_hit: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EngineStats {
    pub train_count: u64,
    pub table_lookups: u64,
    pub table_misses: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EngineKind {
    Stream,
    Stride,
    Spatial,
    Temporal,
}

impl EngineKind {
    pub fn name(&self) -> &'static str {
        match self {
            EngineKind::Stream => "stream",
            EngineKind::Stride => "stride",
            EngineKind::Spatial => "spatial",
            EngineKind::Temporal => "temporal",
        }
    }

    pub fn parse(s: &str) -> Option<EngineKind> {
        match s {
            "stream" => Some(EngineKind::Stream),
            "stride" => Some(EngineKind::Stride),
            "spatial" => Some(EngineKind::Spatial),
            "temporal" => Some(EngineKind::Temporal),
            _ => None,
        }
    }
}

pub trait Prefetcher: std::fmt::Debug {
    /// Updates internal tables from a demand record and returns up to
    /// `degree` candidate blocks. Selection layers only call this with
    /// `degree >= 1`; a blocked engine is simply not trained.
    fn train(&mut self, record: &DemandRecord, degree: usize) -> TrainOutcome;

    /// True iff `train` on this record would emit at least one candidate.
    /// Never mutates tables or stats.
    fn has_prediction(&self, record: &DemandRecord) -> bool;

    fn stats(&self) -> EngineStats;

    /// Zeroes counters without touching prediction tables.
    fn reset_stats(&mut self);

    fn kind(&self) -> EngineKind;

    fn name(&self) -> &'static str {
        self.kind().name()
    }
}

/// Builds the default engine for a kind.
pub fn build_engine(kind: EngineKind) -> Box<dyn Prefetcher> {
    match kind {
        EngineKind::Stream => Box::new(StreamPrefetcher::new()),
        EngineKind::Stride => Box::new(StridePrefetcher::new()),
        EngineKind::Spatial => Box::new(SpatialPrefetcher::new()),
        EngineKind::Temporal => Box::new(TemporalPrefetcher::new(temporal::DEFAULT_ENTRIES)),
    }
}

/// Builds an engine with a custom temporal table size.
pub fn build_engine_with(kind: EngineKind, temporal_entries: usize) -> Box<dyn Prefetcher> {
    match kind {
        EngineKind::Temporal => Box::new(TemporalPrefetcher::new(temporal_entries)),
        other => build_engine(other),
    }
}

pub(crate) fn table_index(key: u64, index_bits: u32) -> usize {
    crate::alecto::pc_hash(key, index_bits) as usize
}

pub(crate) fn table_tag(key: u64, index_bits: u32) -> u16 {
    crate::alecto::pc_hash(key >> index_bits, 9) as u16
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{gen_pattern, DemandRecord, PatternKind, PatternSpec, DEFAULT_GAP};

    fn rec(pc: u64, addr: u64) -> DemandRecord {
        DemandRecord { cycle: 0, pc, addr }
    }

    #[test]
    fn stride_extrapolates_after_confidence() {
        let mut e = StridePrefetcher::new();
        e.train(&rec(0x400, 0x1000), 2);
        e.train(&rec(0x400, 0x1040), 2);
        let out = e.train(&rec(0x400, 0x1080), 2);
        assert_eq!(out.candidates, vec![0x10c0 / 64, 0x1100 / 64]);
        assert!(out.table_hit);
    }

    #[test]
    fn stride_cold_entry_misses_nothing_predicted() {
        let mut e = StridePrefetcher::new();
        let out = e.train(&rec(0x999, 0x5000), 4);
        assert!(!out.table_hit);
        assert!(out.candidates.is_empty());
        assert_eq!(e.stats().table_misses, 0);
    }

    #[test]
    fn stride_table_conflicts_are_counted() {
        let mut e = StridePrefetcher::new();
        for i in 0..65u64 {
            e.train(&rec(0x1000 + i * 8, 0x9000), 1);
        }
        assert!(e.stats().table_misses >= 1, "pigeonhole conflict expected");
        assert_eq!(e.stats().table_lookups, 65);
    }

    #[test]
    fn stride_sub_line_strides_predict_block_granularity() {
        let mut e = StridePrefetcher::new();
        for k in 0..6u64 {
            e.train(&rec(0x400, 0x1000 + k * 16), 2);
        }
        let out = e.train(&rec(0x400, 0x1000 + 6 * 16), 2);
        // 0x1060 + 16k first crosses into block 0x1080/64, then 0x10c0/64.
        assert_eq!(out.candidates, vec![0x1080 / 64, 0x10c0 / 64]);
    }

    #[test]
    fn probe_is_pure_and_consistent_with_train() {
        let specs = [
            PatternSpec {
                kind: PatternKind::Stride {
                    base: 0x8000,
                    stride: 64,
                },
                pc: 0x10,
                count: 40,
                gap: DEFAULT_GAP,
            },
            PatternSpec {
                kind: PatternKind::Spatial {
                    base: 0x100_0000,
                    region_bytes: 4096,
                    footprint: 0x8421_1044_0281_0443,
                },
                pc: 0x20,
                count: 60,
                gap: DEFAULT_GAP,
            },
            PatternSpec {
                kind: PatternKind::Temporal {
                    base: 0x40_0000,
                    window_blocks: 256,
                    period: 12,
                },
                pc: 0x30,
                count: 60,
                gap: DEFAULT_GAP,
            },
        ];
        for spec in specs {
            let records = gen_pattern(&spec, 3).unwrap();
            let mut stride = StridePrefetcher::new();
            let mut stream = StreamPrefetcher::new();
            let mut spatial = SpatialPrefetcher::new();
            let mut temporal = TemporalPrefetcher::new(256);
            for r in &records {
                for e in [
                    &mut stride as &mut dyn Prefetcher,
                    &mut stream,
                    &mut spatial,
                    &mut temporal,
                ] {
                    let probe = e.has_prediction(r);
                    let probe_again = e.has_prediction(r);
                    assert_eq!(probe, probe_again);
                    let trains_before = e.stats().train_count;
                    let out = e.train(r, 3);
                    assert_eq!(
                        probe,
                        !out.candidates.is_empty(),
                        "{} probe disagrees with train on {:x}",
                        e.name(),
                        r.addr
                    );
                    assert_eq!(e.stats().train_count, trains_before + 1);
                }
            }
        }
    }

    #[test]
    fn temporal_predicts_successor_after_one_repetition() {
        let spec = PatternSpec {
            kind: PatternKind::Temporal {
                base: 0x10_0000,
                window_blocks: 1 << 20,
                period: 16,
            },
            pc: 0x7,
            count: 64,
            gap: DEFAULT_GAP,
        };
        let records = gen_pattern(&spec, 21).unwrap();
        let period: Vec<u64> = records[..16].iter().map(|r| r.block()).collect();
        let distinct: std::collections::HashSet<_> = period.iter().collect();
        assert_eq!(distinct.len(), 16, "seed must give a collision-free period");

        let mut e = TemporalPrefetcher::new(4096);
        for (i, r) in records.iter().enumerate() {
            let out = e.train(r, 4);
            assert!(out.candidates.len() <= 1, "degree capped at 1");
            if i >= 16 && i + 1 < records.len() {
                assert_eq!(
                    out.candidates,
                    vec![records[i + 1].block()],
                    "wrong successor at repeat index {i}"
                );
            }
        }
    }

    #[test]
    fn spatial_learns_footprint_and_predicts_remainder() {
        let footprint: u64 = 0b1000_0000_0001_0011; // offsets 0,1,4,15
        let spec = PatternSpec {
            kind: PatternKind::Spatial {
                base: 0x200_0000,
                region_bytes: 4096,
                footprint,
            },
            pc: 0x40,
            count: 12,
            gap: DEFAULT_GAP,
        };
        let records = gen_pattern(&spec, 0).unwrap();
        let mut e = SpatialPrefetcher::new();
        // Region 0 (records 0..4) trains; region 1 trigger predicts.
        for r in &records[..4] {
            e.train(r, 8);
        }
        let out = e.train(&records[4], 8);
        let region_base_block = records[4].block();
        assert_eq!(
            out.candidates,
            vec![
                region_base_block + 1,
                region_base_block + 4,
                region_base_block + 15
            ]
        );
    }

    #[test]
    fn stream_defers_constant_stride_runs() {
        let mut e = StreamPrefetcher::new();
        for k in 0..50u64 {
            let out = e.train(&rec(0x5, 0x40_0000 + k * 64), 3);
            assert!(
                out.candidates.is_empty(),
                "constant-stride run must be left to the stride engine"
            );
        }
    }

    #[test]
    fn stream_predicts_irregular_monotonic_runs() {
        let mut e = StreamPrefetcher::new();
        let blocks = [0u64, 1, 3, 4, 5, 7, 8];
        let mut emitted = false;
        for b in blocks {
            let out = e.train(&rec(0x5, 0x40_0000 + b * 64), 3);
            if !out.candidates.is_empty() {
                emitted = true;
                let base = 0x40_0000 / 64 + b;
                assert_eq!(out.candidates, vec![base + 1, base + 2, base + 3]);
            }
        }
        assert!(emitted);
    }

    #[test]
    fn reset_stats_keeps_tables() {
        let mut e = StridePrefetcher::new();
        e.train(&rec(0x400, 0x1000), 2);
        e.train(&rec(0x400, 0x1040), 2);
        assert_eq!(e.stats().train_count, 2);
        let predicts = e.has_prediction(&rec(0x400, 0x1080));
        e.reset_stats();
        assert_eq!(e.stats(), EngineStats::default());
        assert_eq!(e.has_prediction(&rec(0x400, 0x1080)), predicts);
        assert!(predicts);
    }
}
