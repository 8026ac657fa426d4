//! Demand-request records, the text trace format, and seeded synthetic
//! pattern generators.
//!
//! A trace file is UTF-8 text with one record per line:
//!
//! ```text
//! cycle,0xPC,0xADDR
//! ```
//!
//! `cycle` is decimal and non-decreasing, `pc` and `addr` are hex. Lines
//! starting with `#` and blank lines are skipped.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use thiserror::Error;

/// Cache line size in bytes. Fixed for the whole simulator.
pub const LINE_BYTES: u64 = 64;

/// One demand access as seen by the selection layer and the cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DemandRecord {
    /// Arrival time in simulation cycles. Non-decreasing within a trace.
    pub cycle: u64,
    /// Instruction address that issued the access.
    pub pc: u64,
    /// Byte address accessed.
    pub addr: u64,
}

impl DemandRecord {
    /// Block (line) address of the access.
    pub fn block(&self) -> u64 {
        self.addr / LINE_BYTES
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: cycle {found} decreases below previous cycle {prev}")]
    Ordering { line: usize, prev: u64, found: u64 },
    #[error("invalid pattern: {0}")]
    Pattern(String),
    #[error("duplicate pc {0:#x} across pattern specs")]
    DuplicatePc(u64),
}

fn parse_hex_field(field: &str, line: usize, what: &str) -> Result<u64, TraceError> {
    let s = field.trim();
    let digits = s
        .strip_prefix("0x")
        .or_else(|| s.strip_prefix("0X"))
        .unwrap_or(s);
    u64::from_str_radix(digits, 16).map_err(|_| TraceError::Parse {
        line,
        reason: format!("bad {what} field {s:?}"),
    })
}

/// Parses trace text into records, enforcing the line format and cycle
/// monotonicity. Line numbers in errors are 1-based.
pub fn parse_trace(text: &str) -> Result<Vec<DemandRecord>, TraceError> {
    let mut out = Vec::new();
    let mut prev_cycle = 0u64;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let mut fields = l.split(',');
        let (c, p, a) = match (fields.next(), fields.next(), fields.next(), fields.next()) {
            (Some(c), Some(p), Some(a), None) => (c, p, a),
            _ => {
                return Err(TraceError::Parse {
                    line,
                    reason: format!("expected 3 comma-separated fields, got {l:?}"),
                })
            }
        };
        let cycle: u64 = c.trim().parse().map_err(|_| TraceError::Parse {
            line,
            reason: format!("bad cycle field {:?}", c.trim()),
        })?;
        let pc = parse_hex_field(p, line, "pc")?;
        let addr = parse_hex_field(a, line, "addr")?;
        if !out.is_empty() && cycle < prev_cycle {
            return Err(TraceError::Ordering {
                line,
                prev: prev_cycle,
                found: cycle,
            });
        }
        prev_cycle = cycle;
        out.push(DemandRecord { cycle, pc, addr });
    }
    Ok(out)
}

/// Renders records in the canonical trace format (LF line endings).
pub fn emit_trace(records: &[DemandRecord]) -> String {
    let mut s = String::with_capacity(records.len() * 24);
    for r in records {
        s.push_str(&format!("{},{:#x},{:#x}\n", r.cycle, r.pc, r.addr));
    }
    s
}

/// Kind-specific parameters of a synthetic pattern.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PatternKind {
    /// Constant byte stride: base, base+s, base+2s, ...
    Stride { base: u64, stride: i64 },
    /// Dense forward stream: mostly next-line steps with occasional
    /// two-line skips, so the deltas are monotonic but not constant.
    Stream { base: u64 },
    /// Visits the set bits of `footprint` (bit i = line offset i) in each
    /// successive region of `region_bytes`.
    Spatial {
        base: u64,
        region_bytes: u64,
        footprint: u64,
    },
    /// A seeded random block sequence of length `period`, repeated.
    Temporal {
        base: u64,
        window_blocks: u64,
        period: usize,
    },
    /// Uniform random blocks in [base, base + window_blocks lines).
    Random { base: u64, window_blocks: u64 },
}

/// One synthetic access pattern bound to a pc.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternSpec {
    pub kind: PatternKind,
    pub pc: u64,
    pub count: usize,
    /// Cycles between consecutive records of this pattern.
    pub gap: u64,
}

/// Default inter-record gap in cycles.
pub const DEFAULT_GAP: u64 = 4;

/// FNV-1a over a byte slice; used for trace and config digests.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Digest of a record sequence, stable across runs and platforms.
pub fn trace_digest(records: &[DemandRecord]) -> String {
    let mut bytes = Vec::with_capacity(records.len() * 24);
    for r in records {
        bytes.extend_from_slice(&r.cycle.to_le_bytes());
        bytes.extend_from_slice(&r.pc.to_le_bytes());
        bytes.extend_from_slice(&r.addr.to_le_bytes());
    }
    format!("{:016x}", fnv1a64(&bytes))
}

/// splitmix64 step; used to derive per-component seeds from a master seed.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Seed for stream `index` derived from a master seed. Generators and the
/// bandit each take their own stream so one 64-bit seed drives everything.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_add(1)))
}

fn validate(spec: &PatternSpec) -> Result<(), TraceError> {
    if spec.count == 0 {
        return Err(TraceError::Pattern("count must be > 0".into()));
    }
    if spec.gap == 0 {
        return Err(TraceError::Pattern("gap must be at least 1 cycle".into()));
    }
    match spec.kind {
        PatternKind::Stride { stride, .. } if stride == 0 => {
            Err(TraceError::Pattern("stride must be nonzero".into()))
        }
        PatternKind::Spatial { footprint, .. } if footprint == 0 => {
            Err(TraceError::Pattern("spatial footprint must be nonempty".into()))
        }
        PatternKind::Temporal { period, .. } if period == 0 => {
            Err(TraceError::Pattern("temporal period must be > 0".into()))
        }
        PatternKind::Random { window_blocks, .. } | PatternKind::Temporal { window_blocks, .. }
            if window_blocks == 0 =>
        {
            Err(TraceError::Pattern("window must be > 0".into()))
        }
        _ => Ok(()),
    }
}

/// Address sequence of a pattern, without timing. Deterministic for a
/// fixed (spec, seed).
fn gen_addrs(spec: &PatternSpec, seed: u64) -> Result<Vec<u64>, TraceError> {
    validate(spec)?;
    let n = spec.count;
    let mut addrs = Vec::with_capacity(n);
    match spec.kind {
        PatternKind::Stride { base, stride } => {
            for k in 0..n {
                addrs.push(base.wrapping_add_signed(stride.wrapping_mul(k as i64)));
            }
        }
        PatternKind::Stream { base } => {
            let mut rng = StdRng::seed_from_u64(seed);
            let mut block = base / LINE_BYTES;
            for _ in 0..n {
                addrs.push(block * LINE_BYTES);
                // 1-in-8 chance of skipping a line keeps the run monotonic
                // but non-constant.
                block += if rng.gen_ratio(1, 8) { 2 } else { 1 };
            }
        }
        PatternKind::Spatial {
            base,
            region_bytes,
            footprint,
        } => {
            let offsets: Vec<u64> = (0..64).filter(|o| footprint & (1u64 << o) != 0).collect();
            let mut region = 0u64;
            'outer: loop {
                for &o in &offsets {
                    if addrs.len() == n {
                        break 'outer;
                    }
                    addrs.push(base + region * region_bytes + o * LINE_BYTES);
                }
                region += 1;
            }
        }
        PatternKind::Temporal {
            base,
            window_blocks,
            period,
        } => {
            let mut rng = StdRng::seed_from_u64(seed);
            let base_block = base / LINE_BYTES;
            let seq: Vec<u64> = (0..period)
                .map(|_| (base_block + rng.gen_range(0..window_blocks)) * LINE_BYTES)
                .collect();
            for k in 0..n {
                addrs.push(seq[k % period]);
            }
        }
        PatternKind::Random { base, window_blocks } => {
            let mut rng = StdRng::seed_from_u64(seed);
            let base_block = base / LINE_BYTES;
            for _ in 0..n {
                addrs.push((base_block + rng.gen_range(0..window_blocks)) * LINE_BYTES);
            }
        }
    }
    Ok(addrs)
}

/// Generates one pattern's records. Cycles accumulate `gap` per record,
/// starting at 0.
pub fn gen_pattern(spec: &PatternSpec, seed: u64) -> Result<Vec<DemandRecord>, TraceError> {
    let addrs = gen_addrs(spec, seed)?;
    Ok(addrs
        .into_iter()
        .enumerate()
        .map(|(k, addr)| DemandRecord {
            cycle: k as u64 * spec.gap,
            pc: spec.pc,
            addr,
        })
        .collect())
}

/// Merges several patterns into one trace by seeded weighted round-robin
/// (pick probability proportional to a spec's remaining records). Each
/// emitted record advances the global clock by its own spec's gap, so the
/// per-pc subsequence carries the solo generator's addresses in order.
///
/// Per-spec generator seeds are `derive_seed(seed, index)`.
pub fn gen_interleave(specs: &[PatternSpec], seed: u64) -> Result<Vec<DemandRecord>, TraceError> {
    if specs.is_empty() {
        return Err(TraceError::Pattern("need at least one pattern spec".into()));
    }
    for (i, a) in specs.iter().enumerate() {
        for b in &specs[i + 1..] {
            if a.pc == b.pc {
                return Err(TraceError::DuplicatePc(a.pc));
            }
        }
    }
    let streams: Vec<Vec<u64>> = specs
        .iter()
        .enumerate()
        .map(|(i, s)| gen_addrs(s, derive_seed(seed, i as u64)))
        .collect::<Result<_, _>>()?;

    let total: usize = streams.iter().map(Vec::len).sum();
    let mut next = vec![0usize; specs.len()];
    let mut out = Vec::with_capacity(total);
    let mut rng = StdRng::seed_from_u64(derive_seed(seed, u64::MAX));
    let mut cycle = 0u64;
    while out.len() < total {
        let remaining: usize = streams
            .iter()
            .zip(&next)
            .map(|(s, &n)| s.len() - n)
            .sum();
        let mut pick = rng.gen_range(0..remaining);
        let mut chosen = 0;
        for (i, (s, &n)) in streams.iter().zip(&next).enumerate() {
            let left = s.len() - n;
            if pick < left {
                chosen = i;
                break;
            }
            pick -= left;
        }
        out.push(DemandRecord {
            cycle,
            pc: specs[chosen].pc,
            addr: streams[chosen][next[chosen]],
        });
        next[chosen] += 1;
        cycle += specs[chosen].gap;
    }
    Ok(out)
}
