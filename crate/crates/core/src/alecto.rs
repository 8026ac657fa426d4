//! The Alecto selection framework: per-PC identification of suitable
//! prefetchers and dynamic allocation of demand requests to them.
//!
//! Three structures cooperate:
//!
//! * **Allocation Table**: per (pc, engine) state machine. Every engine
//!   starts `Unidentified`; per-epoch accuracy promotes it through
//!   `Aggressive(0..=M)` substates (each raising its prefetch degree) or
//!   blocks it in `Blocked(-N..=0)` cool-down substates during which it
//!   receives no demand requests at all.
//! * **Sample Table**: per-PC issued/confirmed counters per engine, the
//!   per-PC demand counter that defines epochs, and the dead counter that
//!   rescues PCs stuck aggressive-but-silent after a pattern change.
//! * **Sandbox Table**: a block-indexed record of recently issued
//!   prefetches. It confirms usefulness for the Sample Table when demands
//!   land on recorded blocks with a matching PC hash, and doubles as the
//!   duplicate-prefetch filter.

use serde::Serialize;
use thiserror::Error;

use crate::trace::DemandRecord;

/// XOR-fold of a 64-bit value to `width` bits: the value is split into
/// consecutive width-bit chunks from the low end (zero-padded at the top)
/// which are XORed together.
pub fn pc_hash(value: u64, width: u32) -> u64 {
    assert!((1..=64).contains(&width), "fold width out of range");
    if width == 64 {
        return value;
    }
    let mask = (1u64 << width) - 1;
    let mut v = value;
    let mut acc = 0u64;
    while v != 0 {
        acc ^= v & mask;
        v >>= width;
    }
    acc
}

/// Selection state of one prefetcher for one pc.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PrefState {
    /// Suitability not yet determined; trained at the conservative degree.
    Unidentified,
    /// Identified as suitable; substate m grants degree c+m+1.
    Aggressive(u8),
    /// Identified as unsuitable; receives no demand requests. Substate n
    /// counts up from -N to 0, one step per epoch.
    Blocked(i8),
}

impl PrefState {
    pub fn is_aggressive(&self) -> bool {
        matches!(self, PrefState::Aggressive(_))
    }

    pub fn is_blocked(&self) -> bool {
        matches!(self, PrefState::Blocked(_))
    }
}

/// Framework constants. Defaults reproduce the evaluated configuration:
/// M=5, N=8, c=3, PB=0.75, DB=0.05, 100-demand epochs, dead threshold 150,
/// 64/64/512 table entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlectoConfig {
    pub num_prefetchers: usize,
    /// Highest aggressive substate (M).
    pub max_aggr: u8,
    /// Cool-down length in epochs (N).
    pub cooldown_epochs: u8,
    /// Conservative degree granted while unidentified (c).
    pub conservative_degree: usize,
    /// Proficiency boundary: accuracy above it promotes.
    pub pb: f64,
    /// Deficiency boundary: accuracy below it demotes/blocks.
    pub db: f64,
    /// Demand accesses per pc per epoch.
    pub epoch_demands: u32,
    /// Dead-counter reset threshold. The counter itself is 7 bits wide, so
    /// values above 127 saturate there and the reset fires at saturation.
    pub dead_threshold: u32,
    /// Minimum issued prefetches in an epoch before accuracy is judged.
    pub min_issued_for_judgement: u32,
    /// Index of the temporal prefetcher, if one is scheduled.
    pub temporal_index: Option<usize>,
    /// Ablation: every aggressive substate gets the maximum degree c+M+1.
    pub fixed_degree_mode: bool,
    pub alloc_entries: usize,
    pub sample_entries: usize,
    pub sandbox_entries: usize,
}

impl AlectoConfig {
    pub fn with_prefetchers(num_prefetchers: usize, temporal_index: Option<usize>) -> Self {
        Self {
            num_prefetchers,
            max_aggr: 5,
            cooldown_epochs: 8,
            conservative_degree: 3,
            pb: 0.75,
            db: 0.05,
            epoch_demands: 100,
            dead_threshold: 150,
            min_issued_for_judgement: 8,
            temporal_index,
            fixed_degree_mode: false,
            alloc_entries: 64,
            sample_entries: 64,
            sandbox_entries: 512,
        }
    }

    pub fn validate(&self) -> Result<(), AlectoConfigError> {
        if self.num_prefetchers == 0 || self.num_prefetchers > 16 {
            return Err(AlectoConfigError::PrefetcherCount(self.num_prefetchers));
        }
        if !(0.0..=1.0).contains(&self.db) || !(0.0..=1.0).contains(&self.pb) || self.db >= self.pb
        {
            return Err(AlectoConfigError::Boundaries {
                db: self.db,
                pb: self.pb,
            });
        }
        if self.cooldown_epochs == 0 || self.cooldown_epochs > 127 {
            return Err(AlectoConfigError::Cooldown(self.cooldown_epochs));
        }
        if self.epoch_demands == 0 || self.epoch_demands > 255 {
            return Err(AlectoConfigError::EpochDemands(self.epoch_demands));
        }
        if self.epoch_demands >= self.dead_threshold {
            return Err(AlectoConfigError::DeadThreshold {
                epoch: self.epoch_demands,
                dead: self.dead_threshold,
            });
        }
        for (name, n) in [
            ("alloc_entries", self.alloc_entries),
            ("sample_entries", self.sample_entries),
            ("sandbox_entries", self.sandbox_entries),
        ] {
            if !n.is_power_of_two() {
                return Err(AlectoConfigError::TableSize { name, entries: n });
            }
        }
        if let Some(t) = self.temporal_index {
            if t >= self.num_prefetchers {
                return Err(AlectoConfigError::TemporalIndex(t));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AlectoConfigError {
    #[error("prefetcher count {0} out of range 1..=16")]
    PrefetcherCount(usize),
    #[error("boundaries must satisfy 0 <= db < pb <= 1, got db={db} pb={pb}")]
    Boundaries { db: f64, pb: f64 },
    #[error("cooldown epochs {0} out of range 1..=127")]
    Cooldown(u8),
    #[error("epoch demands {0} out of range 1..=255")]
    EpochDemands(u32),
    #[error("epoch demands {epoch} must be below dead threshold {dead}")]
    DeadThreshold { epoch: u32, dead: u32 },
    #[error("{name} = {entries} is not a power of two")]
    TableSize { name: &'static str, entries: usize },
    #[error("temporal index {0} out of range")]
    TemporalIndex(usize),
}

/// What one engine may do with the current demand request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineDirective {
    pub train: bool,
    pub degree: usize,
    /// Of the issued blocks, how many fill L1; the rest fill L2.
    pub l1_quota: usize,
    pub l2_quota: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationDirective {
    pub per_engine: Vec<EngineDirective>,
}

/// Fill destination of a surviving prefetch request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FillTarget {
    L1,
    L2,
}

#[derive(Debug, Clone)]
struct AllocationEntry {
    valid: bool,
    tag: u16,
    states: Vec<PrefState>,
}

#[derive(Debug, Clone)]
struct SampleEntry {
    valid: bool,
    tag: u16,
    issued: Vec<u8>,
    confirmed: Vec<u8>,
    deads: u8,
    demands: u8,
}

#[derive(Debug, Clone, Copy, Default)]
struct SandboxEntry {
    live: bool,
    tag: u8,
    issued_by: u16,
    pc_hash: u16,
}

/// One epoch boundary's state transition for a pc; recorded when
/// trajectory capture is enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochEvent {
    pub pc: u64,
    pub before: Vec<PrefState>,
    pub after: Vec<PrefState>,
}

/// Saturation ceiling of the 7-bit dead counter.
const DEAD_COUNTER_MAX: u32 = 127;

#[derive(Debug, Clone)]
pub struct Alecto {
    cfg: AlectoConfig,
    alloc: Vec<AllocationEntry>,
    sample: Vec<SampleEntry>,
    sandbox: Vec<SandboxEntry>,
    /// Whether the last allocate+train round for the pc at this sample slot
    /// produced zero downstream prefetches. Runtime bookkeeping, not part
    /// of the storage budget.
    last_round_empty: Vec<bool>,
    trajectory: Option<Vec<EpochEvent>>,
    alloc_index_bits: u32,
    sample_index_bits: u32,
    sandbox_index_bits: u32,
}

impl Alecto {
    pub fn new(cfg: AlectoConfig) -> Self {
        cfg.validate().expect("invalid Alecto configuration");
        let p = cfg.num_prefetchers;
        Self {
            alloc: vec![
                AllocationEntry {
                    valid: false,
                    tag: 0,
                    states: vec![PrefState::Unidentified; p],
                };
                cfg.alloc_entries
            ],
            sample: vec![
                SampleEntry {
                    valid: false,
                    tag: 0,
                    issued: vec![0; p],
                    confirmed: vec![0; p],
                    deads: 0,
                    demands: 0,
                };
                cfg.sample_entries
            ],
            sandbox: vec![SandboxEntry::default(); cfg.sandbox_entries],
            last_round_empty: vec![false; cfg.sample_entries],
            trajectory: None,
            alloc_index_bits: cfg.alloc_entries.trailing_zeros(),
            sample_index_bits: cfg.sample_entries.trailing_zeros(),
            sandbox_index_bits: cfg.sandbox_entries.trailing_zeros(),
            cfg,
        }
    }

    pub fn config(&self) -> &AlectoConfig {
        &self.cfg
    }

    /// Starts recording one [`EpochEvent`] per epoch boundary.
    pub fn record_trajectory(&mut self) {
        self.trajectory = Some(Vec::new());
    }

    pub fn trajectory(&self) -> Option<&[EpochEvent]> {
        self.trajectory.as_deref()
    }

    fn alloc_slot(&self, pc: u64) -> (usize, u16) {
        (
            pc_hash(pc, self.alloc_index_bits) as usize,
            pc_hash(pc >> self.alloc_index_bits, 9) as u16,
        )
    }

    fn sample_slot(&self, pc: u64) -> (usize, u16) {
        (
            pc_hash(pc, self.sample_index_bits) as usize,
            pc_hash(pc >> self.sample_index_bits, 9) as u16,
        )
    }

    fn sandbox_slot(&self, block: u64) -> (usize, u8) {
        (
            pc_hash(block, self.sandbox_index_bits) as usize,
            pc_hash(block >> self.sandbox_index_bits, 6) as u8,
        )
    }

    /// Current states for a pc, if its allocation entry is resident.
    pub fn states_for(&self, pc: u64) -> Option<&[PrefState]> {
        let (idx, tag) = self.alloc_slot(pc);
        let e = &self.alloc[idx];
        (e.valid && e.tag == tag).then(|| e.states.as_slice())
    }

    fn sample_entry_mut(&mut self, pc: u64) -> usize {
        let (idx, tag) = self.sample_slot(pc);
        let e = &mut self.sample[idx];
        if !e.valid || e.tag != tag {
            e.valid = true;
            e.tag = tag;
            e.issued.iter_mut().for_each(|c| *c = 0);
            e.confirmed.iter_mut().for_each(|c| *c = 0);
            e.deads = 0;
            e.demands = 0;
            self.last_round_empty[idx] = false;
        }
        idx
    }

    /// Looks up (installing or replacing as needed) the allocation entry
    /// and derives each engine's directive from its state.
    pub fn allocate(&mut self, record: &DemandRecord) -> AllocationDirective {
        let (idx, tag) = self.alloc_slot(record.pc);
        let e = &mut self.alloc[idx];
        if !e.valid || e.tag != tag {
            e.valid = true;
            e.tag = tag;
            e.states.iter_mut().for_each(|s| *s = PrefState::Unidentified);
        }
        let c = self.cfg.conservative_degree;
        let per_engine = e
            .states
            .iter()
            .map(|s| {
                let (train, degree) = match s {
                    PrefState::Unidentified => (true, c),
                    PrefState::Aggressive(m) => {
                        let m = if self.cfg.fixed_degree_mode {
                            self.cfg.max_aggr
                        } else {
                            *m
                        };
                        (true, c + m as usize + 1)
                    }
                    PrefState::Blocked(_) => (false, 0),
                };
                let l1_quota = degree.min(c);
                EngineDirective {
                    train,
                    degree,
                    l1_quota,
                    l2_quota: degree - l1_quota,
                }
            })
            .collect();
        AllocationDirective { per_engine }
    }

    /// Filters an engine's candidate blocks through the Sandbox Table and
    /// returns the survivors with their fill targets (first `l1_quota`
    /// survivors to L1, the rest to L2).
    ///
    /// Issued accounting is per live sandbox claim: a block the engine
    /// already has a live claim on is a re-statement, not a new attempt; a
    /// block claimed only by other engines charges this engine once and
    /// ORs it into the entry so later confirmations credit it too.
    pub fn on_prefetch_issued(
        &mut self,
        pc: u64,
        engine: usize,
        blocks: &[u64],
        directive: &EngineDirective,
    ) -> Vec<(u64, FillTarget)> {
        if blocks.is_empty() {
            return Vec::new();
        }
        let sample_idx = self.sample_entry_mut(pc);
        let pch = pc_hash(pc, 9) as u16;
        let bit = 1u16 << engine;
        let mut kept = Vec::new();
        for &block in blocks.iter().take(directive.degree) {
            let (idx, tag) = self.sandbox_slot(block);
            let e = &mut self.sandbox[idx];
            if e.live && e.tag == tag {
                // Duplicate: drop the request but let this engine claim it.
                if e.issued_by & bit == 0 {
                    e.issued_by |= bit;
                    let c = &mut self.sample[sample_idx].issued[engine];
                    *c = c.saturating_add(1);
                }
                continue;
            }
            *e = SandboxEntry {
                live: true,
                tag,
                issued_by: bit,
                pc_hash: pch,
            };
            let c = &mut self.sample[sample_idx].issued[engine];
            *c = c.saturating_add(1);
            let target = if kept.len() < directive.l1_quota {
                FillTarget::L1
            } else {
                FillTarget::L2
            };
            kept.push((block, target));
        }
        kept
    }

    /// Demand-side bookkeeping, called once per record before the record
    /// is allocated: sandbox confirmation, the per-PC demand counter and
    /// epoch firing, and the dead counter.
    ///
    /// Returns true when this demand closed an epoch for its pc.
    pub fn on_demand_observed(&mut self, record: &DemandRecord) -> bool {
        // 1. Confirmation: a demand landing on a recorded prefetch block
        // with a matching pc hash credits every engine that claimed it.
        let (sb_idx, sb_tag) = self.sandbox_slot(record.block());
        let pch = pc_hash(record.pc, 9) as u16;
        let sb = self.sandbox[sb_idx];
        let sample_idx = self.sample_entry_mut(record.pc);
        if sb.live && sb.tag == sb_tag && sb.pc_hash == pch {
            for i in 0..self.cfg.num_prefetchers {
                if sb.issued_by & (1 << i) != 0 {
                    let c = &mut self.sample[sample_idx].confirmed[i];
                    *c = c.saturating_add(1);
                }
            }
        }

        // 2. Demand counter and epoch.
        let epoch_fired = {
            let e = &mut self.sample[sample_idx];
            e.demands = e.demands.saturating_add(1);
            e.demands as u32 >= self.cfg.epoch_demands
        };
        if epoch_fired {
            self.fire_epoch(record.pc, sample_idx);
        }

        // 3. Dead counter: an aggressive entry that stopped producing
        // prefetches is drifting toward deadlock; sustained silence resets
        // the pc to a fresh search.
        let any_aggressive = self
            .states_for(record.pc)
            .map(|s| s.iter().any(PrefState::is_aggressive))
            .unwrap_or(false);
        let e = &mut self.sample[sample_idx];
        if any_aggressive && self.last_round_empty[sample_idx] {
            e.deads = e.deads.saturating_add(1).min(DEAD_COUNTER_MAX as u8);
        } else {
            e.deads = 0;
        }
        if e.deads as u32 >= self.cfg.dead_threshold.min(DEAD_COUNTER_MAX) {
            e.deads = 0;
            let (idx, tag) = self.alloc_slot(record.pc);
            let a = &mut self.alloc[idx];
            if a.valid && a.tag == tag {
                a.states.iter_mut().for_each(|s| *s = PrefState::Unidentified);
            }
        }
        epoch_fired
    }

    /// Reports how many downstream prefetches the just-finished
    /// allocate+train round for `pc` produced; feeds the dead counter.
    pub fn note_issue_result(&mut self, pc: u64, downstream: usize) {
        let (idx, tag) = self.sample_slot(pc);
        if self.sample[idx].valid && self.sample[idx].tag == tag {
            self.last_round_empty[idx] = downstream == 0;
        }
    }

    fn fire_epoch(&mut self, pc: u64, sample_idx: usize) {
        let accuracy: Vec<Option<f64>> = {
            let e = &self.sample[sample_idx];
            (0..self.cfg.num_prefetchers)
                .map(|i| {
                    let issued = e.issued[i] as u32;
                    (issued >= self.cfg.min_issued_for_judgement)
                        .then(|| (e.confirmed[i] as f64 / issued as f64).min(1.0))
                })
                .collect()
        };
        let (idx, tag) = self.alloc_slot(pc);
        let a = &mut self.alloc[idx];
        if a.valid && a.tag == tag {
            let before = a.states.clone();
            let after = epoch_update(&self.cfg, &before, &accuracy);
            a.states = after.clone();
            if let Some(t) = self.trajectory.as_mut() {
                t.push(EpochEvent { pc, before, after });
            }
        }
        let e = &mut self.sample[sample_idx];
        e.demands = 0;
        e.issued.iter_mut().for_each(|c| *c = 0);
        e.confirmed.iter_mut().for_each(|c| *c = 0);
    }
}

/// One epoch's state transition:
///
/// 1. Blocked substates below 0 cool down one step, unconditionally.
/// 2. Aggressive engines move up on accuracy above PB, down on accuracy
///    below DB (falling to Unidentified from the bottom substate), and
///    leave to Unidentified from substate 0 whenever accuracy is not
///    above PB. Undefined accuracy freezes them.
/// 3. Unidentified engines with accuracy below DB are blocked for a full
///    cool-down; those above PB become promotion candidates.
/// 4. Candidates rise to Aggressive(0) together and every remaining
///    Unidentified engine is parked at Blocked(0): except that a temporal
///    candidate yields its promotion (to Blocked(0)) when a non-temporal
///    candidate rises in the same epoch.
/// 5. If nothing is left aggressive, engines at Blocked(0) are released
///    back to Unidentified for reevaluation.
pub fn epoch_update(
    cfg: &AlectoConfig,
    states: &[PrefState],
    accuracy: &[Option<f64>],
) -> Vec<PrefState> {
    assert_eq!(states.len(), accuracy.len());
    let mut next: Vec<PrefState> = states.to_vec();

    for s in next.iter_mut() {
        if let PrefState::Blocked(n) = *s {
            if n < 0 {
                *s = PrefState::Blocked(n + 1);
            }
        }
    }

    for (i, s) in states.iter().enumerate() {
        if let PrefState::Aggressive(m) = *s {
            let Some(a) = accuracy[i] else { continue };
            next[i] = if a > cfg.pb {
                PrefState::Aggressive((m + 1).min(cfg.max_aggr))
            } else if a < cfg.db {
                if m > 0 {
                    PrefState::Aggressive(m - 1)
                } else {
                    PrefState::Unidentified
                }
            } else if m == 0 {
                PrefState::Unidentified
            } else {
                PrefState::Aggressive(m)
            };
        }
    }

    let mut candidates = Vec::new();
    for (i, s) in states.iter().enumerate() {
        if matches!(s, PrefState::Unidentified) {
            match accuracy[i] {
                Some(a) if a < cfg.db => {
                    next[i] = PrefState::Blocked(-(cfg.cooldown_epochs as i8))
                }
                Some(a) if a > cfg.pb => candidates.push(i),
                _ => {}
            }
        }
    }

    if !candidates.is_empty() {
        for &i in &candidates {
            let temporal_yields = candidates.len() >= 2 && Some(i) == cfg.temporal_index;
            next[i] = if temporal_yields {
                PrefState::Blocked(0)
            } else {
                PrefState::Aggressive(0)
            };
        }
        for (i, s) in states.iter().enumerate() {
            if matches!(s, PrefState::Unidentified) && matches!(next[i], PrefState::Unidentified) {
                next[i] = PrefState::Blocked(0);
            }
        }
    }

    if !next.iter().any(PrefState::is_aggressive) {
        for s in next.iter_mut() {
            if matches!(s, PrefState::Blocked(0)) {
                *s = PrefState::Unidentified;
            }
        }
    }
    next
}

/// Storage accounting per the framework's budget: allocation and sample
/// tables are 64 entries, the sandbox 512.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StorageBits {
    pub allocation: u64,
    pub sample: u64,
    pub sandbox: u64,
    pub total: u64,
    pub total_excluding_sandbox: u64,
}

/// Budgeted storage in bits for P prefetchers:
/// allocation 640 + 256P, sample 1600 + 1024P, sandbox 3072 + 512P.
pub fn storage_bits(p: u64) -> StorageBits {
    assert!(p >= 1, "need at least one prefetcher");
    let allocation = 640 + 256 * p;
    let sample = 1600 + 1024 * p;
    let sandbox = 3072 + 512 * p;
    StorageBits {
        allocation,
        sample,
        sandbox,
        total: allocation + sample + sandbox,
        total_excluding_sandbox: allocation + sample,
    }
}

/// Field-by-field recount of the implemented tables. Matches
/// [`storage_bits`] on the default geometry except for the sandbox
/// pc-hash field (9 bits per entry), which the budget omits even though
/// confirmation needs it.
pub fn storage_recount(cfg: &AlectoConfig) -> StorageBits {
    let p = cfg.num_prefetchers as u64;
    let state_bits = 4;
    let allocation = cfg.alloc_entries as u64 * (1 + 9 + state_bits * p);
    let sample = cfg.sample_entries as u64 * (1 + 9 + 8 * p + 8 * p + 7 + 8);
    let sandbox = cfg.sandbox_entries as u64 * (6 + p + 9);
    StorageBits {
        allocation,
        sample,
        sandbox,
        total: allocation + sample + sandbox,
        total_excluding_sandbox: allocation + sample,
    }
}
