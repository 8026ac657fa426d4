//! The experiment runner: drives a demand trace through one selector, an
//! engine set, a two-level hierarchy, and the shadow hierarchy, and
//! aggregates a [`RunReport`].
//!
//! Per record the order is: shadow lookup, selector demand-side
//! bookkeeping, the demand access itself, then training and prefetch
//! issue. Prefetches issued while handling a record can therefore never
//! serve that same record.

use thiserror::Error;

use crate::alecto::{Alecto, EpochEvent, FillTarget};
use crate::baselines::{
    sequential_allocate, static_priority_select, ArmStats, BanditConfig, DegreeBandit,
    RecentAddressFilter,
};
use crate::cache::{Coverage, Hierarchy, Level, ShadowHierarchy};
use crate::config::{ExperimentConfig, SelectorKind, TraceSource};
use crate::metrics::{finalize, RawCounters, RunReport};
use crate::prefetchers::{build_engine_with, EngineKind, Prefetcher};
use crate::trace::{derive_seed, trace_digest, DemandRecord, LINE_BYTES};

/// Seed stream index reserved for the bandit's exploration RNG.
const BANDIT_SEED_STREAM: u64 = 1;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration: {0}")]
    Config(String),
}

/// Everything a run leaves behind. The framework state is returned for
/// post-run inspection of per-PC allocation states; bandit runs expose
/// the arm pulled in each decision epoch.
pub struct RunOutput {
    pub report: RunReport,
    pub alecto: Option<Alecto>,
    pub epoch_events: Option<Vec<EpochEvent>>,
    pub bandit_arms: Option<Vec<usize>>,
    pub bandit_arm_stats: Option<Vec<ArmStats>>,
}

enum Selector {
    Alecto(Box<Alecto>),
    Ipcp {
        filter: RecentAddressFilter,
        degree: usize,
    },
    Dol {
        filter: RecentAddressFilter,
        degree: usize,
    },
    Bandit {
        bandit: DegreeBandit,
        filter: RecentAddressFilter,
        arm: usize,
        epoch: u64,
        demands_in_epoch: u32,
        hits_in_epoch: u64,
    },
}

/// Runs one experiment over an already-loaded trace.
pub fn run_experiment(cfg: &ExperimentConfig, records: &[DemandRecord]) -> Result<RunOutput, SimError> {
    cfg.cache
        .validate()
        .map_err(|e| SimError::Config(e.to_string()))?;
    let num_engines = cfg.engines.len();
    if num_engines == 0 {
        return Err(SimError::Config("need at least one engine".into()));
    }

    let mut engines: Vec<Box<dyn Prefetcher>> = cfg
        .engines
        .iter()
        .map(|k| build_engine_with(*k, cfg.temporal_entries))
        .collect();
    let mut hier = Hierarchy::new(cfg.cache, num_engines);
    let mut shadow = ShadowHierarchy::new(&cfg.cache);

    let mut alecto_cfg = cfg.alecto;
    alecto_cfg.num_prefetchers = num_engines;
    alecto_cfg.temporal_index = cfg.engines.iter().position(|e| *e == EngineKind::Temporal);
    if cfg.selector == SelectorKind::AlectoFixedDegree {
        alecto_cfg.fixed_degree_mode = true;
    }
    alecto_cfg
        .validate()
        .map_err(|e| SimError::Config(e.to_string()))?;

    let base_degree = cfg.alecto.conservative_degree;
    let mut selector = match cfg.selector {
        SelectorKind::Alecto | SelectorKind::AlectoFixedDegree => {
            let mut a = Alecto::new(alecto_cfg);
            if cfg.record_trajectory {
                a.record_trajectory();
            }
            Selector::Alecto(Box::new(a))
        }
        SelectorKind::Ipcp => Selector::Ipcp {
            filter: RecentAddressFilter::new(cfg.alecto.sandbox_entries),
            degree: base_degree,
        },
        SelectorKind::Dol => Selector::Dol {
            filter: RecentAddressFilter::new(cfg.alecto.sandbox_entries),
            degree: base_degree,
        },
        SelectorKind::Bandit3 | SelectorKind::Bandit6 => {
            let bandit = DegreeBandit::new(BanditConfig {
                num_prefetchers: num_engines,
                degree: cfg.selector.bandit_degree().unwrap(),
                epoch_len: cfg.bandit_epoch_len,
                exploration: cfg.bandit_exploration,
                seed: derive_seed(cfg.seed, BANDIT_SEED_STREAM),
            });
            Selector::Bandit {
                bandit,
                filter: RecentAddressFilter::new(cfg.alecto.sandbox_entries),
                arm: 0,
                epoch: 0,
                demands_in_epoch: 0,
                hits_in_epoch: 0,
            }
        }
    };

    let mut raw = RawCounters {
        issued_per_engine: vec![0; num_engines],
        ..Default::default()
    };
    let mut bandit_arms: Option<Vec<usize>> = matches!(
        cfg.selector,
        SelectorKind::Bandit3 | SelectorKind::Bandit6
    )
    .then(Vec::new);

    for (i, rec) in records.iter().enumerate() {
        if i == cfg.measure_from && i != 0 {
            // Open the measurement window: state stays, counters restart.
            raw.demands = 0;
            raw.covered_timely = 0;
            raw.covered_untimely = 0;
            raw.issued_per_engine.iter_mut().for_each(|c| *c = 0);
            shadow.reset_miss_counter();
            hier.reset_metric_counters();
            engines.iter_mut().for_each(|e| e.reset_stats());
        }

        let shadow_hit = shadow.access(rec.addr);

        if let Selector::Alecto(a) = &mut selector {
            a.on_demand_observed(rec);
        }
        if let Selector::Bandit {
            bandit,
            arm,
            epoch,
            demands_in_epoch,
            ..
        } = &mut selector
        {
            if *demands_in_epoch == 0 {
                *epoch += 1;
                *arm = bandit.select_arm(*epoch);
                if let Some(arms) = bandit_arms.as_mut() {
                    arms.push(*arm);
                }
            }
        }

        let outcome = hier.access_demand(rec.addr, rec.cycle);

        raw.demands += 1;
        if !shadow_hit {
            match outcome.covered {
                Coverage::Timely => raw.covered_timely += 1,
                Coverage::Untimely => raw.covered_untimely += 1,
                Coverage::NotPrefetched => {}
            }
        }

        match &mut selector {
            Selector::Alecto(a) => {
                let directive = a.allocate(rec);
                let mut downstream = 0usize;
                for (e, d) in directive.per_engine.iter().enumerate() {
                    if !d.train {
                        continue;
                    }
                    let out = engines[e].train(rec, d.degree);
                    if out.candidates.is_empty() {
                        continue;
                    }
                    let kept = a.on_prefetch_issued(rec.pc, e, &out.candidates, d);
                    downstream += kept.len();
                    for (block, target) in kept {
                        let level = match target {
                            FillTarget::L1 => Level::L1,
                            FillTarget::L2 => Level::L2,
                        };
                        hier.install_prefetch(block * LINE_BYTES, level, rec.cycle, e, rec.pc);
                        raw.issued_per_engine[e] += 1;
                    }
                }
                a.note_issue_result(rec.pc, downstream);
            }
            Selector::Ipcp { filter, degree } => {
                let outs: Vec<_> = engines.iter_mut().map(|e| e.train(rec, *degree)).collect();
                if let Some((winner, blocks)) = static_priority_select(&outs) {
                    for &block in blocks {
                        if filter.admit(block) {
                            hier.install_prefetch(
                                block * LINE_BYTES,
                                Level::L1,
                                rec.cycle,
                                winner,
                                rec.pc,
                            );
                            raw.issued_per_engine[winner] += 1;
                        }
                    }
                }
            }
            Selector::Dol { filter, degree } => {
                let (winner, out) = sequential_allocate(&mut engines, rec, *degree);
                for &block in &out.candidates {
                    if filter.admit(block) {
                        hier.install_prefetch(
                            block * LINE_BYTES,
                            Level::L1,
                            rec.cycle,
                            winner,
                            rec.pc,
                        );
                        raw.issued_per_engine[winner] += 1;
                    }
                }
            }
            Selector::Bandit {
                bandit,
                filter,
                arm,
                demands_in_epoch,
                hits_in_epoch,
                ..
            } => {
                let x = bandit.config().degree;
                for (e, engine) in engines.iter_mut().enumerate() {
                    let out = engine.train(rec, x);
                    if *arm & (1 << e) == 0 {
                        continue;
                    }
                    for &block in &out.candidates {
                        if filter.admit(block) {
                            hier.install_prefetch(
                                block * LINE_BYTES,
                                Level::L1,
                                rec.cycle,
                                e,
                                rec.pc,
                            );
                            raw.issued_per_engine[e] += 1;
                        }
                    }
                }
                if outcome.level == Level::L1 || outcome.covered != Coverage::NotPrefetched {
                    *hits_in_epoch += 1;
                }
                *demands_in_epoch += 1;
                if *demands_in_epoch >= cfg.bandit_epoch_len {
                    let reward = *hits_in_epoch as f64;
                    let pulled = *arm;
                    bandit.update(pulled, reward);
                    *hits_in_epoch = 0;
                    *demands_in_epoch = 0;
                }
            }
        }
    }

    raw.shadow_misses = shadow.misses();
    raw.useful_per_engine = hier.useful_per_source().to_vec();
    raw.train_count_per_engine = engines.iter().map(|e| e.stats().train_count).collect();
    raw.table_misses_per_engine = engines.iter().map(|e| e.stats().table_misses).collect();

    let storage = matches!(
        cfg.selector,
        SelectorKind::Alecto | SelectorKind::AlectoFixedDegree
    )
    .then(|| crate::alecto::storage_bits(num_engines as u64).total);

    let report = finalize(
        cfg.selector.name(),
        &trace_digest(records),
        &cfg.digest(),
        cfg.engines.iter().map(|e| e.name().to_string()).collect(),
        raw,
        storage,
    );

    let (alecto, epoch_events, bandit_arm_stats) = match selector {
        Selector::Alecto(a) => {
            let events = a.trajectory().map(|t| t.to_vec());
            (Some(*a), events, None)
        }
        Selector::Bandit { bandit, .. } => (None, None, Some(bandit.arms().to_vec())),
        _ => (None, None, None),
    };
    Ok(RunOutput {
        report,
        alecto,
        epoch_events,
        bandit_arms,
        bandit_arm_stats,
    })
}

/// Loads the trace a config asks for: inline patterns are generated with
/// the config seed, files are read and parsed.
pub fn load_trace(cfg: &ExperimentConfig) -> Result<Vec<DemandRecord>, TraceLoadError> {
    match &cfg.trace {
        TraceSource::Inline(specs) => {
            crate::trace::gen_interleave(specs, cfg.seed).map_err(TraceLoadError::Generate)
        }
        TraceSource::File(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| TraceLoadError::Io(path.display().to_string(), e))?;
            crate::trace::parse_trace(&text).map_err(TraceLoadError::Parse)
        }
    }
}

#[derive(Debug, Error)]
pub enum TraceLoadError {
    #[error("generating trace: {0}")]
    Generate(crate::trace::TraceError),
    #[error("reading trace {0}: {1}")]
    Io(String, std::io::Error),
    #[error("parsing trace: {0}")]
    Parse(crate::trace::TraceError),
}
