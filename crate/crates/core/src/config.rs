//! Experiment configuration: a flat `key = value` text format with
//! `[section]` headers, and the typed structure it parses into.
//!
//! ```text
//! [run]
//! selector = alecto          # alecto | alecto_fixed_degree | ipcp | dol | bandit3 | bandit6
//! seed = 42
//! measure_from = 0           # records before this index warm up but are not measured
//!
//! [engines]
//! set = stream,stride,spatial          # ordered; may include temporal
//! temporal_entries = 4096
//!
//! [cache]
//! l1_bytes = 32768
//! l1_ways = 8
//! l1_latency = 4
//! l2_bytes = 262144
//! l2_ways = 8
//! l2_latency = 15
//! memory_latency = 200
//!
//! [alecto]
//! max_aggressive = 5
//! cooldown_epochs = 8
//! conservative_degree = 3
//! proficiency_boundary = 0.75
//! deficiency_boundary = 0.05
//! epoch_demands = 100
//! dead_threshold = 150
//! min_issued_for_judgement = 8
//! alloc_entries = 64
//! sample_entries = 64
//! sandbox_entries = 512
//!
//! [bandit]
//! epoch_len = 2048
//! exploration = epsilon      # epsilon | ucb1
//! epsilon = 0.1
//! ucb_factor = 1.414
//!
//! [trace]
//! file = some.trace
//! # or inline patterns instead of a file:
//! # pattern.0 = stride pc=0xa00 base=0x100000 stride=64 count=50000 gap=4
//! # pattern.1 = spatial pc=0xb00 base=0x2000000 region=4096 footprint=0x48 count=9000
//! ```
//!
//! Pattern lines start with a kind (`stride`, `stream`, `spatial`,
//! `temporal`, `random`) followed by `key=value` tokens: `pc`, `base`,
//! `stride`, `region`, `footprint`, `period`, `window_blocks`, `count`,
//! `gap`. Numbers accept decimal or 0x-prefixed hex.

use std::collections::BTreeMap;
use std::path::PathBuf;

use thiserror::Error;

use crate::alecto::AlectoConfig;
use crate::baselines::Exploration;
use crate::cache::HierarchyConfig;
use crate::prefetchers::EngineKind;
use crate::trace::{fnv1a64, PatternKind, PatternSpec, DEFAULT_GAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectorKind {
    Alecto,
    AlectoFixedDegree,
    Ipcp,
    Dol,
    Bandit3,
    Bandit6,
}

impl SelectorKind {
    pub fn name(&self) -> &'static str {
        match self {
            SelectorKind::Alecto => "alecto",
            SelectorKind::AlectoFixedDegree => "alecto_fixed_degree",
            SelectorKind::Ipcp => "ipcp",
            SelectorKind::Dol => "dol",
            SelectorKind::Bandit3 => "bandit3",
            SelectorKind::Bandit6 => "bandit6",
        }
    }

    pub fn parse(s: &str) -> Option<SelectorKind> {
        match s {
            "alecto" => Some(SelectorKind::Alecto),
            "alecto_fixed_degree" => Some(SelectorKind::AlectoFixedDegree),
            "ipcp" => Some(SelectorKind::Ipcp),
            "dol" => Some(SelectorKind::Dol),
            "bandit3" => Some(SelectorKind::Bandit3),
            "bandit6" => Some(SelectorKind::Bandit6),
            _ => None,
        }
    }

    /// Degree X for the bandit presets.
    pub fn bandit_degree(&self) -> Option<usize> {
        match self {
            SelectorKind::Bandit3 => Some(3),
            SelectorKind::Bandit6 => Some(6),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceSource {
    File(PathBuf),
    Inline(Vec<PatternSpec>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub selector: SelectorKind,
    pub engines: Vec<EngineKind>,
    pub temporal_entries: usize,
    pub cache: HierarchyConfig,
    pub alecto: AlectoConfig,
    pub bandit_epoch_len: u32,
    pub bandit_exploration: Exploration,
    pub seed: u64,
    pub measure_from: usize,
    pub trace: TraceSource,
    /// Capture per-epoch state transitions (test instrumentation).
    pub record_trajectory: bool,
}

impl ExperimentConfig {
    /// Defaults: the evaluated three-engine set and constants.
    pub fn new(selector: SelectorKind) -> Self {
        let engines = vec![EngineKind::Stream, EngineKind::Stride, EngineKind::Spatial];
        let alecto = AlectoConfig::with_prefetchers(engines.len(), None);
        Self {
            selector,
            engines,
            temporal_entries: 4096,
            cache: HierarchyConfig::default(),
            alecto,
            bandit_epoch_len: 2048,
            bandit_exploration: Exploration::EpsilonGreedy { epsilon: 0.1 },
            seed: 0,
            measure_from: 0,
            trace: TraceSource::Inline(Vec::new()),
            record_trajectory: false,
        }
    }

    pub fn with_engines(mut self, engines: Vec<EngineKind>) -> Self {
        self.alecto.num_prefetchers = engines.len();
        self.alecto.temporal_index = engines.iter().position(|e| *e == EngineKind::Temporal);
        self.engines = engines;
        self
    }

    /// Stable digest over every semantically relevant field.
    pub fn digest(&self) -> String {
        let mut s = String::new();
        s.push_str(self.selector.name());
        for e in &self.engines {
            s.push_str(e.name());
        }
        s.push_str(&format!(
            "|te{}|l1:{}/{}/{}|l2:{}/{}/{}|mem{}|a:{} {} {} {} {} {} {} {} {} {} {} {}|b:{} {:?}|s{}|m{}",
            self.temporal_entries,
            self.cache.l1.size_bytes,
            self.cache.l1.ways,
            self.cache.l1.hit_latency,
            self.cache.l2.size_bytes,
            self.cache.l2.ways,
            self.cache.l2.hit_latency,
            self.cache.memory_latency,
            self.alecto.max_aggr,
            self.alecto.cooldown_epochs,
            self.alecto.conservative_degree,
            self.alecto.pb,
            self.alecto.db,
            self.alecto.epoch_demands,
            self.alecto.dead_threshold,
            self.alecto.min_issued_for_judgement,
            self.alecto.fixed_degree_mode,
            self.alecto.alloc_entries,
            self.alecto.sample_entries,
            self.alecto.sandbox_entries,
            self.bandit_epoch_len,
            self.bandit_exploration,
            self.seed,
            self.measure_from,
        ));
        format!("{:016x}", fnv1a64(s.as_bytes()))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("[{section}] {key}: {reason}")]
    Value {
        section: String,
        key: String,
        reason: String,
    },
    #[error("{0}")]
    Invalid(String),
}

fn parse_u64(s: &str) -> Option<u64> {
    let t = s.trim();
    if let Some(hex) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16).ok()
    } else {
        t.parse().ok()
    }
}

fn parse_i64(s: &str) -> Option<i64> {
    let t = s.trim();
    if let Some(neg) = t.strip_prefix('-') {
        parse_u64(neg).map(|v| -(v as i64))
    } else {
        parse_u64(t).map(|v| v as i64)
    }
}

struct Sections(BTreeMap<String, Vec<(usize, String, String)>>);

impl Sections {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map: BTreeMap<String, Vec<(usize, String, String)>> = BTreeMap::new();
        let mut current = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let l = raw.split('#').next().unwrap_or("").trim();
            if l.is_empty() {
                continue;
            }
            if let Some(name) = l.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or(ConfigError::Syntax {
                    line,
                    reason: "unterminated section header".into(),
                })?;
                current = name.trim().to_string();
                map.entry(current.clone()).or_default();
                continue;
            }
            let (k, v) = l.split_once('=').ok_or(ConfigError::Syntax {
                line,
                reason: format!("expected key = value, got {l:?}"),
            })?;
            if current.is_empty() {
                return Err(ConfigError::Syntax {
                    line,
                    reason: "key outside any [section]".into(),
                });
            }
            map.entry(current.clone()).or_default().push((
                line,
                k.trim().to_string(),
                v.trim().to_string(),
            ));
        }
        Ok(Sections(map))
    }

    fn entries(&self, section: &str) -> &[(usize, String, String)] {
        self.0.get(section).map(Vec::as_slice).unwrap_or(&[])
    }
}

fn value_err(section: &str, key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Value {
        section: section.into(),
        key: key.into(),
        reason: reason.into(),
    }
}

macro_rules! set_num {
    ($target:expr, $section:expr, $key:expr, $value:expr, $ty:ty) => {{
        let v = parse_u64($value).ok_or_else(|| value_err($section, $key, "expected a number"))?;
        $target = v as $ty;
    }};
}

/// Parses pattern tokens: `<kind> key=value ...`.
pub fn parse_pattern(line: &str) -> Result<PatternSpec, ConfigError> {
    let mut tokens = line.split_whitespace();
    let kind_name = tokens
        .next()
        .ok_or_else(|| ConfigError::Invalid("empty pattern".into()))?;
    let mut kv = BTreeMap::new();
    for t in tokens {
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| ConfigError::Invalid(format!("bad pattern token {t:?}")))?;
        kv.insert(k.to_string(), v.to_string());
    }
    let get_u64 = |k: &str| -> Result<u64, ConfigError> {
        let v = kv
            .get(k)
            .ok_or_else(|| ConfigError::Invalid(format!("pattern {kind_name} needs {k}=")))?;
        parse_u64(v).ok_or_else(|| ConfigError::Invalid(format!("bad number for {k}: {v}")))
    };
    let get_u64_or = |k: &str, d: u64| -> Result<u64, ConfigError> {
        match kv.get(k) {
            Some(v) => {
                parse_u64(v).ok_or_else(|| ConfigError::Invalid(format!("bad number for {k}: {v}")))
            }
            None => Ok(d),
        }
    };
    let kind = match kind_name {
        "stride" => {
            let stride = kv
                .get("stride")
                .and_then(|v| parse_i64(v))
                .ok_or_else(|| ConfigError::Invalid("stride pattern needs stride=".into()))?;
            PatternKind::Stride {
                base: get_u64("base")?,
                stride,
            }
        }
        "stream" => PatternKind::Stream {
            base: get_u64("base")?,
        },
        "spatial" => PatternKind::Spatial {
            base: get_u64("base")?,
            region_bytes: get_u64_or("region", 4096)?,
            footprint: get_u64("footprint")?,
        },
        "temporal" => PatternKind::Temporal {
            base: get_u64("base")?,
            window_blocks: get_u64("window_blocks")?,
            period: get_u64("period")? as usize,
        },
        "random" => PatternKind::Random {
            base: get_u64("base")?,
            window_blocks: get_u64("window_blocks")?,
        },
        other => return Err(ConfigError::Invalid(format!("unknown pattern kind {other:?}"))),
    };
    Ok(PatternSpec {
        kind,
        pc: get_u64("pc")?,
        count: get_u64("count")? as usize,
        gap: get_u64_or("gap", DEFAULT_GAP)?,
    })
}

/// Parses the config text into an [`ExperimentConfig`].
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let sections = Sections::parse(text)?;
    let mut selector = SelectorKind::Alecto;
    let mut seed = 0u64;
    let mut measure_from = 0usize;

    for (_, k, v) in sections.entries("run") {
        match k.as_str() {
            "selector" => {
                selector = SelectorKind::parse(v)
                    .ok_or_else(|| value_err("run", "selector", format!("unknown selector {v:?}")))?;
            }
            "seed" => set_num!(seed, "run", "seed", v, u64),
            "measure_from" => set_num!(measure_from, "run", "measure_from", v, usize),
            other => return Err(value_err("run", other, "unknown key")),
        }
    }

    let mut cfg = ExperimentConfig::new(selector);
    cfg.seed = seed;
    cfg.measure_from = measure_from;

    for (_, k, v) in sections.entries("engines") {
        match k.as_str() {
            "set" => {
                let engines: Vec<EngineKind> = v
                    .split(',')
                    .map(|n| {
                        EngineKind::parse(n.trim()).ok_or_else(|| {
                            value_err("engines", "set", format!("unknown engine {n:?}"))
                        })
                    })
                    .collect::<Result<_, _>>()?;
                if engines.is_empty() {
                    return Err(value_err("engines", "set", "need at least one engine"));
                }
                cfg = cfg.with_engines(engines);
            }
            "temporal_entries" => {
                set_num!(cfg.temporal_entries, "engines", "temporal_entries", v, usize)
            }
            other => return Err(value_err("engines", other, "unknown key")),
        }
    }

    for (_, k, v) in sections.entries("cache") {
        match k.as_str() {
            "l1_bytes" => set_num!(cfg.cache.l1.size_bytes, "cache", "l1_bytes", v, u64),
            "l1_ways" => set_num!(cfg.cache.l1.ways, "cache", "l1_ways", v, usize),
            "l1_latency" => set_num!(cfg.cache.l1.hit_latency, "cache", "l1_latency", v, u64),
            "l2_bytes" => set_num!(cfg.cache.l2.size_bytes, "cache", "l2_bytes", v, u64),
            "l2_ways" => set_num!(cfg.cache.l2.ways, "cache", "l2_ways", v, usize),
            "l2_latency" => set_num!(cfg.cache.l2.hit_latency, "cache", "l2_latency", v, u64),
            "memory_latency" => set_num!(cfg.cache.memory_latency, "cache", "memory_latency", v, u64),
            other => return Err(value_err("cache", other, "unknown key")),
        }
    }

    for (_, k, v) in sections.entries("alecto") {
        match k.as_str() {
            "max_aggressive" => set_num!(cfg.alecto.max_aggr, "alecto", k, v, u8),
            "cooldown_epochs" => set_num!(cfg.alecto.cooldown_epochs, "alecto", k, v, u8),
            "conservative_degree" => {
                set_num!(cfg.alecto.conservative_degree, "alecto", k, v, usize)
            }
            "proficiency_boundary" => {
                cfg.alecto.pb = v
                    .parse()
                    .map_err(|_| value_err("alecto", k, "expected a fraction"))?;
            }
            "deficiency_boundary" => {
                cfg.alecto.db = v
                    .parse()
                    .map_err(|_| value_err("alecto", k, "expected a fraction"))?;
            }
            "epoch_demands" => set_num!(cfg.alecto.epoch_demands, "alecto", k, v, u32),
            "dead_threshold" => set_num!(cfg.alecto.dead_threshold, "alecto", k, v, u32),
            "min_issued_for_judgement" => {
                set_num!(cfg.alecto.min_issued_for_judgement, "alecto", k, v, u32)
            }
            "alloc_entries" => set_num!(cfg.alecto.alloc_entries, "alecto", k, v, usize),
            "sample_entries" => set_num!(cfg.alecto.sample_entries, "alecto", k, v, usize),
            "sandbox_entries" => set_num!(cfg.alecto.sandbox_entries, "alecto", k, v, usize),
            other => return Err(value_err("alecto", other, "unknown key")),
        }
    }

    let mut epsilon = 0.1f64;
    let mut ucb_factor = std::f64::consts::SQRT_2;
    let mut exploration_name = "epsilon".to_string();
    for (_, k, v) in sections.entries("bandit") {
        match k.as_str() {
            "epoch_len" => set_num!(cfg.bandit_epoch_len, "bandit", k, v, u32),
            "exploration" => exploration_name = v.clone(),
            "epsilon" => {
                epsilon = v
                    .parse()
                    .map_err(|_| value_err("bandit", k, "expected a fraction"))?;
            }
            "ucb_factor" => {
                ucb_factor = v
                    .parse()
                    .map_err(|_| value_err("bandit", k, "expected a number"))?;
            }
            other => return Err(value_err("bandit", other, "unknown key")),
        }
    }
    cfg.bandit_exploration = match exploration_name.as_str() {
        "epsilon" => Exploration::EpsilonGreedy { epsilon },
        "ucb1" => Exploration::Ucb1 { c: ucb_factor },
        other => {
            return Err(value_err(
                "bandit",
                "exploration",
                format!("unknown exploration {other:?}"),
            ))
        }
    };

    let mut file: Option<PathBuf> = None;
    let mut patterns: Vec<(u64, PatternSpec)> = Vec::new();
    for (line, k, v) in sections.entries("trace") {
        if k == "file" {
            file = Some(PathBuf::from(v));
        } else if let Some(n) = k.strip_prefix("pattern.") {
            let idx: u64 = n.parse().map_err(|_| ConfigError::Syntax {
                line: *line,
                reason: format!("bad pattern index {n:?}"),
            })?;
            patterns.push((idx, parse_pattern(v)?));
        } else {
            return Err(value_err("trace", k, "unknown key"));
        }
    }
    patterns.sort_by_key(|(i, _)| *i);
    cfg.trace = match (file, patterns.is_empty()) {
        (Some(_), false) => {
            return Err(ConfigError::Invalid(
                "[trace] has both file= and inline patterns".into(),
            ))
        }
        (Some(f), true) => TraceSource::File(f),
        (None, false) => TraceSource::Inline(patterns.into_iter().map(|(_, p)| p).collect()),
        (None, true) => {
            return Err(ConfigError::Invalid(
                "[trace] needs file= or pattern.N= entries".into(),
            ))
        }
    };

    cfg.alecto.fixed_degree_mode = selector == SelectorKind::AlectoFixedDegree;
    cfg.cache
        .validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    cfg.alecto
        .validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\n\
        [run]\n\
        selector = bandit6\n\
        seed = 7\n\
        [engines]\n\
        set = stream,stride,spatial,temporal\n\
        [trace]\n\
        pattern.0 = stride pc=0xa00 base=0x100000 stride=64 count=100\n\
        pattern.1 = random pc=0xb00 base=0x2000000 window_blocks=4096 count=100 gap=8\n";

    #[test]
    fn parses_sample_config() {
        let cfg = parse_config(SAMPLE).unwrap();
        assert_eq!(cfg.selector, SelectorKind::Bandit6);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.engines.len(), 4);
        assert_eq!(cfg.alecto.num_prefetchers, 4);
        assert_eq!(cfg.alecto.temporal_index, Some(3));
        match &cfg.trace {
            TraceSource::Inline(specs) => {
                assert_eq!(specs.len(), 2);
                assert_eq!(specs[0].pc, 0xa00);
                assert_eq!(specs[1].gap, 8);
            }
            other => panic!("expected inline trace, got {other:?}"),
        }
    }

    #[test]
    fn defaults_reproduce_evaluated_constants() {
        let cfg = parse_config(
            "[run]\nselector = alecto\n[trace]\nfile = t.trace\n",
        )
        .unwrap();
        assert_eq!(cfg.alecto.cooldown_epochs, 8);
        assert_eq!(cfg.alecto.max_aggr, 5);
        assert_eq!(cfg.alecto.conservative_degree, 3);
        assert_eq!(cfg.alecto.pb, 0.75);
        assert_eq!(cfg.alecto.db, 0.05);
        assert_eq!(cfg.alecto.epoch_demands, 100);
        assert_eq!(cfg.alecto.dead_threshold, 150);
        assert_eq!(cfg.alecto.alloc_entries, 64);
        assert_eq!(cfg.alecto.sample_entries, 64);
        assert_eq!(cfg.alecto.sandbox_entries, 512);
        assert_eq!(cfg.cache.l1.size_bytes, 32 * 1024);
        assert_eq!(cfg.cache.l1.ways, 8);
        assert_eq!(cfg.cache.l1.hit_latency, 4);
        assert_eq!(cfg.cache.l2.size_bytes, 256 * 1024);
        assert_eq!(cfg.cache.l2.hit_latency, 15);
        assert_eq!(cfg.cache.memory_latency, 200);
        assert_eq!(cfg.bandit_epoch_len, 2048);
        assert_eq!(SelectorKind::Bandit3.bandit_degree(), Some(3));
        assert_eq!(SelectorKind::Bandit6.bandit_degree(), Some(6));
    }

    #[test]
    fn unknown_selector_is_an_error() {
        let err = parse_config("[run]\nselector = sorcery\n[trace]\nfile = t\n").unwrap_err();
        assert!(matches!(err, ConfigError::Value { .. }));
    }

    #[test]
    fn trace_section_is_required_and_exclusive() {
        assert!(parse_config("[run]\nselector = alecto\n").is_err());
        let both = "[run]\nselector = alecto\n[trace]\nfile = t\npattern.0 = stream pc=1 base=0 count=5\n";
        assert!(parse_config(both).is_err());
    }

    #[test]
    fn pattern_errors_are_reported() {
        assert!(parse_pattern("stride pc=1 base=0 count=5").is_err()); // missing stride=
        assert!(parse_pattern("wibble pc=1 base=0 count=5").is_err());
        assert!(parse_pattern("stride pc=1 base=0 stride=zz count=5").is_err());
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = parse_config(SAMPLE).unwrap();
        let b = parse_config(SAMPLE).unwrap();
        assert_eq!(a.digest(), b.digest());
        let mut c = parse_config(SAMPLE).unwrap();
        c.seed = 8;
        assert_ne!(a.digest(), c.digest());
    }
}
