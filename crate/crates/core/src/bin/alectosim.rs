//! Experiment runner CLI.
//!
//! Subcommands: `gen` (write a trace file from a config's inline
//! patterns), `run` (one selector over one trace), `compare` (several
//! configs over the same trace, combined CSV), `storage` (storage-budget
//! report). Exit codes: 0 ok, 2 config error, 3 trace error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use alecto_sim::config::{parse_config, ExperimentConfig, TraceSource};
use alecto_sim::metrics::{emit_csv, emit_json, RunReport};
use alecto_sim::sim::{load_trace, run_experiment};
use alecto_sim::trace::{emit_trace, trace_digest, DemandRecord};

#[derive(Parser)]
#[command(name = "alectosim", about = "Prefetcher-selection experiment runner")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a trace file from a config's inline [trace] patterns.
    Gen {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one experiment; prints its CSV and optionally writes JSON.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's [trace] section with a trace file.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Report JSON destination.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several configs sharing one trace; emits a combined CSV.
    Compare {
        #[arg(long = "config", required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// CSV destination (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the storage budget for P prefetchers as JSON.
    Storage {
        prefetchers: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum CliError {
    Config(String),
    Trace(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Trace(_) => 3,
        }
    }
    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Trace(m) => m,
        }
    }
}

fn load_config(
    path: &PathBuf,
    seed: Option<u64>,
    trace: Option<&PathBuf>,
) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("reading {}: {e}", path.display())))?;
    let mut cfg = parse_config(&text).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = trace {
        cfg.trace = TraceSource::File(t.clone());
    }
    Ok(cfg)
}

fn resolve_trace(cfg: &ExperimentConfig) -> Result<Vec<DemandRecord>, CliError> {
    use alecto_sim::sim::TraceLoadError;
    load_trace(cfg).map_err(|e| match e {
        // A pattern that cannot be generated is a configuration problem;
        // unreadable or malformed trace files are trace problems.
        TraceLoadError::Generate(g) => CliError::Config(g.to_string()),
        other => CliError::Trace(other.to_string()),
    })
}

fn write_or_print(path: Option<&PathBuf>, content: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, content)
            .map_err(|e| CliError::Config(format!("writing {}: {e}", p.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn cmd_gen(config: PathBuf, seed: Option<u64>, out: PathBuf) -> Result<(), CliError> {
    let cfg = load_config(&config, seed, None)?;
    if !matches!(cfg.trace, TraceSource::Inline(_)) {
        return Err(CliError::Config(
            "gen needs inline pattern.N entries in [trace]".into(),
        ));
    }
    let records = resolve_trace(&cfg)?;
    std::fs::write(&out, emit_trace(&records))
        .map_err(|e| CliError::Config(format!("writing {}: {e}", out.display())))?;
    eprintln!(
        "wrote {} records (digest {}) to {}",
        records.len(),
        trace_digest(&records),
        out.display()
    );
    Ok(())
}

fn run_one(cfg: &ExperimentConfig) -> Result<RunReport, CliError> {
    let records = resolve_trace(cfg)?;
    run_experiment(cfg, &records)
        .map(|o| o.report)
        .map_err(|e| CliError::Config(e.to_string()))
}

fn cmd_run(
    config: PathBuf,
    trace: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let cfg = load_config(&config, seed, trace.as_ref())?;
    let report = run_one(&cfg)?;
    if let Some(path) = &out {
        write_or_print(Some(path), &emit_json(std::slice::from_ref(&report)))?;
    }
    print!("{}", emit_csv(std::slice::from_ref(&report)));
    Ok(())
}

fn cmd_compare(
    configs: Vec<PathBuf>,
    trace: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let cfgs: Vec<ExperimentConfig> = configs
        .iter()
        .map(|p| load_config(p, seed, trace.as_ref()))
        .collect::<Result<_, _>>()?;
    let results: Vec<Result<RunReport, CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cfgs.iter().map(|c| scope.spawn(|| run_one(c))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    });
    let reports = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    if let Some(first) = reports.first() {
        if reports.iter().any(|r| r.trace_digest != first.trace_digest) {
            return Err(CliError::Config(
                "compare members do not share a trace".into(),
            ));
        }
        if reports.iter().any(|r| r.engine_names != first.engine_names) {
            return Err(CliError::Config(
                "compare members do not share an engine set".into(),
            ));
        }
    }
    write_or_print(out.as_ref(), &emit_csv(&reports))
}

#[derive(Serialize)]
struct StorageReport {
    #[serde(rename = "P")]
    p: u64,
    allocation_bits: u64,
    sample_bits: u64,
    sandbox_bits: u64,
    total_bits: u64,
    total_excluding_sandbox_bits: u64,
}

fn cmd_storage(prefetchers: u64, out: Option<PathBuf>) -> Result<(), CliError> {
    if prefetchers == 0 {
        return Err(CliError::Config("prefetcher count must be at least 1".into()));
    }
    let bits = alecto_sim::alecto::storage_bits(prefetchers);
    let report = StorageReport {
        p: prefetchers,
        allocation_bits: bits.allocation,
        sample_bits: bits.sample,
        sandbox_bits: bits.sandbox,
        total_bits: bits.total,
        total_excluding_sandbox_bits: bits.total_excluding_sandbox,
    };
    let mut text = serde_json::to_string_pretty(&report).expect("storage report serializes");
    text.push('\n');
    text.push_str(&format!(
        "total: {} bits = {} B \u{2248} {:.2} KB\n",
        bits.total,
        bits.total / 8,
        bits.total as f64 / 8.0 / 1024.0
    ));
    text.push_str(&format!(
        "excluding sandbox: {} bits = {} B\n",
        bits.total_excluding_sandbox,
        bits.total_excluding_sandbox / 8
    ));
    write_or_print(out.as_ref(), &text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Gen { config, seed, out } => cmd_gen(config, seed, out),
        Cmd::Run {
            config,
            trace,
            seed,
            out,
        } => cmd_run(config, trace, seed, out),
        Cmd::Compare {
            configs,
            trace,
            seed,
            out,
        } => cmd_compare(configs, trace, seed, out),
        Cmd::Storage { prefetchers, out } => cmd_storage(prefetchers, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
