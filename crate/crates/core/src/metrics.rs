//! Aggregation of raw simulation counters into the evaluation vocabulary
//! (coverage split, accuracy, overpredictions) and machine-readable CSV /
//! JSON reports.

use serde::Serialize;

/// Raw counters gathered over one run's measurement window.
#[derive(Debug, Clone, Default)]
pub struct RawCounters {
    pub demands: u64,
    pub shadow_misses: u64,
    pub covered_timely: u64,
    pub covered_untimely: u64,
    pub issued_per_engine: Vec<u64>,
    pub useful_per_engine: Vec<u64>,
    pub train_count_per_engine: Vec<u64>,
    pub table_misses_per_engine: Vec<u64>,
}

/// Finalized per-run report. Fractions are derived once, at the end of a
/// drained simulation, and obey:
///
/// * covered_timely + covered_untimely + uncovered == shadow_misses
/// * coverage == covered / shadow_misses (0 when there were no misses)
/// * accuracy == useful / issued (0, flagged, when nothing was issued)
/// * overpredictions == 1 - accuracy
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RunReport {
    pub selector: String,
    pub trace_digest: String,
    pub engine_names: Vec<String>,
    pub demands: u64,
    pub shadow_misses: u64,
    pub covered_timely: u64,
    pub covered_untimely: u64,
    pub uncovered: u64,
    pub issued_per_engine: Vec<u64>,
    pub useful_per_engine: Vec<u64>,
    pub train_count_per_engine: Vec<u64>,
    pub table_misses_per_engine: Vec<u64>,
    pub coverage: f64,
    pub accuracy: f64,
    pub overpredictions: f64,
    /// Set when nothing was issued and accuracy defaulted to 0.
    pub zero_issued: bool,
    pub alecto_storage_bits: Option<u64>,
    pub config_digest: String,
}

/// Derives the report fractions from raw counters.
///
/// Panics if the coverage split exceeds the shadow miss count, which would
/// mean the simulator miscounted.
pub fn finalize(
    selector: &str,
    trace_digest: &str,
    config_digest: &str,
    engine_names: Vec<String>,
    raw: RawCounters,
    alecto_storage_bits: Option<u64>,
) -> RunReport {
    let covered = raw.covered_timely + raw.covered_untimely;
    assert!(
        covered <= raw.shadow_misses,
        "covered misses {covered} exceed shadow misses {}",
        raw.shadow_misses
    );
    let uncovered = raw.shadow_misses - covered;
    let coverage = if raw.shadow_misses == 0 {
        0.0
    } else {
        covered as f64 / raw.shadow_misses as f64
    };
    let issued: u64 = raw.issued_per_engine.iter().sum();
    let useful: u64 = raw.useful_per_engine.iter().sum();
    let zero_issued = issued == 0;
    let accuracy = if zero_issued {
        0.0
    } else {
        useful as f64 / issued as f64
    };
    RunReport {
        selector: selector.to_string(),
        trace_digest: trace_digest.to_string(),
        engine_names,
        demands: raw.demands,
        shadow_misses: raw.shadow_misses,
        covered_timely: raw.covered_timely,
        covered_untimely: raw.covered_untimely,
        uncovered,
        issued_per_engine: raw.issued_per_engine,
        useful_per_engine: raw.useful_per_engine,
        train_count_per_engine: raw.train_count_per_engine,
        table_misses_per_engine: raw.table_misses_per_engine,
        coverage,
        accuracy,
        overpredictions: 1.0 - accuracy,
        zero_issued,
        alecto_storage_bits,
        config_digest: config_digest.to_string(),
    }
}

fn frac(x: f64) -> String {
    format!("{x:.6}")
}

/// Renders reports as CSV: a fixed header, one row per report, fractions
/// at six decimal places. Per-engine columns come from the first report's
/// engine set.
pub fn emit_csv(reports: &[RunReport]) -> String {
    let mut out = String::new();
    out.push_str(
        "selector,trace,demands,shadow_misses,covered_timely,covered_untimely,uncovered,\
         coverage,accuracy,overpredictions",
    );
    let engines: &[String] = reports.first().map(|r| r.engine_names.as_slice()).unwrap_or(&[]);
    for metric in ["issued", "useful", "train", "table_miss"] {
        for e in engines {
            out.push_str(&format!(",{metric}_{e}"));
        }
    }
    out.push_str(",storage_bits\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}",
            r.selector,
            r.trace_digest,
            r.demands,
            r.shadow_misses,
            r.covered_timely,
            r.covered_untimely,
            r.uncovered,
            frac(r.coverage),
            frac(r.accuracy),
            frac(r.overpredictions),
        ));
        for counts in [
            &r.issued_per_engine,
            &r.useful_per_engine,
            &r.train_count_per_engine,
            &r.table_misses_per_engine,
        ] {
            for c in counts.iter() {
                out.push_str(&format!(",{c}"));
            }
        }
        match r.alecto_storage_bits {
            Some(bits) => out.push_str(&format!(",{bits}\n")),
            None => out.push_str(",\n"),
        }
    }
    out
}

/// JSON mirror of the CSV content, field names matching the report struct.
pub fn emit_json(reports: &[RunReport]) -> String {
    let mut s = serde_json::to_string_pretty(reports).expect("reports serialize");
    s.push('\n');
    s
}

/// Per-engine training-occurrence reduction of one run against a baseline
/// run: 1 - train_a[i] / train_b[i], or 0 where the baseline never trained.
pub fn energy_proxy(run: &RunReport, baseline: &RunReport) -> Vec<f64> {
    run.train_count_per_engine
        .iter()
        .zip(&baseline.train_count_per_engine)
        .map(|(&a, &b)| {
            if b == 0 {
                0.0
            } else {
                1.0 - a as f64 / b as f64
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw() -> RawCounters {
        RawCounters {
            demands: 200,
            shadow_misses: 100,
            covered_timely: 40,
            covered_untimely: 20,
            issued_per_engine: vec![10, 0],
            useful_per_engine: vec![7, 0],
            train_count_per_engine: vec![52, 100],
            table_misses_per_engine: vec![3, 9],
        }
    }

    fn report(raw: RawCounters) -> RunReport {
        finalize(
            "alecto",
            "t0",
            "c0",
            vec!["stride".into(), "stream".into()],
            raw,
            Some(10688),
        )
    }

    #[test]
    fn fractions_follow_definitions() {
        let r = report(raw());
        assert_eq!(r.uncovered, 40);
        assert!((r.coverage - 0.6).abs() < 1e-12);
        assert!((r.accuracy - 0.7).abs() < 1e-12);
        assert!((r.overpredictions - 0.3).abs() < 1e-12);
        assert!(!r.zero_issued);
        assert_eq!(
            r.covered_timely + r.covered_untimely + r.uncovered,
            r.shadow_misses
        );
    }

    #[test]
    fn zero_issued_sets_flag_and_zero_accuracy() {
        let mut c = raw();
        c.issued_per_engine = vec![0, 0];
        c.useful_per_engine = vec![0, 0];
        c.covered_timely = 0;
        c.covered_untimely = 0;
        let r = report(c);
        assert!(r.zero_issued);
        assert_eq!(r.accuracy, 0.0);
        assert_eq!(r.coverage, 0.0);
    }

    #[test]
    fn csv_has_stable_shape_and_rounding() {
        let mut c = raw();
        c.issued_per_engine = vec![3, 0];
        c.useful_per_engine = vec![2, 0];
        let r = report(c);
        let csv = emit_csv(&[r.clone()]);
        let mut lines = csv.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("selector,trace,demands"));
        assert!(header.contains("issued_stride,issued_stream"));
        assert!(header.ends_with("storage_bits"));
        let row = lines.next().unwrap();
        assert!(row.contains("0.666667"), "2/3 must print as 0.666667: {row}");
        assert_eq!(lines.next(), None);
        // Determinism: identical input, identical bytes.
        assert_eq!(csv, emit_csv(&[r]));
        // Empty input: header only.
        let empty = emit_csv(&[]);
        assert_eq!(empty.lines().count(), 1);
    }

    #[test]
    fn csv_numeric_fields_round_trip() {
        let r = report(raw());
        let csv = emit_csv(&[r.clone()]);
        let row = csv.lines().nth(1).unwrap();
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[2].parse::<u64>().unwrap(), r.demands);
        assert_eq!(fields[3].parse::<u64>().unwrap(), r.shadow_misses);
        let cov: f64 = fields[7].parse().unwrap();
        assert!((cov - r.coverage).abs() < 5e-7);
        let acc: f64 = fields[8].parse().unwrap();
        assert!((acc - r.accuracy).abs() < 5e-7);
        let bits: u64 = fields.last().unwrap().parse().unwrap();
        assert_eq!(Some(bits), r.alecto_storage_bits);
    }

    #[test]
    fn energy_proxy_reductions() {
        let a = report(raw());
        let mut braw = raw();
        braw.train_count_per_engine = vec![100, 0];
        let b = report(braw);
        let red = energy_proxy(&a, &b);
        assert!((red[0] - 0.48).abs() < 1e-12);
        assert_eq!(red[1], 0.0);
        let mut zraw = raw();
        zraw.train_count_per_engine = vec![0, 0];
        let z = report(zraw);
        let red = energy_proxy(&z, &b);
        assert_eq!(red[0], 1.0);
    }
}
