//! CLI behavior: subcommand wiring, exit codes (0 ok, 2 config error,
//! 3 trace error), and file outputs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_alectosim"))
}

fn tmpdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("alecto-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(path: &Path, content: &str) {
    std::fs::write(path, content).unwrap();
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

const GEN_CONFIG: &str = "\
[run]
selector = alecto
seed = 9
[trace]
pattern.0 = stride pc=0xa00 base=0x100000 stride=64 count=2000
pattern.1 = stream pc=0xb00 base=0x2000000 count=2000
";

#[test]
fn gen_writes_a_parseable_deterministic_trace() {
    let dir = tmpdir("gen");
    let conf = dir.join("gen.conf");
    write(&conf, GEN_CONFIG);
    let t1 = dir.join("a.trace");
    let t2 = dir.join("b.trace");
    for t in [&t1, &t2] {
        let out = bin()
            .args(["gen", "--config"])
            .arg(&conf)
            .arg("--out")
            .arg(t)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read(&t1).unwrap();
    let b = std::fs::read(&t2).unwrap();
    assert_eq!(a, b, "same seed must give identical bytes");
    let parsed = alecto_sim::trace::parse_trace(&String::from_utf8(a).unwrap()).unwrap();
    assert_eq!(parsed.len(), 4000);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn gen_rejects_bad_pattern_with_config_exit_code() {
    let dir = tmpdir("genbad");
    let conf = dir.join("bad.conf");
    write(
        &conf,
        "[run]\nselector = alecto\n[trace]\npattern.0 = stride pc=0xa00 base=0 stride=0 count=10\n",
    );
    let out = bin()
        .args(["gen", "--config"])
        .arg(&conf)
        .arg("--out")
        .arg(dir.join("x.trace"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn run_emits_json_and_csv_with_consistent_fields() {
    let dir = tmpdir("run");
    let conf = dir.join("run.conf");
    write(&conf, GEN_CONFIG);
    let json_path = dir.join("report.json");
    let out = bin()
        .args(["run", "--config"])
        .arg(&conf)
        .arg("--out")
        .arg(&json_path)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("selector,trace,demands"));
    let row = lines.next().unwrap();
    assert!(row.starts_with("alecto,"));

    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    let rep = &json[0];
    assert_eq!(rep["selector"], "alecto");
    let shadow = rep["shadow_misses"].as_u64().unwrap();
    let sum = rep["covered_timely"].as_u64().unwrap()
        + rep["covered_untimely"].as_u64().unwrap()
        + rep["uncovered"].as_u64().unwrap();
    assert_eq!(shadow, sum);
    assert_eq!(rep["alecto_storage_bits"].as_u64(), Some(10688));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn run_rejects_unknown_selector_with_exit_2() {
    let dir = tmpdir("sel");
    let conf = dir.join("bad.conf");
    write(&conf, "[run]\nselector = wizard\n[trace]\nfile = t.trace\n");
    let out = bin().args(["run", "--config"]).arg(&conf).output().unwrap();
    assert_eq!(code(&out), 2);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn run_reports_trace_problems_with_exit_3() {
    let dir = tmpdir("trace");
    let conf = dir.join("run.conf");
    write(
        &conf,
        "[run]\nselector = alecto\n[trace]\nfile = /nonexistent/never.trace\n",
    );
    let out = bin().args(["run", "--config"]).arg(&conf).output().unwrap();
    assert_eq!(code(&out), 3, "missing trace file");

    let bad = dir.join("bad.trace");
    write(&bad, "5,0x1,0x2\n3,0x1,0x4\n");
    let out = bin()
        .args(["run", "--config"])
        .arg(&conf)
        .arg("--trace")
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(code(&out), 3, "malformed trace content");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn compare_requires_a_shared_trace() {
    let dir = tmpdir("cmp");
    let a = dir.join("a.conf");
    let b = dir.join("b.conf");
    write(&a, GEN_CONFIG);
    write(
        &b,
        "[run]\nselector = ipcp\nseed = 9\n[trace]\npattern.0 = stride pc=0xa00 base=0x100000 stride=128 count=2000\n",
    );
    let out = bin()
        .args(["compare", "--config"])
        .arg(&a)
        .arg("--config")
        .arg(&b)
        .output()
        .unwrap();
    assert_eq!(code(&out), 2, "mismatched traces must be rejected");

    // Same trace: one row per selector.
    let c = dir.join("c.conf");
    write(&c, &GEN_CONFIG.replace("selector = alecto", "selector = dol"));
    let out = bin()
        .args(["compare", "--config"])
        .arg(&a)
        .arg("--config")
        .arg(&c)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().starts_with("alecto,"));
    assert!(text.lines().nth(2).unwrap().starts_with("dol,"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn storage_rejects_zero_prefetchers() {
    let out = bin().args(["storage", "0"]).output().unwrap();
    assert_eq!(code(&out), 2);
    let out = bin().args(["storage", "1"]).output().unwrap();
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\"total_bits\": 7104"));
}
