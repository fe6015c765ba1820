use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_incapprox"));
    c.env_remove("RUST_LOG");
    for (k, _) in std::env::vars() {
        if k.starts_with("INCAPPROX_") {
            c.env_remove(k);
        }
    }
    c
}

fn write_stream(dir: &Path) -> PathBuf {
    let path = dir.join("in.jsonl");
    let mut f = fs::File::create(&path).unwrap();
    for i in 0..600u64 {
        let stratum = ["a", "b", "c"][(i % 3) as usize];
        let key = ["x", "y"][(i % 2) as usize];
        writeln!(f, r#"{{"ts":{},"stratum":"{stratum}","key":"{key}","value":{}}}"#, i / 4, (i % 17) as f64 * 0.5).unwrap();
    }
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn text(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn seeded_runs_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_stream(dir.path());
    let input = input.to_str().unwrap();
    let a = run(&["run", input, "--window", "40", "--slide", "10", "--seed", "7", "--budget", "fraction:0.3"]);
    let b = run(&["run", input, "--window", "40", "--slide", "10", "--seed", "7", "--budget", "fraction:0.3"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    assert!(text(&a).starts_with("window,estimate,error_bound,confidence,sample_size,reuse_fraction\n"));
}

#[test]
fn full_budget_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_stream(dir.path());
    let out = run(&["run", input.to_str().unwrap(), "--query", "count", "--window", "40", "--slide", "40", "--start", "0", "--seed", "1", "--budget", "fraction:1"]);
    assert!(out.status.success());
    let body = text(&out);
    let rows: Vec<Vec<&str>> = body.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert!(!rows.is_empty());
    // 4 items per time unit
    assert_eq!(rows[0][1], "160");
    assert!(rows.iter().all(|r| r[2] == "0"));
}

#[test]
fn random_seed_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_stream(dir.path());
    let out = run(&["run", input.to_str().unwrap(), "--window", "40", "--slide", "20"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed: "));
}

#[test]
fn bad_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_stream(dir.path());
    let out = run(&["run", input.to_str().unwrap(), "--query", "min", "--window", "40", "--slide", "20"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unsupported: requires extreme value theory"));
    let out = run(&["run", input.to_str().unwrap(), "--window", "10", "--slide", "20"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_exits_one() {
    let out = run(&["run", "/nonexistent/in.jsonl", "--window", "10", "--slide", "5", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
}

#[test]
fn env_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_stream(dir.path());
    let out = bin()
        .args(["run", input.to_str().unwrap(), "--window", "40", "--slide", "20", "--seed", "3"])
        .env("INCAPPROX_FORMAT", "jsonl")
        .output()
        .unwrap();
    assert!(out.status.success());
    let first: serde_json::Value = serde_json::from_str(text(&out).lines().next().unwrap()).unwrap();
    assert_eq!(first["window"], 0);
    assert!(first["estimates"].is_array());
}

#[test]
fn grouped_output_has_key_column() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_stream(dir.path());
    let out = run(&["run", input.to_str().unwrap(), "--query", "mean", "--group-by", "--window", "40", "--slide", "20", "--seed", "2", "--budget", "fraction:0.5"]);
    assert!(out.status.success());
    let body = text(&out);
    let mut lines = body.lines();
    assert_eq!(lines.next(), Some("window,key,estimate,error_bound,confidence,sample_size,reuse_fraction"));
    let keys: Vec<&str> = lines.filter(|l| l.starts_with("0,")).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(keys, ["x", "y"]);
}

#[test]
fn stdin_output_file_and_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let input = fs::read(write_stream(dir.path())).unwrap();
    let out_path = dir.path().join("out.csv");
    let snap = dir.path().join("memo.jsonl");
    let mut child = bin()
        .args(["run", "-", "--window", "40", "--slide", "10", "--seed", "5", "-o"])
        .arg(&out_path)
        .arg("--memo-snapshot")
        .arg(&snap)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(&input).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    assert!(fs::read_to_string(&out_path).unwrap().lines().count() > 10);
    let snapshot = fs::read_to_string(&snap).unwrap();
    assert!(!snapshot.is_empty());
    for line in snapshot.lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
}

const SCENARIO: &str = r#"
seed = 3
window_items = 300
windows = 4
warmup = 1

[[substreams]]
label = "S1"
rate = 1.0

[[substreams]]
label = "S2"
rate = 2.0

[slide_interval]
slide_percents = [5, 10]
sample_percent = 20
"#;

#[test]
fn bench_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let scn = dir.path().join("small.scn");
    fs::write(&scn, SCENARIO).unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&["bench", scn.to_str().unwrap(), "--output-dir", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("slide_interval.csv")).unwrap();
    assert!(csv.starts_with("experiment,grid_value,substream,"));
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    assert!(!out_dir.join("sample_size.csv").exists());

    let out = run(&["bench", scn.to_str().unwrap(), "-e", "nope", "--output-dir", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["bench", "/nonexistent.scn"]);
    assert_eq!(out.status.code(), Some(1));
}
