//! End-to-end checks of the `nlspike` binary: flag handling, exit codes,
//! output schemas and byte-level determinism.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nlspike"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn bench_op_emits_csv_and_exits_zero() {
    let out = run(&["bench-op", "--operator", "softmax", "--dims", "8,16", "--samples", "200", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "operator,kind,d,H,K,T,L,samples,seed,mean_abs,max_abs,mean_rel,max_rel,bound,slack,pass"
    );
    // nls row + 3 baselines, per dimension
    assert_eq!(text.lines().count(), 1 + 2 * 4);
    assert!(text.lines().skip(1).all(|l| l.split(',').count() == 16));
}

#[test]
fn bench_op_json_mirrors_csv_keys() {
    let out = run(&["bench-op", "--operator", "rmsnorm", "--dims", "24", "--samples", "100", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let rows: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let obj = rows.as_array().unwrap()[0].as_object().unwrap();
    for key in "operator,kind,d,H,K,T,L,samples,seed,mean_abs,max_abs,mean_rel,max_rel,bound,slack,pass".split(',') {
        assert!(obj.contains_key(key), "missing {key}");
    }
}

#[test]
fn missing_operator_is_a_usage_error() {
    let out = run(&["bench-op"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_operator_is_a_usage_error() {
    let out = run(&["bench-op", "--operator", "gelu"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown operator"));
}

#[test]
fn identical_invocations_are_byte_identical() {
    let args =
        ["bench-op", "--operator", "silu", "--samples", "300", "--seed", "11", "--format", "csv"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.stdout, b.stdout);
    // and thread count does not change the bytes
    let c = bin().args(args).env("NLSPIKE_THREADS", "1").output().unwrap();
    assert_eq!(a.stdout, c.stdout);
}

#[test]
fn sweep_h_svg_renders_a_chart() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.svg");
    let out = run(&[
        "sweep-h",
        "--operator",
        "silu",
        "--h-values",
        "4,5",
        "--samples",
        "150",
        "--format",
        "svg",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let svg = std::fs::read_to_string(&path).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("polyline"));
}

#[test]
fn sweep_h_rejects_rmsnorm() {
    let out = run(&["sweep-h", "--operator", "rmsnorm"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_bounds_passes_and_prints_rows() {
    let out = run(&["verify-bounds", "--dims", "8,16", "--samples", "300"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert_eq!(text.lines().filter(|l| l.ends_with("pass")).count(), 5);
    assert!(text.contains("softmax") && text.contains("silu") && text.contains("rmsnorm"));
}

#[test]
fn verify_bounds_negative_control_fails() {
    let out = run(&["verify-bounds", "--dims", "16", "--samples", "300", "--tamper-table"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("FAIL"));
}

#[test]
fn opcount_reports_structure() {
    let out = run(&["opcount", "--d", "32"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "operator,d,T,macs,acs,shifts");
    assert_eq!(text.lines().count(), 1 + 9); // three operators x T in {1,2,4}
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[3], "0", "macs must be zero: {line}");
    }
    // silu rows scale exactly with T
    let silu: Vec<Vec<u64>> = text
        .lines()
        .filter(|l| l.starts_with("silu"))
        .map(|l| l.split(',').skip(3).map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(silu[1][2], 2 * silu[0][2]);
    assert_eq!(silu[2][2], 4 * silu[0][2]);
}

#[test]
fn emit_lut_writes_the_exact_format() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.lut");
    let out = run(&["emit-lut", "--output", path.to_str().unwrap(), "--inspect"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let bytes = std::fs::read(&path).unwrap();
    // header {H bits, K, slope scale_exp, intercept scale_exp} + K + 2K payload
    assert_eq!(bytes.len(), 20 + 64 + 128);
    let text = stdout(&out);
    assert!(text.contains("H=5 K=64"));
    assert!(text.contains("knot[0] = -5"));
    assert!(text.contains("knot[64] = 5"));
}

#[test]
fn emit_lut_rejects_non_power_of_two_k() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.lut");
    let out = run(&["emit-lut", "--output", path.to_str().unwrap(), "--k", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!Path::new(&path).exists());
}

#[test]
fn unwritable_output_is_an_io_error() {
    let out = run(&["emit-lut", "--output", "/nonexistent-dir/exp.lut"]);
    assert_eq!(out.status.code(), Some(3));
    let out = run(&[
        "bench-op",
        "--operator",
        "silu",
        "--samples",
        "50",
        "--output",
        "/nonexistent-dir/rows.csv",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn help_exits_zero() {
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}
