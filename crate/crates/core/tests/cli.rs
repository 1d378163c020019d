use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cqed_concurrence::cli::{run, RunRecord, RunResult};
use cqed_concurrence::{concurrence_exact, parse_state, random_pure_state, serialize_state, TwoQubitState};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_cqed-concurrence");

fn bin(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixtures() -> (TempDir, PathBuf, PathBuf) {
    let dir = TempDir::new().unwrap();
    let bell = write(&dir, "bell.json", &serialize_state(&TwoQubitState::bell()));
    let product = write(&dir, "product.json", r#"{"amplitudes": [[1, 0], [0, 0], [0, 0], [0, 0]]}"#);
    (dir, bell, product)
}

fn record(o: &Output) -> RunRecord {
    serde_json::from_slice(&o.stdout).expect("JSON run record")
}

#[test]
fn exact_prints_fixed_digits() {
    let (_d, bell, product) = fixtures();
    let o = bin(&["exact", s(&bell)]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "1.000000000000000\n");
    let o = bin(&["exact", s(&product)]);
    assert_eq!(stdout(&o), "0.000000000000000\n");
}

#[test]
fn exact_error_exit_codes() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.json", r#"{"amplitudes": [[1, 0], [0, 0]"#);
    let o = bin(&["exact", s(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
    assert!(o.stdout.is_empty());

    let loose = write(&dir, "loose.json", r#"{"amplitudes": [[1, 0], [0, 0], [0, 0], [1, 0]]}"#);
    assert_eq!(bin(&["exact", s(&loose)]).status.code(), Some(3));
    let o = bin(&["exact", "--normalize", s(&loose)]);
    assert_eq!(stdout(&o), "1.000000000000000\n");

    let zero = write(&dir, "zero.json", r#"{"amplitudes": [[0, 0], [0, 0], [0, 0], [0, 0]], "normalize": true}"#);
    assert_eq!(bin(&["exact", s(&zero)]).status.code(), Some(3));
    assert_eq!(bin(&["exact", "/nonexistent/state.json"]).status.code(), Some(2));
}

#[test]
fn exact_reads_standard_input() {
    use std::io::Write;
    let mut child = Command::new(BIN)
        .args(["exact", "-"])
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(serialize_state(&TwoQubitState::bell()).as_bytes())
        .unwrap();
    let o = child.wait_with_output().unwrap();
    assert_eq!(stdout(&o), "1.000000000000000\n");
}

#[test]
fn visibility_reports() {
    let (dir, bell, _p) = fixtures();
    let rec = record(&bin(&["visibility", s(&bell)]));
    let RunResult::Visibility(r) = rec.result else { panic!("wrong result kind") };
    assert!((r.visibility - 1.0).abs() <= 1e-6);
    assert!(rec.bound_check.unwrap().attained);
    assert!(rec.wall_time.is_none());

    let rec = record(&bin(&["visibility", "--grid", "4", s(&bell)]));
    let RunResult::Visibility(r) = rec.result else { panic!() };
    assert!((r.visibility - 1.0).abs() <= 1e-6);

    for seed in ["1", "17", "123456"] {
        let o = bin(&["random", "--seed", seed]);
        let f = write(&dir, &format!("r{seed}.json"), &stdout(&o));
        let exact: f64 = stdout(&bin(&["exact", s(&f)])).trim().parse().unwrap();
        let RunResult::Visibility(r) = record(&bin(&["visibility", s(&f)])).result else { panic!() };
        assert!((r.visibility - exact).abs() <= 1e-6, "seed {seed}");
    }
}

#[test]
fn run_record_round_trips() {
    let (_d, bell, _p) = fixtures();
    let o = bin(&["visibility", "--timing", "--grid", "6", s(&bell)]);
    let rec = record(&o);
    assert!(rec.wall_time.unwrap() >= 0.0);
    let again: RunRecord = serde_json::from_str(&serde_json::to_string(&rec).unwrap()).unwrap();
    assert_eq!(rec, again);

    let rec = record(&bin(&["shots", "--grid", "4", "--shots2", "10000", s(&bell)]));
    let again: RunRecord = serde_json::from_str(&serde_json::to_string(&rec).unwrap()).unwrap();
    assert_eq!(rec, again);
}

#[test]
fn shots_pipeline() {
    let (_d, bell, _p) = fixtures();
    let args = ["shots", "--grid", "8", "--seed", "3", s(&bell)];
    let a = bin(&args);
    let b = bin(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let rec = record(&a);
    assert_eq!(rec.seed, Some(3));
    let RunResult::Shots(out) = rec.result else { panic!() };
    assert!((out.estimate - 1.0).abs() <= 0.02);
    assert!(out.std_error >= 0.0);
    assert_eq!(out.shots_stage1_total, 4096 * 200);
    assert_eq!(out.shots_stage2_total, 6 * 1_000_000);

    assert_eq!(bin(&["shots", "--shots2", "1", s(&bell)]).status.code(), Some(4));
    assert_eq!(bin(&["shots", "--shots1", "10", s(&bell)]).status.code(), Some(4));
}

#[test]
fn shots_bootstrap_flag() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "s.json", &serialize_state(&TwoQubitState::real(0.9, 0.0, 0.0, 0.19f64.sqrt()).unwrap()));
    let rec = record(&bin(&["shots", "--grid", "4", "--shots2", "20000", "--bootstrap", "100", s(&f)]));
    let RunResult::Shots(out) = rec.result else { panic!() };
    let boot = out.bootstrap_std_error.unwrap();
    assert!(boot > 0.0 && boot / out.std_error > 0.5 && boot / out.std_error < 2.0);
}

fn csv_rows(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().map(|x| x.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn sweep_two_particle_fringe() {
    let (_d, bell, _p) = fixtures();
    let o = bin(&["sweep", "--axis", "phi1=0:2:64", "--theta1", "0.25", "--theta2", "0.25", "--phi2", "0", s(&bell)]);
    assert!(o.status.success());
    let (header, rows) = csv_rows(&stdout(&o));
    assert_eq!(header, ["phi1", "pbar"]);
    assert_eq!(rows.len(), 64);
    for row in &rows {
        let expected = (1.0 + (row[0] * PI).cos()) / 4.0;
        assert!((row[1] - expected).abs() <= 1e-12);
    }

    let o = bin(&["sweep", "--axis", "phi1=0:2:8", "--axis", "theta2=0:1:4", s(&bell)]);
    let (header, rows) = csv_rows(&stdout(&o));
    assert_eq!(header, ["phi1", "theta2", "pbar"]);
    assert_eq!(rows.len(), 32);
}

#[test]
fn sweep_single_particle_fringe() {
    let dir = TempDir::new().unwrap();
    let h = FRAC_1_SQRT_2;
    let f = write(&dir, "se.json", &format!(r#"{{"amplitudes": [[0, 0], [{h}, 0], [{h}, 0], [0, 0]]}}"#));
    let o = bin(&["sweep", "--single", "--axis", "phi=0:2:32", s(&f)]);
    assert!(o.status.success());
    let (header, rows) = csv_rows(&stdout(&o));
    assert_eq!(header, ["phi", "p_e"]);
    for row in &rows {
        assert!((row[1] - 0.5 * (1.0 + (row[0] * PI).cos())).abs() <= 1e-12);
    }
    let (_d, bell, _p) = fixtures();
    assert_eq!(bin(&["sweep", "--single", "--axis", "phi=0:2:32", s(&bell)]).status.code(), Some(2));
}

#[test]
fn sweep_rejects_bad_axes() {
    let (_d, bell, _p) = fixtures();
    for axis in ["phi1=0:2:0", "phi1=0:2", "omega=0:1:3"] {
        assert_eq!(bin(&["sweep", "--axis", axis, s(&bell)]).status.code(), Some(2), "{axis}");
    }
    assert_eq!(
        bin(&["sweep", "--axis", "phi1=0:2:4", "--axis", "phi1=0:1:4", s(&bell)]).status.code(),
        Some(2)
    );
    assert_eq!(bin(&["sweep", "--axis", "phi=0:2:4", s(&bell)]).status.code(), Some(2));
}

#[test]
fn verify_command() {
    let o = bin(&["verify", "--trials", "1000", "--seed", "9"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    let line = text.lines().find(|l| l.starts_with("phase_identity")).unwrap();
    let residual: f64 = line.split_whitespace().nth(2).unwrap().parse().unwrap();
    assert!(residual <= 1e-12);

    assert_eq!(bin(&["verify", "--trials", "1"]).status.code(), Some(0));
    let o = bin(&["verify", "--trials", "5", "--inject-fault"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("violated by state"));
    assert_eq!(bin(&["verify", "--trials", "0"]).status.code(), Some(2));
}

#[test]
fn random_states_are_reproducible_and_valid() {
    let a = bin(&["random", "--seed", "0"]);
    let b = bin(&["random"]);
    assert_eq!(a.stdout, b.stdout);
    let st = parse_state(&stdout(&a), false).unwrap();
    assert!((st.norm_sqr() - 1.0).abs() <= 1e-12);
    assert_eq!(st, random_pure_state(0));
    assert!(bin(&["random", "--seed", "1", "--entropy"]).status.code() == Some(2));
}

#[test]
fn thousand_emitted_states_pass_exact() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("state.json");
    for seed in 0..1000u64 {
        let mut out = Vec::new();
        let mut err = Vec::new();
        assert_eq!(run(["cqed", "random", "--seed", &seed.to_string()], &mut out, &mut err), 0);
        std::fs::write(&path, &out).unwrap();
        let mut printed = Vec::new();
        assert_eq!(run(["cqed", "exact", s(&path)], &mut printed, &mut err), 0);
        let c: f64 = String::from_utf8(printed).unwrap().trim().parse().unwrap();
        let expected = concurrence_exact(&random_pure_state(seed)).unwrap();
        assert!((c - expected).abs() <= 1e-15);
    }
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(bin(&[]).status.code(), Some(2));
    assert_eq!(bin(&["bogus"]).status.code(), Some(2));
    assert_eq!(bin(&["visibility"]).status.code(), Some(2));
    assert_eq!(bin(&["--help"]).status.code(), Some(0));
}
