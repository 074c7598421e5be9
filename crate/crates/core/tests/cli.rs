use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use riobs::gainfile::GainFile;

fn riobs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riobs"))
        .args(args)
        .env("RIOBS_THREADS", "2")
        .output()
        .expect("spawn riobs")
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn synthesize_benchmark(dir: &Path) -> PathBuf {
    let cfg = config("benchmark.toml");
    let o = riobs(&["synthesize", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    dir.join("gain_matrix.txt")
}

#[test]
fn synthesize_writes_a_certified_gain() {
    let dir = tempfile::tempdir().unwrap();
    let path = synthesize_benchmark(dir.path());
    let g = GainFile::read(&path).unwrap();
    assert_eq!(g.l.shape(), (6, 5));
    assert!(g.eta.unwrap() > 0.0);
    let report = std::fs::read_to_string(dir.path().join("gains.txt")).unwrap();
    assert!(report.contains("certified") && report.contains("status PASS"));
}

#[test]
fn simulate_writes_framers_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let gain = synthesize_benchmark(dir.path());
    let cfg = config("benchmark.toml");
    let out = dir.path().join("runs");
    let o = riobs(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--gains",
        gain.to_str().unwrap(),
        "--seeds",
        "3..5",
        "--steps",
        "120",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for seed in 3..5 {
        let csv = std::fs::read_to_string(out.join(format!("run_seed{seed}.csv"))).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 122);
        assert!(lines[0].starts_with("k,x_lo_1,"));
        assert_eq!(lines[0].split(',').count(), lines[5].split(',').count());
    }
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
    for row in metrics.lines().skip(1) {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f[1].parse::<f64>().unwrap(), 1.0);
        assert_eq!(f[2].parse::<f64>().unwrap(), 1.0);
        assert_eq!(f[6], "0");
    }
    assert!(out.join("plot.py").exists());
}

#[test]
fn zero_gain_run_is_flagged_as_diverged() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("benchmark.toml");
    let o = riobs(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--gains",
        "zero",
        "--seeds",
        "0",
        "--steps",
        "3000",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(code(&o) <= 1);
    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let row: Vec<&str> = metrics.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[6], "1");
}

#[test]
fn validate_passes_for_the_synthesized_gain() {
    let cfg = config("benchmark.toml");
    let o = riobs(&["validate", "--config", cfg.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{stdout}");
    assert!(!stdout.contains("[FAIL]"));
    assert_eq!(stdout.matches("[PASS]").count(), 7);
}

#[test]
fn validate_rejects_a_perturbed_gain() {
    let dir = tempfile::tempdir().unwrap();
    let gain = synthesize_benchmark(dir.path());
    let cfg = config("benchmark.toml");
    let o = riobs(&[
        "validate",
        "--config",
        cfg.to_str().unwrap(),
        "--gains",
        gain.to_str().unwrap(),
        "--perturb-seed",
        "7",
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("[FAIL]"));
}

#[test]
fn undetectable_plant_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("undetectable.toml");
    let o = riobs(&["synthesize", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn input_errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    assert_eq!(code(&riobs(&["synthesize", "--config", missing.to_str().unwrap()])), 64);
    assert_eq!(code(&riobs(&["frobnicate"])), 64);
    assert_eq!(code(&riobs(&["--help"])), 0);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[plant]\nkind = \"power\"\nv_lo = [0.5, 0.5, 0.5, 0.5, 0.5, 0.5]\nv_hi = [-0.5, -0.5, -0.5, -0.5, -0.5, -0.5]\n").unwrap();
    assert_eq!(code(&riobs(&["validate", "--config", bad.to_str().unwrap()])), 65);

    let garbled = dir.path().join("gain.txt");
    std::fs::write(&garbled, "matrix L 2 2\n1 2\n").unwrap();
    let cfg = config("benchmark.toml");
    let o = riobs(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--gains",
        garbled.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 65);
}
