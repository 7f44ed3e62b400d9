use std::path::Path;
use std::process::{Command, Output};

use pptomo::io::{read_response, Table};

fn pptomo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pptomo"))
        .args(args)
        .env("PPTOMO_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn simulate(out: &Path) -> Output {
    pptomo(&[
        "simulate",
        "--set",
        "ensemble.n_samples=4",
        "--set",
        "noise_relative=0.01",
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
    ])
}

fn sorted_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn same_seed_gives_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(simulate(&a).status.success());
    assert!(simulate(&b).status.success());
    let names = sorted_files(&a);
    assert_eq!(names, sorted_files(&b));
    for n in &names {
        let (x, y) = (std::fs::read(a.join(n)).unwrap(), std::fs::read(b.join(n)).unwrap());
        assert!(x == y, "{n} differs between reruns");
    }
    for n in names.iter().filter(|n| n.ends_with(".csv")) {
        let t = Table::read(&a.join(n)).unwrap();
        assert!(t.comment.contains("v1"), "{n}: {}", t.comment);
    }
    let truth = read_response(&a.join("response_true.csv")).unwrap();
    assert_eq!(truth.delays.len(), 140);
}

#[test]
fn different_seed_changes_noisy_signal() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    assert!(simulate(&a).status.success());
    let b = dir.path().join("b");
    let out = pptomo(&[
        "simulate",
        "--set",
        "ensemble.n_samples=4",
        "--set",
        "noise_relative=0.01",
        "--seed",
        "6",
        "--out",
        b.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_ne!(
        std::fs::read(a.join("signal_abs.csv")).unwrap(),
        std::fs::read(b.join("signal_abs.csv")).unwrap()
    );
}

#[test]
fn validate_reports_the_pulse_overlap() {
    let out = pptomo(&["validate"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("warning:")).count(), 1, "{text}");
}

#[test]
fn exit_codes() {
    let bad = pptomo(&["validate", "--set", "bath.temperature_K=-5"]);
    assert_eq!(bad.status.code(), Some(2));
    let missing = pptomo(&["tomography", "--response", "/nonexistent/response.csv"]);
    assert_eq!(missing.status.code(), Some(2));
    let unknown = pptomo(&["validate", "--set", "no_such_key=1"]);
    assert_eq!(unknown.status.code(), Some(2));
}

#[test]
fn feasibility_writes_its_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = pptomo(&[
        "feasibility",
        "--set",
        "averaging.disorder_samples=3",
        "--set",
        "draws=2",
        "--set",
        "band_disorder_samples=2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["singular_values.csv", "species_amplitudes.csv", "species_bands.csv", "feasibility_report.json", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let sv = Table::read(&dir.path().join("singular_values.csv")).unwrap();
    assert_eq!(sv.schema(), Some("singular-values"));
}
