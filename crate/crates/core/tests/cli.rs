mod common;

use common::corpus;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_avatar-market"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn small_scenario(dir: &Path) -> String {
    let path = dir.join("small.json");
    std::fs::write(
        &path,
        r#"{
  "families": [
    {"name": "noise", "strategy": {"archetype": {"kind": "random"}},
     "n_agents": 30, "initial_cash": 1000000, "initial_shares": 100},
    {"name": "trend", "strategy": {"archetype": {"kind": "momentum"}},
     "n_agents": 10, "initial_cash": 1000000, "initial_shares": 100}
  ],
  "initial_reference_price": 1000,
  "run_length": {"transactions": 3000},
  "master_seed": 5
}"#,
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_writes_archive_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = small_scenario(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let out = run_ok(&["run", &scenario, "--out", a.to_str().unwrap()]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(
        text.contains("seed 5") && text.contains("noise") && text.contains("trend"),
        "{text}"
    );
    run_ok(&["run", &scenario, "--out", b.to_str().unwrap(), "--quiet"]);
    for f in ["tape.csv", "snapshots.csv", "config.json", "report.json"] {
        let x = std::fs::read(a.join(f)).unwrap();
        assert_eq!(
            x,
            std::fs::read(b.join(f)).unwrap(),
            "{f} differs between runs"
        );
    }
}

#[test]
fn seed_flag_overrides_the_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = small_scenario(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_ok(&["run", &scenario, "--out", a.to_str().unwrap(), "--quiet"]);
    run_ok(&[
        "run",
        &scenario,
        "--out",
        b.to_str().unwrap(),
        "--quiet",
        "--seed",
        "6",
    ]);
    assert_ne!(
        std::fs::read(a.join("tape.csv")).unwrap(),
        std::fs::read(b.join("tape.csv")).unwrap()
    );
}

#[test]
fn csv_format_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = small_scenario(dir.path());
    let out = dir.path().join("sweep");
    run_ok(&[
        "run",
        &scenario,
        "--out",
        out.to_str().unwrap(),
        "--quiet",
        "--sweep",
        "3",
        "--jobs",
        "2",
        "--format",
        "csv",
    ]);
    for s in 5..8 {
        let d = out.join(format!("seed-{s}"));
        assert!(d.join("tape.csv").is_file(), "{}", d.display());
        let csvs = std::fs::read_dir(&d).unwrap().filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "csv")
        });
        assert!(csvs.count() > 2);
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"families": []}"#).unwrap();
    let out = bin()
        .args(["run", bad.to_str().unwrap(), "--out"])
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    let broken = dir.path().join("broken.json");
    std::fs::write(
        &broken,
        r#"{"families": [{"name": "x", "strategy": {"avatar": {"source": "avatar \"x\" { on wake { submit_limit(buy); } }"}},
            "n_agents": 1, "initial_cash": 1, "initial_shares": 1}],
            "initial_reference_price": 10, "run_length": {"transactions": 1}}"#,
    )
    .unwrap();
    let out = bin()
        .args(["run", broken.to_str().unwrap(), "--out"])
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let out = bin().args(["run", "/nonexistent.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn check_prints_canonical_form_or_fails() {
    let path = corpus("archetypes/momentum.avt");
    let out = run_ok(&["check", path.to_str().unwrap()]);
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .starts_with("avatar \"momentum\""));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.avt");
    std::fs::write(&bad, "avatar \"b\" {\n    on wake { let x = ; }\n}\n").unwrap();
    let out = bin().arg("check").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2:"));
}

#[test]
fn report_regenerates_and_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = small_scenario(dir.path());
    let a = dir.path().join("a");
    run_ok(&["run", &scenario, "--out", a.to_str().unwrap(), "--quiet"]);
    let before = std::fs::read(a.join("report.json")).unwrap();
    std::fs::remove_file(a.join("report.json")).unwrap();
    std::fs::write(a.join("report.json"), b"{}").unwrap();
    let out = bin()
        .args(["report", a.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(1),
        "a stale report must not be accepted"
    );

    std::fs::write(a.join("report.json"), &before).unwrap();
    run_ok(&["report", a.to_str().unwrap()]);
    assert_eq!(std::fs::read(a.join("report.json")).unwrap(), before);

    let tape = std::fs::read_to_string(a.join("tape.csv")).unwrap();
    let mut lines: Vec<String> = tape.lines().map(String::from).collect();
    let mut cols: Vec<String> = lines[10].split(',').map(String::from).collect();
    cols[2] = (cols[2].parse::<i64>().unwrap() + 1).to_string();
    lines[10] = cols.join(",");
    std::fs::write(a.join("tape.csv"), lines.join("\n") + "\n").unwrap();
    let out = bin()
        .args(["report", a.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn oracle_command() {
    let out = run_ok(&["oracle", "--seeds", "5", "--orders", "2000"]);
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .contains("5 of 5 streams agree"));
}
