use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use kljn_core::export::{read_csv, read_json_lines};

fn kljn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kljn"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn kljn")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn simulate_prints_levels_and_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = kljn(dir.path(), &["simulate", "--seed", "3", "--n-beps", "400"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for needle in ["LL", "MID", "HH", "250.9091", "seed = 3"] {
        assert!(text.contains(needle), "{needle} missing from\n{text}");
    }
    let rows = read_csv(dir.path().join("simulate.csv")).unwrap();
    assert_eq!(rows.len(), 400);
    assert!(rows.iter().all(|r| r.eve_mode.is_none()));
    assert!(dir.path().join("simulate.summary.json").exists());
}

#[test]
fn invalid_resistances_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = kljn(
        dir.path(),
        &["simulate", "--r-high", "10e3", "--r-low", "10e3"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("r_high"));
    assert!(!dir.path().join("simulate.csv").exists());
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["attack", "--mode", "quantum"][..],
        &["attack"],
        &["timing", "--delta", "0"],
        &["timing", "--samples", "10"],
        &["simulate", "--n-beps", "0"],
        &["frobnicate"],
    ] {
        let o = kljn(dir.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn missing_seed_is_drawn_and_reported() {
    let dir = tempfile::tempdir().unwrap();
    let o = kljn(dir.path(), &["simulate", "--n-beps", "20"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let line = text.lines().next().unwrap();
    assert!(line.contains("drawn from system entropy"), "{line}");
    let seed = line
        .split_whitespace()
        .nth(2)
        .unwrap()
        .trim_end_matches(',')
        .to_string();
    let first = fs::read(dir.path().join("simulate.csv")).unwrap();
    let o = kljn(dir.path(), &["simulate", "--n-beps", "20", "--seed", &seed]);
    assert!(o.status.success());
    assert_eq!(fs::read(dir.path().join("simulate.csv")).unwrap(), first);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.cfg"),
        "# small run\nseed = 11\nn-beps = 30\nformat = jsonl\nout = from_file.jsonl\nmode = bilateral\n",
    )
    .unwrap();
    let o = kljn(
        dir.path(),
        &["attack", "--config", "run.cfg", "--n-beps", "12"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_json_lines(dir.path().join("from_file.jsonl")).unwrap();
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().all(|r| r.samples_to_decision.is_some()));
    assert!(stdout(&o).contains("seed = 11"));
}

#[test]
fn bad_config_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.cfg"), "seed = 1\nwarp = 9\n").unwrap();
    let o = kljn(dir.path(), &["simulate", "--config", "bad.cfg"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    let o = kljn(dir.path(), &["simulate", "--config", "missing.cfg"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn attack_reports_success_rate() {
    let dir = tempfile::tempdir().unwrap();
    let o = kljn(
        dir.path(),
        &[
            "attack",
            "--mode",
            "bilateral",
            "--n-beps",
            "200",
            "--seed",
            "5",
        ],
    );
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("success rate: 1.000"), "{text}");
    assert!(text.contains("samples to decision"));
    assert!(text.contains("waiting time"));
    let rows = read_csv(dir.path().join("attack.csv")).unwrap();
    assert!(rows
        .iter()
        .filter(|r| r.is_secure())
        .all(|r| r.eve_correct == Some(true)));
}

#[test]
fn timing_reports_model_values() {
    let dir = tempfile::tempdir().unwrap();
    let o = kljn(
        dir.path(),
        &["timing", "--delta", "8", "--seed", "2", "--samples", "2e5"],
    );
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("p0 = 2^-delta = 3.906e-3"), "{text}");
    assert!(text.contains("1 ms at 500 Hz"), "{text}");
    let csv = fs::read_to_string(dir.path().join("timing.csv")).unwrap();
    assert!(csv.starts_with("run_length,count,expected\n"));
}

fn trace_rows(dir: &Path) -> Vec<(String, usize, f64)> {
    let csv = fs::read_to_string(dir.join("fig4.csv")).unwrap();
    csv.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (
                f[0].to_string(),
                f[1].parse().unwrap(),
                f[2].parse().unwrap(),
            )
        })
        .collect()
}

#[test]
fn trace_rows_are_both_candidates_minus_omitted() {
    let dir = tempfile::tempdir().unwrap();
    let o = kljn(
        dir.path(),
        &["reproduce-fig4", "--seed", "4", "--samples-per-bep", "250"],
    );
    assert!(o.status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fig4.summary.json")).unwrap())
            .unwrap();
    let omitted: u64 = summary["candidates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["omitted"].as_u64().unwrap())
        .sum();
    assert_eq!(trace_rows(dir.path()).len() as u64, 2 * 250 - omitted);
    assert_eq!(summary["bob_read"], "H");
}

#[test]
fn reproduce_with_bob_on_low() {
    let dir = tempfile::tempdir().unwrap();
    let o = kljn(
        dir.path(),
        &["reproduce-fig4", "--seed", "4", "--bob-choice", "L"],
    );
    assert!(o.status.success());
    assert!(
        stdout(&o).contains("candidate L: Flat at 1.000000e4"),
        "{}",
        stdout(&o)
    );
    for (c, _, v) in trace_rows(dir.path()) {
        if c == "L" {
            assert!((v / 1e4 - 1.0).abs() <= 1e-6);
        }
    }
}
