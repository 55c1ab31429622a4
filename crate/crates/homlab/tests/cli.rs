//! End-to-end checks of the command-line binary: exit codes, JSON/CSV
//! shapes, artifact determinism.

use std::path::Path;
use std::process::{Command, Output};

fn homlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homlab"))
        .args(args)
        .env_remove("HOMLAB_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write_empty_tags(path: &Path) {
    homlab::TagStream::new(Vec::new())
        .unwrap()
        .save(path)
        .unwrap();
}

#[test]
fn oracle_reports_the_dip_bound() {
    let out = homlab(&[
        "oracle", "--theta1", "45", "--theta2", "45", "--gamma", "1", "--pairing", "cross",
    ]);
    let json = stdout_json(&out);
    let p = json["probability_normalized"].as_f64().unwrap();
    assert!((p - 0.5).abs() <= 1e-9, "normalized {p}");
    assert_eq!(json["pairing"], "cross_d1d2");
    assert_eq!(json["gamma"], 1.0);
}

#[test]
fn analyze_empty_file_counts_zero() {
    let dir = tempfile::tempdir().unwrap();
    let tags = dir.path().join("empty.ttag");
    write_empty_tags(&tags);
    let out = homlab(&[
        "analyze", "--tags", tags.to_str().unwrap(), "--delay-ps", "50000",
    ]);
    let json = stdout_json(&out);
    assert_eq!(json["count"], 0);
    assert_eq!(json["duration_ps"], 0);
    assert_eq!(json["rate_hz"], 0.0);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let tags = dir.path().join("empty.ttag");
    write_empty_tags(&tags);

    let unknown = homlab(&["frobnicate"]);
    assert_eq!(unknown.status.code(), Some(2));

    let missing = homlab(&["analyze", "--tags", tags.to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2), "delay-ps is required");

    let contradictory = homlab(&[
        "analyze", "--tags", tags.to_str().unwrap(), "--delay-ps", "50000", "--self",
        "--ch-b", "1",
    ]);
    assert_eq!(contradictory.status.code(), Some(2));

    let zero_points = homlab(&["scan", "--points", "0", "--out", "x.csv"]);
    assert_eq!(zero_points.status.code(), Some(2));

    let bad_env = Command::new(env!("CARGO_BIN_EXE_homlab"))
        .args(["oracle", "--gamma", "0", "--pairing", "cross"])
        .env("HOMLAB_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(bad_env.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1_and_can_be_json() {
    let gone = homlab(&["analyze", "--tags", "/nonexistent/z.ttag", "--delay-ps", "0"]);
    assert_eq!(gone.status.code(), Some(1));

    let json_err = homlab(&[
        "--json-errors", "analyze", "--tags", "/nonexistent/z.ttag", "--delay-ps", "0",
    ]);
    assert_eq!(json_err.status.code(), Some(1));
    let parsed: serde_json::Value =
        serde_json::from_slice(&json_err.stderr).expect("stderr is JSON");
    assert!(parsed["error"].as_str().unwrap().contains("No such file"));

    let bad_gamma = homlab(&["oracle", "--gamma", "1.5", "--pairing", "cross"]);
    assert_eq!(bad_gamma.status.code(), Some(1));
}

#[test]
fn simulate_analyze_histogram_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let tags = dir.path().join("run.ttag");
    let sim = homlab(&[
        "simulate", "--pulses", "2000000", "--seed", "11", "--dx-mm", "30", "--out",
        tags.to_str().unwrap(),
    ]);
    assert!(sim.status.success(), "{}", String::from_utf8_lossy(&sim.stderr));

    let out = homlab(&[
        "analyze", "--tags", tags.to_str().unwrap(), "--delay-ps", "50000",
        "--window-ps", "4000",
    ]);
    let json = stdout_json(&out);
    let count = json["count"].as_u64().unwrap();
    let rate = json["rate_hz"].as_f64().unwrap();
    // 0.1 s of pulses at the 4.5 kHz cross baseline.
    assert!(count > 300 && count < 650, "count {count}");
    assert!((rate - 4500.0).abs() < 600.0, "rate {rate}");

    let hist = homlab(&[
        "histogram", "--tags", tags.to_str().unwrap(), "--ch-a", "0", "--self",
        "--bin-ps", "50000", "--range-ps", "200000",
    ]);
    assert!(hist.status.success());
    let text = String::from_utf8(hist.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("bin_start_ps,count"));
    let rows: Vec<(i64, u64)> = lines
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0].0, -25_000);
    // Every self pair sits at a multiple of the pulse period, never between.
    assert_eq!(rows[0].1, 0, "self pairs at zero delay are impossible");
    for (start, count) in &rows[1..] {
        assert!(*count > 300, "bin at {start} has {count}");
    }
}

#[test]
fn scan_fit_runs_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        r#"
        [scan]
        points = 9
        dx_min_mm = -1.2
        dx_max_mm = 1.2
        pulses_per_point = 2000000
        seed = 5
        "#,
    )
    .unwrap();
    let csv = dir.path().join("fringe.csv");
    let scan = homlab(&[
        "scan", "--config", config.to_str().unwrap(), "--out", csv.to_str().unwrap(),
    ]);
    assert!(scan.status.success(), "{}", String::from_utf8_lossy(&scan.stderr));

    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("label,dx_mm,count,duration_ps\n"));
    for label in [
        "cross_ch0_ch1_d50000ps",
        "self_ch0_d50000ps",
        "singles_ch0",
        "singles_ch1",
    ] {
        assert!(text.contains(label), "missing curve {label}");
    }
    assert_eq!(text.lines().count(), 1 + 4 * 9);

    let fit = homlab(&[
        "fit", "--fringe", csv.to_str().unwrap(), "--label", "cross_ch0_ch1_d50000ps",
    ]);
    let json = stdout_json(&fit);
    assert_eq!(json["sign"], -1);
    let v = json["visibility"].as_f64().unwrap();
    assert!((v - 0.5).abs() < 0.15, "visibility {v}");

    let missing = homlab(&["fit", "--fringe", csv.to_str().unwrap(), "--label", "nope"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("singles_ch1"));
}

#[test]
fn config_file_problems_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[source]\nwavelenght_nm = 775.0\n").unwrap();
    let out = homlab(&[
        "simulate", "--config", config.to_str().unwrap(), "--out", "x.ttag",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("wavelenght_nm"));
}

#[test]
fn selftest_passes() {
    let out = homlab(&["selftest", "--fuzz-cases", "15"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("ok amplitude oracle"));
    assert!(text.contains("ok correlator"));
}

#[test]
fn artifacts_are_identical_across_threads_and_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for (name, threads) in [("a.ttag", "1"), ("b.ttag", "3"), ("c.ttag", "3")] {
        let path = dir.path().join(name);
        let out = homlab(&[
            "simulate", "--pulses", "3000000", "--seed", "21", "--dx-mm", "0.1",
            "--threads", threads, "--out", path.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        bytes.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(bytes[0], bytes[1], "thread count changed the tag file");
    assert_eq!(bytes[1], bytes[2], "rerun changed the tag file");

    let env_run = Command::new(env!("CARGO_BIN_EXE_homlab"))
        .args([
            "simulate", "--pulses", "3000000", "--seed", "21", "--dx-mm", "0.1", "--out",
            dir.path().join("d.ttag").to_str().unwrap(),
        ])
        .env("HOMLAB_THREADS", "2")
        .output()
        .unwrap();
    assert!(env_run.status.success());
    assert_eq!(bytes[0], std::fs::read(dir.path().join("d.ttag")).unwrap());
}
