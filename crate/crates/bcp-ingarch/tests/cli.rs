//! End-to-end tests of the `bcp-ingarch` binary: output determinism, JSON
//! round-trips, exit-code conventions, and thread-count independence.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_bcp-ingarch")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "bcp-ingarch {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_params(dir: &Path) -> PathBuf {
    let path = dir.join("params.json");
    fs::write(
        &path,
        r#"{"omega":[1.0,0.5],"a":[[0.4,0.0],[0.0,0.3]],"b":[[0.2,0.0],[0.0,0.4]],"b_diagonal":true,"phi":0.7}"#,
    )
    .unwrap();
    path
}

/// Simulate and reduce to a bare two-column CSV.
fn make_counts_csv(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let params = write_params(dir);
    let sim_dir = dir.join(format!("sim-{seed}"));
    run_ok(&[
        "simulate",
        "--params",
        params.to_str().unwrap(),
        "--n",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        sim_dir.to_str().unwrap(),
    ]);
    let raw = fs::read_to_string(sim_dir.join("series.csv")).unwrap();
    let body: String = raw
        .lines()
        .skip(1)
        .map(|l| {
            let mut it = l.splitn(2, ',');
            it.next();
            format!("{}\n", it.next().unwrap())
        })
        .collect();
    let path = dir.join(format!("counts-{seed}.csv"));
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn simulate_outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let params = write_params(dir.path());
    for run_dir in ["a", "b"] {
        run_ok(&[
            "simulate",
            "--params",
            params.to_str().unwrap(),
            "--n",
            "120",
            "--seed",
            "99",
            "--out",
            dir.path().join(run_dir).to_str().unwrap(),
        ]);
    }
    for name in ["series.csv", "lambda.csv", "manifest.json"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(name)).unwrap(),
            fs::read(dir.path().join("b").join(name)).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn fit_then_forecast_json_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let input = make_counts_csv(dir.path(), 250, 7);
    let out = dir.path().join("res");
    run_ok(&["fit", "--input", input.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    run_ok(&["forecast", "--input", input.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let fit: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("fit.json")).unwrap()).unwrap();
    let fc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("forecast.json")).unwrap()).unwrap();
    // The forecast's fitted parameters equal the fit document's, exactly.
    assert_eq!(fit["fit"]["theta_hat"], fc["fit"]["theta_hat"]);
    assert_eq!(fit["schema_version"], 1);
    assert!(fc["one_step"]["y_hat"].is_array());
}

#[test]
fn se_bootstrap_deterministic_under_thread_cap() {
    let dir = tempfile::tempdir().unwrap();
    let input = make_counts_csv(dir.path(), 200, 13);
    let mut docs = Vec::new();
    for (sub, threads) in [("t1", "1"), ("t4", "4")] {
        let out = dir.path().join(sub);
        let output = Command::new(bin())
            .env("BCP_THREADS", threads)
            .args([
                "se",
                "--input",
                input.to_str().unwrap(),
                "--se-method",
                "bootstrap",
                "--bootstrap-B",
                "40",
                "--seed",
                "11",
                "--out",
                out.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
        docs.push(fs::read(out.join("se.json")).unwrap());
    }
    assert_eq!(docs[0], docs[1], "bootstrap output depends on thread count");
}

#[test]
fn montecarlo_summary_csv_has_fixed_columns() {
    let dir = tempfile::tempdir().unwrap();
    let params = write_params(dir.path());
    let out = dir.path().join("mc");
    run_ok(&[
        "montecarlo",
        "--params",
        params.to_str().unwrap(),
        "--study",
        "estimation",
        "--n",
        "200",
        "--replicas",
        "4",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    let summary = fs::read_to_string(out.join("mc_summary.csv")).unwrap();
    assert_eq!(summary.lines().next().unwrap(), "parameter,mean,sd,mse");
    // Seven free parameters for the diagonal-B model.
    assert_eq!(summary.lines().count(), 8);
    let estimates = fs::read_to_string(out.join("mc_estimates.csv")).unwrap();
    assert_eq!(estimates.lines().count(), 5); // header + 4 replicas
}

#[test]
fn exit_codes_distinguish_usage_and_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    // Missing input file -> data/usage error (2).
    let out = run(&["fit", "--input", dir.path().join("nope.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    // Empty dataset -> data error (2).
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let out = run(&["fit", "--input", empty.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    // Negative cell -> data error (2) naming the position.
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "1,2\n3,x\n").unwrap();
    let out = run(&["fit", "--input", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"));
    // Unknown flag -> clap usage error (2).
    let out = run(&["fit", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    // Series too short to fit -> data error (2).
    let tiny = dir.path().join("tiny.csv");
    fs::write(&tiny, "1,2\n3,4\n").unwrap();
    let out = run(&["fit", "--input", tiny.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn forecast_rolling_matches_direct_api() {
    let dir = tempfile::tempdir().unwrap();
    let input = make_counts_csv(dir.path(), 140, 21);
    let out = dir.path().join("fc");
    run_ok(&[
        "forecast",
        "--input",
        input.to_str().unwrap(),
        "--n0",
        "120",
        "--conditional",
        "--out",
        out.to_str().unwrap(),
    ]);
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("forecast.json")).unwrap()).unwrap();
    let rolling = &doc["rolling"];
    assert_eq!(rolling["records"].as_array().unwrap().len(), 20);
    assert!(rolling["rmse_conditional"].as_f64().unwrap().is_finite());
    assert!(doc["one_step"].is_null());
}
