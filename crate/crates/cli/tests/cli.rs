use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn case1() -> PathBuf {
    configs().join("case1.toml")
}

fn epec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epec"))
        .args(args)
        .env_remove("EPEC_WORKERS")
        .output()
        .expect("run epec")
}

fn ok(args: &[&str]) -> String {
    let out = epec(args);
    assert!(
        out.status.success(),
        "epec {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fail(args: &[&str]) -> String {
    let out = epec(args);
    assert!(!out.status.success(), "epec {args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Total installed capacity from an `equilibrium.csv`.
fn total_mw(path: &Path) -> f64 {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let existing = header.iter().position(|h| *h == "existing_mw").unwrap();
    let invest = header.iter().position(|h| *h == "invest_mw").unwrap();
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            f[existing].parse::<f64>().unwrap() + f[invest].parse::<f64>().unwrap()
        })
        .sum()
}

#[test]
fn auction_example_clears_at_twenty() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("auction.csv");
    let stdout = ok(&[
        "auction",
        "--segments",
        s(&configs().join("auction_segments.csv")),
        "--offers",
        s(&configs().join("auction_offers.csv")),
        "--out",
        s(&out),
    ]);
    assert!(stdout.contains("cleared 4000 MW at price 20"), "{stdout}");
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.contains("clearing_price,,20,"), "{csv}");
    assert!(csv.contains("total,,4000,"), "{csv}");
    let manifest = std::fs::read_to_string(dir.path().join("manifest_auction.json")).unwrap();
    let m: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(m["subcommand"], "auction");
    assert!(m["tool_version"].is_string());
    assert!(m["wall_time_s"].is_number());
}

#[test]
fn benchmark_solve_reaches_the_minimum_load() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench");
    ok(&[
        "solve",
        "--scenario",
        s(&case1()),
        "--evaluator",
        "benchmark",
        "--seed",
        "3",
        "--verify",
        "0.001",
        "--out",
        s(&out),
    ]);
    assert!((total_mw(&out.join("equilibrium.csv")) - 1421.0).abs() <= 0.5);
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("sweep,total_mw,max_change,objective_G1,objective_G2,objective_G3\n"));
    let nash = std::fs::read_to_string(out.join("nash.csv")).unwrap();
    assert_eq!(nash.lines().count(), 4);
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest_solve.json")).unwrap())
            .unwrap();
    assert_eq!(m["settings"]["evaluator"], "benchmark");
    assert_eq!(m["seeds"]["master"], 3);
    assert!(m["seeds"]["solve"].is_u64());
}

#[test]
fn full_pipeline_matches_the_benchmark_within_one_percent() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("data.csv");
    let sweep = d.join("payout.csv");
    let stdout = ok(&[
        "sample", "--scenario", s(&case1()), "-n", "5000", "--seed", "4", "--out", s(&data),
        "--payout-sweep", s(&sweep), "--workers", "4",
    ]);
    assert!(stdout.contains("payout peaks at 1421 MW"), "{stdout}");

    let models = d.join("models");
    ok(&["train", "--dataset", s(&data), "--seed", "4", "--out", s(&models)]);
    let report = std::fs::read_to_string(models.join("train_report.csv")).unwrap();
    for line in report.lines().skip(1) {
        let test_error: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!(test_error <= 0.05, "{line}");
    }

    let hybrid = d.join("hybrid");
    ok(&[
        "solve", "--scenario", s(&case1()), "--evaluator", "hybrid", "--models", s(&models),
        "--seed", "4", "--out", s(&hybrid),
    ]);
    let total = total_mw(&hybrid.join("equilibrium.csv"));
    assert!((total - 1421.0).abs() <= 0.01 * 1421.0, "hybrid total {total}");

    let validated = d.join("validate");
    ok(&[
        "validate", "--scenario", s(&case1()), "--hybrid", s(&hybrid.join("equilibrium.csv")),
        "--seed", "4", "--out", s(&validated),
    ]);
    let total = total_mw(&validated.join("equilibrium.csv"));
    assert!((total - 1421.0).abs() <= 1.0, "validated total {total}");
    for name in ["manifest_sample.json", "models/manifest_train.json", "hybrid/manifest_solve.json", "validate/manifest_validate.json"] {
        assert!(d.join(name).exists(), "{name}");
    }
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let run = |workers: &str, tag: &str| {
        let data = d.join(format!("data_{tag}.csv"));
        ok(&[
            "sample", "--scenario", s(&case1()), "-n", "300", "--seed", "9", "--out", s(&data),
            "--workers", workers,
        ]);
        let models = d.join(format!("models_{tag}"));
        ok(&["train", "--dataset", s(&data), "--seed", "9", "--rounds", "20", "--out", s(&models)]);
        let bench = d.join(format!("bench_{tag}"));
        ok(&[
            "solve", "--scenario", s(&case1()), "--evaluator", "benchmark", "--seed", "9",
            "--out", s(&bench), "--workers", workers,
        ]);
        (
            std::fs::read(&data).unwrap(),
            std::fs::read(models.join("profit_R1_ST.json")).unwrap(),
            std::fs::read(bench.join("equilibrium.csv")).unwrap(),
            std::fs::read(bench.join("trace.csv")).unwrap(),
        )
    };
    assert!(run("1", "a") == run("4", "b"));
}

#[test]
fn errors_are_reported_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let err = fail(&["solve", "--scenario", s(&case1()), "--evaluator", "benchmark", "--bogus", "--out", "x"]);
    assert!(err.contains("--bogus"), "{err}");

    let err = fail(&["solve", "--scenario", "missing.toml", "--evaluator", "benchmark", "--out", s(d)]);
    assert!(err.contains("missing.toml"), "{err}");

    let err = fail(&["solve", "--scenario", s(&case1()), "--evaluator", "hybrid", "--out", s(d)]);
    assert!(err.contains("--models"), "{err}");

    let data = d.join("data.csv");
    ok(&["sample", "--scenario", s(&case1()), "-n", "50", "--out", s(&data)]);
    let err = fail(&["train", "--dataset", s(&data), "--target", "profit_R9_ST", "--out", s(d)]);
    assert!(err.contains("profit_R9_ST"), "{err}");

    // Models trained on different features do not fit this scenario.
    let text = std::fs::read_to_string(&data).unwrap().replace("_R1_", "_R9_");
    let other = d.join("other.csv");
    std::fs::write(&other, text).unwrap();
    let models = d.join("models");
    ok(&["train", "--dataset", s(&other), "--rounds", "5", "--out", s(&models)]);
    for tech in ["ST", "CT", "CCGT"] {
        std::fs::rename(
            models.join(format!("profit_R9_{tech}.json")),
            models.join(format!("profit_R1_{tech}.json")),
        )
        .unwrap();
    }
    let err = fail(&[
        "solve", "--scenario", s(&case1()), "--evaluator", "hybrid", "--models", s(&models),
        "--out", s(d),
    ]);
    assert!(err.contains("trained on features"), "{err}");

    let err = fail(&["validate", "--scenario", s(&case1()), "--hybrid", s(&data), "--out", s(d)]);
    assert!(err.contains("error"), "{err}");
}
