//! End-to-end tests of the `regret-lab` binary: exit codes, file outputs,
//! manifests, and reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_regret-lab"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_manifest(output: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&output.stdout);
    let line = text
        .lines()
        .find(|l| l.trim_start().starts_with('{'))
        .unwrap_or_else(|| panic!("no manifest line in {text:?}"));
    serde_json::from_str(line).expect("manifest is JSON")
}

fn panel_json() -> serde_json::Value {
    serde_json::json!({
        "d": 1, "n": 2, "mu": 0.75,
        "q": {"-": [0.6, -0.6], "+": [0.725, -0.725]},
    })
}

fn write_config(dir: &Path, n: usize, payoff: &str) -> PathBuf {
    let path = dir.join(format!("config_{n}_{payoff}.json"));
    let config = serde_json::json!({
        "panel": panel_json(),
        "payoff": payoff,
        "N": n,
    });
    std::fs::write(&path, config.to_string()).unwrap();
    path
}

#[test]
fn graph_debruijn_emits_and_checks() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.json");
    let output = run(&[
        "graph",
        "--debruijn",
        "3",
        "--emit",
        out.to_str().unwrap(),
        "--check-eulerian",
    ]);
    assert!(output.status.success());
    let manifest = stdout_manifest(&output);
    assert_eq!(manifest["command"], "graph");
    assert_eq!(manifest["result"]["nodes"], 8);
    assert_eq!(manifest["result"]["edges"], 16);
    assert!(manifest["config_hash"].as_str().unwrap().len() == 64);

    let graph: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(graph["nodes"].as_array().unwrap().len(), 8);
    assert_eq!(graph["edges"].as_array().unwrap().len(), 16);
}

#[test]
fn graph_random_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for (path, seed) in [(&a, "5"), (&b, "5")] {
        let output = run(&[
            "graph",
            "--random",
            "10",
            "--seed",
            seed,
            "--emit",
            path.to_str().unwrap(),
        ]);
        assert!(output.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn graph_usage_errors() {
    let output = run(&["graph"]);
    assert_eq!(output.status.code(), Some(2));
    let output = run(&["not-a-command"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn poisson_both_methods_agree_and_leave_inputs_alone() {
    let dir = tempfile::tempdir().unwrap();
    let graph_path = dir.path().join("g.json");
    let output = run(&[
        "graph",
        "--debruijn",
        "3",
        "--emit",
        graph_path.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let before = std::fs::read(&graph_path).unwrap();

    let out = dir.path().join("H.json");
    let output = run(&[
        "poisson",
        "--graph",
        graph_path.to_str().unwrap(),
        "--h",
        "random:7",
        "--method",
        "both",
        "--emit",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let manifest = stdout_manifest(&output);
    assert!(manifest["result"]["solve_residual"].as_f64().unwrap() <= 1e-12);
    assert!(manifest["result"]["methods_gap"].as_f64().unwrap() <= 1e-10);
    let emitted: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(emitted["solve"].as_object().unwrap().len(), 8);
    assert_eq!(emitted["representation"].as_object().unwrap().len(), 8);

    // Inputs are never mutated.
    assert_eq!(before, std::fs::read(&graph_path).unwrap());
}

#[test]
fn poisson_representation_rejects_non_debruijn() {
    let output = run(&[
        "poisson",
        "--graph",
        "random:8:3",
        "--h",
        "random:1",
        "--method",
        "representation",
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn lp_verify_debruijn_is_indifferent() {
    let dir = tempfile::tempdir().unwrap();
    let report_path = dir.path().join("report.json");
    let output = run(&[
        "lp-verify",
        "--graph",
        "debruijn:3",
        "--h",
        "random:7",
        "--report",
        report_path.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "exit 0 expected");
    let manifest = stdout_manifest(&output);
    assert_eq!(manifest["result"]["indifferent"], true);

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["convention"], "investor-lp");
    assert_eq!(report["indifferent"], true);
    assert!(report["cycle_rows"].as_array().unwrap().len() > 8);
}

#[test]
fn lp_verify_cap_exceeded_is_capacity_error() {
    let output = run(&["lp-verify", "--graph", "debruijn:2", "--h", "random:1", "--cap", "2"]);
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn minimax_bracket() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), 2, "lse");
    let out = dir.path().join("bracket.json");
    let output = run(&[
        "minimax",
        "--config",
        config.to_str().unwrap(),
        "--emit",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let bracket: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let lower = bracket["lower"].as_f64().unwrap();
    let upper = bracket["upper"].as_f64().unwrap();
    assert!(lower <= upper);

    // Horizon above the oracle's cap is a usage error.
    let config = write_config(dir.path(), 9, "lse");
    let output = run(&["minimax", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn simulate_reproducible_and_exhaustive_dominates() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), 64, "max");
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for path in [&a, &b] {
        let output = run(&[
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--investor",
            "fstar",
            "--market",
            "random:5",
            "--emit",
            path.to_str().unwrap(),
        ]);
        assert!(output.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let c = dir.path().join("c.json");
    let output = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--market",
        "random:6",
        "--emit",
        c.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());

    // The exhaustive market is at least as strong as b*.
    let config8 = write_config(dir.path(), 8, "max");
    let bstar = run(&[
        "simulate",
        "--config",
        config8.to_str().unwrap(),
        "--market",
        "bstar",
    ]);
    let exhaustive = run(&[
        "simulate",
        "--config",
        config8.to_str().unwrap(),
        "--market",
        "exhaustive",
    ]);
    assert!(bstar.status.success() && exhaustive.status.success());
    let p_bstar = stdout_manifest(&bstar)["result"]["final_payoff"]
        .as_f64()
        .unwrap();
    let p_exh = stdout_manifest(&exhaustive)["result"]["final_payoff"]
        .as_f64()
        .unwrap();
    assert!(p_exh >= p_bstar - 1e-12);
}

#[test]
fn simulate_protocol_violation_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), 4, "max");
    let script = dir.path().join("script.txt");
    std::fs::write(&script, "0.0 2.0 0.0 0.0").unwrap();
    let output = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--investor",
        &format!("script:{}", script.display()),
        "--market",
        "all-plus",
    ]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("step 1"), "stderr: {stderr}");
}

#[test]
fn rate_emits_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), 4, "lse");
    let out = dir.path().join("rate.csv");
    let output = run(&[
        "rate",
        "--config",
        config.to_str().unwrap(),
        "--side",
        "investor",
        "--adversary",
        "bstar",
        "--N-list",
        "4,8,16",
        "--emit",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "N,epsilon,gap,gap_over_eps,slope");
    assert_eq!(lines.count(), 3);
}

#[test]
fn value_emits_grid_csv() {
    let dir = tempfile::tempdir().unwrap();
    let panel_path = dir.path().join("panel.json");
    std::fs::write(&panel_path, panel_json().to_string()).unwrap();
    let out = dir.path().join("value.csv");
    let output = run(&[
        "value",
        "--panel",
        panel_path.to_str().unwrap(),
        "--payoff",
        "max",
        "--x1",
        "-1:1:3",
        "--x2",
        "0:0:1",
        "--t",
        "0:0.8:2",
        "--emit",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "x1,x2,t,m,u,f_star,H");
    // 3 x1 values, one x2, 2 t values, 2 histories.
    assert_eq!(lines.count(), 3 * 2 * 2);
}

#[test]
fn selftest_passes() {
    let output = run(&["selftest"]);
    assert!(output.status.success());
    let text = String::from_utf8_lossy(&output.stdout);
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 8);
    assert!(!text.contains("FAIL"));
}

#[test]
fn missing_input_is_usage_error() {
    let output = run(&["value", "--panel", "/nonexistent/panel.json"]);
    assert_eq!(output.status.code(), Some(2));
}
