use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use diamondp::scenario::load_scenario;
use diamondp::{final_graph, NodeId, Time};
use diamondp_cli::{cmd_check, cmd_run, cmd_sweep, Outcome, RunOptions};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn diamondp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diamondp")).args(args).output().expect("binary runs")
}

#[test]
fn lossless_clique_converges() {
    let dir = tempfile::tempdir().unwrap();
    let out = diamondp(&["run", fixture("clique_lossless.toml").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let verdict: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("verdict.json")).unwrap()).unwrap();
    assert_eq!(verdict["outcome"], "CONVERGED");
    assert_eq!(verdict["verdict"]["converged"], true);
    assert!(dir.path().join("trace.jsonl").exists());
}

#[test]
fn tiny_horizon_is_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.toml");
    std::fs::write(
        &scenario,
        "n = 3\nhorizon = \"1\"\nedges = [[0, 1], [1, 2]]\n\n[[crashes]]\nnode = 2\ntime = \"0.5\"\n",
    )
    .unwrap();
    let out = diamondp(&["run", scenario.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn malformed_scenario_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("bad.toml");
    std::fs::write(&scenario, "n = 3\nhorizon = \"100\"\nedges = [[0, 1]]\n").unwrap();
    let out = diamondp(&["run", scenario.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("initial graph disconnected"));

    std::fs::write(&scenario, "n = 3\nhorizon = \n").unwrap();
    let out = diamondp(&["run", scenario.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn missing_file_is_a_usage_error() {
    let out = diamondp(&["check", "/nonexistent/trace.jsonl", "/nonexistent/s.toml"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let report = cmd_run(
        &fixture("clique_lossless.toml"),
        &RunOptions { out: dir.path().to_path_buf(), horizon: Some(Time::from_integer(120)), seed: Some(99) },
    )
    .unwrap();
    assert_eq!(report.seed, 99);
    let resolved = load_scenario(dir.path().join("scenario.toml")).unwrap();
    assert_eq!(resolved.horizon(), Time::from_integer(120));
    assert_eq!(resolved.seed(), 99);
}

#[test]
fn check_agrees_with_run() {
    let dir = tempfile::tempdir().unwrap();
    let report = cmd_run(&fixture("line5_partition.toml"), &RunOptions { out: dir.path().to_path_buf(), ..Default::default() }).unwrap();
    assert_eq!(report.outcome, Outcome::Converged);
    let again = cmd_check(&dir.path().join("trace.jsonl"), &dir.path().join("scenario.toml")).unwrap();
    assert_eq!(again.outcome, report.outcome);
    assert_eq!(again.verdict.t_f_observed, report.verdict.t_f_observed);

    let out = diamondp(&[
        "check",
        dir.path().join("trace.jsonl").to_str().unwrap(),
        fixture("line5_partition.toml").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn line_scenario_loads_with_two_components() {
    let s = load_scenario(fixture("line5_partition.toml")).unwrap();
    let fg = final_graph(&s);
    let comps: Vec<Vec<u32>> = fg.components.iter().map(|c| c.iter().map(|n| n.0).collect()).collect();
    assert_eq!(comps, vec![vec![0, 1], vec![3, 4]]);
    assert_eq!(fg.crashed.iter().copied().collect::<Vec<_>>(), vec![NodeId(2)]);
}

#[test]
fn zero_seeds_is_an_empty_summary() {
    let summary = cmd_sweep(&fixture("random.toml"), 0, 1).unwrap();
    assert!(summary.runs.is_empty());
    assert_eq!(summary.pass_rate, None);
    assert_eq!(summary.exit_code(), 0);
    let out = diamondp(&["sweep", fixture("random.toml").to_str().unwrap(), "--seeds", "0"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn parallel_sweep_matches_serial() {
    let serial = cmd_sweep(&fixture("random.toml"), 6, 1).unwrap();
    let parallel = cmd_sweep(&fixture("random.toml"), 6, 3).unwrap();
    assert_eq!(serde_json::to_string(&serial).unwrap(), serde_json::to_string(&parallel).unwrap());
    assert_eq!(serial.converged, 6);
}

#[test]
fn unbounded_adversary_is_caught() {
    let summary = cmd_sweep(&fixture("unbounded_adversary.toml"), 3, 1).unwrap();
    assert!(summary.runs.iter().all(|r| r.channel_failures > 0));
    assert_eq!(summary.exit_code(), 2);
    let out = diamondp(&["sweep", fixture("unbounded_adversary.toml").to_str().unwrap(), "--seeds", "2"]);
    assert_eq!(out.status.code(), Some(2));
}
