use assert_cmd::Command;
use predicates::prelude::*;

fn swarm() -> Command {
    Command::cargo_bin("swarm").unwrap()
}

#[test]
fn help_lists_subcommands() {
    swarm()
        .arg("--help")
        .assert()
        .success()
        .stdout(predicate::str::contains("gen-map"))
        .stdout(predicate::str::contains("calibrate-channel"));
}

#[test]
fn gen_map_renders_and_saves() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("demo.map");
    swarm()
        .args(["gen-map", "--set", "map.m=12", "--set", "map.k=2"])
        .args(["--set", "window=12", "--render"])
        .arg("--out")
        .arg(&out)
        .assert()
        .success()
        .stdout(predicate::str::contains("side 12, 2 targets"));
    assert!(out.is_file());
}

#[test]
fn config_errors_exit_with_two() {
    swarm()
        .args(["gen-map", "--set", "u=0"])
        .assert()
        .code(2)
        .stderr(predicate::str::contains("config error"));
    swarm()
        .args(["eval", "--policy", "nonsense", "--episodes", "1"])
        .assert()
        .code(2);
}

#[test]
fn missing_checkpoint_exits_with_one() {
    swarm()
        .args(["eval", "--policy", "ddql-greedy:/no/such/file.ckpt"])
        .args(["--episodes", "1"])
        .assert()
        .code(1);
}

#[test]
fn eval_writes_report_plots_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let plots = dir.path().join("plots");
    let traces = dir.path().join("traces.tsv");
    swarm()
        .args(["eval", "--policy", "la(2)", "--episodes", "5"])
        .args(["--set", "map.m=12", "--set", "map.k=2", "--set", "window=12"])
        .args(["--set", "step_limit=10"])
        .arg("--out")
        .arg(&report)
        .arg("--plots")
        .arg(&plots)
        .arg("--traces")
        .arg(&traces)
        .assert()
        .success()
        .stdout(predicate::str::contains("la(2): success"));
    assert!(report.is_file());
    assert!(plots.join("summary.tsv").is_file());
    assert!(plots.join("completion_cdf.tsv").is_file());
    assert!(traces.is_file());
    assert!(dir.path().join("manifest.toml").is_file());
}

#[test]
fn train_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    swarm()
        .args(["train", "--episodes", "1", "--warmup-episodes", "1"])
        .args(["--even-len", "1", "--odd-len", "1", "--batch-size", "2"])
        .args(["--replay-capacity", "8", "--eval-every", "0"])
        .arg("--out")
        .arg(&run)
        .assert()
        .success()
        .stdout(predicate::str::contains("trained 1 episodes"));
    let ckpt = run.join("final.ckpt");
    assert!(ckpt.is_file());
    assert!(run.join("curve.tsv").is_file());
    assert!(run.join("manifest.toml").is_file());

    swarm()
        .args(["eval", "--episodes", "1", "--set", "step_limit=2"])
        .arg("--policy")
        .arg(format!("ddql-greedy:{}", ckpt.display()))
        .assert()
        .success()
        .stdout(predicate::str::contains("ddql-greedy: success"));
}

#[test]
fn compare_reports_every_policy() {
    swarm()
        .args(["compare", "--policy", "la(1)", "--policy", "la(3)"])
        .args(["--set", "map.m=12", "--set", "map.k=2", "--set", "window=12"])
        .args(["--set", "step_limit=8", "--episodes", "4"])
        .assert()
        .success()
        .stdout(predicate::str::contains("la(1)"))
        .stdout(predicate::str::contains("la(3)"))
        .stdout(predicate::str::contains("decision time"));
}

#[test]
fn calibrate_channel_prints_the_anchor() {
    swarm()
        .arg("calibrate-channel")
        .assert()
        .success()
        .stdout(predicate::str::contains("reference path loss"))
        .stdout(predicate::str::contains("110\t0.5000"));
}

#[test]
fn heightmap_ingest_and_plot_export() {
    let dir = tempfile::tempdir().unwrap();
    let heights = dir.path().join("h.txt");
    std::fs::write(&heights, "0 0 7\n7 0 0\n0 0 0\n").unwrap();
    let grid = dir.path().join("omega.grid");
    swarm()
        .arg("ingest-heightmap")
        .arg("--heights")
        .arg(&heights)
        .args(["--threshold-m", "5"])
        .arg("--out")
        .arg(&grid)
        .assert()
        .success()
        .stdout(predicate::str::contains("coverage 0.222"));
    assert_eq!(std::fs::read_to_string(&grid).unwrap(), "001\n100\n000\n");

    let report = dir.path().join("report.json");
    swarm()
        .args(["eval", "--policy", "la(1)", "--episodes", "3"])
        .args(["--set", "map.m=12", "--set", "map.k=2", "--set", "window=12"])
        .args(["--set", "step_limit=6"])
        .arg("--out")
        .arg(&report)
        .assert()
        .success();
    let plots = dir.path().join("replots");
    swarm()
        .arg("export-plots")
        .arg("--report")
        .arg(&report)
        .arg("--out")
        .arg(&plots)
        .assert()
        .success();
    assert!(plots.join("on_target.tsv").is_file());
}

#[test]
fn output_paths_create_missing_parent_directories() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("runs/eval/report.json");
    let traces = dir.path().join("runs/logs/traces.tsv");
    swarm()
        .args(["eval", "--policy", "la(1)", "--episodes", "2"])
        .args(["--set", "map.m=12", "--set", "map.k=2", "--set", "window=12"])
        .args(["--set", "step_limit=5"])
        .arg("--out")
        .arg(&report)
        .arg("--traces")
        .arg(&traces)
        .assert()
        .success();
    assert!(report.is_file());
    assert!(traces.is_file());
    assert!(report.parent().unwrap().join("manifest.toml").is_file());

    let map = dir.path().join("maps/batch");
    swarm()
        .args(["gen-map", "--count", "2"])
        .args(["--set", "map.m=12", "--set", "map.k=2", "--set", "window=12"])
        .arg("--out")
        .arg(&map)
        .assert()
        .success();
    assert!(map.with_extension("0.map").is_file());
    assert!(map.with_extension("1.map").is_file());
}
