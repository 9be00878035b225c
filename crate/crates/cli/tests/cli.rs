use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn deepcq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deepcq"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn short_config(dir: &Path) -> String {
    let path = dir.join("cfg.json");
    std::fs::write(&path, r#"{"traffic_slots": 60, "seed": 9}"#).unwrap();
    path.to_str().unwrap().to_string()
}

fn csv_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect()
}

#[test]
fn run_writes_episode_rows_and_mean() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let out = dir.path().join("run.csv");
    let o = deepcq(&[
        "run",
        "--config",
        &cfg,
        "--policy",
        "cq+",
        "--episodes",
        "100",
        "--nodes",
        "12",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = csv_lines(&out);
    assert_eq!(lines.len(), 102, "header + 100 episodes + mean");
    assert!(lines[0]
        .starts_with("row_type,policy,nodes,flows,dynamic_scale,episode,seed,episodes,goodput"));
    assert!(lines[101].starts_with("mean,cq+,12,1,"));
}

#[test]
fn hard_policy_reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = deepcq(&[
            "run",
            "--config",
            &cfg,
            "--policy",
            "hard-cq+",
            "--episodes",
            "5",
            "--seed",
            "4",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        std::fs::read(out).unwrap()
    };
    assert_eq!(run("a.csv"), run("b.csv"));
}

#[test]
fn missing_weights_file_fails() {
    let o = deepcq(&[
        "run",
        "--policy",
        "neural",
        "--weights",
        "/definitely/missing/w.json",
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("weights not found"));
}

#[test]
fn bad_config_fails() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"node_count": 1}"#).unwrap();
    let o = deepcq(&["run", "--config", path.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("node_count"));
    let o = deepcq(&["run", "--config", "/no/such/config.json"]);
    assert!(!o.status.success());
}

#[test]
fn sweep_cross_product() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let out = dir.path().join("sweep.csv");
    let o = deepcq(&[
        "sweep",
        "--config",
        &cfg,
        "--policy",
        "cq+,hard-cq+",
        "--episodes",
        "2",
        "--sweep-nodes",
        "10,15,20,25,30",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = csv_lines(&out);
    assert_eq!(lines.len(), 11);
    assert!(lines[1..].iter().all(|l| l.starts_with("mean,")));

    let o = deepcq(&[
        "sweep",
        "--config",
        &cfg,
        "--episodes",
        "1",
        "--sweep-flows",
        "1,2,3,4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(csv_lines(&out).len(), 5);
}

#[test]
fn sweep_cell_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let sweep_out = dir.path().join("sweep.csv");
    let run_out = dir.path().join("run.csv");
    assert!(deepcq(&[
        "sweep",
        "--config",
        &cfg,
        "--episodes",
        "3",
        "--sweep-nodes",
        "8,10",
        "--out",
        sweep_out.to_str().unwrap(),
    ])
    .status
    .success());
    assert!(deepcq(&[
        "run",
        "--config",
        &cfg,
        "--episodes",
        "3",
        "--nodes",
        "10",
        "--out",
        run_out.to_str().unwrap(),
    ])
    .status
    .success());
    assert_eq!(
        csv_lines(&sweep_out)[2],
        *csv_lines(&run_out).last().unwrap()
    );
}

#[test]
fn empty_sweep_axis_is_usage_error() {
    let o = deepcq(&["sweep", "--sweep-nodes"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("nodes"));
}

#[test]
fn logs_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let tr = dir.path().join("t.jsonl");
    let traj = dir.path().join("traj.csv");
    let o = deepcq(&[
        "run",
        "--config",
        &cfg,
        "--log-transitions",
        tr.to_str().unwrap(),
        "--log-trajectory",
        traj.to_str().unwrap(),
        "--out",
        dir.path().join("o.csv").to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let first: Value = serde_json::from_str(csv_lines(&tr)[0].as_str()).unwrap();
    for key in ["slot", "node", "observation", "action", "reward", "done"] {
        assert!(first.get(key).is_some(), "{key}");
    }
    assert_eq!(first["observation"].as_array().unwrap().len(), 18);
    let traj = csv_lines(&traj);
    assert_eq!(traj[0], "slot,node,x,y,speed");
    assert!(traj[1].starts_with("1,0,"));
}

#[test]
fn serve_over_stdio() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_deepcq"))
        .args(["serve", "--stdio"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"{\"cmd\":\"reset\",\"cfg\":{\"traffic_slots\":5}}\n{\"cmd\":\"step\",\"actions\":{\"0\":1}}\n{\"cmd\":\"close\"}\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let replies: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(replies.len(), 3);
    assert_eq!(replies[0]["slot"], 1);
    assert!(replies[1]["rewards"]["0"].is_f64());
    assert_eq!(replies[2]["closed"], true);
}
