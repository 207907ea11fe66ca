use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sbm-detect"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn sbm-detect")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn generate(dir: &Path, name: &str, args: &[&str]) -> String {
    let path = dir.join(name);
    let path = path.to_str().unwrap().to_string();
    let mut full = vec!["--out", path.as_str(), "generate"];
    full.extend_from_slice(args);
    let out = run(&full);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--seed", "5", "--structure", "fig1c", "--n", "900", "--c", "4", "--eps", "0.3"];
    let mut a = vec!["generate"];
    a.extend_from_slice(&args[2..]);
    let first = run(&[&args[..2], &a[..]].concat());
    let second = run(&[&args[..2], &a[..]].concat());
    assert_eq!(first.stdout, second.stdout);
    let v = json(&first);
    assert_eq!(v["n"], 900);
    assert_eq!(v["seed"], 5);
    assert_eq!(v["rng"], "ChaCha8");
    assert_eq!(v["spec"]["W"][1][1], 1);
    assert_eq!(v["planted"].as_array().unwrap().len(), 900);

    let path = generate(dir.path(), "edges.txt", &["--format", "csv", "--structure", "community:2", "--n", "100", "--c", "3", "--eps", "0.5"]);
    let bytes = std::fs::read_to_string(path).unwrap();
    assert!(bytes.lines().all(|l| l.split(' ').count() == 2));
}

#[test]
fn bad_input_exits_with_2() {
    let out = run(&["generate", "--structure", "fig1c", "--n", "100", "--c", "4", "--eps", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilon"));
    let out = run(&["threshold", "--structure", "no-such-structure", "--c", "4"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn threshold_reports() {
    let v = json(&run(&["threshold", "--structure", "community:2", "--c", "4"]));
    assert!((v["epsilon_star"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(v["status"], "detectable-below-threshold");
    assert_eq!(v["method"], "closed-form-regular");

    let v = json(&run(&["threshold", "--structure", "demo-regular-q3", "--c", "4"]));
    assert_eq!(v["status"], "undetectable-for-all-eps");
    assert!(v["epsilon_star"].is_null());

    let out = run(&["--format", "csv", "threshold", "--structure", "fig1c", "--c", "6"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert!((row[3].parse::<f64>().unwrap() - 0.420204103).abs() < 1e-8);
    assert_eq!(row[4], "closed-form-orthogonal");
}

#[test]
fn unsupported_structure_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("irregular.json");
    std::fs::write(&path, r#"{"q": 3, "W": [[1,1,0],[1,0,0],[0,0,1]]}"#).unwrap();
    let out = run(&["threshold", "--structure", path.to_str().unwrap(), "--c", "4"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn infer_recovers_clear_communities() {
    let dir = tempfile::tempdir().unwrap();
    let graph = generate(
        dir.path(),
        "g.json",
        &["--structure", "community:2", "--n", "10000", "--c", "6", "--eps", "0.05"],
    );
    let v = json(&run(&["infer", "--input", &graph, "--em-iters", "10"]));
    let overlap = v["report"]["overlap"].as_f64().unwrap();
    assert!(overlap > 0.9, "overlap {overlap}");
    assert_eq!(v["report"]["chance"], 0.5);
    assert_eq!(v["assignments"].as_array().unwrap().len(), 10_000);
    let eps = v["report"]["params"]["epsilon"].as_f64().unwrap();
    assert!((eps - 0.05).abs() < 0.02, "fitted eps {eps}");
}

#[test]
fn fixed_prior_stays_fixed() {
    let dir = tempfile::tempdir().unwrap();
    let graph = generate(
        dir.path(),
        "g.json",
        &["--seed", "3", "--structure", "fig1c", "--n", "2000", "--c", "6", "--eps", "0.2"],
    );
    let v = json(&run(&["infer", "--input", &graph, "--fix-gamma", "--em-iters", "4", "--max-sweeps", "100"]));
    let history = v["history"].as_array().unwrap();
    assert!(!history.is_empty());
    for record in history {
        assert_eq!(record["gamma_hat"], serde_json::json!([0.25, 0.5, 0.25]));
    }
}

#[test]
fn infer_reads_edge_lists() {
    let dir = tempfile::tempdir().unwrap();
    let edges = dir.path().join("edges.txt");
    std::fs::write(&edges, "# two triangles joined by one edge\n0 1\n1 2\n0 2\n3 4\n4 5\n3 5\n2 3\n").unwrap();
    let out = run(&[
        "--format", "csv", "infer", "--input", edges.to_str().unwrap(), "--structure", "community:2",
        "--c", "2.33", "--eps", "0.1",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "vertex,assignment,p0,p1");
    assert_eq!(lines.count(), 6);
    let out = run(&["infer", "--input", edges.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.json");
    std::fs::write(
        &config,
        r#"{"name": "small", "structure": "fig1c", "n": 600, "c_list": [5],
            "epsilon_grid": {"values": [0.1, 0.8]}, "samples": 3,
            "inference": {"em_max_iters": 3, "bp_max_sweeps": 50}}"#,
    )
    .unwrap();
    let mut bytes = Vec::new();
    for (k, threads) in ["1", "3"].iter().enumerate() {
        let out_path = dir.path().join(format!("run{k}.csv"));
        let out = run(&[
            "--seed", "9", "--threads", threads, "--out", out_path.to_str().unwrap(), "sweep",
            "--config", config.to_str().unwrap(), "--no-timing",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let records = std::fs::read_to_string(&out_path).unwrap();
        let summary = std::fs::read_to_string(dir.path().join(format!("run{k}_summary.csv"))).unwrap();
        assert!(dir.path().join(format!("run{k}.gp")).is_file());
        assert_eq!(records.lines().count(), 1 + 6);
        assert_eq!(summary.lines().next().unwrap(), "c,epsilon,mean_overlap,std_overlap,n_converged");
        assert_eq!(summary.lines().count(), 3);
        bytes.push((records, summary));
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn sweep_needs_a_source() {
    let out = run(&["sweep"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["sweep", "--preset", "nope"]);
    assert_eq!(out.status.code(), Some(2));
}
