use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_choicetrees"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["sample-tree", "-n", "1"]).status.code(), Some(2));
    assert_eq!(run(&["sample-tree", "-n", "5", "-k", "0"]).status.code(), Some(2));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(&["sample-tree"]).status.code(), Some(2));
    assert_eq!(run(&["experiment", "nope"]).status.code(), Some(2));
    assert_eq!(run(&["sample-sticks", "--beta", "1.0"]).status.code(), Some(2));
    let out = run(&["sample-tree", "-n", "1"]);
    assert!(!out.stderr.is_empty());
}

#[test]
fn help_exits_0() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn tree_json_schema() {
    let s = stdout(&["sample-tree", "--algo", "wilson", "--variant", "uniform", "-n", "8", "-k", "3", "--seed", "4"]);
    let v: serde_json::Value = serde_json::from_str(&s).unwrap();
    assert_eq!(v["n"], 8);
    assert_eq!(v["k"], 3);
    assert_eq!(v["algorithm"], "wilson");
    assert_eq!(v["variant"], "uniform");
    assert_eq!(v["edges"].as_array().unwrap().len(), 7);
    assert_eq!(v["first_entry"].as_array().unwrap().len(), 8);
    assert!(v["sigma"].is_array());
}

#[test]
fn same_seed_same_bytes() {
    let cases: [&[&str]; 6] = [
        &["sample-tree", "-n", "30", "--seed", "9"],
        &["sample-tree", "-n", "4", "--replicas", "500", "--seed", "9"],
        &["sample-walk", "-n", "30", "--horizon", "50", "--seed", "9"],
        &["sample-le", "-n", "30", "--horizon", "50", "--seed", "9"],
        &["sample-rayleigh", "--t-max", "4", "--jumps", "--seed", "9"],
        &["sample-sticks", "--format", "csv", "--points", "4", "--seed", "9"],
    ];
    for args in cases {
        assert_eq!(stdout(args), stdout(args), "{args:?}");
    }
    let a = stdout(&["sample-tree", "-n", "30", "--seed", "9"]);
    let b = stdout(&["sample-tree", "-n", "30", "--seed", "10"]);
    assert_ne!(a, b);
}

#[test]
fn histogram_independent_of_jobs() {
    let one = stdout(&["sample-tree", "-n", "4", "--replicas", "400", "--jobs", "1"]);
    let four = stdout(&["sample-tree", "-n", "4", "--replicas", "400", "--jobs", "4"]);
    assert_eq!(one, four);
    let mut lines = one.lines();
    assert_eq!(lines.next(), Some("code,count"));
    let total: u64 = lines.map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap()).sum();
    assert_eq!(total, 400);
}

#[test]
fn csv_headers() {
    assert!(stdout(&["sample-walk", "-n", "5", "--horizon", "3"]).starts_with("m,vertex\n"));
    assert!(stdout(&["sample-le", "-n", "5", "--horizon", "3"]).starts_with("m,Z\n"));
    assert!(stdout(&["sample-rayleigh", "--t-max", "1"]).starts_with("t,value\n"));
    assert!(stdout(&["sample-rayleigh", "--t-max", "1", "--jumps"]).starts_with("s,x\n"));
    assert!(stdout(&["sample-sticks", "--format", "csv"]).starts_with("i,j,distance\n"));
}

#[test]
fn walk_rows_match_horizon() {
    let s = stdout(&["sample-walk", "-n", "12", "--horizon", "20"]);
    assert_eq!(s.lines().count(), 22);
    for (m, line) in s.lines().skip(1).enumerate() {
        let mut parts = line.split(',');
        assert_eq!(parts.next().unwrap().parse::<usize>().unwrap(), m);
        assert!(parts.next().unwrap().parse::<usize>().unwrap() < 12);
    }
}

#[test]
fn sticks_json_schema() {
    let s = stdout(&["sample-sticks", "--beta", "3", "--gamma", "0.5", "--branches", "6"]);
    let v: serde_json::Value = serde_json::from_str(&s).unwrap();
    assert_eq!(v["beta"], 3.0);
    let y = v["y"].as_array().unwrap();
    assert_eq!(y.len(), 7);
    let y: Vec<f64> = y.iter().map(|x| x.as_f64().unwrap()).collect();
    assert!(y.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(v["z"].as_array().unwrap().len(), 6);
}

#[test]
fn experiment_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.jsonl");
    let summary = dir.path().join("s.csv");
    let status = run(&[
        "experiment",
        "urn-martingale",
        "--out",
        out.to_str().unwrap(),
        "--summary",
        summary.to_str().unwrap(),
    ])
    .status;
    assert_eq!(status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["name", "statistic", "threshold", "n_samples", "pass"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }
    let sum = std::fs::read_to_string(&summary).unwrap();
    assert!(sum.starts_with("name,statistic,threshold,n_samples,pass\n"));
}

#[test]
fn failing_experiment_exits_1() {
    // Three replicas give tail estimates in {0, 1/3, 2/3, 1}, never within 0.01.
    let out = run(&["experiment", "rayleigh-tail", "--replicas", "3"]);
    assert_eq!(out.status.code(), Some(1));
    let last = String::from_utf8(out.stdout).unwrap().lines().last().unwrap().to_string();
    let v: serde_json::Value = serde_json::from_str(&last).unwrap();
    assert_eq!(v["pass"], false);
}
