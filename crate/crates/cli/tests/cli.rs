use std::path::PathBuf;
use std::process::{Command, Output};

fn lpp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpp")).args(args).output().unwrap()
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("lpp-cli-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn min_action_json() {
    let out = stdout(&lpp(&["min-action", "--kappa", "0", "--n", "50", "--seed", "4", "--path"]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["n"], 50);
    assert_eq!(v["path"].as_array().unwrap().len(), 51);
    assert!(v["value"].as_f64().unwrap() >= -50.0);
}

#[test]
fn fixed_endpoint_matches_dump_path() {
    let a = stdout(&lpp(&["min-action", "--n", "40", "--endpoint", "-7", "--seed", "2", "--path"]));
    let b = stdout(&lpp(&["dump-path", "--n", "40", "--endpoint", "-7", "--seed", "2", "--format", "json"]));
    let a: serde_json::Value = serde_json::from_str(&a).unwrap();
    let b: serde_json::Value = serde_json::from_str(&b).unwrap();
    assert_eq!(a["endpoint"], -7);
    let xs: Vec<i64> = b["x"].as_array().unwrap().iter().map(|v| v.as_i64().unwrap()).collect();
    let ys: Vec<i64> = a["path"].as_array().unwrap().iter().map(|v| v.as_i64().unwrap()).collect();
    assert_eq!(xs, ys);
}

#[test]
fn shape_csv_has_one_row_per_cell() {
    let out = stdout(&lpp(&[
        "shape", "--n-ladder", "50,100", "--replicas", "3", "--alphas", "0,0.5,1", "--seed", "1",
    ]));
    let rows = out.lines().filter(|l| !l.starts_with('#')).count();
    // both signs of every nonzero slope
    assert_eq!(rows, 1 + 5 * 2);
}

#[test]
fn freepath_csv_rows() {
    let out = stdout(&lpp(&["freepath", "--n-grid", "20,60", "--replicas", "4", "--seed", "3"]));
    assert_eq!(out.lines().count(), 1 + 4 * 2);
}

#[test]
fn config_file_and_flag_precedence() {
    let cfg = tmp("variance.conf");
    std::fs::write(&cfg, "# small study\nkind = variance\nrecords = 3\nx-limit = 500\nreplicas = 5\nseed = 1\n").unwrap();
    let a = stdout(&lpp(&["--config", cfg.to_str().unwrap()]));
    assert_eq!(a.lines().count(), 1 + 3);
    let b = stdout(&lpp(&["--config", cfg.to_str().unwrap(), "variance", "--records", "2"]));
    assert_eq!(b.lines().count(), 1 + 2);
    assert_eq!(a.lines().nth(1), b.lines().nth(1));
}

#[test]
fn budget_truncation_is_reported() {
    let out = stdout(&lpp(&["shape", "--n-ladder", "20,40", "--replicas", "10", "--budget", "5000"]));
    assert!(out.starts_with("# truncated: 2 of 10"), "{out}");
}

#[test]
fn bad_input_exits_nonzero() {
    for args in [
        vec!["--config", "/nonexistent/lpp.conf"],
        vec![],
        vec!["shape", "--format", "xml"],
        vec!["freepath", "--n-ladder", "10"],
    ] {
        let o = lpp(&args);
        assert!(!o.status.success(), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
    let cfg = tmp("bad.conf");
    std::fs::write(&cfg, "kind = teleport\n").unwrap();
    assert_eq!(lpp(&["--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    let o = lpp(&["loops", "--n", "5", "--budget", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn loops_validation_table() {
    let out = stdout(&lpp(&["loops", "--n", "30", "--count", "3", "--validate", "--seed", "5"]));
    let items: Vec<&str> = out.lines().filter(|l| l.ends_with(",pass")).collect();
    assert_eq!(items.len(), 11, "{out}");
}

#[test]
fn outputs_written_to_files() {
    let csv = tmp("shape.csv");
    let svg = tmp("shape.svg");
    let o = lpp(&[
        "shape", "--n-ladder", "30,60", "--replicas", "2", "--alphas", "0,0.5",
        "--out", csv.to_str().unwrap(), "--svg", svg.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    assert!(std::fs::read_to_string(&csv).unwrap().starts_with("alpha"));
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}
