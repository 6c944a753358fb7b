use std::path::PathBuf;
use std::process::{Command, Output};

fn essprk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_essprk")).args(args).output().expect("binary runs")
}

fn catalog_file(name: &str) -> String {
    let mut p = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    p.push("../core/catalog");
    p.push(name);
    p.to_string_lossy().into_owned()
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn check_reports_orders_and_coefficient() {
    let out = essprk(&["check", &catalog_file("essprk_4_4_2.json")]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["effective_order"], 4);
    assert_eq!(v["classical_order"], 2);
    let c = v["ssp"]["coefficient"].as_f64().unwrap();
    assert!((c - 0.88).abs() < 0.01);
    assert_eq!(v["beta"].as_array().unwrap().len(), 8);
    assert!(v["beta"][7].is_null());
}

#[test]
fn check_negative_weight_reports_zero() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("neg.json");
    std::fs::write(&path, r#"{"label":"neg","s":2,"A":[[0,0],[1,0]],"b":[1.5,-0.5]}"#).unwrap();
    let out = essprk(&["check", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["ssp"]["coefficient"], 0.0);
    let notes = v["notes"].as_array().unwrap();
    assert!(notes.iter().any(|n| n.as_str().unwrap().contains("negative")));
}

#[test]
fn ssp_by_label() {
    let out = essprk(&["ssp", "SSPRK(4,3)"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert!((v["coefficient"].as_f64().unwrap() - 2.0).abs() < 1e-9);
}

#[test]
fn malformed_file_and_unknown_label_are_domain_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{not json").unwrap();
    let out = essprk(&["check", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(String::from_utf8_lossy(&out.stderr).lines().count(), 1);
    let out = essprk(&["ssp", "NOPE(1,2,3)"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(essprk(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(essprk(&["optimize", "--s", "4", "--q", "2", "--p", "2"]).status.code(), Some(2));
    assert_eq!(essprk(&["burgers", "--scheme", "SSPRK(3,3)", "--ic", "square", "--sigma", "-1"]).status.code(), Some(2));
    assert_eq!(essprk(&["optimize", "--s", "3", "--q", "3", "--p", "2", "--start-stop"]).status.code(), Some(2));
}

#[test]
fn catalog_lists_every_entry() {
    let out = essprk(&["catalog"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    let labels: Vec<&str> = v.as_array().unwrap().iter().map(|e| e["label"].as_str().unwrap()).collect();
    for l in ["ESSPRK(4,4,2)", "ESSPRK(4,4,3)", "ESSPRK(5,4,2)", "SSPRK(3,3)", "ESSPRK(10,4,2)"] {
        assert!(labels.contains(&l), "{l}");
    }
}

#[test]
fn burgers_at_ssp_coefficient_is_tvd() {
    let out = essprk(&["burgers", "--scheme", "ESSPRK(4,4,2)", "--ic", "continuous", "--sigma", "0.88"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("step,t,TV"));
    let tv: Vec<f64> = lines.map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(*tv.last().unwrap() <= 1.0);
    assert!(tv.windows(2).all(|w| w[1] <= w[0] + 1e-10));
}

#[test]
fn optimize_is_reproducible_and_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("m.json");
    let args = ["optimize", "--s", "3", "--q", "3", "--p", "2", "--seed", "5", "--restarts", "2"];
    let a = essprk(&args);
    let b = essprk(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let mut with_out = args.to_vec();
    let p = out_path.to_str().unwrap();
    with_out.extend(["--out", p, "--start-stop"]);
    let c = essprk(&with_out);
    assert_eq!(c.status.code(), Some(0));
    let v = stdout_json(&c);
    assert!((v["coefficient"].as_f64().unwrap() - 1.0).abs() < 1e-3);
    assert_eq!(std::fs::read(&out_path).unwrap(), a.stdout);
    for suffix in ["m_R.json", "m_T.json"] {
        assert!(dir.path().join(suffix).is_file());
    }
    let conv = essprk(&["convergence", "--scheme", p, "--start", &dir.path().join("m_R.json").to_string_lossy(),
        "--stop", &dir.path().join("m_T.json").to_string_lossy()]);
    assert_eq!(conv.status.code(), Some(0));
    assert!(String::from_utf8(conv.stdout).unwrap().starts_with("n,dt,error\n400,"));
}

#[test]
fn infeasible_search_reports_zero_coefficient() {
    let out = essprk(&["optimize", "--s", "4", "--q", "5", "--p", "2", "--restarts", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("SSP coefficient 0"));
}
