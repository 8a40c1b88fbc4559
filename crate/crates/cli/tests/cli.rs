use std::fs;
use std::process::{Command, Output};

fn nmk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nmk"))
        .args(args)
        .env_remove("NMK_SEED")
        .output()
        .expect("binary runs")
}

#[test]
fn no_arguments_is_a_usage_error() {
    let out = nmk(&[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = nmk(&["xor", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(nmk(&["--help"]).status.code(), Some(0));
}

#[test]
fn xor_writes_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = nmk(&["xor", "--restarts", "10", "--seed", "7", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("accuracy 4/4"));
    let grid = fs::read_to_string(dir.path().join("decision_grid.csv")).unwrap();
    assert_eq!(grid.lines().next(), Some("x,y,value"));
    assert_eq!(grid.lines().count(), 1 + 400 * 400);
}

#[test]
fn axioms_report_has_triangle_violations() {
    let dir = tempfile::tempdir().unwrap();
    let out = nmk(&["axioms", "--measure", "e", "--samples", "1000", "--dim", "3", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("axioms.json")).unwrap()).unwrap();
    assert!(v["violations"]["triangle"].as_u64().unwrap() > 0);
    assert_eq!(v["violations"]["symmetry"].as_u64(), Some(0));
}

#[test]
fn seed_environment_overrides_flag() {
    let run = |env: Option<&str>, seed: &str| {
        let dir = tempfile::tempdir().unwrap();
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_nmk"));
        cmd.args(["axioms", "--samples", "50", "--seed", seed, "--out", dir.path().to_str().unwrap()]);
        match env {
            Some(s) => cmd.env("NMK_SEED", s),
            None => cmd.env_remove("NMK_SEED"),
        };
        assert!(cmd.status().unwrap().success());
        fs::read(dir.path().join("axioms.json")).unwrap()
    };
    assert_eq!(run(Some("3"), "9"), run(None, "3"));
    assert_ne!(run(None, "9"), run(None, "3"));
}

#[test]
fn missing_input_is_an_expected_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = nmk(&[
        "train",
        "--arch",
        "e-mlp",
        "--images",
        "/nonexistent/images",
        "--labels",
        "/nonexistent/labels",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/images"));
}

#[test]
fn fig6_prints_both_rankings() {
    let out = nmk(&["fig6"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("dot argmax (9, 9) = 108"));
    assert!(text.contains("yat argmax (5, 5)"));
}

#[test]
fn bench_counts_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = nmk(&["bench", "--dims", "1,4", "--reps", "1", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("bench.json")).unwrap()).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows[0]["counted_flops_dot_neuron"].as_u64(), Some(3));
    assert_eq!(rows[1]["model_flops_yat_neuron"].as_u64(), Some(19));
}

#[test]
fn nms_rejects_unknown_layer() {
    let dir = tempfile::tempdir().unwrap();
    let out = nmk(&["nms", "--checkpoint", dir.path().to_str().unwrap(), "--layer", "layer0"]);
    assert_eq!(out.status.code(), Some(1));
}
