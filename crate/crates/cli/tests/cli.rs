use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn relmrf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relmrf"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn demo_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/demo")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn strip_timing(mut v: Value) -> Value {
    v["summary"].as_object_mut().unwrap().remove("wall_time");
    v
}

fn labels(v: &Value) -> Vec<(u64, u64, u64)> {
    v["pairs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| (p["left"].as_u64().unwrap(), p["right"].as_u64().unwrap(), p["label"].as_u64().unwrap()))
        .collect()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

const DEMO: [&str; 7] = ["infer", "--config", "demo.toml", "--concepts", "concepts.csv", "--priors", "priors.csv"];

#[test]
fn demo_exact_matches_golden() {
    let dir = demo_dir();
    let golden = strip_timing(read_json(&dir.join("expected.json")));
    let mut args = DEMO.to_vec();
    args.push("--exact");
    let out = strip_timing(json(&relmrf(&dir, &args)));
    assert_eq!(out, golden);
}

#[test]
fn demo_lbp_agrees_with_golden_labels() {
    let dir = demo_dir();
    let golden = read_json(&dir.join("expected.json"));
    let out = json(&relmrf(&dir, &DEMO));
    assert_eq!(labels(&out), labels(&golden));
    assert_eq!(out["summary"]["violations"], 0);
    assert_eq!(out["summary"]["converged"], true);
    // the weak 0.45 prior is pulled into the cluster
    assert!(labels(&golden).contains(&(1, 2, 1)));
}

#[test]
fn missing_priors_exits_2_naming_the_path() {
    let out = relmrf(&demo_dir(), &["infer", "--concepts", "concepts.csv", "--priors", "absent.csv"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.csv"));
}

#[test]
fn malformed_priors_name_file_and_line() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::copy(demo_dir().join("concepts.csv"), tmp.path().join("concepts.csv")).unwrap();
    std::fs::write(tmp.path().join("priors.csv"), "left_id,right_id,p_one\n0,1,0.5\n0,2,lots\n").unwrap();
    let out = relmrf(tmp.path(), &["infer", "--concepts", "concepts.csv", "--priors", "priors.csv", "--mode", "sparse"]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("priors.csv:3"), "{err}");
}

#[test]
fn dense_mode_without_full_priors_is_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::copy(demo_dir().join("concepts.csv"), tmp.path().join("concepts.csv")).unwrap();
    std::fs::write(tmp.path().join("priors.csv"), "left_id,right_id,p_one\n0,1,0.5\n").unwrap();
    let args = ["infer", "--concepts", "concepts.csv", "--priors", "priors.csv"];
    assert_eq!(code(&relmrf(tmp.path(), &args)), 2);
    let mut with_default = args.to_vec();
    with_default.extend(["--default-prior", "0.05"]);
    let out = json(&relmrf(tmp.path(), &with_default));
    assert_eq!(out["summary"]["variables"], 6);
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    let dir = demo_dir();
    assert_eq!(code(&relmrf(&dir, &["--help"])), 0);
    assert_eq!(code(&relmrf(&dir, &["infer", "--help"])), 0);
    assert_eq!(code(&relmrf(&dir, &["--version"])), 0);
    assert_eq!(code(&relmrf(&dir, &["infer", "--bogus"])), 1);
    assert_eq!(code(&relmrf(&dir, &[])), 1);
    let mut bad = DEMO.to_vec();
    bad.extend(["--damping", "1.5"]);
    assert_eq!(code(&relmrf(&dir, &bad)), 1);
    let mut bad_theta = DEMO[..1].to_vec();
    bad_theta.extend(&DEMO[3..]);
    bad_theta.extend(["--theta", "1,2"]);
    assert_eq!(code(&relmrf(&dir, &bad_theta)), 1);
}

#[test]
fn unknown_config_key_is_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("run.toml"), "dampnig = 0.3\n").unwrap();
    let dir = demo_dir();
    let cfg = tmp.path().join("run.toml");
    let out = relmrf(
        &dir,
        &["infer", "--config", cfg.to_str().unwrap(), "--concepts", "concepts.csv", "--priors", "priors.csv"],
    );
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.toml"));
}

#[test]
fn flags_override_config_and_are_echoed() {
    let mut args = DEMO.to_vec();
    args.extend(["--damping", "0.3", "--seed", "9"]);
    let out = json(&relmrf(&demo_dir(), &args));
    assert_eq!(out["config"]["lbp"]["damping"], 0.3);
    assert_eq!(out["config"]["seed"], 9);
    assert_eq!(out["config"]["theta"][4], 0.9);
}

fn synth(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--out-dir", "data"];
    args.extend(extra);
    let out = relmrf(dir, &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn partitioned_output_independent_of_workers() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), &["--n-concepts", "120", "--clusters", "30", "--candidates", "sparse", "--seed", "3"]);
    let run = |workers: &str| {
        let mut v = json(&relmrf(
            tmp.path(),
            &[
                "infer",
                "--concepts",
                "data/concepts.csv",
                "--priors",
                "data/priors.csv",
                "--mode",
                "partitioned",
                "--k",
                "8",
                "--workers",
                workers,
            ],
        ));
        v["config"].as_object_mut().unwrap().remove("workers");
        strip_timing(v)
    };
    let one = run("1");
    assert!(one["summary"]["partitions"].as_u64().unwrap() > 1);
    assert_eq!(one, run("8"));
}

#[test]
fn synth_train_infer_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, &["--n-concepts", "40", "--clusters", "10", "--candidates", "sparse", "--seed", "1"]);
    let out = relmrf(
        dir,
        &[
            "train-prior",
            "--concepts",
            "data/concepts.csv",
            "--labels",
            "data/train.csv",
            "--validation",
            "data/validation.csv",
            "--pairs",
            "data/priors.csv",
            "--epochs",
            "300",
            "--model-out",
            "model.json",
            "--priors-out",
            "trained.csv",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let model = read_json(&dir.join("model.json"));
    assert!(model["validation"]["metrics"]["f1"].as_f64().unwrap() > 0.5);
    assert!(model["model"]["temperature"].as_f64().unwrap() > 0.0);

    for mode in ["sparse", "partitioned"] {
        let pred = format!("pred-{mode}.json");
        let out = relmrf(
            dir,
            &["infer", "--concepts", "data/concepts.csv", "--priors", "trained.csv", "--mode", mode, "--repair", "-o", &pred],
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let report = read_json(&dir.join(&pred));
        assert_eq!(report["config"]["lbp"]["repair"], true);
        let metrics = json(&relmrf(
            dir,
            &["eval", "--concepts", "data/concepts.csv", "--predictions", &pred, "--gold", "data/test.csv"],
        ));
        assert!(metrics["pairs"].as_u64().unwrap() > 0);
        let f1 = metrics["metrics"]["f1"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&f1));
    }
    // labels CSV predictions work too: gold against itself is perfect
    let perfect = json(&relmrf(
        dir,
        &["eval", "--concepts", "data/concepts.csv", "--predictions", "data/gold.csv", "--gold", "data/test.csv"],
    ));
    assert_eq!(perfect["metrics"]["f1"], 1.0);
}

#[test]
fn eval_requires_a_prediction_for_every_gold_pair() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::copy(demo_dir().join("concepts.csv"), dir.join("concepts.csv")).unwrap();
    std::fs::write(dir.join("pred.csv"), "left_id,right_id,label\n0,1,1\n").unwrap();
    std::fs::write(dir.join("gold.csv"), "left_id,right_id,label\n0,1,1\n2,3,0\n").unwrap();
    let out = relmrf(dir, &["eval", "--concepts", "concepts.csv", "--predictions", "pred.csv", "--gold", "gold.csv"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn tune_is_reproducible_and_rejects_zero_budget() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, &["--n-concepts", "16", "--clusters", "4", "--seed", "2"]);
    let args = |budget: &'static str| {
        vec![
            "tune",
            "--concepts",
            "data/concepts.csv",
            "--priors",
            "data/priors.csv",
            "--labels",
            "data/validation.csv",
            "--budget",
            budget,
            "--seed",
            "4",
        ]
    };
    let strip = |mut v: Value| {
        for t in v["report"]["history"].as_array_mut().unwrap() {
            t.as_object_mut().unwrap().remove("seconds");
        }
        v["report"].as_object_mut().unwrap().remove("best");
        v
    };
    let a = json(&relmrf(dir, &args("6")));
    assert_eq!(a["report"]["history"].as_array().unwrap().len(), 6);
    assert_eq!(a["config"]["seed"], 4);
    let b = json(&relmrf(dir, &args("6")));
    assert_eq!(strip(a), strip(b));
    assert_eq!(code(&relmrf(dir, &args("0"))), 1);
}

#[test]
fn stats_prints_closed_form_counts() {
    let out = json(&relmrf(&demo_dir(), &["stats", "--n-concepts", "4"]));
    assert_eq!(out["variables"], 6);
    assert_eq!(out["ternary_factors"], 4);
    let pc = json(&relmrf(&demo_dir(), &["stats", "--relationship", "parent-child", "--n-concepts", "4"]));
    assert_eq!(pc["variables"], 12);
}
