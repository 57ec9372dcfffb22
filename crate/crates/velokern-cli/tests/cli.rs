//! End-to-end tests of the `velokern` binary: every subcommand plus the
//! documented exit-code contract (0 success, 2 invalid configuration,
//! 3 missing or malformed data, 5 property-check failure).

use std::path::Path;
use std::process::{Command, Output};

const LINEAR_TOML: &str = r#"
system = "linear"
N = 60
ell = 2
L = 5
noise_variance = 0.01
input = { mean = 0.0, variance = 1.0 }
kernel = "rbf"
sigma = 12.0
gamma = 200.0
seed = 9
mode = "structured"
eval_windows = 20
"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_velokern"))
        .args(args)
        .output()
        .expect("binary should run")
}

fn assert_code(out: &Output, expected: i32) {
    assert_eq!(
        out.status.code(),
        Some(expected),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("temp paths are UTF-8")
}

#[test]
fn pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bench.toml");
    std::fs::write(&config, LINEAR_TOML).unwrap();
    let data = dir.path().join("train.csv");
    let heldout = dir.path().join("heldout.csv");
    let model = dir.path().join("model.json");
    let predictions = dir.path().join("pred.csv");
    let metrics = dir.path().join("metrics.toml");

    let out = run(&[
        "generate",
        "--config",
        path_str(&config),
        "--out",
        path_str(&data),
    ]);
    assert_code(&out, 0);
    assert!(stdout(&out).contains("generated 61 samples (seed 9)"));

    // A fresh seed gives held-out data from the same system.
    let out = run(&[
        "generate",
        "--config",
        path_str(&config),
        "--out",
        path_str(&heldout),
        "--seed",
        "1009",
    ]);
    assert_code(&out, 0);
    assert_ne!(
        std::fs::read_to_string(&data).unwrap(),
        std::fs::read_to_string(&heldout).unwrap()
    );

    let out = run(&[
        "fit",
        "--config",
        path_str(&config),
        "--data",
        path_str(&data),
        "--model",
        path_str(&model),
    ]);
    assert_code(&out, 0);
    assert!(stdout(&out).contains("fitted structured predictor on 54 training columns"));

    let out = run(&[
        "predict",
        "--model",
        path_str(&model),
        "--data",
        path_str(&heldout),
        "--out",
        path_str(&predictions),
    ]);
    assert_code(&out, 0);
    assert!(stdout(&out).contains("windows of horizon 5"));
    let pred_csv = std::fs::read_to_string(&predictions).unwrap();
    assert!(pred_csv.starts_with("anchor,step,"));

    let out = run(&[
        "eval",
        "--config",
        path_str(&config),
        "--model",
        path_str(&model),
        "--data",
        path_str(&heldout),
        "--out",
        path_str(&metrics),
    ]);
    assert_code(&out, 0);
    let report = std::fs::read_to_string(&metrics).unwrap();
    assert!(report.contains("rmse_delta"));
    assert!(dir.path().join("metrics_trajectories.csv").exists());
}

#[test]
fn gridsearch_reports_a_best_point() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bench.toml");
    let text = LINEAR_TOML
        .replace("sigma = 12.0", "sigma = \"grid\"")
        .replace("gamma = 200.0", "gamma = \"grid\"")
        + "sigma_grid = [8.0, 16.0]\ngamma_grid = [50.0, 500.0]\n";
    std::fs::write(&config, text).unwrap();
    let data = dir.path().join("train.csv");
    let scores = dir.path().join("scores.csv");

    let out = run(&[
        "generate",
        "--config",
        path_str(&config),
        "--out",
        path_str(&data),
    ]);
    assert_code(&out, 0);

    let out = run(&[
        "gridsearch",
        "--config",
        path_str(&config),
        "--data",
        path_str(&data),
        "--out",
        path_str(&scores),
    ]);
    assert_code(&out, 0);
    let text = stdout(&out);
    assert!(text.contains("swept 4 grid points"));
    assert!(text.contains("best: sigma="));
    let csv = std::fs::read_to_string(&scores).unwrap();
    assert_eq!(csv.lines().count(), 5, "header plus one row per grid point");
}

#[test]
fn invalid_config_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, LINEAR_TOML.replace("gamma = 200.0", "gamma = -2.0")).unwrap();
    let out = run(&[
        "generate",
        "--config",
        path_str(&config),
        "--out",
        path_str(&dir.path().join("x.csv")),
    ]);
    assert_code(&out, 2);
}

#[test]
fn missing_data_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bench.toml");
    std::fs::write(&config, LINEAR_TOML).unwrap();
    let out = run(&[
        "fit",
        "--config",
        path_str(&config),
        "--data",
        path_str(&dir.path().join("no-such.csv")),
        "--model",
        path_str(&dir.path().join("model.json")),
    ]);
    assert_code(&out, 3);
}

#[test]
fn verify_passes_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let out = run(&["verify", "--out", path_str(&report)]);
    assert_code(&out, 0);
    let text = stdout(&out);
    assert!(text.contains("PASS kernel_trick"));
    assert!(text.contains("all checks passed"));
    assert!(!text.contains("FAIL"));
    let json = std::fs::read_to_string(&report).unwrap();
    assert!(json.contains("\"all_pass\": true"));
}

#[test]
fn injected_fault_exits_with_code_5() {
    let out = run(&["verify", "--inject-fault", "corrupt-kernel-scalar"]);
    assert_code(&out, 5);
    let text = stdout(&out);
    assert!(text.contains("FAIL kernel_trick"));
    assert!(text.contains("PASS theta_oracle"));
}

#[test]
fn unknown_fault_exits_with_code_2() {
    let out = run(&["verify", "--inject-fault", "scramble-everything"]);
    assert_code(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown fault"));
}
