use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SYNTH: &str = r#"
n_regions = 8
n_classes = 3
n_subjects = 6
session_scans = 64
levels = 3
arcs_per_class = 3
designated = ["D2", "D3", "A3"]
seed = 5
"#;

const PIPELINE: &str = r#"
levels = 3
p = 3
lambda = 2.0
folds = 3
max_iter = 300
format = "csv"
"#;

fn meshband(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meshband"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn setup(dir: &Path) -> (String, String) {
    std::fs::write(dir.join("synth.toml"), SYNTH).unwrap();
    std::fs::write(dir.join("pipeline.toml"), PIPELINE).unwrap();
    let data = dir.join("data");
    let o = meshband(&[
        "synth",
        "--config",
        dir.join("synth.toml").to_str().unwrap(),
        "--out",
        data.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    (
        data.to_str().unwrap().to_string(),
        dir.join("pipeline.toml").to_str().unwrap().to_string(),
    )
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn synth_writes_dataset_and_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = setup(dir.path());
    let data = Path::new(&data);
    assert!(data.join("sessions.csv").exists());
    assert!(data.join("subject_s01.csv").exists());
    let plans = read_json(&data.join("plans.json"));
    assert_eq!(plans.as_array().unwrap().len(), 3);
}

#[test]
fn report_is_reproducible_and_cached() {
    let dir = tempfile::tempdir().unwrap();
    let (data, config) = setup(dir.path());
    let out = dir.path().join("run");
    let args = ["report", "--config", &config, "--data", &data, "--out", out.to_str().unwrap(), "-v"];
    let first = meshband(&args);
    assert!(first.status.success(), "{}", stderr(&first));
    let report = std::fs::read_to_string(out.join("report.json")).unwrap();
    let value: Value = serde_json::from_str(&report).unwrap();
    let hash = value["config_hash"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 64);
    for section in ["decomposition", "single_subband", "fusion", "metrics", "diversity", "significance"] {
        assert!(!value[section].is_null(), "{section}");
    }
    for name in ["single_subband.csv", "fusion.csv", "metrics.csv", "diversity.csv", "significance.csv"] {
        let text = std::fs::read_to_string(out.join(name)).unwrap();
        assert!(text.starts_with(&format!("# meshband {} config={hash}", env!("CARGO_PKG_VERSION"))), "{name}");
    }

    let second = meshband(&args);
    assert!(second.status.success());
    assert!(stderr(&second).contains("0 misses"), "{}", stderr(&second));
    assert_eq!(std::fs::read_to_string(out.join("report.json")).unwrap(), report);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let (data, config) = setup(dir.path());
    let o = meshband(&[
        "train", "--config", &config, "--data", &data, "--p", "4", "--meta", "mv,wmv", "--subbands", "A0,D2,D3", "--json",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["config"]["p"], 4);
    assert_eq!(v["config"]["lambda"], 2.0);
    assert_eq!(v["subbands"], serde_json::json!(["A0", "D2", "D3"]));
    let methods = &v["fusion"].as_array().unwrap().last().unwrap()["methods"];
    assert_eq!(methods.as_array().unwrap().len(), 2);
    assert!(v["metrics"].is_null());
}

#[test]
fn each_stage_subcommand_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (data, config) = setup(dir.path());
    for (cmd, section) in [
        ("decompose", "decomposition"),
        ("mesh", "features"),
        ("metrics", "metrics"),
        ("diversity", "diversity"),
        ("significance", "significance"),
    ] {
        let o = meshband(&[cmd, "--config", &config, "--data", &data, "--json"]);
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
        let v: Value = serde_json::from_slice(&o.stdout).unwrap();
        assert!(!v[section].is_null(), "{cmd}");
    }
    let o = meshband(&["significance", "--config", &config, "--data", &data, "--as-printed", "--json"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["significance"]["mode"], "as_printed");
}

#[test]
fn failures_exit_nonzero_with_the_stage_named() {
    let dir = tempfile::tempdir().unwrap();
    let (data, config) = setup(dir.path());

    let o = meshband(&["train", "--config", &config, "--data", &data, "--p", "8"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("stage `config`"), "{}", stderr(&o));

    let o = meshband(&["train", "--config", &config, "--data", "/nonexistent/dir"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("stage `load`"), "{}", stderr(&o));

    let o = meshband(&["mesh", "--config", &config, "--data", &data, "--features", "voxels"]);
    assert!(!o.status.success());

    let o = meshband(&["report"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("stage `config`"), "{}", stderr(&o));
}

#[test]
fn verify_passes() {
    let o = meshband(&["verify", "--json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let checks: Value = serde_json::from_slice(&o.stdout).unwrap();
    let checks = checks.as_array().unwrap();
    assert!(checks.len() >= 8);
    assert!(checks.iter().all(|c| c["passed"] == true));
}
