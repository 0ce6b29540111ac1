use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_specalloy"));
    c.env_remove("SPECALLOY_THREADS");
    c
}

fn bernoulli(v0: f64, v1: f64) -> Value {
    json!({
        "background": {"kind": "zero"},
        "single_site": {"kind": "box", "height": 1.0},
        "coupling_dist": {"kind": "two_point", "v0": v0, "v1": v1, "p": 0.5}
    })
}

fn run(dir: &Path, experiment: &str, config: &Value, extra: &[&str]) -> Output {
    let path = dir.join(format!("{experiment}.json"));
    std::fs::write(&path, serde_json::to_string(config).unwrap()).unwrap();
    bin()
        .arg(experiment)
        .arg("--config")
        .arg(&path)
        .args(extra)
        .output()
        .unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn free_ids_hits_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let config = json!({
        "model": bernoulli(0.0, 0.0),
        "numeric": {"L": 100.0, "realizations": 1, "energies": [1.0, std::f64::consts::PI.powi(2)]},
        "seed": 0,
        "output_dir": out,
    });
    let o = run(tmp.path(), "ids", &config, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("ids.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("E,value,stderr"));
    let last: Vec<f64> = lines.last().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
    assert!((last[1] - 1.0).abs() <= 0.02, "{last:?}");

    let m = manifest(&out);
    for a in m["artifacts"].as_array().unwrap() {
        assert!(Path::new(a.as_str().unwrap()).exists(), "{a}");
    }
    assert_eq!(m["config_echo"]["numeric"]["h"], json!(0.01));
    assert_eq!(m["validity_ceiling"].as_f64().unwrap(), 0.1 / (0.01 * 0.01));
    let sidecar: Value = serde_json::from_str(&std::fs::read_to_string(out.join("ids.json")).unwrap()).unwrap();
    assert_eq!(sidecar["L"], json!(100.0));
}

#[test]
fn bracketing_reports_holds_and_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let config = json!({
        "model": bernoulli(0.0, 2.0),
        "numeric": {"tuples": 5, "L": 6.0},
        "seed": 42,
    });
    let o = run(tmp.path(), "bracketing", &config, &["--output-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["holds"], json!(true));
    assert_eq!(summary["triples"].as_array().unwrap().len(), 5);
    assert_eq!(manifest(&out)["summary"], summary);
    assert!(out.join("bracketing.csv").exists());
}

#[test]
fn energy_above_ceiling_exits_with_validation_code() {
    let tmp = tempfile::tempdir().unwrap();
    let config = json!({
        "model": bernoulli(0.0, 1.0),
        "numeric": {"L": 20.0, "realizations": 1, "energies": [1.0, 5000.0]},
        "seed": 1,
        "output_dir": tmp.path().join("out"),
    });
    let o = run(tmp.path(), "ids", &config, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ceiling"));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn malformed_inputs_exit_with_validation_code() {
    let tmp = tempfile::tempdir().unwrap();
    let config = json!({"experiment": "bands", "model": bernoulli(0.0, 1.0), "seed": 1, "output_dir": "x"});
    assert_eq!(run(tmp.path(), "ids", &config, &[]).status.code(), Some(2));
    assert_eq!(run(tmp.path(), "nonsense", &config, &[]).status.code(), Some(2));
    let missing_seed = json!({"model": bernoulli(0.0, 1.0), "numeric": {"window": {"e_min": 0.0, "e_max": 5.0}}});
    assert_eq!(run(tmp.path(), "bands", &missing_seed, &["--output-dir", "x"]).status.code(), Some(2));
    let o = bin().args(["ids", "--config", "/nonexistent/config.json"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn degenerate_fit_exits_with_numerical_code() {
    let tmp = tempfile::tempdir().unwrap();
    let config = json!({
        "model": {
            "background": {"kind": "zero"},
            "single_site": {"kind": "box", "height": 1.0},
            "coupling_dist": {"kind": "uniform_interval", "lo": 0.0, "hi": 20000.0}
        },
        "numeric": {"L": 100.0, "energies": [0.0]},
        "seed": 1,
        "output_dir": tmp.path().join("out"),
    });
    let o = run(tmp.path(), "decay", &config, &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("decay_fit"));
}

#[test]
fn check_flag_reports_exploratory_label() {
    let tmp = tempfile::tempdir().unwrap();
    let mut model = bernoulli(0.0, 1.0);
    model["background"] = json!({"kind": "step", "a_minus": 0.0, "a_plus": 2.0, "x0": 0.0});
    let config = json!({"model": model, "numeric": {"energies": [0.5]}, "seed": 1, "output_dir": "x"});
    let o = run(tmp.path(), "lyapunov", &config, &["--check"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("exploratory"));
}

#[test]
fn artifacts_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let config = json!({
        "model": bernoulli(0.0, 1.0),
        "numeric": {"L": 30.0, "realizations": 8, "window": {"e_min": 0.2, "e_max": 6.0, "points": 12}},
        "seed": 5,
    });
    let mut csvs = Vec::new();
    for (threads, via_env) in [(1, false), (4, false), (3, true)] {
        let out = tmp.path().join(format!("out{threads}"));
        let path = tmp.path().join("ids.json");
        std::fs::write(&path, serde_json::to_string(&config).unwrap()).unwrap();
        let mut cmd = bin();
        cmd.arg("ids").arg("--config").arg(&path).arg("--output-dir").arg(&out);
        if via_env {
            cmd.env("SPECALLOY_THREADS", threads.to_string());
        } else {
            cmd.args(["--threads", &threads.to_string()]);
        }
        let o = cmd.output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        csvs.push(std::fs::read(out.join("ids.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    assert_eq!(csvs[0], csvs[2]);
}

#[test]
fn seed_override_changes_results() {
    let tmp = tempfile::tempdir().unwrap();
    let config = json!({
        "model": bernoulli(0.0, 1.0),
        "numeric": {"L": 20.0, "realizations": 4, "energies": [0.5, 1.0, 2.0, 4.0]},
        "seed": 5,
    });
    let read = |seed: &str, name: &str| {
        let out = tmp.path().join(name);
        let o = run(tmp.path(), "ids", &config, &["--seed", seed, "--output-dir", out.to_str().unwrap()]);
        assert!(o.status.success());
        assert_eq!(manifest(&out)["config_echo"]["seed"], json!(seed.parse::<u64>().unwrap()));
        std::fs::read_to_string(out.join("ids.csv")).unwrap()
    };
    assert_eq!(read("7", "a"), read("7", "b"));
    assert_ne!(read("7", "c"), read("8", "d"));
}
