use std::fs;
use std::path::Path;
use std::process::{Command as Process, Output};

use mfgraph_cli::{validate_summary, Command};
use serde_json::Value;
use tempfile::TempDir;

fn run_config(dir: &Path, name: &str, config: &str, extra: &[&str]) -> Output {
    let path = dir.join(format!("{name}.json"));
    fs::write(&path, config).unwrap();
    Process::new(env!("CARGO_BIN_EXE_mfgraph"))
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir)
        .args(extra)
        .output()
        .unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const WASSERSTEIN: &str = r#"{
    "command": "wasserstein",
    "problem": {
        "weights": [[0, 1], [1, 0]], "pi": [0.5, 0.5],
        "activation": { "kind": "quadratic" },
        "lagrangian": { "type": "power", "alpha": 2.0 },
        "initial": [0.2, 0.8],
        "terminal": { "form": "pinned", "density": [0.8, 0.2] }
    },
    "output": { "stem": "w" }
}"#;

const GAME: &str = r#"{
    "command": "mfg",
    "problem": {
        "q_matrix": [[-1, 1], [1, -1]],
        "activation": { "kind": "log_mean" },
        "potential": { "form": "quadratic_W", "W": [[-0.2, 0.4], [0.4, 0]] },
        "terminal": { "form": "quadratic_W", "W": [[-1.5, 0], [0, 0]], "b": [0.6, 0] },
        "horizon": [0, 1],
        "initial": [0.7, 0.3]
    },
    "numerics": { "n_t": 64 },
    "output": { "stem": "game" }
}"#;

#[test]
fn validate_prints_measure_and_weights() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{ "command": "validate", "problem": { "q_matrix": [[-2, 2], [1, -1]] } }"#;
    let out = run_config(dir.path(), "v", cfg, &[]);
    assert_eq!(out.status.code(), Some(0));
    let printed: Value = serde_json::from_slice(&out.stdout).unwrap();
    let pi = printed["pi"].as_array().unwrap();
    assert!((pi[0].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
    assert!((printed["omega"][0][1].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert!(dir.path().join("validate.csv").exists());
}

#[test]
fn wasserstein_closed_form() {
    let dir = TempDir::new().unwrap();
    let out = run_config(dir.path(), "w", WASSERSTEIN, &["--quiet"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let summary = read_json(&dir.path().join("w.summary.json"));
    assert!((summary["W_alpha"].as_f64().unwrap() - 0.6).abs() < 1e-9);
}

#[test]
fn missing_horizon_exits_with_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = GAME.replace(r#""horizon": [0, 1],"#, "");
    let out = run_config(dir.path(), "bad", &cfg, &["--quiet"]);
    assert_eq!(out.status.code(), Some(2));
    let err = read_json(&dir.path().join("bad.error.json"));
    assert_eq!(err["kind"], "schema");
    assert!(err["errors"].as_array().unwrap().iter().any(|e| e["pointer"] == "/problem/horizon"));
}

#[test]
fn unreadable_config_exits_with_config_error() {
    let dir = TempDir::new().unwrap();
    let out = Process::new(env!("CARGO_BIN_EXE_mfgraph"))
        .args(["--config", "/nonexistent/run.json", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(dir.path().join("run.error.json").exists());
}

#[test]
fn capped_fixed_point_exits_with_non_convergence() {
    let dir = TempDir::new().unwrap();
    let cfg = GAME
        .replace(r#""horizon": [0, 1]"#, r#""horizon": [0, 3]"#)
        .replace(r#""n_t": 64"#, r#""n_t": 400, "method": "fixed_point", "max_sweeps": 200"#);
    let out = run_config(dir.path(), "fp", &cfg, &["--quiet"]);
    assert_eq!(out.status.code(), Some(3));
    let summary = read_json(&dir.path().join("game.summary.json"));
    assert_eq!(summary["converged"], false);
    assert!(summary["residuals"]["solver"].as_f64().unwrap() > 0.0);
    let err = read_json(&dir.path().join("game.error.json"));
    assert_eq!(err["exit_code"], 3);
    assert!(dir.path().join("game.csv").exists());
}

#[test]
fn degenerate_planning_exits_with_domain_error() {
    let dir = TempDir::new().unwrap();
    let cfg = WASSERSTEIN
        .replace(r#""command": "wasserstein""#, r#""command": "twopoint""#)
        .replace(r#""density": [0.8, 0.2]"#, r#""density": [0.2, 0.8]"#)
        .replace(r#""initial""#, r#""horizon": [0, 1], "initial""#)
        .replace(r#""output""#, r#""numerics": { "mode": "planning" }, "output""#);
    let out = run_config(dir.path(), "deg", &cfg, &["--quiet"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(read_json(&dir.path().join("w.error.json"))["kind"], "numeric_domain");
}

#[test]
fn mfg_outputs_are_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    assert_eq!(run_config(a.path(), "g", GAME, &["--quiet"]).status.code(), Some(0));
    assert_eq!(run_config(b.path(), "g", GAME, &["--quiet", "--threads", "1"]).status.code(), Some(0));
    let csv_a = fs::read(a.path().join("game.csv")).unwrap();
    assert_eq!(csv_a, fs::read(b.path().join("game.csv")).unwrap());
    let text = String::from_utf8(csv_a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,p_1,p_2,phi_1,phi_2,hamiltonian");
    assert_eq!(lines.count(), 65);
}

#[test]
fn every_summary_matches_the_published_schema() {
    let dir = TempDir::new().unwrap();
    let flow = r#"{
        "command": "flow",
        "problem": { "q_matrix": [[-2, 1, 1], [1, -2, 1], [1, 1, -2]], "initial": [0.7, 0.2, 0.1] },
        "numerics": { "t_end": 0.5, "dt": 0.01, "flow_form": "generalized" },
        "output": { "stem": "flow" }
    }"#;
    let twopoint = GAME
        .replace(r#""command": "mfg""#, r#""command": "twopoint""#)
        .replace(r#""n_t": 64"#, r#""mode": "game""#)
        .replace(r#""stem": "game""#, r#""stem": "tp""#);
    let master = GAME
        .replace(r#""command": "mfg""#, r#""command": "master""#)
        .replace(r#""n_t": 64"#, r#""grid": { "x": 5, "t": 4 }"#)
        .replace(r#""stem": "game""#, r#""stem": "m""#);
    let validate = r#"{ "command": "validate", "problem": { "q_matrix": [[-1, 1], [1, -1]] }, "output": { "stem": "val" } }"#;
    let cases = [
        (Command::Validate, "val", validate.to_string()),
        (Command::Flow, "flow", flow.to_string()),
        (Command::Wasserstein, "w", WASSERSTEIN.to_string()),
        (Command::Mfg, "game", GAME.to_string()),
        (Command::TwoPoint, "tp", twopoint),
        (Command::Master, "m", master),
    ];
    for (command, stem, cfg) in cases {
        let out = run_config(dir.path(), stem, &cfg, &["--quiet"]);
        assert_eq!(out.status.code(), Some(0), "{stem}: {}", String::from_utf8_lossy(&out.stderr));
        let summary = read_json(&dir.path().join(format!("{stem}.summary.json")));
        let errors = validate_summary(command, &summary);
        assert!(errors.is_empty(), "{stem}: {errors:?}");
    }
    let master = read_json(&dir.path().join("m.summary.json"));
    assert_eq!(master["complete"], true);
    let rows = fs::read_to_string(dir.path().join("m.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 5 * 4);
    let tp = fs::read_to_string(dir.path().join("tp.csv")).unwrap();
    assert!(tp.starts_with("s,x,y,hamiltonian\n"));
}
