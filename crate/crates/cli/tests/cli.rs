use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn relaylab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relaylab"))
        .args(args)
        .env("RUST_LOG", "info")
        .env_remove("RELAYLAB_THREADS")
        .output()
        .expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn analyze_reference_deployment() {
    let out = relaylab(&["analyze"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v = json(&out);
    for key in ["lambda", "mu", "p_empty", "mean_queue", "T", "T_net"] {
        assert!(v[key].is_f64(), "missing {key}");
    }
    assert_eq!(v["route"], "symmetric");
    let t_net = v["T_net"].as_f64().unwrap();
    assert!((v["T"].as_f64().unwrap() * 5.0 - t_net).abs() < 1e-15);
    assert!((t_net - 0.3954720888967572).abs() < 1e-12);
}

#[test]
fn malformed_config_exits_2() {
    let dir = TempDir::new().unwrap();
    for (name, text) in [
        ("unknown.json", r#"{"bogus": 1}"#),
        ("syntax.json", "{"),
        ("range.json", r#"{"rx_on": 2}"#),
    ] {
        let path = write(&dir, name, text);
        let out = relaylab(&["analyze", "--config", &path]);
        assert_eq!(out.status.code(), Some(2), "{name}: {}", stderr(&out));
    }
    let out = relaylab(&["analyze", "--config", "/nonexistent/file.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn one_user_route_is_logged() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "one.json", r#"{"users": 1}"#);
    let out = relaylab(&["analyze", "--config", &path]);
    assert!(out.status.success());
    assert!(stderr(&out).contains("route: OneUser"));
    assert_eq!(json(&out)["route"], "one-user");
}

#[test]
fn dumped_config_reloads_to_identical_metrics() {
    let dir = TempDir::new().unwrap();
    let path = write(
        &dir,
        "asym.json",
        r#"{"users": [{"to_relay": 55.5}, {"attempt": 0.2}, {}], "threshold": 0.6, "self_interference": 1e-6, "rx_on": 0.7}"#,
    );
    let dump = dir.path().join("dump.json");
    let first = relaylab(&["analyze", "--config", &path, "--dump-config", dump.to_str().unwrap()]);
    assert!(first.status.success(), "{}", stderr(&first));
    let second = relaylab(&["analyze", "--config", dump.to_str().unwrap()]);
    assert!(second.status.success());
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(json(&second)["route"], "enumerated");
}

#[test]
fn unstable_scenario_exits_3_unless_allowed() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "unstable.json", r#"{"users": 15, "self_interference": 1e-10}"#);
    let out = relaylab(&["analyze", "--config", &path]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json(&out)["stable"], false);
    let out = relaylab(&["analyze", "--config", &path, "--allow-unstable"]);
    assert!(out.status.success());
}

#[test]
fn validate_refuses_unstable_scenario() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "unstable.json", r#"{"users": 15, "self_interference": 1e-10}"#);
    let out = relaylab(&["validate", "--config", &path, "--slots", "10000"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("unstable"));
}

#[test]
fn validate_warns_on_few_slots_and_still_runs() {
    let out = relaylab(&["validate", "--slots", "1000", "--seed", "3"]);
    assert!(stderr(&out).contains("statistical power is low"));
    let v = json(&out);
    assert_eq!(v["slots"], 1000);
    assert!(v["rows"].as_array().unwrap().len() >= 6);
}

#[test]
fn validate_reference_deployment_passes() {
    let out = relaylab(&["validate", "--slots", "1000000", "--seed", "11"]);
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn simulation_output_is_reproducible() {
    let args = ["simulate", "--slots", "20000", "--seed", "9"];
    let a = relaylab(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, relaylab(&args).stdout);
    assert_eq!(json(&a)["seed"], 9);
}

#[test]
fn optimize_coarse_and_fine_grids_agree() {
    let coarse = json(&relaylab(&["optimize", "--grid", "11"]));
    let fine = json(&relaylab(&["optimize", "--grid", "201"]));
    let t = |v: &Value| v["network_throughput"].as_f64().unwrap();
    assert!((t(&coarse) - t(&fine)).abs() <= 1e-2);
    assert_eq!(fine["feasible"], true);
    assert!(fine["energy_proxy"].is_f64());
}

#[test]
fn optimize_rejects_tiny_grid() {
    let out = relaylab(&["optimize", "--grid", "3"]);
    assert!(!out.status.success());
}

fn sweep(dir: &TempDir, spec: &str) -> String {
    let path = write(dir, "sweep.json", spec);
    let out = relaylab(&["sweep", "--config", &path]);
    assert!(out.status.success(), "{}", stderr(&out));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn sweep_of_one_value_is_one_row() {
    let dir = TempDir::new().unwrap();
    let csv = sweep(&dir, r#"{"variable": "n", "values": [5]}"#);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "value,T,T_net,P_rx_opt,P_tx_opt,P_empty,Q_bar,stable");
    assert!(lines[1].starts_with("5,"));
    assert!(lines[1].ends_with(",true"));
}

#[test]
fn sweep_csv_is_byte_identical_and_ordered() {
    let dir = TempDir::new().unwrap();
    let spec = r#"{"variable": "n", "values": [50, 5, 20, 10, 35],
                   "scenario": {"threshold": 0.2, "relay_attempt": 0.95, "self_interference": 1e-10},
                   "optimize": true, "grid": 21}"#;
    let a = sweep(&dir, spec);
    assert_eq!(a, sweep(&dir, spec));
    let values: Vec<&str> = a.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(values, ["50", "5", "20", "10", "35"]);
}

#[test]
fn unstable_sweep_points_are_blank() {
    let dir = TempDir::new().unwrap();
    let csv = sweep(
        &dir,
        r#"{"variable": "n", "values": [15, 40], "scenario": {"self_interference": 1e-10}}"#,
    );
    for line in csv.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 8);
        assert_eq!(cells[7], "false");
        assert!(cells[1..7].iter().all(|c| c.is_empty()));
    }
}

#[test]
fn sweep_writes_to_out_file() {
    let dir = TempDir::new().unwrap();
    let spec = write(&dir, "s.json", r#"{"variable": "P_tx", "values": [0.5, 1.0]}"#);
    let out_path = dir.path().join("rows.csv");
    let out = relaylab(&["sweep", "--config", &spec, "--out", out_path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(Path::new(&out_path)).unwrap();
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn sweep_rejects_out_of_range_values() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "s.json", r#"{"variable": "q0", "values": [0.5, 1.5]}"#);
    assert_eq!(relaylab(&["sweep", "--config", &path]).status.code(), Some(2));
}

#[test]
fn invalid_thread_count_is_config_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_relaylab"))
        .arg("analyze")
        .env("RELAYLAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
