use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn fleetcharge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fleetcharge")).args(args).output().expect("run fleetcharge")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_price_file_is_a_price_gap() {
    let sessions = data().join("sessions_golden.csv");
    let out = fleetcharge(&["simulate", "--sessions", path(&sessions), "--prices", "/nonexistent/prices.csv"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("price-gap"), "{err}");
}

#[test]
fn malformed_weights_are_rejected() {
    let config = data().join("config.toml");
    let out = fleetcharge(&["compare", "--config", path(&config), "--weights", "1,1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("three"));
}

#[test]
fn compare_writes_reports_and_ledgers() {
    let tmp = tempfile::tempdir().unwrap();
    let config = data().join("config.toml");
    let golden = data().join("sessions_golden.csv");
    let out = fleetcharge(&["compare", "--config", path(&config), "--sessions", path(&golden), "--out", path(tmp.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("Total charging cost ($)"));

    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(tmp.path().join("report.json")).unwrap()).unwrap();
    let cost = |side: &str| report[side]["total_charging_cost_usd"].as_f64().unwrap();
    assert!(cost("proposed") < cost("baseline"));
    assert!(report.get("max_opt_time_ms").is_none());

    for name in ["ledger_baseline.csv", "ledger_proposed.csv"] {
        let text = std::fs::read_to_string(tmp.path().join(name)).unwrap();
        assert_eq!(text.lines().next().unwrap(), "time,vehicle_id,current_a,power_kw,price,cost_usd,soc,fade_exact_ah,fade_approx_ah");
        assert!(text.lines().count() > 10);
    }
    let timing: serde_json::Value = serde_json::from_slice(&std::fs::read(tmp.path().join("timing.json")).unwrap()).unwrap();
    assert_eq!(timing.as_array().unwrap().len(), 2);
}

#[test]
fn default_sweep_has_three_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let config = data().join("config.toml");
    let golden = data().join("sessions_golden.csv");
    let out = fleetcharge(&["sweep", "--config", path(&config), "--sessions", path(&golden), "--out", path(tmp.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows: serde_json::Value = serde_json::from_slice(&std::fs::read(tmp.path().join("sweep.json")).unwrap()).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0]["weights"], serde_json::json!([0.6, 0.3, 0.1]));
    assert_eq!(rows[2]["weights"], serde_json::json!([0.1, 0.3, 0.6]));
}

#[test]
fn sweep_accepts_repeated_weights() {
    let tmp = tempfile::tempdir().unwrap();
    let config = data().join("config.toml");
    let golden = data().join("sessions_golden.csv");
    let out = fleetcharge(&["sweep", "--config", path(&config), "--sessions", path(&golden), "--weights", "1,0,0", "--weights", "0,0,1", "--out", path(tmp.path())]);
    assert!(out.status.success());
    let header = String::from_utf8_lossy(&out.stdout).lines().next().unwrap().to_string();
    assert!(header.contains("(1, 0, 0)") && header.contains("(0, 0, 1)"), "{header}");
}

#[test]
fn validate_fade_reports_both_branches() {
    let out = fleetcharge(&["validate-fade"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let r2 = |branch: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(branch)).unwrap();
        line.split_whitespace().nth(2).unwrap().parse().unwrap()
    };
    assert!(r2("HI") >= 0.99 && r2("LO") >= 0.99, "{text}");
}

#[test]
fn simulate_uses_the_requested_policy() {
    let tmp = tempfile::tempdir().unwrap();
    let config = data().join("config.toml");
    let golden = data().join("sessions_golden.csv");
    let out = fleetcharge(&["simulate", "--config", path(&config), "--sessions", path(&golden), "--policy", "baseline", "--out", path(tmp.path())]);
    assert!(out.status.success());
    let m: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(m["total_charging_time_h"].as_f64().unwrap(), 10.0);
    assert!(tmp.path().join("ledger_baseline.csv").exists());
}
