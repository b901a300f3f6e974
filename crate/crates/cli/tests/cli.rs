use std::path::Path;
use std::process::{Command, Output};

use hetqkd_core::frontend::{capture_noise, write_capture, CaptureKind, FrontendConfig};
use hetqkd_core::harness::SessionConfig;
use hetqkd_core::security::{key_rate_at, SecurityParams};

fn hetqkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetqkd")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn quick_config(dir: &Path) -> String {
    let cfg = SessionConfig { snapshot_duration: 0.5e-3, snapshot_count: 2, calibration_captures: 2, ..SessionConfig::default() };
    let path = dir.join("quick.json");
    std::fs::write(&path, cfg.to_json().unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn keyrate_grid_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = hetqkd(&["keyrate", "--t-min", "0.158", "--t-max", "0.5", "--t-steps", "3", "--eps", "0.01,0.05", "--eps-thermal", "0.1", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut rd = csv::Reader::from_path(dir.path().join("keyrate.csv")).unwrap();
    assert_eq!(rd.headers().unwrap().iter().collect::<Vec<_>>(), ["T", "eps", "eps_thermal", "I_BA", "chi_BE", "K", "secure"]);
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 6);
    let k: f64 = rows[0][5].parse().unwrap();
    let want = key_rate_at(0.158, 0.01, 0.1, &SecurityParams::default()).unwrap();
    assert!((k - want).abs() < 1e-12);
    assert_eq!(&rows[0][6], "true");

    let o = hetqkd(&["keyrate", "--t-steps", "2", "--eps", "0", "--format", "json", "--out", out]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("keyrate.json")).unwrap()).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"schema_version": 7}"#).unwrap();
    let o = hetqkd(&["keyrate", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("schema_version"));
    std::fs::write(&bad, r#"{"schema_version": 1, "snapshot_count": 0}"#).unwrap();
    assert_eq!(code(&hetqkd(&["keyrate", "--config", bad.to_str().unwrap()])), 1);
    assert_eq!(code(&hetqkd(&["no-such-command"])), 1);
    assert_eq!(code(&hetqkd(&["--help"])), 0);
}

#[test]
fn io_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    assert_eq!(code(&hetqkd(&["keyrate", "--config", missing.to_str().unwrap()])), 2);
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = hetqkd(&["keyrate", "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let o = hetqkd(&["spectrum", "--capture", dir.path().to_str().unwrap(), "--stem", "none", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn calibrate_from_captures_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let fe = FrontendConfig::default();
    write_capture(&capture_noise(&fe, CaptureKind::ShotOnly, 2e-4, 1).unwrap(), dir.path(), "shot").unwrap();
    write_capture(&capture_noise(&fe, CaptureKind::ThermalOnly, 2e-4, 2).unwrap(), dir.path(), "th").unwrap();
    let d = dir.path().to_str().unwrap();
    let o = hetqkd(&["calibrate", "--captures", d, "--shot", "shot", "--thermal", "th", "--out", d]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("calibration.json")).unwrap()).unwrap();
    let eps = v["x"]["eps_thermal"].as_f64().unwrap();
    assert!((eps / 0.1 - 1.0).abs() < 0.1, "{eps}");
    // Swapped captures are a calibration error.
    let o = hetqkd(&["calibrate", "--captures", d, "--shot", "th", "--thermal", "shot", "--out", d]);
    assert_eq!(code(&o), 1);
}

#[test]
fn spectrum_of_shot_noise() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let d = dir.path().to_str().unwrap();
    let o = hetqkd(&["spectrum", "--config", &cfg, "--kind", "shot", "--nperseg", "1024", "--out", d]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut rd = csv::Reader::from_path(dir.path().join("spectrum.csv")).unwrap();
    assert_eq!(rd.records().count(), 513);
}

#[test]
fn simulate_is_deterministic_and_exports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let d = dir.path().to_str().unwrap();
    let a = hetqkd(&["simulate", "--config", &cfg, "--seed", "9", "--index", "1", "--out", d]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    let b = hetqkd(&["simulate", "--config", &cfg, "--seed", "9", "--index", "1", "--out", d]);
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.starts_with("index,T_hat_x,T_hat_y,T_hat_rec,eps_hat,I_BA,chi_BE,K,secure,cma_settled_index,failure_reason"));
    assert_eq!(text.lines().count(), 2);
    assert!(dir.path().join("snapshot_0001.csv").exists());
    let c = hetqkd(&["simulate", "--config", &cfg, "--seed", "10", "--index", "1", "--out", d]);
    assert_ne!(c.stdout, text.as_bytes());
}
