use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_helical"));
    c.env_remove("HELICAL_THREADS");
    c
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write_config(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(value).unwrap()).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn helix(n: usize, turns: usize) -> Value {
    json!({"helix": {"radius": 0.05, "pitch": 0.175, "sites_per_turn": n, "turns": turns, "handedness": "left"}})
}

fn read_json(p: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn csv_rows(p: impl AsRef<Path>) -> (String, Vec<Vec<String>>) {
    let text = fs::read_to_string(p).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn small_dynamics() -> Value {
    json!({
        "mode": "dynamics",
        "geometry": helix(3, 4),
        "initial_state": {"site": 0, "p_up": 0.5},
        "time_grid": {"tau": 1.0, "n_points": 11, "snapshots": [0.5]}
    })
}

#[test]
fn shipped_configs_validate_and_round_trip() {
    let mut seen = 0;
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        seen += 1;
        let out = run(&["validate", "--config", path.to_str().unwrap(), "--canonical"]);
        assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
        let canonical: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(canonical, read_json(&path), "{} does not round-trip", path.display());
    }
    assert_eq!(seen, 16);
}

#[test]
fn validate_reports_every_problem() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        &json!({
            "mode": "dynamics",
            "geometry": {"helix": {"radius": -1.0, "pitch": 0.175, "sites_per_turn": 3, "turns": 0, "handedness": "left"}},
            "initial_state": {"site": 0, "p_up": 2.0},
            "time_grid": {"tau": 1.0, "n_points": 1, "step": 0.1},
            "extra": true
        }),
    );
    let out = run(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    for needle in [
        "unknown key `extra`",
        "unknown key `time_grid.step`",
        "radius must be positive",
        "turns must be at least 1",
        "p_up",
    ] {
        assert!(err.contains(needle), "missing `{needle}` in:\n{err}");
    }
}

#[test]
fn range_errors_without_unknown_keys_are_listed_together() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        &json!({
            "mode": "dynamics",
            "geometry": helix(3, 2),
            "initial_state": {"site": 6, "p_up": -0.5},
            "time_grid": {"tau": -1.0, "n_points": 1}
        }),
    );
    let out = run(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.lines().count() >= 4, "{err}");
    for needle in ["site: 6 is out of range", "p_up", "tau", "n_points"] {
        assert!(err.contains(needle), "missing `{needle}` in:\n{err}");
    }
}

#[test]
fn usage_errors_and_mode_mismatch_exit_with_one() {
    let out = run(&["dynamics"]);
    assert_eq!(out.status.code(), Some(1));
    let cfg = configs_dir().join("check.json");
    let out = run(&["bands", "--config", cfg.to_str().unwrap(), "--out", "/nonexistent"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["validate", "--config", "/no/such/file.json"]);
    assert_eq!(out.status.code(), Some(1));
    let out = bin()
        .args(["check", "--config", cfg.to_str().unwrap()])
        .env("HELICAL_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn dynamics_outputs_and_manifest() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "dyn.json", &small_dynamics());
    let out_dir = dir.path().join("out");
    let out = run(&[
        "dynamics",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--threads",
        "2",
        "--dump-matrices",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let (header, rows) = csv_rows(out_dir.join("timeseries.csv"));
    assert_eq!(header, "t,trace,P_up,P_down,Sz,z_com,eta");
    // 11 uniform points on [0, 2τ] plus the snapshot time
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().any(|r| r[0] == "0.5"));
    assert_eq!(rows[0][1], "1.0");
    let traces: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(traces.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    for r in &rows {
        let (p_up, p_down, sz): (f64, f64, f64) = (r[2].parse().unwrap(), r[3].parse().unwrap(), r[4].parse().unwrap());
        assert!((p_up - p_down - sz).abs() < 1e-12);
        assert!(["1", "-1", "nan"].contains(&r[6].as_str()));
    }

    let (header, rows) = csv_rows(out_dir.join("snapshot_t0.5.csv"));
    assert_eq!(header, "site,z,p_up,p_down");
    assert_eq!(rows.len(), 12);

    let (header, rows) = csv_rows(out_dir.join("J.csv"));
    assert_eq!(header, "row,col,re,im");
    assert_eq!(rows.len(), 24 * 24);
    assert!(out_dir.join("Gamma.csv").exists());

    let geom = read_json(out_dir.join("geometry.json"));
    assert_eq!(geom["positions"].as_array().unwrap().len(), 12);
    assert!(geom["label"].is_string());

    let manifest = read_json(out_dir.join("manifest.json"));
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["mode"], "dynamics");
    assert!(manifest["config_hash"].as_str().unwrap().starts_with("sha256:"));
    assert!(manifest["engine_version"].is_string());
    assert_eq!(manifest["diagnostics"]["propagator"], "spectral");
    let outputs: Vec<&str> = manifest["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    for f in ["timeseries.csv", "summary.json", "config.json", "manifest.json", "J.csv"] {
        assert!(outputs.contains(&f), "{f} not listed");
        assert!(out_dir.join(f).exists());
    }

    // the copied config is the normalized input and hashes the same
    assert_eq!(read_json(out_dir.join("config.json")), small_dynamics());
    let again = dir.path().join("again");
    let out = run(&["run", "--config", out_dir.join("config.json").to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(read_json(again.join("manifest.json"))["config_hash"], manifest["config_hash"]);
    assert_eq!(
        fs::read_to_string(again.join("timeseries.csv")).unwrap(),
        fs::read_to_string(out_dir.join("timeseries.csv")).unwrap()
    );
}

#[test]
fn numerical_failure_exits_with_two_and_keeps_manifest() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("tight.json"),
        r#"{"positions": [[0, 0, 0], [0, 0, 1e-9], [0, 0, 0.1]], "label": "tight"}"#,
    )
    .unwrap();
    let cfg = write_config(
        dir.path(),
        "cfg.json",
        &json!({
            "mode": "dynamics",
            "geometry": {"file": "tight.json"},
            "initial_state": {"site": 0, "p_up": 0.5},
            "time_grid": {"tau": 1.0, "n_points": 5}
        }),
    );
    let out_dir = dir.path().join("out");
    let out = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = read_json(out_dir.join("manifest.json"));
    assert_eq!(manifest["status"], "failed");
    assert!(manifest["failure"].is_string());
}

#[test]
fn bands_csv_columns() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "bands.json",
        &json!({"mode": "bands", "geometry": helix(3, 20), "bands": {"n_k": 21, "m_cut": 50}}),
    );
    let out_dir = dir.path().join("out");
    let out = run(&["bands", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = csv_rows(out_dir.join("bands.csv"));
    assert_eq!(header, "k,band,energy,gamma,sz,v,in_light_cone");
    assert_eq!(rows.len(), 21 * 6);
    assert!(rows.iter().all(|r| ["true", "false", "edge"].contains(&r[6].as_str())));
    let manifest = read_json(out_dir.join("manifest.json"));
    assert!(manifest["diagnostics"]["max_convergence"].is_number());
}

#[test]
fn zak_record_layout() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "zak.json",
        &json!({"mode": "zak", "geometry": helix(3, 20), "zak": {"n_k": 60, "m_cut": 200}}),
    );
    let out_dir = dir.path().join("out");
    let out = run(&["zak", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for group in ["lower", "upper"] {
        let z = read_json(out_dir.join(format!("zak_{group}.json")));
        let keys: Vec<&String> = z.as_object().unwrap().keys().collect();
        assert_eq!(keys.len(), 6);
        for k in ["n_sites_per_turn", "band_group", "n_k", "zak_phase", "residual", "gap_width"] {
            assert!(z.get(k).is_some(), "{k}");
        }
        assert_eq!(z["band_group"], group);
        assert_eq!(z["n_sites_per_turn"], 3);
        assert!((z["zak_phase"].as_f64().unwrap().abs() - std::f64::consts::PI).abs() < 1e-2);
    }
}

#[test]
fn field_maps_and_metadata() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "field.json",
        &json!({
            "mode": "field",
            "geometry": helix(3, 4),
            "initial_state": {"site": 0, "p_up": 0.5},
            "field": {
                "times": [0.5],
                "normalize": true,
                "plane": {"normal": "x", "offset": 0.5, "u_min": -0.15, "u_max": 0.15, "n_u": 5, "v_min": -0.2, "v_max": 0.9, "n_v": 7}
            }
        }),
    );
    let out_dir = dir.path().join("out");
    let out = run(&["field", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for spin in ["up", "down"] {
        let (header, rows) = csv_rows(out_dir.join(format!("field_t0.5_{spin}.csv")));
        assert_eq!(header, "y,z,intensity");
        assert_eq!(rows.len(), 35);
        let max = rows.iter().map(|r| r[2].parse::<f64>().unwrap()).fold(0.0, f64::max);
        assert!((max - 1.0).abs() < 1e-12);
        let meta = read_json(out_dir.join(format!("field_t0.5_{spin}.json")));
        assert_eq!(meta["time"], 0.5);
        assert_eq!(meta["plane"]["normal"], "x");
        assert!(meta["normalization_max"].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn check_mode_passes() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = configs_dir().join("check.json");
    let out = run(&["check", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let checks = read_json(out_dir.join("checks.json"));
    let list = checks.as_array().unwrap();
    assert!(list.len() >= 15);
    assert!(list.iter().all(|c| c["passed"] == true));
}
