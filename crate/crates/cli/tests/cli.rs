use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cio_core::contact_solver::{forward_wrench, rim_point, ContactSolution, TotalWrench};
use cio_core::vehicle_model::Vec3;
use cio_core::VehicleParams;

fn cio(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cio"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(format!("{name}.toml"))
        .display()
        .to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_log_metrics_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let out = cio(&["run", "--config", &config("maze"), "--duration", "5", "--out", path_str(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    for file in ["run.jsonl", "metrics.json", "traces.csv"] {
        assert!(dir.path().join(file).is_file(), "{file}");
    }
    let traces = fs::read_to_string(dir.path().join("traces.csv")).unwrap();
    assert!(traces.starts_with("t,x,y,z,vx,vy,vz,cio_vx"));
    let ticks = fs::read_to_string(dir.path().join("run.jsonl")).unwrap().lines().count();
    assert_eq!(ticks, 1001);
}

#[test]
fn same_seed_gives_identical_metrics() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = cio(&["run", "--scenario", "corridor", "--seed", "42", "--out", path_str(dir.path())]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    }
    let read = |d: &tempfile::TempDir| fs::read(d.path().join("metrics.json")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn malformed_config_exits_1_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "version = 1\nmode = \"flying\"\nduration = 2.0\n[noise]\ngyro_sigma = \"high\"\n").unwrap();
    let out = cio(&["run", "--config", path_str(&path), "--out", path_str(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("noise.gyro_sigma"), "{}", stderr(&out));
}

#[test]
fn bad_arguments_exit_1() {
    assert_eq!(cio(&["run", "--scenario", "nowhere"]).status.code(), Some(1));
    assert_eq!(cio(&["run"]).status.code(), Some(1));
    assert_eq!(cio(&["--help"]).status.code(), Some(0));
}

#[test]
fn simulation_failure_exits_2_with_time() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fast.toml");
    fs::write(
        &path,
        "version = 1\nmode = \"flying\"\nduration = 1.0\n[start]\nvelocity = [1000.0, 0.0, 0.0]\n\
         [[environment.obstacles]]\nkind = \"plane\"\npoint = [1.5, 0.0, 0.0]\nnormal = [-1.0, 0.0, 0.0]\n",
    )
    .unwrap();
    let out = cio(&["run", "--config", path_str(&path), "--out", path_str(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("t = "), "{}", stderr(&out));
}

#[test]
fn compare_in_empty_world_gives_identical_filters() {
    let dir = tempfile::tempdir().unwrap();
    let out = cio(&["compare", "--config", &config("tracking"), "--out", path_str(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let mut rows = csv::Reader::from_path(dir.path().join("comparison.csv")).unwrap();
    for row in rows.records() {
        let row = row.unwrap();
        for axis in 1..4 {
            assert_eq!(row[axis], row[axis + 3]);
        }
    }
}

#[test]
fn compare_on_maze_favors_cio() {
    let dir = tempfile::tempdir().unwrap();
    let out = cio(&["compare", "--config", &config("maze"), "--out", path_str(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let cio_max = report["cio"]["max_error_norm"].as_f64().unwrap();
    let shadow_max = report["prediction_only"]["max_error_norm"].as_f64().unwrap();
    assert!(shadow_max > cio_max, "{report}");
    assert!(dir.path().join("comparison.json").is_file());
}

#[test]
fn no_cio_disables_updates() {
    let dir = tempfile::tempdir().unwrap();
    let out = cio(&["run", "--scenario", "corridor", "--no-cio", "--out", path_str(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let metrics: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(metrics["filter_updates"], 0);
}

#[test]
fn batch_runs_each_seed_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = cio(&[
        "run", "--scenario", "corridor", "--seed", "7", "--duration", "1", "--batch", "3", "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let batch: Vec<serde_json::Value> =
        serde_json::from_str(&fs::read_to_string(dir.path().join("batch.json")).unwrap()).unwrap();
    let seeds: Vec<u64> = batch.iter().map(|m| m["seed"].as_u64().unwrap()).collect();
    assert_eq!(seeds, [7, 8, 9]);
    for seed in seeds {
        assert!(dir.path().join(format!("seed_{seed}/metrics.json")).is_file());
    }
}

#[test]
fn mode_flag_switches_to_rolling() {
    let dir = tempfile::tempdir().unwrap();
    let out = cio(&[
        "run", "--scenario", "tracking", "--mode", "rolling", "--duration", "1", "--out", path_str(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let metrics: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(metrics["mode"], "rolling");
    assert!(metrics["max_constraint_residual"].as_f64().unwrap() < 1e-8);
}

#[test]
fn log_level_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_cio"))
        .args(["run", "--scenario", "tracking", "--duration", "0.5", "--out", path_str(dir.path())])
        .env("CIO_LOG_LEVEL", "info")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(stderr(&out).contains("running tracking"), "{}", stderr(&out));
}

fn write_wrenches(path: &PathBuf, lines: &[String]) {
    fs::write(path, lines.join("\n") + if lines.is_empty() { "" } else { "\n" }).unwrap();
}

#[test]
fn solve_contacts_flags_bad_records_and_solves_the_rest() {
    let p = VehicleParams::default();
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("wrenches.jsonl");
    let output = dir.path().join("contacts.jsonl");
    let mut lines = Vec::new();
    for k in 0..20 {
        let theta = -0.6 + 0.06 * k as f64;
        let point = rim_point(theta, p.wheel_radius);
        let f = -point / p.wheel_radius * (5.0 + k as f64);
        let mut f_l = f;
        f_l.y = -2.0;
        let s = ContactSolution { f_l, f_r: f, p_l: point, p_r: point };
        lines.push(serde_json::to_string(&forward_wrench(&s, &p)).unwrap());
    }
    let infeasible = TotalWrench {
        force: Vec3::new(1.0, -1.0, p.m_t * p.g + 1.0),
        moment: Vec3::zeros(),
        wheel_l: 50.0,
        wheel_r: 0.0,
    };
    lines.insert(5, serde_json::to_string(&infeasible).unwrap());
    lines.insert(9, "{not json".into());
    write_wrenches(&input, &lines);

    let out = cio(&["solve-contacts", "--input", path_str(&input), "--output", path_str(&output)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let records: Vec<serde_json::Value> = fs::read_to_string(&output)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records.len(), 22);
    for r in &records {
        let line = r["line"].as_u64().unwrap();
        if line == 6 || line == 10 {
            assert!(r["error"].is_string(), "{r}");
            continue;
        }
        let s: ContactSolution = serde_json::from_value(r["solution"].clone()).unwrap();
        for q in [s.p_l, s.p_r] {
            assert!((q.x.hypot(q.z) - p.wheel_radius).abs() < 1e-9);
        }
    }
}

#[test]
fn solve_contacts_on_empty_file_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.jsonl");
    write_wrenches(&input, &[]);
    let out = cio(&["solve-contacts", "--input", path_str(&input)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
}

#[test]
fn validate_passes_and_catches_injected_fault() {
    let clean = cio(&["validate"]);
    assert_eq!(clean.status.code(), Some(0));
    let table = String::from_utf8_lossy(&clean.stdout);
    assert!(table.contains("max residual"));
    assert!(!table.contains("FAIL"));

    let faulty = cio(&["validate", "--inject-fault", "contact-solver", "--json"]);
    assert_eq!(faulty.status.code(), Some(1));
    let checks: Vec<serde_json::Value> = serde_json::from_slice(&faulty.stdout).unwrap();
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| c["passed"] == false)
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert_eq!(failed, ["contact solver vs brute force"]);
}
