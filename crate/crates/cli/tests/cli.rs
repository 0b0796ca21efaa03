use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_achlioptas-lab"))
        .args(args)
        .current_dir(cwd)
        .env_remove("ACHLIOPTAS_LAB_JOBS")
        .output()
        .expect("spawn achlioptas-lab")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr line");
    serde_json::from_str(line).expect("single-line JSON error")
}

fn meta(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

#[test]
fn simulate_writes_csv_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(
        &["simulate", "--rule", "erdos_renyi", "--n", "20000", "--t-max", "1.5", "--grid", "0.01", "--seed", "42", "--out", "t.csv"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("m,t,l1,l2,ltop,comp_count,edges,n_le_1"));
    assert_eq!(csv.lines().count(), 1 + 151);
    let m = meta(dir.path(), "t.meta.json");
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["config"]["seed"], 42);
    assert_eq!(m["config"]["rule"]["kind"], "erdos_renyi");
    assert_eq!(m["steps"], 30000);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["simulate", "--rule", "bohman_frieze", "--n", "5000", "--t-max", "1", "--grid", "0.05", "--seed", "7", "--runs", "6"];
    let mut a: Vec<&str> = base.to_vec();
    a.extend(["--jobs", "1", "--out", "a.csv"]);
    let mut b: Vec<&str> = base.to_vec();
    b.extend(["--jobs", "4", "--out", "b.csv"]);
    assert_eq!(code(&lab(&a, dir.path())), 0);
    assert_eq!(code(&lab(&b, dir.path())), 0);
    let csv_a = fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(csv_a, fs::read(dir.path().join("b.csv")).unwrap());
    assert!(String::from_utf8(csv_a).unwrap().starts_with("m,t,l1_mean,l1_std,l1_min,l1_max"));

    let mut ma = meta(dir.path(), "a.meta.json");
    let mut mb = meta(dir.path(), "b.meta.json");
    ma.as_object_mut().unwrap().remove("wall_time_s");
    mb.as_object_mut().unwrap().remove("wall_time_s");
    assert_eq!(ma, mb);
    assert_eq!(ma["seeds"].as_array().unwrap().len(), 6);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.json"),
        r#"{"rule": {"name": "product", "r": 3}, "n": 3000, "t_max": 0.5, "grid_dt": 0.1, "seed": 3}"#,
    )
    .unwrap();
    let out = lab(&["simulate", "--config", "run.json", "--seed", "11", "--out", "p.csv"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let m = meta(dir.path(), "p.meta.json");
    assert_eq!(m["config"]["seed"], 11);
    assert_eq!(m["config"]["n"], 3000);
    assert_eq!(m["config"]["rule"]["ell"], 6);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let unknown_rule = lab(&["simulate", "--rule", "nosuch", "--n", "10", "--t-max", "1", "--grid", "0.1", "--out", "x.csv"], p);
    assert_eq!(code(&unknown_rule), 2);
    assert!(String::from_utf8_lossy(&unknown_rule.stderr).contains("--help"));

    let unknown_flag = lab(&["simulate", "--frobnicate", "--out", "x.csv"], p);
    assert_eq!(code(&unknown_flag), 2);

    let bad_n = lab(&["simulate", "--rule", "product", "--n", "0", "--t-max", "1", "--grid", "0.1", "--out", "x.csv"], p);
    assert_eq!(code(&bad_n), 2);
    let err = stderr_json(&bad_n);
    assert_eq!(err["error"], "config");
    assert_eq!(err["kind"], "config");

    let missing = lab(&["simulate", "--rule", "product", "--t-max", "1", "--grid", "0.1", "--out", "x.csv"], p);
    assert_eq!(code(&missing), 2);
    assert!(stderr_json(&missing)["message"].as_str().unwrap().contains("--n"));

    let jobs = lab(&["--jobs", "0", "report", "--in", "."], p);
    assert_eq!(code(&jobs), 2);

    let small_kmax = lab(&["ode", "--rule", "bohman_frieze", "--kmax", "2", "--t-max", "1", "--out", "o.csv"], p);
    assert_eq!(code(&small_kmax), 2);

    fs::write(p.join("bad.json"), r#"{"operation": "event_l", "rule": "erdos_renyi"}"#).unwrap();
    let mismatch = lab(&["verify", "event_c", "--config", "bad.json"], p);
    assert_eq!(code(&mismatch), 2);
    let unknown_exp = lab(&["verify", "nosuch", "--config", "bad.json"], p);
    assert_eq!(code(&unknown_exp), 2);
    assert!(!p.join("x.csv").exists());
}

#[test]
fn unwritable_output_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("file"), "").unwrap();
    let out = lab(
        &["simulate", "--rule", "erdos_renyi", "--n", "100", "--t-max", "1", "--grid", "0.1", "--out", "file/t.csv"],
        dir.path(),
    );
    assert_eq!(code(&out), 3);
    let err = stderr_json(&out);
    assert_eq!(err["error"], "runtime");
    assert_eq!(err["kind"], "io");
}

#[test]
fn ode_bohman_frieze() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(
        &["ode", "--rule", "bohman_frieze", "--kmax", "200", "--h", "0.0001", "--t-max", "1.5", "--kprint", "5", "--out", "ode.csv"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("ode.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t,rho_inf,rho_1,rho_2,rho_3,rho_4,rho_5,giant");
    assert_eq!(csv.lines().count(), 1 + 151);
    let m = meta(dir.path(), "ode.meta.json");
    assert_eq!(m["command"], "ode");
    let t_c = m["t_c"].as_f64().unwrap();
    assert!((t_c - 0.588).abs() < 0.01, "t_c {t_c}");
}

#[test]
fn sweep_writes_window_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(
        &["sweep", "--rule", "bohman_frieze", "--ns", "1000,4000", "--a", "0.2", "--b", "0.4", "--runs", "3", "--out", "w.csv"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("w.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "rule,n,seed,a,b,m_minus,m_plus,delta,delta_over_n");
    assert_eq!(csv.lines().count(), 1 + 6);
    assert!(String::from_utf8_lossy(&out.stdout).contains("n=4000"));

    let jump = lab(
        &["sweep", "--rule", "product", "--ns", "2000", "--h-l", "sqrt", "--delta", "0.5", "--runs", "2", "--out", "j.csv"],
        dir.path(),
    );
    assert_eq!(code(&jump), 0, "{}", String::from_utf8_lossy(&jump.stderr));
    assert_eq!(meta(dir.path(), "j.meta.json")["config"]["mode"], "jump_thresholds");
}

#[test]
fn verify_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(
        p.join("windows.json"),
        r#"{"rule": "bohman_frieze", "ns": [1000, 2000], "mode": "fraction_thresholds", "a": 0.2, "b": 0.4, "runs": 3}"#,
    )
    .unwrap();
    let out = lab(&["verify", "sweep_windows", "--config", "windows.json", "--out-dir", "res"], p);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["sweep_windows.json", "sweep_windows.csv", "sweep_windows.manifest.json"] {
        assert!(p.join("res").join(f).exists(), "{f}");
    }

    let report = lab(&["report", "--in", "res"], p);
    assert_eq!(code(&report), 0);
    let text = String::from_utf8_lossy(&report.stdout);
    assert!(text.starts_with("sweep_windows"));
    assert!(text.contains("n=2000 delta/n mean"));

    let missing = lab(&["report", "--in", "nowhere"], p);
    assert_eq!(code(&missing), 2);
}
