use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use adiaframe::experiments::schema::{validate, ArtifactKind};
use serde_json::Value;

const SCENARIO: &str = "\
# weakly driven qubit, short window
model.name = oscillating_qubit_transition
model.omega0 = 1 MHz
model.omega_t = 0.02 MHz
model.a = 0.5
frame.kind = rotating_z_half
grid.tau = 5
output.prefix = demo
";

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adiaframe"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn validate_accepts_a_good_config() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "s.cfg", SCENARIO);
    let out = run(d.path(), &["validate", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn every_config_violation_is_reported_with_exit_2() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(
        d.path(),
        "bad.cfg",
        "model.name = oscillating_qubit_transition\nmodel.omega_t = 0.02 MHz\nmodel.omega = 1 MHz\n\
         grid.tau = 0\nmystery = 3\n",
    );
    let out = run(d.path(), &["simulate", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for field in ["model.omega0", "grid.tau", "mystery"] {
        assert!(err.contains(field), "`{field}` not reported in:\n{err}");
    }
}

#[test]
fn simulate_writes_schema_valid_artifacts() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "s.cfg", SCENARIO);
    let out = run(d.path(), &["simulate", &cfg, "--out", "res"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let res = d.path().join("res");
    let summary = read_json(&res.join("demo_summary.json"));
    validate(&summary, ArtifactKind::Summary).unwrap();
    validate(&summary["dynamics"], ArtifactKind::Dynamics).unwrap();
    validate(&summary["conditions_inertial"], ArtifactKind::Conditions).unwrap();
    validate(&summary["conditions_noninertial"], ArtifactKind::Conditions).unwrap();
    validate(&summary["theorem1"], ArtifactKind::Theorem).unwrap();
    assert!(summary["theorem2"]["skipped"].is_string());
    let stdout: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stdout, summary);
    let csv = fs::read_to_string(res.join("demo_dynamics.csv")).unwrap();
    assert!(csv.starts_with("t_us,fidelity,purity,population_0,population_1\n"));
    for name in ["demo_conditions_inertial.csv", "demo_conditions_noninertial.csv", "demo_theorem1.csv"] {
        assert!(res.join(name).exists(), "{name}");
    }
}

#[test]
fn sweep_output_is_identical_across_worker_counts() {
    let d = tempfile::tempdir().unwrap();
    let text = format!("{SCENARIO}sweep.parameter = omega\nsweep.values = 0.3 MHz, 1 MHz, 2 MHz, 0.7 MHz\n")
        .replace("model.a = 0.5\n", "");
    let cfg = write(d.path(), "s.cfg", &text);
    for w in ["1", "4"] {
        let out = run(d.path(), &["sweep", &cfg, "--workers", w, "--out", &format!("w{w}")]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["demo_sweep.csv", "demo_sweep.json"] {
        let a = fs::read(d.path().join("w1").join(f)).unwrap();
        let b = fs::read(d.path().join("w4").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
    let js = read_json(&d.path().join("w1/demo_sweep.json"));
    validate(&js, ArtifactKind::Sweep).unwrap();
    assert_eq!(js["rows"].as_array().unwrap().len(), 4);
    // The resonant row carries the infinite rotating-frame sentinel.
    let csv = fs::read_to_string(d.path().join("w1/demo_sweep.csv")).unwrap();
    assert!(csv.lines().nth(2).unwrap().contains(",inf,inf,inf,inf,"));
}

#[test]
fn theorem2_on_a_time_dependent_rotated_hamiltonian_exits_3() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "s.cfg", SCENARIO);
    let out = run(d.path(), &["theorem2", &cfg, "--out", "res"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not constant"));
}

#[test]
fn theorem2_on_nmr_passes_far_from_resonance_json() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(
        d.path(),
        "n.cfg",
        "model.name = nmr_rotating\nmodel.omega0 = 1 MHz\nmodel.omega_rf = 0.0001 MHz\nmodel.omega = 3 MHz\n\
         frame.kind = rotating_z_half\ngrid.tau = 10\ninitial.state = 1\n",
    );
    let out = run(d.path(), &["theorem2", &cfg, "--out", "res"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(&d.path().join("res/run_summary.json"));
    validate(&v["theorem2"], ArtifactKind::Theorem).unwrap();
    assert_eq!(v["theorem2"]["verdict"], "holds");
}

#[test]
fn theorem1_without_a_frame_is_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "s.cfg", &SCENARIO.replace("frame.kind = rotating_z_half\n", ""));
    let out = run(d.path(), &["theorem1", &cfg]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn coarse_grid_is_refused_unless_overridden() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "s.cfg", &format!("{SCENARIO}grid.steps = 20\n"));
    let out = run(d.path(), &["conditions", &cfg, "--out", "res"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid.override_resolution"));
    let out = run(d.path(), &["conditions", &cfg, "--out", "res", "--override-resolution"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn reproduce_nmr_writes_all_cases() {
    let d = tempfile::tempdir().unwrap();
    let out = run(d.path(), &["reproduce", "nmr", "--out", "r", "--workers", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(d.path().join("r/nmr.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().last().unwrap().starts_with("resonance,"));
}
