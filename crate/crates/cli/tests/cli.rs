//! End-to-end checks of the command-line surface: config validation, exit
//! codes, output artifacts.

use std::path::Path;
use std::process::Command;

fn homlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_homlab"))
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

const LAMINATE_CFG: &str = "\
params.sigma1 = 1.0
params.sigma2 = 3.0
params.p1 = 1.5
params.p2 = 2.0
geometry.kind = laminate
geometry.theta1 = 0.5
experiment.xi = 1.0, 0.0
";

#[test]
fn missing_required_key_names_the_field_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    write(&cfg, "params.sigma1 = 1\nparams.sigma2 = 2\nparams.p1 = 1.5\nparams.p2 = 2\ngeometry.kind = laminate\n");
    let out = homlab()
        .args(["cell", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("geometry.theta1"), "stderr: {stderr}");
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    write(&cfg, &format!("{LAMINATE_CFG}shiny.new_knob = 3\n"));
    let out = homlab()
        .args(["cell", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("shiny.new_knob"));
}

#[test]
fn invalid_exponent_regime_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    write(
        &cfg,
        &LAMINATE_CFG
            .replace("params.p1 = 1.5", "params.p1 = 2.5")
            .replace("params.p2 = 2.0", "params.p2 = 3.0"),
    );
    let out = homlab()
        .args(["cell", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cell_summary_reports_homogeneous_flux() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    write(
        &cfg,
        "params.sigma1 = 1.0\nparams.sigma2 = 1.0\nparams.p1 = 2.0\nparams.p2 = 2.0\n\
         geometry.kind = laminate\ngeometry.theta1 = 0.5\nexperiment.xi = 1.0, 0.0\n",
    );
    let out = homlab()
        .args(["cell", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary_path = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .find(|e| e.file_name().to_string_lossy().ends_with(".summary.json"))
        .expect("summary written");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(summary_path.path()).unwrap()).unwrap();
    let b = summary["b"].as_array().unwrap();
    assert!((b[0].as_f64().unwrap() - 1.0).abs() < 1e-9, "b = {b:?}");
    assert!(b[1].as_f64().unwrap().abs() < 1e-12);
}

#[test]
fn cell_command_matches_the_laminate_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    write(&cfg, LAMINATE_CFG);
    let out = homlab()
        .args(["cell", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let summary_path = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .find(|e| e.file_name().to_string_lossy().ends_with(".summary.json"))
        .unwrap();
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(summary_path.path()).unwrap()).unwrap();
    let b = summary["b"].as_array().unwrap();
    let pp = homlab_core::PhaseParams::new(1.0, 3.0, 1.5, 2.0).unwrap();
    let oracle =
        homlab_core::solve_cell_laminate(&pp, 0.5, homlab_core::Vec2::new(1.0, 0.0), 1e-11)
            .unwrap()
            .b();
    assert!((b[0].as_f64().unwrap() - oracle.x).abs() < 1e-9);
}

#[test]
fn json_config_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    write(
        &cfg,
        r#"{
  "params": {"sigma1": 1.0, "sigma2": 3.0, "p1": 1.5, "p2": 2.0},
  "geometry": {"kind": "laminate", "theta1": 0.5},
  "experiment": {"xi": [1.0, 0.0]}
}"#,
    );
    let out = homlab()
        .args(["cell", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn audit_on_a_linear_medium_reports_no_violations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    write(
        &cfg,
        "params.sigma1 = 1.0\nparams.sigma2 = 2.0\nparams.p1 = 2.0\nparams.p2 = 2.0\n\
         geometry.kind = laminate\ngeometry.theta1 = 0.5\nexperiment.n_samples = 100\n",
    );
    let out = homlab()
        .args(["audit", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let audit_path = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .find(|e| e.file_name().to_string_lossy().starts_with("audit_"))
        .unwrap();
    let audit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(audit_path.path()).unwrap()).unwrap();
    assert_eq!(audit["structure_a"]["sign_violations"], 0);
    assert_eq!(audit["structure_b"]["sign_violations"], 0);
    assert_eq!(audit["corrector_integrals"]["violations"], 0);
}

#[test]
fn missing_config_flag_exits_2() {
    let out = homlab().arg("cell").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn out_of_table_gradients_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    // A table far smaller than the gradients of the solution: the macro
    // solve must fail numerically instead of extrapolating.
    write(
        &cfg,
        "params.sigma1 = 1.0\nparams.sigma2 = 1.0\nparams.p1 = 2.0\nparams.p2 = 2.0\n\
         geometry.kind = laminate\ngeometry.theta1 = 0.5\nmesh.macro_n = 16\n\
         table.r = 0.01\ntable.h_xi = 0.005\n",
    );
    let out = homlab()
        .args(["macro", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(3),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("tabulated range"));
}
