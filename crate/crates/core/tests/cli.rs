use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_sphere-optomech");

/// Bundled parameters with a coarse rule so the CLI runs in seconds.
const FAST_CONFIG: &str = r#"{
  "sphere": { "radius_m": 100e-9, "refractive_index": 1.45, "density_kg_m3": 2200.0 },
  "beam": { "wavelength_m": 1064e-9, "rayleigh_range_m": 0.53e-6, "cavity_length_m": 4e-3, "mean_photons": 1e6 },
  "quadrature": { "radial_order": 6, "angular_order": 8, "azimuthal_order": 16, "scheme": "tensor_gauss_legendre", "target_rel_tol": 1e-3 },
  "path": { "kind": "axis", "z_start_m": -532e-9, "z_end_m": 532e-9, "panels": 8 },
  "fig2": { "points": 21 },
  "dynamics": { "initial_position_m": [20e-9, 10e-9, 40e-9], "steps": 200, "sample_every": 50 },
  "modes_evolve": {
    "modes": [
      { "kind": "standing_wave", "k_per_m": [0.0, 0.0, 1570796.3267948966], "polarization": [1.0, 0.0, 0.0], "box": { "origin_m": [0.0, 0.0, 0.0], "lengths_m": [0.5e-6, 0.5e-6, 2e-6] } },
      { "kind": "standing_wave", "k_per_m": [0.0, 0.0, 3141592.653589793], "polarization": [1.0, 0.0, 0.0], "box": { "origin_m": [0.0, 0.0, 0.0], "lengths_m": [0.5e-6, 0.5e-6, 2e-6] } }
    ],
    "initial_amplitudes": [[1.0, 0.0], [0.0, 0.0]],
    "center_m": [0.25e-6, 0.25e-6, 0.6e-6],
    "direction": [0.0, 0.0, 1.0],
    "amplitude_m": 0.1e-6,
    "steps_per_period": 20,
    "duration_peak_times": 0.1
  }
}"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    let cfg = dir.join("config.json");
    if !cfg.exists() {
        std::fs::write(&cfg, FAST_CONFIG).unwrap();
    }
    Command::new(BIN).arg("--config").arg(&cfg).args(args).output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stdout: {}\nstderr: {}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn fig2_endpoint_matches_phase() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = out.to_str().unwrap();
    ok(&run(dir.path(), &["--out", o, "phase"]));
    ok(&run(dir.path(), &["--out", o, "fig2"]));
    let phase = read_json(&out.join("phase.json"));
    let theta = phase["result"]["theta_line_rad"].as_f64().unwrap();
    let mut rdr = csv::Reader::from_path(out.join("fig2.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), ["q_z_m", "abs_theta_line_rad", "abs_theta_closed_rad"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 21);
    let end: f64 = rows[20][1].parse().unwrap();
    assert!((end - theta.abs()).abs() < 1e-6 * theta.abs(), "{end} vs {theta}");
    assert!(phase["result"]["theta_closed_form_rad"].as_f64().is_some());
    let side = read_json(&out.join("fig2.csv.meta.json"));
    assert_eq!(side["meta"]["command"], "fig2");
    assert_eq!(side["meta"]["config"]["fig2"]["points"], 21);
}

#[test]
fn outputs_are_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&run(dir.path(), &["--threads", "1", "--out", a.to_str().unwrap(), "fig2"]));
    ok(&run(dir.path(), &["--threads", "3", "--out", b.to_str().unwrap(), "fig2"]));
    for f in ["fig2.csv", "fig2.csv.meta.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    ok(&run(dir.path(), &["--threads", "1", "--out", a.to_str().unwrap(), "evolve"]));
    ok(&run(dir.path(), &["--threads", "2", "--out", b.to_str().unwrap(), "evolve"]));
    assert_eq!(std::fs::read(a.join("evolve.csv")).unwrap(), std::fs::read(b.join("evolve.csv")).unwrap());
}

#[test]
fn unknown_key_fails_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let bad = FAST_CONFIG.replacen("\"fig2\": { \"points\": 21 }", "\"fig2\": { \"points\": 21, \"pionts\": 3 }", 1);
    std::fs::write(dir.path().join("config.json"), bad).unwrap();
    let out = run(dir.path(), &["--out", dir.path().join("o").to_str().unwrap(), "fig2"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("pionts") && err.contains("line 6"), "{err}");
}

#[test]
fn check_without_sphere_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    ok(&run(dir.path(), &["--out", out.to_str().unwrap(), "check", "--no-sphere"]));
    let v = read_json(&out.join("check.json"));
    assert_eq!(v["result"]["passed"], true);
}

#[test]
fn evolve_and_modes_evolve_write_unit_headers() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = out.to_str().unwrap();
    ok(&run(dir.path(), &["--out", o, "evolve"]));
    let text = std::fs::read_to_string(out.join("evolve.csv")).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("t_s,q_x_m,q_y_m,q_z_m,p_x_kg_m_s"), "{header}");
    assert_eq!(text.lines().count(), 1 + 5);
    ok(&run(dir.path(), &["--out", o, "modes-evolve"]));
    let text = std::fs::read_to_string(out.join("modes_evolve.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t_s,pop_0,arg_0_rad,pop_1,arg_1_rad");
    let summary = read_json(&out.join("modes_evolve.json"));
    assert!(summary["result"]["max_norm_drift"].as_f64().unwrap() < 1e-10);
}

#[test]
fn coupling_and_force_report_units() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = out.to_str().unwrap();
    ok(&run(dir.path(), &["--out", o, "coupling", "--position-m", "0", "0", "-1e-7"]));
    let v = read_json(&out.join("coupling.json"));
    let lz = v["result"]["lambda_per_photon_kg_m_s"][2].as_f64().unwrap();
    assert!(lz < 0.0);
    ok(&run(dir.path(), &["--out", o, "force"]));
    let f = read_json(&out.join("force.json"));
    assert!(f["result"]["ratio"].as_f64().unwrap() < 1e-2);
}
