use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fracvirial(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracvirial")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn dir_arg(p: &Path) -> String {
    p.display().to_string()
}

#[test]
fn cutoff_subcommand_passes_and_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fracvirial(&["cutoff", "--R", "2", "--s", "0.9", "--output-dir", &dir_arg(tmp.path())]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("cutoff.csv")).unwrap();
    assert!(csv.starts_with("r,g,g_prime,phi,phi_second,psi1,psi2,margin\n"));
    assert!(csv.lines().count() > 10_000);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["R"], "2");
    assert_eq!(manifest["status"], "pass");
    assert!(tmp.path().join("profile.json").exists());
}

#[test]
fn missing_required_setting_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fracvirial(&["evolve", "--sigma", "1", "--output-dir", &dir_arg(tmp.path())]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--s"));
}

#[test]
fn malformed_config_and_unknown_suite_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "[evolve\ns = 0.8\n").unwrap();
    let out = fracvirial(&["--config", &dir_arg(&cfg), "cutoff", "--output-dir", &dir_arg(tmp.path())]);
    assert_eq!(code(&out), 2);
    let out = fracvirial(&["suite", "no-such-suite", "--output-dir", &dir_arg(tmp.path())]);
    assert_eq!(code(&out), 2);
    assert_eq!(code(&fracvirial(&["evolve", "--bogus-flag"])), 2);
}

#[test]
fn box_leakage_aborts_with_instability_code() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fracvirial(&[
        "evolve", "--s", "0.8", "--sigma", "1", "--half-length", "3", "--grid", "32", "--tmax", "0.01", "--dt", "0.01",
        "--output-dir", &dir_arg(tmp.path()),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = fs::read_to_string(tmp.path().join("manifest.json")).unwrap();
    assert!(manifest.contains("leakage"));
}

#[test]
fn repeated_runs_with_same_config_are_byte_identical_and_flags_override_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(
        &cfg,
        "seed = 11\n[evolve]\ns = 0.8\nsigma = 1\nN = 2\ngrid = 64\nhalf_length = 24\ntmax = 0.05\ndt = 0.01\nR = 2\nrhs_stride = 1\nnoise = 0.02\namp_factor = 0.9\n",
    )
    .unwrap();
    let mut dirs = vec![];
    for name in ["a", "b"] {
        let d = tmp.path().join(name);
        let out = fracvirial(&["--config", &dir_arg(&cfg), "evolve", "--amp-factor", "0.4", "--output-dir", &dir_arg(&d)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        dirs.push(d);
    }
    for f in ["run_log.csv", "rhs.csv", "summary.json", "final_state.field", "manifest.json"] {
        assert_eq!(fs::read(dirs[0].join(f)).unwrap(), fs::read(dirs[1].join(f)).unwrap(), "{f} differs");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dirs[0].join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["amp_factor"], "0.4");
    assert_eq!(manifest["config"]["noise"], "0.02");
    assert_eq!(manifest["seed"], 11);

    let d = tmp.path().join("c");
    let out = fracvirial(&["--config", &dir_arg(&cfg), "--seed", "12", "evolve", "--amp-factor", "0.4", "--output-dir", &dir_arg(&d)]);
    assert_eq!(code(&out), 0);
    assert_ne!(fs::read(dirs[0].join("run_log.csv")).unwrap(), fs::read(d.join("run_log.csv")).unwrap());
}

#[test]
fn domain_subcommand_writes_eigenvalues_and_pohozaev_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fracvirial(&[
        "domain", "--a", "-1", "--b", "1", "--M", "63", "--s", "0.8", "--sigma", "2", "--amp-factor", "0.3", "--dt", "1e-3",
        "--tmax", "0.05", "--output-dir", &dir_arg(tmp.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let eig = fs::read_to_string(tmp.path().join("eigenvalues.csv")).unwrap();
    assert_eq!(eig.lines().count(), 64);
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("pohozaev.json")).unwrap()).unwrap();
    assert_eq!(rep["initial_state"]["passed"], true);
}

#[test]
fn groundstate_subcommand_reports_constants() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fracvirial(&[
        "groundstate", "--N", "1", "--s", "0.5", "--sigma", "0.5", "--grid", "4096", "--half-length", "256",
        "--output-dir", &dir_arg(tmp.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let c: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("constants.json")).unwrap()).unwrap();
    // Q = 2/(1+x^2) has mass 2 pi.
    let mass = c["mass"].as_f64().unwrap();
    assert!((mass - 2.0 * std::f64::consts::PI).abs() < 1e-3, "{mass}");
    let bytes = fs::read(tmp.path().join("ground_state.field")).unwrap();
    assert_eq!(bytes.len(), 40 + 16 * 4096);
}

#[test]
fn cutoff_certificate_suite_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fracvirial(&["suite", "cutoff-certificate", "--output-dir", &dir_arg(tmp.path())]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let rep: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("cutoff-certificate.json")).unwrap()).unwrap();
    assert_eq!(rep["passed"], true);
}
