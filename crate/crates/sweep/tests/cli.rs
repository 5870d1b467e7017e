use std::path::Path;
use std::process::{Command, Output};

fn ptmp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ptmp")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

const SMALL: &str = "[grid]\nn_bobs = [8, 32]\ndistances_km = [0.0, 10.0, 50.0]\n";

#[test]
fn keyrate_single_point() {
    let o = ptmp(&["keyrate", "--n", "8", "--distance-km", "10"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "distance_km,N,ratio,I_AB,chi_BE,I_BB_max,K_bit_per_pulse,K_bps,aggregate_bps,binding_adversary"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "10");
    assert_eq!(row[1], "8");
    let k: f64 = row[6].parse().unwrap();
    assert!((k - 0.028174).abs() < 1e-5, "{k}");
    assert_eq!(row[9], "Eve");
}

#[test]
fn sweep_csv_is_byte_stable_and_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert!(ptmp(&["sweep", "--config", &cfg, "--out", a.to_str().unwrap()]).status.success());
    assert!(ptmp(&["--threads", "1", "sweep", "--config", &cfg, "--out", b.to_str().unwrap()])
        .status
        .success());
    let (a, b) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    assert_eq!(a, b);
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 1 + 6);
}

#[test]
fn sweep_json_has_metadata_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = ptmp(&["sweep", "--config", &cfg, "--format", "json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 6);
    assert_eq!(v["rows"][1]["N"], 8);
    assert!(v["rows"][1]["K_bit_per_pulse"].as_f64().unwrap() > 1e-3);
    assert_eq!(v["metadata"]["config"]["grid"]["n_bobs"][1], 32);
    assert!(v["metadata"]["elapsed_s"].as_f64().is_some());
    assert_eq!(v["summary"]["max_secure_distance_km"]["8"], 50.0);
}

#[test]
fn worst_case_writes_ratio_family_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "mode = \"worst-case\"\n[grid]\nn_bobs = [8]\ndistances_km = [20.0]\nemit_ratio_family = true\n",
    );
    let out = dir.path().join("wc.csv");
    assert!(ptmp(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let fam = std::fs::read_to_string(dir.path().join("wc_ratios.csv")).unwrap();
    assert_eq!(fam.lines().count(), 1 + 11);
}

#[test]
fn bad_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[link]\ndetector_efficiency = 1.5\n");
    let o = ptmp(&["sweep", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("link.detector_efficiency"));

    let cfg = write_config(dir.path(), "[grid]\ndistance = [1.0]\n");
    let o = ptmp(&["sweep", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("distance"));
}

#[test]
fn unknown_figure_is_an_error() {
    let o = ptmp(&["figure", "fig9"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn figure_command_writes_and_checks() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig3a.csv");
    let o = ptmp(&["figure", "fig3a", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("PASS"));
    assert_eq!(std::fs::read_to_string(out).unwrap().lines().count(), 1 + 221);
}

#[test]
fn reduce_matches_closed_form() {
    let o = ptmp(&["reduce", "--n", "16", "--distance-km", "30"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["max_abs_difference"].as_f64().unwrap() < 1e-9);
    assert_eq!(v["steps"].as_array().unwrap().len(), 14);
}

#[test]
fn small_mc_run_flags_precision_and_keeps_analytic_column() {
    let run = |seed: &str| {
        let o = ptmp(&["mc-validate", "--pulses", "1000", "--seed", seed]);
        assert!(o.status.success());
        serde_json::from_str::<serde_json::Value>(&stdout(&o)).unwrap()
    };
    let (a, b) = (run("1"), run("2"));
    assert_eq!(a["status"], "insufficient-precision");
    assert_eq!(a["k_analytic"], b["k_analytic"]);
    let col = |v: &serde_json::Value| -> Vec<f64> {
        v["entries"].as_array().unwrap().iter().map(|e| e["analytic"].as_f64().unwrap()).collect()
    };
    assert_eq!(col(&a), col(&b));
    assert_ne!(a["max_abs_z"], b["max_abs_z"]);
}
