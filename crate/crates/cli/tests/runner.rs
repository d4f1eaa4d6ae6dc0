use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn rqj(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_rqj"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .arg("--workers")
        .arg("1")
        .output()
        .expect("binary runs")
}

fn meta(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("run_meta.json")).unwrap()).unwrap()
}

#[test]
fn qfunc_run_finds_two_peaks_and_records_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("q");
    let out = rqj(&dir, &["--mode", "QFUNC"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = meta(&dir);
    assert_eq!(m["incomplete"], false);
    for key in ["g", "kappa", "gamma_perp", "drive", "eta", "n_max", "q_n_re"] {
        assert!(m["config"][key].is_string(), "{key} not recorded");
    }
    let csv = fs::read_to_string(dir.join("qfunc.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("re,im,q"));
    assert_eq!(csv.lines().count(), 1 + 101 * 101);
    let peaks: Value =
        serde_json::from_str(&fs::read_to_string(dir.join("qfunc_peaks.json")).unwrap()).unwrap();
    assert_eq!(peaks["peaks"].as_array().unwrap().len(), 2);
}

#[test]
fn same_seed_gives_identical_trajectory_files() {
    let tmp = tempfile::tempdir().unwrap();
    let args = [
        "--mode", "SME_TRAJ", "--seed", "7", "--set", "variant=RWA", "--set", "n_max=8",
        "--set", "t_final=0.2",
    ];
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(rqj(&a, &args).status.success());
    assert!(rqj(&b, &args).status.success());
    let read = |d: &Path| fs::read(d.join("trajectory.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_eq!(
        String::from_utf8(read(&a)).unwrap().lines().next(),
        Some("t_us,i_hom_mhz,y_mean,p_plus,entropy_s,xi")
    );
}

#[test]
fn resolved_config_reruns_the_experiment() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    let out = rqj(
        &first,
        &["--mode", "PFE_TRAJ", "--set", "t_final=2", "--set", "snapshot_every=20000"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let snap = fs::read_to_string(first.join("snapshot_t1.csv")).unwrap();
    assert_eq!(snap.lines().next(), Some("y,p_plus,p_minus"));
    let second = tmp.path().join("second");
    let cfg = first.join("run.cfg");
    let out = rqj(&second, &["--config", cfg.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(
        fs::read(first.join("trajectory.csv")).unwrap(),
        fs::read(second.join("trajectory.csv")).unwrap()
    );
}

#[test]
fn invalid_config_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 3] = [
        &["--mode", "ME_STEADY", "--set", "eta=1.5"],
        &["--mode", "QFUNC", "--set", "drive=50"],
        &["--mode", "PFE_TRAJ", "--set", "colour=blue"],
    ];
    for (k, args) in cases.iter().enumerate() {
        let dir = tmp.path().join(format!("bad{k}"));
        let out = rqj(&dir, args);
        assert_eq!(out.status.code(), Some(2));
        assert!(!dir.exists(), "{args:?} created output");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn config_file_with_unknown_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "mode = ME_STEADY\nkappa = 40\ntypo_key = 1\n").unwrap();
    let out = rqj(&tmp.path().join("o"), &["--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("typo_key"));
}

#[test]
fn small_scaling_sweep_emits_points_and_exponents() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("s");
    let out = rqj(
        &dir,
        &[
            "--mode", "SCALING", "--set", "t_final=3", "--set", "scaling_g_values=120,240",
            "--set", "scaling_eta_values=0.5,1",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("scaling.csv")).unwrap();
    assert_eq!(
        csv.lines().next(),
        Some("g_mhz,kappa_mhz,gamma_perp_mhz,eta,inv_mean_inv_s,std_err")
    );
    assert_eq!(csv.lines().count(), 1 + 2 * 2 + 2);
    let exps: Value =
        serde_json::from_str(&fs::read_to_string(dir.join("scaling_exponents.json")).unwrap())
            .unwrap();
    assert!(exps["exponents"]["coupling"].is_array());
}

#[test]
fn ensemble_summary_has_the_documented_fields() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("e");
    let out = rqj(
        &dir,
        &[
            "--mode", "ENSEMBLE", "--set", "n_traj=4", "--set", "n_max=6", "--set", "variant=RWA",
            "--set", "t_final=0.01",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s: Value =
        serde_json::from_str(&fs::read_to_string(dir.join("ensemble_summary.json")).unwrap())
            .unwrap();
    for key in ["n_traj", "base_seed", "params", "trace_distance_vs_me"] {
        assert!(!s[key].is_null(), "{key}");
    }
    assert_eq!(s["trace_distance_vs_me"].as_array().unwrap().len(), 2);
}

#[test]
fn worker_count_falls_back_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("w");
    let out = Command::new(env!("CARGO_BIN_EXE_rqj"))
        .args(["--mode", "ME_STEADY", "--set", "n_max=6", "--out"])
        .arg(&dir)
        .env("RQJ_WORKERS", "3")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(meta(&dir)["workers"], 3);
    let bad = Command::new(env!("CARGO_BIN_EXE_rqj"))
        .args(["--mode", "ME_STEADY", "--out"])
        .arg(tmp.path().join("x"))
        .env("RQJ_WORKERS", "many")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}
