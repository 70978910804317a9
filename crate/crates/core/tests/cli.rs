use std::fs;
use std::process::Command;

fn inertia() -> Command {
    Command::new(env!("CARGO_BIN_EXE_inertia"))
}

#[test]
fn microsim_rest_point_is_unity() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ms");
    let status = inertia()
        .args(["microsim", "--rho", "0,0.6", "--jitter", "0", "--events", "5000", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let mut rdr = csv::Reader::from_path(out.join("sweep.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    let ratio = |i: usize| rows[i][1].parse::<f64>().unwrap();
    assert!((ratio(0) - 1.0).abs() < 1e-9);
    assert!((ratio(1) - 1.25).abs() < 1e-9);
    for f in ["resolved_config.json", "report.json", "verdict.csv", "plot_work_ratio.csv", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn unknown_key_is_a_config_error_with_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"experiment":"microsim","microsim":{"rhos":[0.1],"n_evnts":10}}"#).unwrap();
    let res = inertia().arg("microsim").arg("--config").arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("n_evnts"));
    assert!(!out.exists());
}

#[test]
fn mismatched_subcommand_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("shock.json");
    fs::write(&cfg, r#"{"experiment":"shock"}"#).unwrap();
    let out = dir.path().join("o");
    let res = inertia().arg("jcurve").arg("--config").arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(res.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    let status = inertia()
        .args(["microsim", "--rho", "0.2,0.5,0.8", "--events", "3000", "--seed", "4", "--out"])
        .arg(&first)
        .status()
        .unwrap();
    assert!(status.success());
    let second = dir.path().join("b");
    let status = inertia()
        .arg("microsim")
        .arg("--config")
        .arg(first.join("resolved_config.json"))
        .arg("--out")
        .arg(&second)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(fs::read(first.join("sweep.csv")).unwrap(), fs::read(second.join("sweep.csv")).unwrap());
}
