use std::process::Command;

fn saddletd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_saddletd"))
}

#[test]
fn run_writes_artifacts_and_report_reads_them() {
    let dir = tempfile::tempdir().unwrap();
    let out = saddletd()
        .args(["run", "--domain", "baird", "--algo", "gtd2", "--algo", "td0", "--steps", "400", "--runs", "2"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["curves.csv", "summary.csv", "bounds.csv", "config.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let report = saddletd().arg("report").arg("--in").arg(dir.path()).output().unwrap();
    assert!(report.status.success());
    let text = String::from_utf8(report.stdout).unwrap();
    assert!(text.contains("4 runs") && text.contains("gtd2") && text.contains("mspbe"), "{text}");
}

#[test]
fn config_file_is_honored_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    std::fs::write(
        &config,
        r#"{"domain": "chain50", "n_steps": 200, "n_runs": 1, "cadence": 50,
            "learners": [{"algorithm": "gtd2_mp", "schedule": {"kind": "constant", "alpha": 0.01}}]}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = saddletd()
        .arg("run")
        .arg("--config")
        .arg(&config)
        .args(["--runs", "2", "--seed", "9"])
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let written: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(written["domain"], "chain50");
    assert_eq!(written["n_runs"], 2);
    assert_eq!(written["seed"], 9);
    assert_eq!(written["learners"][0]["algorithm"], "gtd2_mp");
}

#[test]
fn sweep_writes_one_directory_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = saddletd()
        .args(["sweep", "--domain", "chain50", "--algo", "gtd", "--param", "alpha", "--values", "0.01,0.02"])
        .args(["--steps", "200", "--runs", "1", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("alpha=0.01/curves.csv").exists());
    assert!(dir.path().join("alpha=0.02/curves.csv").exists());
}

#[test]
fn check_bounds_prints_both_metrics() {
    let out = saddletd().args(["check-bounds", "--domain", "chain50", "--n", "1000", "--delta", "0.1"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("identity") && text.contains("covariance"));
    assert!(text.contains("norms dominated by their bounds: true"));
}

#[test]
fn bad_input_fails() {
    assert!(!saddletd().args(["run", "--algo", "nope"]).output().unwrap().status.success());
    assert!(!saddletd().args(["run", "--steps", "100", "--cadence", "30"]).output().unwrap().status.success());
    assert!(!saddletd().args(["report", "--in", "/nonexistent/dir"]).output().unwrap().status.success());
}
