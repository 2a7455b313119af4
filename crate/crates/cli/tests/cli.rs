use std::process::Command;

fn hqnet() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hqnet"))
}

#[test]
fn writes_csv_with_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cost.csv");
    let status = hqnet()
        .args(["--scenario", "maintenance-cost", "--seed", "4", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "scenario,seed,param_name,param_value,fidelity_mean,fidelity_stderr,throughput_qps,pairs_consumed_mean,route_time_ms_mean,success_rate"
    );
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first.len(), 10);
    assert_eq!(first[0], "maintenance-cost");
    assert_eq!(first[1], "4");
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("eq.toml");
    std::fs::write(&cfg, "seed = 2\n[engine]\nsessions = 3\nwarmup_rounds = 2\n").unwrap();
    let out = hqnet()
        .args(["--scenario", "routing-equivalent", "--trials", "1", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().skip(1).all(|l| l.starts_with("routing-equivalent,2,")));
}

#[test]
fn errors_exit_nonzero() {
    let out = hqnet().args(["--scenario", "no-such-thing"]).output().unwrap();
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[env]\nloss_init = 7\n").unwrap();
    let out = hqnet()
        .args(["--scenario", "routing-equivalent", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let out = hqnet()
        .args(["--scenario", "routing-equivalent", "--config", "/nonexistent.toml"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
