use std::process::Command;

fn neurofem() -> Command {
    Command::new(env!("CARGO_BIN_EXE_neurofem"))
}

#[test]
fn unknown_experiment_is_a_usage_error() {
    let out = neurofem().args(["run", "no_such_experiment"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn list_names_every_experiment() {
    let out = neurofem().arg("list").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.contains("l1_residual_2d"));
}

#[test]
fn run_writes_artifacts_and_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[optimizer]\nmax_iters = 20\n\n[sweep]\nM = [10]\nalpha = []\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = neurofem()
        .args(["run", "point_value_lsq", "--seed", "3", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["seed"], 3);
    assert_eq!(summary["runs"][0]["label"], "M_10");
    for f in ["summary.json", "M_10/trace.csv", "M_10/solution.csv", "M_10/summary.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let header = std::fs::read_to_string(out_dir.join("M_10/trace.csv")).unwrap();
    assert!(header.starts_with("iter,cost,grad_norm,xi_l2\n"));
}

#[test]
fn bad_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[problem]\nunknown_key = 1\n").unwrap();
    let out = neurofem().args(["run", "total_variation", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_reports_a_passing_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("verify.toml");
    std::fs::write(&cfg, "experiment = \"point_value_minres\"\n\n[verify]\nsamples = 4\n").unwrap();
    let out = neurofem().args(["verify", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["samples"], 4);
}
