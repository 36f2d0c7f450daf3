use std::path::Path;
use std::process::Command;

fn pass_sim() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pass-sim"));
    c.env_remove("PASS_SIM_OUT").env_remove("PASS_SIM_SEED");
    c
}

fn run_into(out: &Path, extra: &[&str]) -> std::process::Output {
    pass_sim()
        .args(["run", "--realizations", "4", "--out"])
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

#[test]
fn run_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_into(dir.path(), &["--schemes", "s2,tdd", "--dump-traces"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let results = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 3);
    assert!(results.starts_with("scheme,sweep_param,sweep_value,mean_sum_rate,std,n_feasible,n_skipped,"));
    assert!(dir.path().join("realizations.csv").exists());
    assert!(std::fs::read_dir(dir.path().join("traces")).unwrap().count() > 0);
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--sweep", "ue_power_dbm", "--values", "5,15", "--seed", "3"];
    assert_eq!(run_into(a.path(), &args).status.code(), Some(0));
    assert_eq!(run_into(b.path(), &args).status.code(), Some(0));
    for f in ["results.csv", "realizations.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn json_format() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_into(dir.path(), &["--schemes", "tdd", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("results.json")).unwrap()).unwrap();
    assert_eq!(v[0]["scheme"], "tdd");
}

#[test]
fn bad_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "num_realizations = \"many\"\n").unwrap();
    let o = pass_sim().args(["run", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = pass_sim().args(["run", "--config", "/nonexistent.toml"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn all_infeasible_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_into(dir.path(), &["--schemes", "s2", "--sweep", "ul_threshold_bps_hz", "--values", "1000000"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("results.csv").exists());
}

#[test]
fn default_config_parses_back() {
    let o = pass_sim().arg("default-config").output().unwrap();
    assert!(o.status.success());
    let cfg = pass_core::config::ScenarioConfig::from_toml_str(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(cfg, pass_core::config::ScenarioConfig::reference());
}

#[test]
fn channel_and_subproblem_dumps() {
    let o = pass_sim().args(["channel", "--realization", "2"]).output().unwrap();
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["realization"], 2);
    assert_eq!(v["mask"]["delta"].as_array().unwrap().len(), 10);

    let o = pass_sim().arg("subproblem").output().unwrap();
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("\nVER\n3\n"));
    assert_eq!(text.lines().filter(|l| *l == "EXP 3").count(), 4);
}
