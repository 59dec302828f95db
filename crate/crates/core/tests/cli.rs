use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use loorisk::report::{dataset_csv, verify_manifest};
use loorisk::Dataset;

const CONFIG: &str = r#"
[experiment]
kind = "table2"
reps = 3
seed = 5

[design]
ns = [24]
delta = 1.0
covariance = { kind = "identity_over_n" }
beta_dist = { kind = "gaussian_unit" }
family = { kind = "logistic" }

[model]
lambda = 0.4
loss = { family = "logistic" }
reg = { family = "ridge" }
"#;

fn loorisk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loorisk"))
        .args(args)
        .env_remove("LOORISK_THREADS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path) -> String {
    let p = dir.join("small.toml");
    fs::write(&p, CONFIG).unwrap();
    p.display().to_string()
}

#[test]
fn bounds_prints_both_constants() {
    let o = loorisk(&["bounds", "--rho", "1", "--delta", "1", "--lambda", "0.1", "--n", "100"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("C_b 1600"));
    assert!(s.contains("C_v 6511.518"));
    assert!(s.contains("published C_v 6311.52"));
}

#[test]
fn selftest_passes() {
    let o = loorisk(&["selftest"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, CONFIG.replace("reps = 3", "reps = 0")).unwrap();
    let o = loorisk(&["simulate", "table2", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("reps"));

    let typo = dir.path().join("typo.toml");
    fs::write(&typo, CONFIG.replace("reps = 3", "repz = 3")).unwrap();
    assert_eq!(loorisk(&["simulate", "table2", "--config", typo.to_str().unwrap()]).status.code(), Some(2));

    assert_eq!(loorisk(&["simulate", "table2", "--preset", "nonexistent"]).status.code(), Some(2));
    assert_eq!(loorisk(&["bounds", "--rho", "-1", "--delta", "1", "--lambda", "0.1"]).status.code(), Some(2));
    assert_eq!(loorisk(&["frobnicate"]).status.code(), Some(2));
    let cfg = write_config(dir.path());
    assert_eq!(loorisk(&["simulate", "table1", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn repeated_runs_give_identical_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let mut csvs = Vec::new();
    for (k, threads) in ["1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("run{k}"));
        let o = loorisk(&["--threads", threads, "simulate", "table2", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(verify_manifest(&out).unwrap());
        csvs.push(fs::read(out.join("results.csv")).unwrap());
        let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
        assert_eq!(report["config_echo"]["seed"], 5);
    }
    assert_eq!(csvs[0], csvs[1]);

    let out = dir.path().join("run0");
    fs::write(out.join("results.csv"), b"tampered").unwrap();
    assert!(!verify_manifest(&out).unwrap());
}

#[test]
fn risk_commands_read_csv_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let data = Dataset::from_rows(
        &[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![0.5, -1.0]],
        &[1.0, 0.0, 1.0, 0.0],
    )
    .unwrap();
    let csv = dir.path().join("data.csv");
    fs::write(&csv, dataset_csv(&data).unwrap()).unwrap();
    let c = csv.to_str().unwrap();

    let lo = loorisk(&["lo", "--config", &cfg, "--data", c]);
    let alo = loorisk(&["alo", "--config", &cfg, "--data", c]);
    let cv = loorisk(&["cv", "--config", &cfg, "--data", c, "-k", "4"]);
    for o in [&lo, &alo, &cv] {
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let value = |o: &Output| -> f64 { stdout(o).split_whitespace().nth(1).unwrap().parse().unwrap() };
    assert!(value(&lo) > 0.0);
    // four folds of four rows is leave-one-out
    assert_eq!(value(&lo), value(&cv));
    assert!((value(&lo) - value(&alo)).abs() < 0.1);

    let out = dir.path().join("fit");
    let f = loorisk(&["fit", "--config", &cfg, "--data", c, "--out", out.to_str().unwrap()]);
    assert!(f.status.success());
    let text = fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "j,beta_hat");
    assert_eq!(text.lines().count(), 3);

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "y,x1\n2,1\n0,1\n").unwrap();
    assert_eq!(loorisk(&["lo", "--config", &cfg, "--data", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn audit_reports_perturbation_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("audit");
    let o = loorisk(&["audit", "--config", &cfg, "--sample-i", "6", "--t-grid", "5", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("holds for 6/6"));
    assert!(verify_manifest(&out).unwrap());
}
