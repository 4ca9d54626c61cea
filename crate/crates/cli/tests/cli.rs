use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn msrank() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_msrank"));
    c.env_remove("MSRANK_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    msrank().args(args).output().expect("spawn msrank")
}

fn write_data(dir: &Path, n: usize) -> PathBuf {
    let path = dir.join("data.csv");
    let mut s = String::from("x,y\n");
    for i in 1..=n {
        let x = i as f64 / n as f64;
        let bump = if (0.4..0.6).contains(&x) { 2.0 } else { 0.0 };
        let noise = ((i * 7919) % 97) as f64 / 48.5 - 1.0;
        s.push_str(&format!("{x},{}\n", bump + noise));
    }
    std::fs::write(&path, s).unwrap();
    path
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    let help = run(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    let text = String::from_utf8_lossy(&help.stdout);
    for sub in ["test", "gauss-test", "constants", "level-sim", "power-sim", "compare-sim", "oracle"] {
        assert!(text.contains(sub), "missing {sub} in help");
    }
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    let sub_help = String::from_utf8_lossy(&run(&["test", "--help"]).stdout).to_string();
    for flag in ["--kernel", "--min-window", "--policy", "--alpha", "--mc", "--seed", "--one-sided", "--threads", "--svg"] {
        assert!(sub_help.contains(flag), "missing {flag}");
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    let dir = TempDir::new().unwrap();
    let data = write_data(dir.path(), 20);
    let data = data.to_str().unwrap();
    assert_eq!(run(&["test", data, "--header", "--kernel", "holder:2"]).status.code(), Some(1));
    assert_eq!(run(&["test", data, "--header", "--alpha", "1.5"]).status.code(), Some(1));
    assert_eq!(run(&["test", data, "--header", "--min-window", "1"]).status.code(), Some(1));
}

#[test]
fn data_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let dup = dir.path().join("dup.csv");
    std::fs::write(&dup, "0.1,1\n0.1,2\n0.2,3\n").unwrap();
    let out = run(&["test", dup.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("0.1"));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "0.1,1\n0.2,oops\n").unwrap();
    let out = run(&["test", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"));

    let short = dir.path().join("short.csv");
    std::fs::write(&short, "0.1,1\n").unwrap();
    assert_eq!(run(&["test", short.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["test", dir.path().join("missing.csv").to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn report_is_deterministic_and_consistent() {
    let dir = TempDir::new().unwrap();
    let data = write_data(dir.path(), 60);
    let data = data.to_str().unwrap();
    let svg_a = dir.path().join("a.svg");
    let svg_b = dir.path().join("b.svg");
    let a = run(&["test", data, "--header", "--mc", "199", "--seed", "5", "--svg", svg_a.to_str().unwrap()]);
    let b = run(&["test", data, "--header", "--mc", "199", "--seed", "5", "--svg", svg_b.to_str().unwrap()]);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(std::fs::read(&svg_a).unwrap(), std::fs::read(&svg_b).unwrap());

    let r = json(&a);
    assert_eq!(r["n"], 60);
    assert_eq!(r["replicates"], 199);
    assert_eq!(r["reject"].as_bool().unwrap(), !r["minimal_intervals"].as_array().unwrap().is_empty());
    assert!(r["timing_ms"].is_null());
    let kappa = r["kappa"].as_f64().unwrap();
    assert_eq!(r["reject"].as_bool().unwrap(), r["t_n"].as_f64().unwrap() > kappa);
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = TempDir::new().unwrap();
    let data = write_data(dir.path(), 50);
    let data = data.to_str().unwrap();
    let outputs: Vec<Vec<u8>> = ["1", "4", "8"]
        .iter()
        .map(|t| run(&["test", data, "--header", "--mc", "199", "--seed", "9", "--threads", t]).stdout)
        .collect();
    assert!(!outputs[0].is_empty());
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn seed_from_environment_and_flag_override() {
    let dir = TempDir::new().unwrap();
    let data = write_data(dir.path(), 30);
    let data = data.to_str().unwrap();
    let env = msrank().env("MSRANK_SEED", "42").args(["test", data, "--header", "--mc", "99"]).output().unwrap();
    assert_eq!(json(&env)["seed"], 42);
    let flag = msrank()
        .env("MSRANK_SEED", "42")
        .args(["test", data, "--header", "--mc", "99", "--seed", "7"])
        .output()
        .unwrap();
    assert_eq!(json(&flag)["seed"], 7);
}

#[test]
fn header_flag_matches_headerless_body() {
    let dir = TempDir::new().unwrap();
    let with = dir.path().join("with.csv");
    let without = dir.path().join("without.csv");
    std::fs::write(&with, "x,y\n0.2,1.0\n0.1,-2.0\n0.3,0.5\n").unwrap();
    std::fs::write(&without, "0.2,1.0\n0.1,-2.0\n0.3,0.5\n").unwrap();
    let a = run(&["test", with.to_str().unwrap(), "--header", "--mc", "19"]);
    let b = run(&["test", without.to_str().unwrap(), "--mc", "19"]);
    assert_eq!(json(&a), json(&b));
}

#[test]
fn gauss_test_reports_sigma() {
    let dir = TempDir::new().unwrap();
    let data = write_data(dir.path(), 40);
    let out = run(&["gauss-test", data.to_str().unwrap(), "--header", "--mc", "99", "--sigma", "2"]);
    let r = json(&out);
    assert_eq!(r["method"], "gaussian");
    assert_eq!(r["sigma"].as_f64(), Some(2.0));
    let est = json(&run(&["gauss-test", data.to_str().unwrap(), "--header", "--mc", "99"]));
    assert!(est["sigma"].as_f64().unwrap() > 0.0);
}

#[test]
fn constants_for_the_normal_law() {
    let r = json(&run(&["constants", "--law", "normal:1", "--beta", "1", "--L", "1", "--n", "100"]));
    assert!((r["efficiency"].as_f64().unwrap() - 3.0 / std::f64::consts::PI).abs() < 1e-9);
    assert!((r["d_star_lower"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn oracle_enumerates_small_samples() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("small.csv");
    std::fs::write(&p, "1,0.5\n2,-1\n3,2\n4,0.1\n5,3\n6,-0.2\n").unwrap();
    let r = json(&run(&["oracle", p.to_str().unwrap()]));
    let atoms = r["atoms"].as_array().unwrap();
    let total: f64 = atoms.iter().map(|a| a[1].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
    let p_value = r["p_value"].as_f64().unwrap();
    assert!(p_value > 0.0 && p_value <= 1.0);

    let big = write_data(dir.path(), 20);
    assert_eq!(run(&["oracle", big.to_str().unwrap(), "--header"]).status.code(), Some(1));
}

#[test]
fn simulations_write_json_and_csv() {
    let dir = TempDir::new().unwrap();
    let level_csv = dir.path().join("level.csv");
    let out = run(&[
        "level-sim", "--n", "20", "--datasets", "10", "--mc", "19", "--law", "normal:1", "--law", "t:3",
        "--csv", level_csv.to_str().unwrap(),
    ]);
    let r = json(&out);
    assert_eq!(r.as_array().unwrap().len(), 2);
    let table = std::fs::read_to_string(&level_csv).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.starts_with("law,hetero,n,datasets,alpha,replicates,rejections,rate,se"));

    let power_csv = dir.path().join("power.csv");
    let r = json(&run(&[
        "power-sim", "--n", "20", "--datasets", "8", "--mc", "19", "--amplitudes", "0,4", "--rho-units",
        "--csv", power_csv.to_str().unwrap(),
    ]));
    let points = r["points"].as_array().unwrap();
    assert_eq!(points.len(), 2);
    assert!((points[1]["amplitude_rho"].as_f64().unwrap() - 4.0).abs() < 1e-12);
    assert_eq!(std::fs::read_to_string(&power_csv).unwrap().lines().count(), 3);

    let cmp_csv = dir.path().join("cmp.csv");
    let r = json(&run(&["compare-sim", "--n", "20", "--datasets", "6", "--mc", "19", "--csv", cmp_csv.to_str().unwrap()]));
    assert_eq!(r["sigma"], format!("{}", 3f64.sqrt()));
    assert_eq!(std::fs::read_to_string(&cmp_csv).unwrap().lines().count(), 3);
}

#[test]
fn config_file_supplies_defaults() {
    let dir = TempDir::new().unwrap();
    let data = write_data(dir.path(), 30);
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"alpha": 0.05, "mc": 39, "seed": 11, "kernel": "rect", "header": true}"#).unwrap();
    let r = json(&run(&["--config", cfg.to_str().unwrap(), "test", data.to_str().unwrap()]));
    assert_eq!(r["alpha"].as_f64(), Some(0.05));
    assert_eq!(r["replicates"], 39);
    assert_eq!(r["seed"], 11);
    assert_eq!(r["kernel"], "rect");
    let r = json(&run(&["--config", cfg.to_str().unwrap(), "test", data.to_str().unwrap(), "--mc", "19"]));
    assert_eq!(r["replicates"], 19);

    std::fs::write(&cfg, r#"{"alhpa": 0.05}"#).unwrap();
    assert_eq!(run(&["--config", cfg.to_str().unwrap(), "test", data.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn table_format_and_out_file() {
    let dir = TempDir::new().unwrap();
    let data = write_data(dir.path(), 30);
    let out = dir.path().join("report.txt");
    let o = run(&["test", data.to_str().unwrap(), "--header", "--mc", "19", "--format", "table", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    assert!(std::fs::read_to_string(&out).unwrap().contains("kappa"));
}
