use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spincluster"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env("RUST_BACKTRACE", "0")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn entries(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    v.sort();
    v
}

fn cluster(dir: &TempDir) -> String {
    let path = dir.path().join("cluster.toml");
    fs::write(&path, "[[spins]]\ndelta = -1.64e6\nomega = 1.17e4\np = 0.3\n\n[[spins]]\ndelta = 0.87e6\np = 0.5\n").unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn help_for_every_command() {
    let dir = TempDir::new().unwrap();
    for cmd in [&[][..], &["constants"], &["resonance"], &["simulate"], &["fit"], &["locate"]] {
        let mut args = cmd.to_vec();
        args.push("--help");
        let out = run(dir.path(), &args);
        assert!(out.status.success());
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
    }
    assert!(!run(dir.path(), &[]).status.success());
    assert!(entries(dir.path()).is_empty());
}

#[test]
fn constants_report() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["constants"]);
    let v = json(&dir.path().join("constants.json"));
    assert_eq!(v["cfg"], "default");
    let k = v["dipolar_prefactor"].as_f64().unwrap();
    assert!((k * 1e27 - 1.30e7).abs() < 0.01e7, "{k}");
    let ratio = v["gamma_two_mu_b"].as_f64().unwrap() / v["gamma_mu_b"].as_f64().unwrap();
    assert!((ratio - 2.0).abs() < 1e-12);
}

#[test]
fn resonance_grid() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["resonance", "--points", "41", "--emit", "csv,json,svg"]);
    let csv = fs::read_to_string(dir.path().join("resonance.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 42);
    let v = json(&dir.path().join("resonance.json"));
    assert!((v["resonance_field"].as_f64().unwrap() - 0.0254).abs() < 1e-4);
    assert!(fs::read_to_string(dir.path().join("resonance.svg")).unwrap().starts_with("<svg"));

    let empty = TempDir::new().unwrap();
    ok(empty.path(), &["resonance", "--points", "0", "--emit", "csv,json,svg"]);
    let csv = fs::read_to_string(empty.path().join("resonance.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 1);
    assert_eq!(json(&empty.path().join("resonance.json"))["crossings"], 0);
    assert!(!empty.path().join("resonance.svg").exists());
}

#[test]
fn failures_leave_no_files() {
    let dir = TempDir::new().unwrap();
    let cfg = cluster(&dir);
    let out_dir = dir.path().join("out");
    fs::create_dir(&out_dir).unwrap();
    for args in [
        vec!["--config", cfg.as_str(), "simulate", "--builtin", "NOPE"],
        vec!["--config", cfg.as_str(), "simulate", "--builtin", "IDSE"],
        vec!["simulate", "--builtin", "DSE_D"],
        vec!["--emit", "csv,pdf", "constants"],
        vec!["resonance", "--b-min", "30", "--b-max", "10"],
        vec!["fit", "--model", "dse", "--data", "/no/such/file.csv"],
    ] {
        let out = run(&out_dir, &args);
        assert!(!out.status.success(), "{args:?}");
        assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
        assert!(entries(&out_dir).is_empty(), "{args:?}");
    }
}

#[test]
fn idse_pair_matches_closed_form() {
    let dir = TempDir::new().unwrap();
    let cfg = cluster(&dir);
    ok(dir.path(), &["--config", &cfg, "simulate", "--builtin", "IDSE", "--tau", "0.4", "--no-envelope"]);
    let v = json(&dir.path().join("IDSE.json"));
    let measured = v["phase_difference"].as_f64().unwrap();
    let predicted = v["predicted_phase_difference"].as_f64().unwrap();
    assert!((measured - predicted).abs() < 1e-6, "{measured} vs {predicted}");
    assert!((v["d"]["amplitude"].as_f64().unwrap() - v["u"]["amplitude"].as_f64().unwrap()).abs() < 1e-12);
    assert!(dir.path().join("IDSE_D.csv").exists() && dir.path().join("IDSE_U.csv").exists());
}

#[test]
fn idse_scan_feeds_the_phase_fit() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("one.toml");
    fs::write(&path, "[[spins]]\ndelta = -1.2e6\np = 0.6\n").unwrap();
    let cfg = path.to_str().unwrap();
    ok(dir.path(), &["--config", cfg, "--shots", "20000", "--seed", "5", "simulate", "--builtin", "IDSE_SCAN", "--scan", "0.05:1.5:30:us"]);
    let scan = dir.path().join("IDSE_SCAN.csv");
    ok(dir.path(), &["fit", "--model", "idse_phase", "--data", scan.to_str().unwrap(), "--select-n", "1..2"]);
    let v = json(&dir.path().join("fit.json"));
    let spins = v["spins"].as_array().unwrap();
    // Noise can buy a weak second spin; the configured one must be among the fitted.
    assert!(!spins.is_empty() && spins.len() <= 2);
    assert!(
        spins.iter().any(|s| (s["delta"].as_f64().unwrap() + 1.2e6).abs() < 3.0 * s["sigma_delta"].as_f64().unwrap()),
        "{spins:?}"
    );
}

#[test]
fn dse_trace_round_trips_through_fit() {
    let dir = TempDir::new().unwrap();
    let cfg = cluster(&dir);
    ok(dir.path(), &["--config", &cfg, "simulate", "--builtin", "DSE_U"]);
    ok(dir.path(), &["fit", "--model", "dse", "--data", dir.path().join("DSE_U.csv").to_str().unwrap()]);
    let v = json(&dir.path().join("fit.json"));
    let fit = &v["fits"][0];
    assert_eq!(fit["label"], "DSE_U");
    assert_eq!(fit["converged"], true);
}

#[test]
fn locate_with_uninformative_errors_is_uniform() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("obs.json");
    fs::write(&input, r#"{"spins":[{"label":"A","delta":1e6,"sigma_delta":1e300}]}"#).unwrap();
    let out = ok(dir.path(), &["locate", "--input", input.to_str().unwrap(), "--radius", "1.2"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("uniform"));
    let v = json(&dir.path().join("locate.json"));
    assert!(v["spins"][0]["warnings"].as_array().unwrap().iter().any(|w| w.as_str().unwrap().contains("uniform")));
    assert!(dir.path().join("locate_A.csv").exists());
}

#[test]
fn locate_merges_files_and_rejects_conflicts() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    fs::write(&a, r#"{"spins":[{"label":"N1","delta":-1.64e6,"sigma_delta":9e4}]}"#).unwrap();
    fs::write(&b, r#"{"spins":[{"label":"N1","omega":1.17e4,"sigma_omega":1.2e3}]}"#).unwrap();
    ok(dir.path(), &["locate", "--input", a.to_str().unwrap(), b.to_str().unwrap(), "--radius", "2"]);
    let v = json(&dir.path().join("locate.json"));
    assert_eq!(v["spins"].as_array().unwrap().len(), 1);
    assert_eq!(v["spins"][0]["observation"]["omega"].as_f64(), Some(1.17e4));

    let c = dir.path().join("c.json");
    fs::write(&c, r#"{"spins":[{"label":"N1","delta":0.5e6,"sigma_delta":9e4}]}"#).unwrap();
    let out_dir = dir.path().join("out");
    fs::create_dir(&out_dir).unwrap();
    let out = run(&out_dir, &["locate", "--input", a.to_str().unwrap(), c.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("different delta"));
    assert!(entries(&out_dir).is_empty());
}

#[test]
fn seeded_runs_are_repeatable() {
    let dir = TempDir::new().unwrap();
    let cfg = cluster(&dir);
    let args = ["--config", cfg.as_str(), "--shots", "500", "--seed", "11", "--emit", "csv,json,svg", "simulate", "--builtin", "HH"];
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        fs::create_dir(d).unwrap();
        ok(d, &args);
    }
    assert_eq!(entries(&a), entries(&b));
    for name in entries(&a) {
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name}");
    }
    let other = dir.path().join("c");
    fs::create_dir(&other).unwrap();
    let mut changed = args;
    changed[5] = "12";
    ok(&other, &changed);
    assert_ne!(fs::read(a.join("HH_ALT.csv")).unwrap(), fs::read(other.join("HH_ALT.csv")).unwrap());
}
