use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_singular-lab");

const MINIMAL: &str = r#"
seed = 3
diagnostics = ["monotonicity"]

[domain]
shape = { kind = "disk", radius = 1.0 }
h = 0.0625

[problem]
gamma = 1.0
f-preset = { kind = "manufactured" }
"#;

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn minimal_config_passes_with_small_monotonicity_defect() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), MINIMAL);
    let out = tmp.path().join("out");
    let o = run(&[], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["status"], "pass");
    assert_eq!(r["header"]["schema-version"], 1);
    for level in r["scheme"]["levels"].as_array().unwrap() {
        assert!(level["monotonicity_defect"].as_f64().unwrap() <= 1e-8);
    }
    let csv = std::fs::read_to_string(out.join("solution.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("index,x,y,u,delta,u_over_delta"));
    assert!(out.join("levels.csv").exists());
}

#[test]
fn run_alias_matches_solve() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), MINIMAL);
    let o = run(&["run"], &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(report(&tmp.path().join("out"))["command"], "solve");
}

#[test]
fn negative_gamma_is_a_config_error_naming_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &MINIMAL.replace("gamma = 1.0", "gamma = -1.0"));
    let out = tmp.path().join("out");
    let o = run(&[], &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("problem.gamma"));
    let r = report(&out);
    assert_eq!(r["status"], "config-error");
    assert_eq!(r["error"]["field"], "problem.gamma");
}

#[test]
fn unknown_diagnostic_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &MINIMAL.replace("\"monotonicity\"", "\"monotonicity\", \"bogus\""));
    let o = run(&[], &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}

#[test]
fn missing_config_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(BIN).arg("--out").arg(tmp.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn green_bounds_report_has_ratio_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &MINIMAL.replace("\"monotonicity\"", "\"green-bounds\""));
    let out = tmp.path().join("out");
    let o = run(&[], &cfg, &out);
    assert!(o.status.code() == Some(0) || o.status.code() == Some(1));
    let values = &report(&out)["diagnostics"]["entries"]["green-bounds"]["values"];
    assert!(values["rmin"].as_f64().unwrap() > 0.0);
    assert!(values["rmax"].as_f64().unwrap() >= values["rmin"].as_f64().unwrap());
    assert!(out.join("green_bounds.csv").exists());
}

#[test]
fn identical_runs_give_identical_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &MINIMAL.replace("\"monotonicity\"", "\"monotonicity\", \"l1-apriori\", \"kato-strong\""));
    let out = tmp.path().join("out");
    let strip = |mut v: Value| {
        v["header"]["timestamp"] = Value::Null;
        serde_json::to_string(&v).unwrap()
    };
    run(&[], &cfg, &out);
    let first = strip(report(&out));
    run(&[], &cfg, &out);
    assert_eq!(first, strip(report(&out)));
}

#[test]
fn smallness_check_on_identity_prints_both_variants() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), MINIMAL);
    let out = tmp.path().join("out");
    let o = run(&["smallness-check"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("\"value_linear\":0.0") && stdout.contains("\"value_squared\":0.0"), "{stdout}");
    assert!(stdout.contains("smallness: PASS"));
}

#[test]
fn uniqueness_probe_reports_small_pairwise_difference() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), MINIMAL);
    let out = tmp.path().join("out");
    let o = run(&["uniqueness-probe"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let d = report(&out)["summary"]["max-pairwise"].as_f64().unwrap();
    assert!(d <= 1e-6, "{d}");
}

#[test]
fn resolution_override_and_seed_are_applied() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), MINIMAL);
    let out = tmp.path().join("out");
    let o = run(&["--resolution-override", "0.125", "--seed", "42"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["config"]["domain"]["h"], 0.125);
    assert_eq!(r["config"]["seed"], 42);
}

#[test]
fn list_diagnostics_needs_no_config() {
    let o = Command::new(BIN).arg("--list-diagnostics").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&o.stdout);
    for name in ["monotonicity", "green-bounds", "uniqueness", "manufactured-error"] {
        assert!(stdout.contains(name));
    }
}

#[test]
fn convergence_study_emits_observed_order() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), MINIMAL);
    let out = tmp.path().join("out");
    let o = run(&["convergence-study"], &cfg, &out);
    assert!(matches!(o.status.code(), Some(0) | Some(1)));
    let r = report(&out);
    assert!(r["summary"]["observed-order"].is_number());
    assert!(out.join("manufactured_error.csv").exists());
}
