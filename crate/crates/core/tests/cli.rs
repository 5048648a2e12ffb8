use std::path::Path;
use std::process::{Command, Output};

use resect_core::planning::manifest::load_plan;
use resect_core::planning::validate_plan;

fn resect(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_resect"))
        .args(args)
        .current_dir(dir)
        .env_remove("RESECT_OUT_DIR")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_error_line(o: &Output, kind: &str) {
    let err = stderr(o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with(&format!("error kind={kind} message=\"")), "{err}");
}

#[test]
fn missing_trace_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = resect(dir.path(), &["metrics", "--trace", "missing.txt"]);
    assert_eq!(o.status.code(), Some(2));
    assert_error_line(&o, "io");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = resect(dir.path(), &["study", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert_error_line(&o, "usage");
    assert_eq!(resect(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn bad_config_fails_with_config_kind() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[study]\nn_participants = 1\n").unwrap();
    let o = resect(dir.path(), &["study", "--config", "bad.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert_error_line(&o, "config");
}

#[test]
fn plan_from_meshes_writes_a_valid_manifest() {
    let dir = tempfile::tempdir().unwrap();
    assert!(resect(dir.path(), &["demo", "--out", "demo"]).status.success());
    let o = resect(
        dir.path(),
        &["plan", "--liver", "demo/liver.ply", "--tumor", "demo/tumor.ply", "--margin", "10", "--out", "plan"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let plan = load_plan(dir.path().join("plan/plan.manifest")).unwrap();
    assert!(validate_plan(&plan, plan.liver()).all_passed());
}

#[test]
fn simulate_then_score_then_register() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(resect(d, &["demo", "--out", "demo"]).status.success());
    let o = resect(d, &["simulate", "--plan", "demo/plan.manifest", "--condition", "unguided", "--seed", "9", "--out", "t"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = resect(d, &["metrics", "--trace", "t/trace_unguided_9.txt", "--plan", "demo/plan.manifest"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    let rows = resect_core::metrics::parse_metrics_csv(&out).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].condition, resect_core::sim::Condition::Unguided);

    let o = resect(d, &["register", "--fiducials", "demo/fiducials.txt"]);
    assert!(String::from_utf8(o.stdout).unwrap().contains("fre_rms 0"));
}

#[test]
fn study_golden_run_writes_reports_and_analyze_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/demo.toml");
    let o = resect(d, &["study", "--config", cfg.to_str().unwrap(), "--seed", "42", "--out", "run"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["report.txt", "metrics.csv", "stats.csv", "participants.csv"] {
        assert!(d.join("run").join(f).is_file(), "{f}");
    }
    let report = std::fs::read_to_string(d.join("run/report.txt")).unwrap();
    assert!(report.starts_with("study seed=42 plan=demo\n"));

    let o = resect(d, &["analyze", "--metrics", "run/metrics.csv", "--out", "again"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let analysis = String::from_utf8(o.stdout).unwrap();
    assert!(report.contains(&analysis));
    assert_eq!(
        std::fs::read_to_string(d.join("again/stats.csv")).unwrap(),
        std::fs::read_to_string(d.join("run/stats.csv")).unwrap()
    );

    let o = Command::new(env!("CARGO_BIN_EXE_resect"))
        .args(["study", "--config", cfg.to_str().unwrap(), "--participants", "2", "--seed", "1"])
        .current_dir(d)
        .env("RESECT_OUT_DIR", "from_env")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(d.join("from_env/report.txt").is_file());
}
