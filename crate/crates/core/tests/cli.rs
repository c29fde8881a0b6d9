use std::path::Path;
use std::process::{Command, Output};

fn legbench(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_legbench"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("run legbench")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

#[test]
fn generate_solve_evaluate_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = legbench(&["generate", "--seed", "7", "--out", "suite", "--posture", "2", "--trajectory", "1"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.join("suite/manifest.json").is_file());

    let o = legbench(
        &["solve", "--instances", "suite", "--solutions", "sol", "--report", "r.csv", "--method", "sqp", "--condition", "in_collision"],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(d.join("r.csv")).unwrap();
    assert!(table.lines().count() >= 3, "{table}");

    let o = legbench(&["evaluate", "--instances", "suite", "--solutions", "sol"], d);
    assert_eq!(code(&o), 0, "{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr));

    let o = legbench(&["report", "--report", "r.csv", "r.csv", "--out", "merged.csv"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(d.join("merged.csv")).unwrap(), table);
}

#[test]
fn malformed_solution_fails_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&legbench(&["generate", "--out", "suite", "--posture", "1", "--trajectory", "0"], d)), 0);
    std::fs::create_dir(d.join("sol")).unwrap();
    std::fs::write(d.join("sol/posture_000.json"), "{\"instance_id\": \"posture_000\", \"waypoints\": [[1, 2]]}").unwrap();
    let o = legbench(&["evaluate", "--instances", "suite", "--solutions", "sol"], d);
    assert_eq!(code(&o), 1);
    assert!(!o.stderr.is_empty());
}

#[test]
fn usage_errors_exit_with_two() {
    let d = tempfile::tempdir().unwrap();
    for args in [
        &["solve", "--method", "newton"][..],
        &["solve", "--method", "sqp", "--condition", "bad"],
        &["frobnicate"],
        &["generate", "--posture", "many"],
    ] {
        assert_eq!(code(&legbench(args, d.path())), 2, "{args:?}");
    }
    let o = legbench(&["solve", "--method", "sqp", "--fraction", "0.5", "--instances", "none"], d.path());
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_suite_is_an_error() {
    let d = tempfile::tempdir().unwrap();
    let o = legbench(&["solve", "--method", "sqp", "--instances", "nowhere"], d.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn selftest_passes() {
    let d = tempfile::tempdir().unwrap();
    let o = legbench(&["selftest"], d.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn task_runs_share_one_records_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&legbench(&["generate", "--seed", "3", "--out", "suite", "--posture", "1", "--trajectory", "1"], d)), 0);
    for task in ["posture", "trajectory", "posture"] {
        let o = legbench(&["solve", "--instances", "suite", "--solutions", "sol", "--method", "sqp", "--task", task], d);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let records = std::fs::read_to_string(d.join("sol/sqp-100-good-ms10/records.csv")).unwrap();
    assert_eq!(records.lines().count(), 3, "{records}");
    assert_eq!(code(&legbench(&["evaluate", "--instances", "suite", "--solutions", "sol"], d)), 0);
}
