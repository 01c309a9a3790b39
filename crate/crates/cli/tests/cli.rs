use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_upqcqp"))
}

fn worked_instance() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/two_bus_upgrade.json")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn solve_finds_the_upgrade_and_check_accepts_its_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("cert.json");
    let prob = dir.path().join("prob.json");
    let net = worked_instance();

    let o = run(&[
        "solve",
        net.to_str().unwrap(),
        "-o",
        cert.to_str().unwrap(),
        "--jobs",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let out = stdout(&o);
    assert!(out.contains("a: 1\n"), "{out}");
    assert!(out.contains("objective: 1.5\n"), "{out}");

    let o = run(&["build", net.to_str().unwrap(), "-o", prob.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");

    let o = run(&["check", prob.to_str().unwrap(), cert.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    assert_eq!(stdout(&o).matches("\"satisfied\"").count(), 23);
}

#[test]
fn export_matches_build() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let net = worked_instance();
    assert!(
        run(&["build", net.to_str().unwrap(), "-o", a.to_str().unwrap()])
            .status
            .success()
    );
    assert!(
        run(&["export", net.to_str().unwrap(), "-o", b.to_str().unwrap()])
            .status
            .success()
    );
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn check_reports_violation_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let prob = dir.path().join("prob.json");
    let point = dir.path().join("point.json");
    let net = worked_instance();
    assert!(
        run(&["build", net.to_str().unwrap(), "-o", prob.to_str().unwrap()])
            .status
            .success()
    );
    // Both voltages zero: voltage rows fail.
    std::fs::write(
        &point,
        r#"{"version": "1", "a": [0], "scenarios": [{"z": [0, 0, 0, 0], "y": [0, 0, 0, 0]}]}"#,
    )
    .unwrap();
    let o = run(&["check", prob.to_str().unwrap(), point.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{o:?}");
}

#[test]
fn base_case_flow_shows_overload() {
    let net = worked_instance();
    let o = run(&["flow", net.to_str().unwrap(), "--scenario", "0", "--a", "0"]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let out = stdout(&o);
    assert!(out.contains("converged: true"), "{out}");
    assert!(out.contains("0.5356539"), "{out}");
}

#[test]
fn input_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let net = worked_instance();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"version\": \"1\",").unwrap();

    let o = run(&["solve", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));

    let o = run(&["flow", net.to_str().unwrap(), "--a", "01"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["flow", net.to_str().unwrap(), "--scenario", "3", "--a", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&[
        "build",
        dir.path().join("missing.json").to_str().unwrap(),
        "-o",
        "x",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn strict_flag_controls_unknown_fields() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(worked_instance())
        .unwrap()
        .replace("\"i_max\": 0.3}", "\"i_max\": 0.3, \"rating\": 2}");
    let net = dir.path().join("net.json");
    let prob = dir.path().join("prob.json");
    std::fs::write(&net, text).unwrap();
    let args = ["build", net.to_str().unwrap(), "-o", prob.to_str().unwrap()];
    assert_eq!(run(&args).status.code(), Some(2));
    let mut lenient = args.to_vec();
    lenient.extend(["--strict", "false"]);
    assert_eq!(run(&lenient).status.code(), Some(0));
}

#[test]
fn big_m_override_reaches_the_document() {
    let dir = tempfile::tempdir().unwrap();
    let prob = dir.path().join("prob.json");
    let net = worked_instance();
    let o = run(&[
        "--big-m",
        "50",
        "build",
        net.to_str().unwrap(),
        "-o",
        prob.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{o:?}");
    assert!(std::fs::read_to_string(&prob)
        .unwrap()
        .contains("\"big_m\": 50.0"));
}

#[test]
fn infeasible_instance_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(worked_instance()).unwrap().replace(
        "\"p_min\": -0.5, \"p_max\": -0.5",
        "\"p_min\": -0.9, \"p_max\": -0.9",
    );
    let net = dir.path().join("net.json");
    std::fs::write(&net, text).unwrap();
    let o = run(&[
        "solve",
        net.to_str().unwrap(),
        "-o",
        dir.path().join("c.json").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1), "{o:?}");
    assert!(stdout(&o).contains("infeasible"));
}
