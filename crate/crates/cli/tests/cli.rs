// SPDX-License-Identifier: Apache-2.0

use std::path::Path;
use std::process::{Command, Output};

fn partsan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_partsan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn core_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../core"))
}

#[test]
fn lists_builtins() {
    let out = partsan(&["list-scenarios"]);
    assert!(out.status.success());
    let names: Vec<String> = stdout(&out).lines().map(str::to_string).collect();
    assert!(names.len() >= 12);
    assert_eq!(names[0], "listing1_overflow");
    assert!(names.iter().any(|n| n == "random_clean"));
}

#[test]
fn runs_a_builtin_by_name() {
    let out = partsan(&["run", "listing1_overflow"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("REPORT scenario=listing1_overflow seed=0"));
    assert!(text.contains("VIOLATION kind=LEFT_REDZONE part=1 addr=0x4f size=1 access=W step=5"));
    assert!(text.ends_with("VERDICT MATCH\n"));
}

#[test]
fn runs_a_scenario_file_and_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("report.json");
    let scenario = core_dir().join("scenarios/uninit_syscall_param.json");
    let out = partsan(&[
        "run",
        scenario.to_str().unwrap(),
        "--report",
        "json",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_path).unwrap()).unwrap();
    assert_eq!(report["verdict"], "MATCH");
    assert_eq!(report["violations"].as_array().unwrap().len(), 1);
}

#[test]
fn slowdown_override_exposes_the_deadline_miss() {
    let out = partsan(&[
        "run",
        "off_schedule_with_and_without_slowdown",
        "--slowdown-factor",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    assert!(text.contains("VIOLATION kind=DEADLINE_MISS"));
    assert!(text.contains("virtual_ticks=80"));
    assert!(text.ends_with("VERDICT MISMATCH\n"));

    let out = partsan(&[
        "run",
        "off_schedule_with_and_without_slowdown",
        "--slowdown-factor",
        "4/2",
    ]);
    assert!(out.status.success());
}

#[test]
fn legacy_flag_flags_the_regression() {
    let out = partsan(&["run", "get_my_id_regression", "--legacy-get-my-id"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("kind=CONTRACT"));
}

#[test]
fn granularity_must_be_supported() {
    let out = partsan(&["run", "listing1_overflow", "--granularity", "3"]);
    assert!(!out.status.success());
    let out = partsan(&["run", "listing1_overflow", "--granularity", "16"]);
    assert!(out.status.success());
}

#[test]
fn run_all_is_green_and_reproducible() {
    let a = partsan(&["run-all", "--seed", "11"]);
    let b = partsan(&["run-all", "--seed", "11"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout(&a).matches("VERDICT MATCH").count(), 13);

    let dir = tempfile::tempdir().unwrap();
    let out = partsan(&[
        "run-all",
        "--report",
        "json",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(dir.path().join("queueing_fifo.json").exists());
}

#[test]
fn parse_template_prints_the_spec() {
    let template = core_dir().join("scenarios/templates/jet_thread_status.syscall");
    let out = partsan(&["parse-template", template.to_str().unwrap()]);
    assert!(out.status.success());
    let spec: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(spec["user_name"], "jet_thread_status");
    assert_eq!(spec["syscall_name"], "jet_thread_get_status");
    assert_eq!(spec["params"].as_array().unwrap().len(), 4);
    assert_eq!(spec["pre_checks"].as_array().unwrap().len(), 1);
    assert_eq!(spec["post_checks"].as_array().unwrap().len(), 3);
}

#[test]
fn invalid_scenarios_name_the_offending_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"name": "bad", "partitions": [{"id": 1, "memory_size": "lots"}]}"#,
    )
    .unwrap();
    let out = partsan(&["run", path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/partitions/0/memory_size"));
}

#[test]
fn exported_scenarios_match_the_shipped_files() {
    let dir = tempfile::tempdir().unwrap();
    assert!(partsan(&["export-scenarios", dir.path().to_str().unwrap()])
        .status
        .success());
    for entry in std::fs::read_dir(dir.path()).unwrap() {
        let entry = entry.unwrap();
        let shipped = core_dir().join("scenarios").join(entry.file_name());
        assert_eq!(
            std::fs::read_to_string(entry.path()).unwrap(),
            std::fs::read_to_string(&shipped).unwrap(),
            "{}",
            shipped.display()
        );
    }
}
