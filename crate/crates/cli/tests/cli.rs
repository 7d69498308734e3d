// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(rel: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(rel)
        .to_string_lossy()
        .into_owned()
}

fn svacov(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_svacov")).args(args).output().unwrap()
}

#[test]
fn version_and_help_exit_zero() {
    assert_eq!(svacov(&["--version"]).status.code(), Some(0));
    assert_eq!(svacov(&["--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_three() {
    assert_eq!(svacov(&["frobnicate"]).status.code(), Some(3));
    assert_eq!(svacov(&["report"]).status.code(), Some(3));
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = svacov(&[
        "iterate",
        "--spec",
        "/nonexistent/spec.md",
        "--glossary",
        &fixture("toy/signals.txt"),
        "--assertions",
        &fixture("toy/seed.jsonl"),
        "--synthetic",
        "perfect",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!out.exists());
}

#[test]
fn bad_inputs_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[clustering]\nfusion_weight = -1.0\n").unwrap();
    let o = svacov(&[
        "parse",
        "--in",
        &fixture("toy/seed.jsonl"),
        "--out",
        dir.path().join("p.json").to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let o = svacov(&[
        "semantics",
        "--in",
        dir.path().join("p.json").to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("s.json").to_str().unwrap(),
    ]);
    // An out-of-range setting is a bad argument; malformed input data is a validation failure.
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let junk = dir.path().join("junk.jsonl");
    std::fs::write(&junk, "not json\n").unwrap();
    let o = svacov(&[
        "parse",
        "--in",
        junk.to_str().unwrap(),
        "--out",
        dir.path().join("q.json").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn stage_commands_chain_into_a_mapping() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).to_string_lossy().into_owned();
    let cfg = fixture("toy/cfg.toml");
    let steps: Vec<Vec<String>> = vec![
        vec![
            "parse".into(),
            "--in".into(),
            fixture("toy/seed.jsonl"),
            "--out".into(),
            p("parsed.json"),
        ],
        vec![
            "semantics".into(),
            "--in".into(),
            p("parsed.json"),
            "--config".into(),
            cfg.clone(),
            "--out".into(),
            p("sem.json"),
        ],
        vec![
            "features".into(),
            "--in".into(),
            p("parsed.json"),
            "--config".into(),
            cfg.clone(),
            "--out".into(),
            p("struct.json"),
        ],
        vec![
            "cluster".into(),
            "--sem".into(),
            p("sem.json"),
            "--struct".into(),
            p("struct.json"),
            "--config".into(),
            cfg.clone(),
            "--out".into(),
            p("groups.json"),
        ],
        vec![
            "map".into(),
            "--groups".into(),
            p("groups.json"),
            "--subspecs".into(),
            fixture("toy/subspecs.json"),
            "--sem".into(),
            p("sem.json"),
            "--parsed".into(),
            p("parsed.json"),
            "--config".into(),
            cfg,
            "--out".into(),
            p("mapping.json"),
        ],
    ];
    for step in &steps {
        let args: Vec<&str> = step.iter().map(String::as_str).collect();
        let o = svacov(&args);
        assert!(
            o.status.success(),
            "{}: {}",
            step[0],
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let mapping: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p("mapping.json")).unwrap()).unwrap();
    assert_eq!(mapping["coverage_table"].as_array().unwrap().len(), 3);
}

#[test]
fn report_renders_a_finished_run() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let o = svacov(&[
        "iterate",
        "--spec",
        &fixture("toy/spec.md"),
        "--glossary",
        &fixture("toy/signals.txt"),
        "--assertions",
        &fixture("toy/seed.jsonl"),
        "--config",
        &fixture("toy/cfg.toml"),
        "--synthetic",
        "perfect",
        "--out",
        run.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = svacov(&["report", "--run", run.to_str().unwrap()]);
    assert!(o.status.success());
    let table = String::from_utf8(o.stdout).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.lines().next().unwrap().starts_with("round"));
    let o = svacov(&["report", "--run", run.to_str().unwrap(), "--format", "json"]);
    let rows: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 2);
}
