use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use twextract::circuit::Circuit;
use twextract::egraph::EGraph;
use twextract::fixtures;
use twextract::gen::chain_egraph;
use twextract::simplify::{replay, RewriteLog};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twextract"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_egraph(dir: &Path, name: &str, g: &EGraph) -> PathBuf {
    let p = dir.join(format!("{name}.json"));
    fs::write(&p, g.to_json().to_string()).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn convert_e1() {
    let dir = TempDir::new().unwrap();
    let e1 = write_egraph(dir.path(), "e1", &fixtures::e1());
    let o = run(&["convert", s(&e1)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let c = Circuit::from_json_str(&stdout(&o)).unwrap();
    assert_eq!(c.num_vertices(), 11);
    assert_eq!(c.num_outputs(), 1);
}

#[test]
fn empty_roots_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("bad.json");
    fs::write(&p, r#"{"nodes": {"a": {"op": "a", "children": [], "eclass": "A", "cost": 1}}, "root_eclasses": []}"#).unwrap();
    let o = run(&["extract", s(&p)]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    fs::write(&p, "not json").unwrap();
    assert_eq!(run(&["convert", s(&p)]).status.code(), Some(4));
}

#[test]
fn extract_e1() {
    let dir = TempDir::new().unwrap();
    let e1 = write_egraph(dir.path(), "e1", &fixtures::e1());
    let o = run(&["extract", s(&e1)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["choices"]["A"], "sqrt");
    assert_eq!(v["choices"]["B"], "two");
    assert_eq!(v["cost"], 2.0);
    assert_eq!(v["acyclic"], true);
}

#[test]
fn cyclic_only_needs_no_acyclic() {
    let dir = TempDir::new().unwrap();
    let p = write_egraph(dir.path(), "cyc", &fixtures::cyclic_only());
    let o = run(&["extract", s(&p)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unsatisfiable"), "{}", stderr(&o));

    let o = run(&["extract", s(&p), "--no-acyclic"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["acyclic"], false);
}

#[test]
fn tiny_timeout_exits_3() {
    let dir = TempDir::new().unwrap();
    let p = write_egraph(dir.path(), "chain", &chain_egraph(20_000, 1));
    let o = run(&["extract", s(&p), "--timeout", "0.001"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn stats_over_a_directory() {
    let dir = TempDir::new().unwrap();
    let src = dir.path().join("suite");
    fs::create_dir(&src).unwrap();
    write_egraph(&src, "a", &fixtures::e1());
    write_egraph(&src, "b", &fixtures::self_loop_egraph());
    write_egraph(&src, "c", &fixtures::cheap_cycle_egraph(1.0, 10.0));
    let csv = dir.path().join("out.csv");
    let o = run(&["stats", s(&src), "--csv", s(&csv)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let golden = include_str!("golden/header.csv");
    assert_eq!(lines[0], golden.trim_end());
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("suite,a,"));
    assert!(lines[3].starts_with("suite,c,"));
}

#[test]
fn no_rules_is_identity() {
    let dir = TempDir::new().unwrap();
    let e1 = write_egraph(dir.path(), "e1", &fixtures::e1());
    let circ = dir.path().join("c.json");
    assert!(run(&["convert", s(&e1), "-o", s(&circ)]).status.success());
    let o = run(&["simplify", s(&circ), "--rules", "none"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let before: Value = serde_json::from_str(&fs::read_to_string(&circ).unwrap()).unwrap();
    let after: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(before, after);
}

#[test]
fn emitted_log_replays_to_output() {
    let dir = TempDir::new().unwrap();
    let e1 = write_egraph(dir.path(), "e1", &fixtures::e1());
    let circ = dir.path().join("c.json");
    let log = dir.path().join("log.json");
    assert!(run(&["convert", s(&e1), "-o", s(&circ)]).status.success());
    let o = run(&["simplify", s(&circ), "--emit-log", s(&log)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let original = Circuit::from_json_str(&fs::read_to_string(&circ).unwrap()).unwrap();
    let simplified = Circuit::from_json_str(&stdout(&o)).unwrap();
    let log: RewriteLog = serde_json::from_str(&fs::read_to_string(&log).unwrap()).unwrap();
    assert!(!log.records.is_empty());
    let (replayed, _) = replay(&original, &log).unwrap();
    assert_eq!(replayed, simplified);
}

#[test]
fn check_file() {
    let dir = TempDir::new().unwrap();
    let e1 = write_egraph(dir.path(), "e1", &fixtures::e1());
    let o = run(&["check", s(&e1)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("MATCH cost=2"), "{}", stdout(&o));

    let big = write_egraph(dir.path(), "chain", &chain_egraph(40, 1));
    let o = run(&["check", s(&big)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("oracle skipped: too large"), "{}", stdout(&o));
}

#[test]
fn check_random_batch() {
    let o = run(&["check", "--seed", "11", "--count", "50"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("50/50 match"), "{}", stdout(&o));
}
