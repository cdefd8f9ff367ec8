//! The `weave` binary: exit codes and end-to-end flows.

use std::path::Path;
use std::process::{Command, Output};

fn weave(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weave"))
        .current_dir(dir)
        .env_remove("ORACLE_ENDPOINT")
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn ingest_query_audit_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("notes.txt"),
        "the violin needs new strings\n\nthe orchard flooded in spring\nreactor coolant pumps were replaced\n",
    )
    .unwrap();
    let o = weave(dir.path(), &["--data-dir", "d", "ingest-file", "notes.txt", "--user-tag", "ana"]);
    assert!(o.status.success(), "{o:?}");
    let ids: Vec<String> = stdout(&o).lines().map(str::to_string).collect();
    assert_eq!(ids.len(), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("ingested 3 particles"));

    let o = weave(dir.path(), &["--data-dir", "d", "query", "--text", "the orchard flooded in spring", "--k", "1"]);
    assert!(o.status.success(), "{o:?}");
    let r: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(r["hits"][0]["id"], ids[1].as_str());

    let o = weave(dir.path(), &["--data-dir", "d", "audit"]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    assert_eq!(stdout(&o).trim(), "0 violations");

    let o = weave(dir.path(), &["--data-dir", "d", "checkpoint"]);
    assert!(o.status.success(), "{o:?}");
    let o = weave(dir.path(), &["--data-dir", "d", "stats"]);
    let s: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(s["particle_count"], 3);
}

#[test]
fn default_data_dir_is_created() {
    let dir = tempfile::tempdir().unwrap();
    assert!(weave(dir.path(), &["stats"]).status.success());
    assert!(dir.path().join("weave-data").is_dir());
}

#[test]
fn usage_and_validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(weave(dir.path(), &["no-such-command"]).status.code(), Some(1));
    assert_eq!(weave(dir.path(), &["query", "--lo", "5"]).status.code(), Some(1));
    assert_eq!(weave(dir.path(), &["query"]).status.code(), Some(1));
    assert_eq!(weave(dir.path(), &["query", "--text", "x", "--type-filter", "sideways"]).status.code(), Some(1));
    assert_eq!(weave(dir.path(), &["--help"]).status.code(), Some(0));
    std::fs::write(dir.path().join("bad.toml"), "no_such_key = 1\n").unwrap();
    assert_eq!(weave(dir.path(), &["--config", "bad.toml", "stats"]).status.code(), Some(1));
}

#[test]
fn gen_workload_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = weave(dir.path(), &["gen-workload", "--n", "50", "--seed", "3"]);
    let b = weave(dir.path(), &["gen-workload", "--n", "50", "--seed", "3"]);
    let c = weave(dir.path(), &["gen-workload", "--n", "50", "--seed", "4"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    assert_eq!(stdout(&a).lines().count(), 50);
}

#[test]
fn small_bench_reports_an_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let o = weave(dir.path(), &["bench", "--sizes", "200,400", "--queries", "8", "--csv", "r.csv"]);
    assert!(o.status.success(), "{o:?}");
    let r: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(r["rows"].as_array().unwrap().len(), 2);
    assert!(r["fitted_exponent"].is_number());
    assert!(std::fs::read_to_string(dir.path().join("r.csv")).unwrap().starts_with("store_size,"));
    assert_eq!(weave(dir.path(), &["bench", "--sizes", "400,200"]).status.code(), Some(1));
}
