use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn repo() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn pythoness(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pythoness"))
        .args(args)
        .env_remove("PYTHONESS_CONFIG")
        .env_remove("PYTHONESS_BACKEND")
        .env_remove("PYTHONESS_CACHE_DIR")
        .output()
        .unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn version_reports_format_versions() {
    let out = pythoness(&["version", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["cache_format"], 1);
    assert!(v["version"].is_string());
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        &["frobnicate"][..],
        &["bench", "run", "corpus", "--mode", "sideways"],
        &["splice", "a.py", "--function", "f", "--all"],
        &["cache"],
    ] {
        assert_eq!(pythoness(args).status.code(), Some(2), "{args:?}");
    }
    let out = pythoness(&["--json", "frobnicate"]);
    assert_eq!(json(&out)["usage"], true);
}

#[test]
fn bad_config_is_an_expected_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "colour = 'blue'\n").unwrap();
    let out = pythoness(&["--json", "--config", s(&cfg), "cache", "list"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["ok"], false);
}

#[test]
fn config_file_supplies_the_cache_root() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("store");
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, format!("cache_root = {:?}\n", s(&root))).unwrap();
    let file = dir.path().join("m.py");
    std::fs::copy(repo().join("fixtures/max_inc_subarrays.py"), &file).unwrap();
    let script = repo().join("fixtures/max_inc_fixtures.json");
    let backend = format!("scripted:{}", s(&script));
    let out = pythoness(&["--config", s(&cfg), "synthesize", s(&file), "--backend", &backend]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_dir(&root).unwrap().count(), 1);

    let out = pythoness(&["--json", "cache", "list", "--root", s(&root), "--function", "maxIncSubarrays"]);
    assert_eq!(json(&out).as_array().unwrap().len(), 1);
    let out = pythoness(&["--json", "cache", "clear", "--root", s(&root)]);
    assert_eq!(json(&out)["removed"], 1);
}

#[test]
fn exhausted_synthesis_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("m.py");
    let stub = std::fs::read_to_string(repo().join("fixtures/max_inc_subarrays.py")).unwrap();
    std::fs::write(&file, stub.replace("max_retries=3", "max_retries=2")).unwrap();
    let backend = format!("scripted:{}", s(&repo().join("fixtures/max_inc_fixtures.json")));
    let root = dir.path().join("cache");
    let out = pythoness(&["--json", "synthesize", s(&file), "--backend", &backend, "--root", s(&root)]);
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out);
    assert_eq!(v["functions"][0]["status"], "FAILED");
    assert_eq!(v["backend_calls"], 2);
}
