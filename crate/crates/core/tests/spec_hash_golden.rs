use std::path::PathBuf;
use std::process::Command;

use pythoness_core::spec::{hash_spec, CanonicalSpec, EngineOptions, FunctionSpec, RawTest};
use serde::Deserialize;

#[derive(Deserialize)]
struct Golden {
    #[serde(flatten)]
    spec: CanonicalSpec,
    digest: String,
}

fn data() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

fn corpus() -> Vec<Golden> {
    serde_json::from_slice(&std::fs::read(data().join("spec_hash_corpus.json")).unwrap()).unwrap()
}

#[test]
fn digests_match_the_independent_serializer() {
    let corpus = corpus();
    assert_eq!(corpus.len(), 1000);
    let mismatches: Vec<_> = corpus
        .iter()
        .filter(|g| g.spec.digest().as_str() != g.digest)
        .map(|g| g.spec.name.clone())
        .collect();
    assert!(mismatches.is_empty(), "{mismatches:?}");
}

#[test]
fn python_serializer_agrees_with_the_checked_in_corpus() {
    let status = Command::new("python3")
        .arg(data().join("spec_hash_corpus.py"))
        .arg("--check")
        .status()
        .expect("python3");
    assert!(status.success());
}

#[test]
fn options_do_not_affect_the_hash() {
    let make = |options| {
        FunctionSpec::from_raw("f", "(x: int) -> int", "d", vec![RawTest::text("assert f(1) == 1")], options).unwrap()
    };
    let a = make(EngineOptions::default());
    let b = make(EngineOptions {
        max_retries: 9,
        regenerate: true,
        ..EngineOptions::default()
    });
    assert_eq!(hash_spec(&a), hash_spec(&b));
}
