use std::path::Path;
use std::process::{Command, Stdio};
use std::time::Duration;

use proptest::prelude::*;
use pythoness_core::cache::{Cache, CacheRecord, ValidationSummary};
use pythoness_core::spec::SpecHash;

fn hash(n: u64) -> SpecHash {
    SpecHash::parse(&format!("{n:064x}")).unwrap()
}

fn record(n: u64, name: &str, source: &str) -> CacheRecord {
    let mut summary = ValidationSummary::default();
    summary.passed.insert("ASSERTION".into(), (n % 7) as u32);
    summary.fuzz_seed = n;
    CacheRecord::new(hash(n), name, source, "scripted", 1 + (n % 3) as u32, summary)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn records_round_trip(n in any::<u64>(), name in "[a-z_][a-z0-9_]{0,20}", source in "\\PC{1,200}") {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path());
        let r = record(n, &name, &source);
        cache.put(&r).unwrap();
        prop_assert_eq!(cache.get(&r.spec_hash).unwrap(), Some(r));
    }
}

#[test]
fn ten_thousand_records_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cache = Cache::new(dir.path());
    let records: Vec<_> = (0..10_000u64)
        .map(|n| record(n, &format!("f{}", n % 13), &format!("def f():\n    return {n}\n")))
        .collect();
    for r in &records {
        cache.put(r).unwrap();
    }
    for r in &records {
        assert_eq!(cache.get(&r.spec_hash).unwrap().as_ref(), Some(r));
    }
    assert_eq!(cache.list().unwrap().len(), 10_000);
    assert_eq!(cache.clear(Some("f0")).unwrap(), (0..10_000).filter(|n| n % 13 == 0).count());
}

#[test]
fn truncated_records_are_quarantined() {
    let dir = tempfile::tempdir().unwrap();
    let cache = Cache::new(dir.path());
    let r = record(5, "f", "def f():\n    return 5\n");
    cache.put(&r).unwrap();
    let path = dir.path().join(r.spec_hash.as_str());
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    assert_eq!(cache.get(&r.spec_hash).unwrap(), None);
    assert!(path.with_extension("corrupt").exists());
    cache.put(&r).unwrap();
    assert_eq!(cache.get(&r.spec_hash).unwrap(), Some(r));
}

#[test]
fn foreign_format_versions_are_ignored_not_quarantined() {
    let dir = tempfile::tempdir().unwrap();
    let cache = Cache::new(dir.path());
    let mut r = record(6, "f", "x = 1\n");
    r.format_version = 99;
    let path = dir.path().join(r.spec_hash.as_str());
    std::fs::write(&path, r.to_bytes()).unwrap();
    assert_eq!(cache.get(&r.spec_hash).unwrap(), None);
    assert!(path.exists());
}

const WRITER_ENV: &str = "PYTHONESS_TEST_CACHE_WRITER";

/// Child half of `killed_writer_leaves_only_complete_records`.
#[test]
fn cache_writer_child() {
    let Ok(root) = std::env::var(WRITER_ENV) else { return };
    let cache = Cache::new(root);
    let big = "x = 1\n".repeat(20_000);
    for n in 0.. {
        cache.put(&record(n % 50, "f", &format!("{big}# {n}\n"))).unwrap();
    }
}

fn assert_all_complete(root: &Path) {
    let cache = Cache::new(root);
    for entry in std::fs::read_dir(root).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        let Some(h) = SpecHash::parse(&name) else { continue };
        let r = cache.get(&h).unwrap().expect("complete record");
        assert!(r.source_text.ends_with('\n'));
    }
    assert!(!std::fs::read_dir(root)
        .unwrap()
        .any(|e| e.unwrap().path().extension().is_some_and(|x| x == "corrupt")));
}

#[test]
fn killed_writer_leaves_only_complete_records() {
    let dir = tempfile::tempdir().unwrap();
    for delay_ms in [150, 260, 370] {
        let mut child = Command::new(std::env::current_exe().unwrap())
            .args(["--exact", "cache_writer_child", "--nocapture"])
            .env(WRITER_ENV, dir.path())
            .stdout(Stdio::null())
            .spawn()
            .unwrap();
        std::thread::sleep(Duration::from_millis(delay_ms));
        child.kill().unwrap();
        child.wait().unwrap();
        assert_all_complete(dir.path());
    }
    assert!(!Cache::new(dir.path()).list().unwrap().is_empty());
}
