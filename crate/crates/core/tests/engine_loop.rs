mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use pythoness_core::backends::{Backend, ScriptEntry, ScriptedBackend};
use pythoness_core::cache::Cache;
use pythoness_core::engine::{install, synthesize, Engine, SynthesisStatus};
use pythoness_core::header::Module;
use pythoness_core::spec::{EngineOptions, FunctionSpec, RawTest};
use pythoness_core::validation::{validate, Evidence, Outcome, PythonRuntime, ValidationConfig};
use pythoness_core::Error;
use serde_json::json;

fn cfg() -> ValidationConfig {
    ValidationConfig::with_seed(7)
}

#[test]
fn faulty_then_correct_is_repaired_on_attempt_two() {
    let spec = max_inc_spec();
    let backend = scripted(&["maxIncSubarrays_faulty", "maxIncSubarrays_correct"]);
    let r = synthesize(&spec, backend.as_ref(), None, &cfg()).unwrap();
    assert_eq!(r.status, SynthesisStatus::Synthesized);
    assert_eq!(r.attempts_used, 2);
    assert_eq!(r.reports[0].outcome, Outcome::TestFail);
    assert!(r.reports[1].passed());
    assert_eq!(backend.usage().calls, 2);
}

#[test]
fn description_only_accepts_the_faulty_candidate() {
    let spec = max_inc_spec().without_tests();
    let backend = scripted(&["maxIncSubarrays_faulty"]);
    let r = synthesize(&spec, backend.as_ref(), None, &cfg()).unwrap();
    assert_eq!(r.status, SynthesisStatus::Synthesized);
    assert_eq!(r.attempts_used, 1);
    assert!(r.code.unwrap().contains("range(1, len(nums) - 1)"));
}

#[test]
fn exhaustion_fails_and_caches_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cache = Cache::new(dir.path());
    let spec = max_inc_spec();
    let backend = scripted(&["maxIncSubarrays_faulty", "maxIncSubarrays_faulty2", "maxIncSubarrays_faulty"]);
    let r = synthesize(&spec, backend.as_ref(), Some(&cache), &cfg()).unwrap();
    assert_eq!(r.status, SynthesisStatus::Failed);
    assert_eq!(r.attempts_used, 3);
    assert_eq!(r.reports.len(), 3);
    assert!(cache.list().unwrap().is_empty());

    let err = install(&spec, &r, &PythonRuntime::default()).unwrap_err();
    let Error::Synthesis(failure) = err else { panic!("expected a synthesis error") };
    assert!(failure.message.contains("observed"), "{}", failure.message);
    assert!(failure.last_report.is_some());
}

#[test]
fn installed_function_matches_brute_force_oracle() {
    let spec = max_inc_spec();
    let backend = scripted(&["maxIncSubarrays_correct"]);
    let r = synthesize(&spec, backend.as_ref(), None, &cfg()).unwrap();
    let f = install(&spec, &r, &PythonRuntime::default()).unwrap();
    for nums in [vec![1, 2, 3, 4], vec![5, 4, 3, 2], vec![2, 5, 7, 8, 9, 2, 3, 4, 3, 1], vec![1, 3]] {
        let expected = max_inc_oracle(&nums);
        assert_eq!(f.call(&[json!(nums)]).unwrap(), json!(expected), "{nums:?}");
    }
    assert_eq!(max_inc_oracle(&[1, 2, 3, 4]), 2);
}

#[test]
fn accepted_code_revalidates_independently() {
    let spec = max_inc_spec();
    let backend = scripted(&["maxIncSubarrays_faulty", "maxIncSubarrays_correct"]);
    let r = synthesize(&spec, backend.as_ref(), None, &cfg()).unwrap();
    let again = validate(r.code.as_deref().unwrap(), &spec, &cfg());
    assert!(again.passed());
    assert_eq!(again, *r.last_report().unwrap());
}

#[test]
fn cache_hit_is_pure_and_edits_miss() {
    let dir = tempfile::tempdir().unwrap();
    let cache = Cache::new(dir.path());
    let spec = max_inc_spec();
    let first = synthesize(&spec, scripted(&["maxIncSubarrays_correct"]).as_ref(), Some(&cache), &cfg()).unwrap();

    let quiet = scripted(&["maxIncSubarrays_faulty"]);
    let hit = synthesize(&spec, quiet.as_ref(), Some(&cache), &cfg()).unwrap();
    assert_eq!(hit.status, SynthesisStatus::CachedHit);
    assert_eq!(hit.code, first.code);
    assert_eq!(quiet.usage().calls, 0);

    let mut edited = spec.clone();
    edited.description.push('!');
    let fresh = scripted(&["maxIncSubarrays_correct"]);
    let r = synthesize(&edited, fresh.as_ref(), Some(&cache), &cfg()).unwrap();
    assert_eq!(r.status, SynthesisStatus::Synthesized);
    assert_eq!(fresh.usage().calls, 1);

    let mut forced = spec.clone();
    forced.options.regenerate = true;
    let again = scripted(&["maxIncSubarrays_correct"]);
    assert_eq!(
        synthesize(&forced, again.as_ref(), Some(&cache), &cfg()).unwrap().status,
        SynthesisStatus::Synthesized
    );
}

fn simple_spec(timeout: f64) -> FunctionSpec {
    FunctionSpec::from_raw(
        "inc",
        "(x: int) -> int",
        "Adds one.",
        vec![RawTest::text("assert inc(1) == 2"), RawTest::text("assert inc(-1) == 0")],
        EngineOptions {
            test_timeout_seconds: timeout,
            ..EngineOptions::default()
        },
    )
    .unwrap()
}

#[test]
fn infinite_loop_times_out_then_repairs() {
    let spec = simple_spec(1.0);
    let backend = Arc::new(
        ScriptedBackend::new(
            "scripted",
            vec![
                ScriptEntry::any("```python\ndef inc(x: int) -> int:\n    while True:\n        pass\n```"),
                ScriptEntry::any("```python\ndef inc(x: int) -> int:\n    return x + 1\n```"),
            ],
        )
        .unwrap(),
    );
    let started = Instant::now();
    let r = synthesize(&spec, backend.as_ref(), None, &cfg()).unwrap();
    assert_eq!(r.reports[0].outcome, Outcome::Timeout);
    assert_eq!(r.status, SynthesisStatus::Synthesized);
    assert_eq!(r.attempts_used, 2);
    assert!(started.elapsed() < Duration::from_secs(6), "{:?}", started.elapsed());
}

#[test]
fn crashing_candidates_do_not_take_the_engine_down() {
    let spec = simple_spec(2.0);
    let backend = Arc::new(
        ScriptedBackend::new(
            "scripted",
            vec![
                ScriptEntry::any("```python\nimport os\n\ndef inc(x: int) -> int:\n    os._exit(3)\n```"),
                ScriptEntry::any("```python\nimport sys\nsys.setrecursionlimit(10**6)\n\ndef inc(x: int) -> int:\n    return inc(x)\n```"),
                ScriptEntry::any("```python\ndef inc(x: int) -> int:\n    return x + 1\n```"),
            ],
        )
        .unwrap(),
    );
    let r = synthesize(&spec, backend.as_ref(), None, &cfg()).unwrap();
    assert_eq!(r.reports[0].outcome, Outcome::RuntimeError);
    assert!(matches!(r.reports[1].outcome, Outcome::RuntimeError | Outcome::Timeout));
    assert_eq!(r.status, SynthesisStatus::Synthesized);
}

#[test]
fn float_return_is_a_structure_failure() {
    let spec = simple_spec(5.0);
    let r = validate("def inc(x: int) -> int:\n    return x + 1.0\n", &spec, &cfg());
    assert_eq!(r.outcome, Outcome::StructureFail);
    match &r.checks[1].evidence {
        Some(Evidence::ReturnType { value, .. }) => assert_eq!(value, "2.0"),
        other => panic!("{other:?}"),
    }
}

const MODULE: &str = r#"import pythoness

@pythoness.spec("Adds one.", tests=["assert inc(1) == 2"])
def inc(x: int) -> int:
    ...
"#;

#[test]
fn module_load_is_lazy_and_single_flight() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.py");
    std::fs::write(&path, MODULE).unwrap();
    let backend = Arc::new(
        ScriptedBackend::new("scripted", vec![ScriptEntry::any("def inc(x: int) -> int:\n    return x + 1\n")]).unwrap(),
    );
    let engine = Engine::new(backend.clone()).with_cache(Cache::new(dir.path().join("cache")));
    let module = engine.load_module(&path).unwrap();
    assert_eq!(backend.usage().calls, 0);
    let f = module.function("inc").unwrap();
    std::thread::scope(|s| {
        for i in 0..4 {
            s.spawn(move || assert_eq!(f.call(&[json!(i)]).unwrap(), json!(i + 1)));
        }
    });
    assert_eq!(backend.usage().calls, 1);
    assert_eq!(f.result().unwrap().status, SynthesisStatus::Synthesized);
}

#[test]
fn malformed_header_fails_at_load() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.py");
    std::fs::write(&path, MODULE.replace("tests=[\"assert inc(1) == 2\"]", "tests=42")).unwrap();
    assert!(matches!(Module::load(&path), Err(Error::Spec(_))));
}
