//! The generate / validate / repair loop and lazy installation of its result.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use crate::backends::Backend;
use crate::cache::{Cache, CacheRecord, ValidationSummary};
use crate::error::{Error, Result, SynthesisFailure};
use crate::header::Module;
use crate::prompting::{
    build_augmentation_prompt, build_formalization_prompt, build_generation_prompt, build_repair_prompt,
    extract_code, parse_augmentation, parse_formalization, CandidateCode,
};
use crate::spec::{FunctionSpec, SpecHash, TestSpec};
use crate::validation::{
    return_check, run_tests, validate, CandidateSession, CheckKind, CheckResult, PythonRuntime, ValidationConfig,
    ValidationReport, WorkerFailure,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SynthesisStatus {
    CachedHit,
    Synthesized,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub status: SynthesisStatus,
    pub code: Option<String>,
    pub attempts_used: u32,
    /// One report per attempt, in order. Empty for a cache hit.
    pub reports: Vec<ValidationReport>,
    pub spec_hash: SpecHash,
    /// Checks run after acceptance: formalized natural-language tests and
    /// augmentation tests. They never affect `status`.
    #[serde(default)]
    pub advisory: Vec<CheckResult>,
    /// Augmentation tests the accepted code passes.
    #[serde(default)]
    pub augmented_tests: Vec<TestSpec>,
    #[serde(default)]
    pub candidates: Vec<CandidateCode>,
}

impl SynthesisResult {
    pub fn last_report(&self) -> Option<&ValidationReport> {
        self.reports.last()
    }

    /// Summary of why synthesis failed, built from the last report.
    pub fn failure(&self, function: &str) -> SynthesisFailure {
        let last = self.last_report().cloned();
        let message = last
            .as_ref()
            .and_then(|r| r.first_failed_check())
            .map(|c| {
                let evidence = c.evidence.as_ref().map(|e| e.render()).unwrap_or_default();
                format!("{}\n{evidence}", c.subject).trim_end().to_string()
            })
            .unwrap_or_else(|| "no candidate was produced".into());
        SynthesisFailure {
            function: function.to_string(),
            attempts: self.attempts_used,
            message,
            last_report: last,
        }
    }
}

/// Fills in the spec's backend identity from `backend`, or checks that the
/// two agree when the header names a model.
pub fn bind_backend(spec: &FunctionSpec, backend: &dyn Backend) -> Result<FunctionSpec> {
    let id = backend.id();
    if spec.options.backend_id.is_empty() {
        return Ok(spec.clone().with_backend_id(id));
    }
    if spec.options.backend_id != id {
        return Err(Error::Config(format!(
            "`{}` asks for backend `{}` but the engine is configured with `{id}`",
            spec.name, spec.options.backend_id
        )));
    }
    Ok(spec.clone())
}

fn say(verbose: bool, message: impl AsRef<str>) {
    if verbose {
        log::info!("{}", message.as_ref());
    } else {
        log::debug!("{}", message.as_ref());
    }
}

fn nl_texts(spec: &FunctionSpec) -> Vec<String> {
    spec.tests
        .iter()
        .filter_map(|t| match t {
            TestSpec::NaturalLanguage { text } => Some(text.clone()),
            _ => None,
        })
        .collect()
}

fn summary(report: &ValidationReport, spec: &FunctionSpec, config: &ValidationConfig) -> ValidationSummary {
    let passed = report
        .passed_by_kind()
        .into_iter()
        .map(|(kind, n)| (kind_name(kind), n))
        .collect();
    ValidationSummary {
        passed,
        fuzz_seed: config.seed,
        fuzz_samples: spec.options.fuzz_samples,
    }
}

fn kind_name(kind: CheckKind) -> String {
    serde_json::to_value(kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

/// Runs the loop for one spec.
///
/// A cache hit (unless `regenerate` is set) returns without calling the
/// backend. Otherwise attempt 1 sends the generation prompt and later
/// attempts send a repair prompt built from the previous candidate and its
/// report. The first passing candidate is cached and returned. Backend
/// failures end the loop early with a backend report as the last entry.
///
/// Returns `Err` only for configuration problems such as a backend that
/// does not match the header's `model`.
pub fn synthesize(
    spec: &FunctionSpec,
    backend: &dyn Backend,
    cache: Option<&Cache>,
    config: &ValidationConfig,
) -> Result<SynthesisResult> {
    let spec = bind_backend(spec, backend)?;
    let hash = spec.hash();
    let verbose = spec.options.verbose;

    if !spec.options.regenerate {
        if let Some(cache) = cache {
            match cache.get(&hash) {
                Ok(Some(record)) => {
                    say(verbose, format!("{}: cache hit {}", spec.name, hash));
                    return Ok(SynthesisResult {
                        status: SynthesisStatus::CachedHit,
                        code: Some(record.source_text),
                        attempts_used: 0,
                        reports: vec![],
                        spec_hash: hash,
                        advisory: vec![],
                        augmented_tests: vec![],
                        candidates: vec![],
                    });
                }
                Ok(None) => {}
                Err(e) => log::warn!("cache lookup for `{}` failed: {e}", spec.name),
            }
        }
    }

    let mut result = SynthesisResult {
        status: SynthesisStatus::Failed,
        code: None,
        attempts_used: 0,
        reports: vec![],
        spec_hash: hash.clone(),
        advisory: vec![],
        augmented_tests: vec![],
        candidates: vec![],
    };
    let mut vconfig = config.clone();

    if spec.options.strict_nl {
        for nl in nl_texts(&spec) {
            let raw = match backend.complete(&build_formalization_prompt(&nl, &spec)) {
                Ok(raw) => raw,
                Err(e) => {
                    result.reports.push(ValidationReport::backend_failure(e.to_string()));
                    return Ok(result);
                }
            };
            match parse_formalization(&raw, &spec) {
                Some(test) => {
                    say(verbose, format!("{}: formalized `{nl}` as `{}`", spec.name, test.text()));
                    vconfig.formalized.insert(nl, test);
                }
                None => log::warn!(
                    "`{}`: could not formalize `{nl}`; it only guides generation",
                    spec.name
                ),
            }
        }
    }

    let mut previous: Option<(CandidateCode, ValidationReport)> = None;
    for attempt in 1..=spec.options.max_retries {
        result.attempts_used = attempt;
        let prompt = match &previous {
            None => build_generation_prompt(&spec),
            Some((candidate, report)) => build_repair_prompt(&spec, candidate, report)?,
        };
        say(verbose, format!("{}: attempt {attempt} ({:?})", spec.name, prompt.kind));
        let raw = match backend.complete(&prompt) {
            Ok(raw) => raw,
            Err(e) => {
                log::warn!("`{}`: backend failed on attempt {attempt}: {e}", spec.name);
                result.reports.push(ValidationReport::backend_failure(e.to_string()));
                return Ok(result);
            }
        };
        let (source, report) = match extract_code(&raw) {
            Ok(source) => {
                let report = validate(&source, &spec, &vconfig);
                (source, report)
            }
            Err(_) => (
                raw.clone(),
                ValidationReport::extraction_failure("the response contains no function definition"),
            ),
        };
        say(verbose, format!("{}: attempt {attempt} -> {:?}", spec.name, report.outcome));
        let candidate = CandidateCode {
            source_text: source,
            attempt_index: attempt,
            prompt_kind: prompt.kind,
            raw_response: raw,
        };
        result.candidates.push(candidate.clone());
        result.reports.push(report.clone());
        if report.passed() {
            result.status = SynthesisStatus::Synthesized;
            result.code = Some(candidate.source_text.clone());
            if let Some(cache) = cache {
                let record = CacheRecord::new(
                    hash.clone(),
                    spec.name.clone(),
                    candidate.source_text.clone(),
                    spec.options.backend_id.clone(),
                    attempt,
                    summary(&report, &spec, &vconfig),
                );
                if let Err(e) = cache.put(&record) {
                    log::warn!("could not cache `{}`: {e}", spec.name);
                }
            }
            advise(&spec, &candidate, backend, &vconfig, &mut result);
            return Ok(result);
        }
        previous = Some((candidate, report));
    }
    Ok(result)
}

fn advise(
    spec: &FunctionSpec,
    accepted: &CandidateCode,
    backend: &dyn Backend,
    config: &ValidationConfig,
    result: &mut SynthesisResult,
) {
    if !spec.options.strict_nl {
        for nl in nl_texts(spec) {
            let raw = match backend.complete(&build_formalization_prompt(&nl, spec)) {
                Ok(raw) => raw,
                Err(e) => {
                    log::warn!("`{}`: formalization request failed: {e}", spec.name);
                    continue;
                }
            };
            let Some(test) = parse_formalization(&raw, spec) else {
                log::warn!("`{}`: could not formalize `{nl}`", spec.name);
                continue;
            };
            for mut check in run_tests(&accepted.source_text, spec, &[test], config) {
                check.kind = CheckKind::NlFormalized;
                check.formalized_from = Some(nl.clone());
                if !check.passed {
                    log::warn!("`{}`: accepted code fails formalized requirement `{nl}`", spec.name);
                }
                result.advisory.push(check);
            }
        }
    }
    if spec.options.augment_tests {
        let raw = match backend.complete(&build_augmentation_prompt(spec, accepted)) {
            Ok(raw) => raw,
            Err(e) => {
                log::warn!("`{}`: augmentation request failed: {e}", spec.name);
                return;
            }
        };
        let tests = parse_augmentation(&raw, spec);
        let checks = run_tests(&accepted.source_text, spec, &tests, config);
        for (test, check) in tests.into_iter().zip(checks) {
            if check.passed {
                result.augmented_tests.push(test);
            }
            result.advisory.push(check);
        }
    }
}

/// Accepted code loaded into a private worker process and callable with
/// JSON arguments.
pub struct InstalledFunction {
    name: String,
    source: String,
    session: Mutex<CandidateSession>,
    call_timeout: Duration,
}

impl std::fmt::Debug for InstalledFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InstalledFunction").field("name", &self.name).finish()
    }
}

pub const DEFAULT_CALL_TIMEOUT: Duration = Duration::from_secs(300);

/// Turns a synthesis result into a callable. A failed result becomes
/// [`Error::Synthesis`] carrying the last report.
pub fn install(spec: &FunctionSpec, result: &SynthesisResult, runtime: &PythonRuntime) -> Result<InstalledFunction> {
    let code = match (&result.status, &result.code) {
        (SynthesisStatus::Failed, _) | (_, None) => return Err(Error::Synthesis(result.failure(&spec.name))),
        (_, Some(code)) => code.clone(),
    };
    let returns = spec.signature().returns.as_deref().and_then(return_check);
    let mut session = CandidateSession::new(runtime, &code, &spec.name, returns);
    let timeout = spec.options.timeout().max(Duration::from_secs(10));
    match session.start(timeout) {
        Ok(Ok(())) => {}
        Ok(Err(msg)) => {
            return Err(Error::Worker(format!("accepted code for `{}` failed to load: {msg}", spec.name)))
        }
        Err(f) => return Err(Error::Worker(format!("could not start `{}`: {f:?}", spec.name))),
    }
    Ok(InstalledFunction {
        name: spec.name.clone(),
        source: code,
        session: Mutex::new(session),
        call_timeout: DEFAULT_CALL_TIMEOUT,
    })
}

impl InstalledFunction {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn with_call_timeout(mut self, timeout: Duration) -> Self {
        self.call_timeout = timeout;
        self
    }

    /// Calls the function with positional arguments.
    pub fn call(&self, args: &[Json]) -> Result<Json> {
        let mut session = self.session.lock().unwrap_or_else(|e| e.into_inner());
        let fail = |message: String| Error::Call {
            function: self.name.clone(),
            message,
        };
        let resp = session
            .request(json!({"op": "call", "args": args}), self.call_timeout)
            .map_err(|f| match f {
                WorkerFailure::Timeout => fail(format!("no result within {:?}", self.call_timeout)),
                WorkerFailure::Died(msg) => fail(format!("worker died: {msg}")),
            })?;
        match resp.status.as_str() {
            "ok" => Ok(resp.value.unwrap_or(Json::Null)),
            "return_type" => Err(fail(format!(
                "returned {} which violates the return annotation",
                resp.value.map(|v| v.to_string()).unwrap_or_default()
            ))),
            _ => Err(fail(resp.error.unwrap_or_else(|| "unknown error".into()))),
        }
    }
}

fn flight_lock(hash: &SpecHash) -> Arc<Mutex<()>> {
    static LOCKS: OnceLock<Mutex<HashMap<SpecHash, Arc<Mutex<()>>>>> = OnceLock::new();
    let mut map = LOCKS
        .get_or_init(Default::default)
        .lock()
        .unwrap_or_else(|e| e.into_inner());
    map.entry(hash.clone()).or_default().clone()
}

struct Resolved {
    result: Option<SynthesisResult>,
    function: std::result::Result<Arc<InstalledFunction>, SynthesisFailure>,
}

/// A stub whose implementation is synthesized on the first call and reused
/// for the rest of the process. Concurrent first calls for the same spec
/// share one synthesis.
pub struct LazyFunction {
    spec: FunctionSpec,
    engine: Engine,
    resolved: OnceLock<Resolved>,
}

impl LazyFunction {
    pub fn new(spec: FunctionSpec, engine: Engine) -> Self {
        LazyFunction {
            spec,
            engine,
            resolved: OnceLock::new(),
        }
    }

    pub fn spec(&self) -> &FunctionSpec {
        &self.spec
    }

    pub fn is_resolved(&self) -> bool {
        self.resolved.get().is_some()
    }

    /// The synthesis result, once the function has been resolved.
    pub fn result(&self) -> Option<&SynthesisResult> {
        self.resolved.get().and_then(|r| r.result.as_ref())
    }

    fn resolve(&self) -> &Resolved {
        self.resolved.get_or_init(|| {
            let lock = flight_lock(&self.spec.hash());
            let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
            let failure = |message: String| SynthesisFailure {
                function: self.spec.name.clone(),
                attempts: 0,
                message,
                last_report: None,
            };
            let result = match self.engine.synthesize(&self.spec) {
                Ok(r) => r,
                Err(e) => {
                    return Resolved {
                        result: None,
                        function: Err(failure(e.to_string())),
                    }
                }
            };
            let function = match install(&self.spec, &result, &self.engine.config.runtime) {
                Ok(f) => Ok(Arc::new(f)),
                Err(Error::Synthesis(f)) => Err(f),
                Err(e) => Err(failure(e.to_string())),
            };
            Resolved {
                result: Some(result),
                function,
            }
        })
    }

    /// The installed implementation, synthesizing it if needed.
    pub fn installed(&self) -> Result<Arc<InstalledFunction>> {
        self.resolve().function.clone().map_err(Error::Synthesis)
    }

    pub fn call(&self, args: &[Json]) -> Result<Json> {
        self.installed()?.call(args)
    }
}

/// Backend, cache and validation settings shared by every synthesis.
#[derive(Clone)]
pub struct Engine {
    backend: Arc<dyn Backend>,
    cache: Option<Cache>,
    config: ValidationConfig,
}

impl Engine {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Engine {
            backend,
            cache: None,
            config: ValidationConfig::default(),
        }
    }

    pub fn with_cache(mut self, cache: Cache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_config(mut self, config: ValidationConfig) -> Self {
        self.config = config;
        self
    }

    pub fn backend(&self) -> &Arc<dyn Backend> {
        &self.backend
    }

    pub fn cache(&self) -> Option<&Cache> {
        self.cache.as_ref()
    }

    pub fn config(&self) -> &ValidationConfig {
        &self.config
    }

    pub fn synthesize(&self, spec: &FunctionSpec) -> Result<SynthesisResult> {
        synthesize(spec, self.backend.as_ref(), self.cache.as_ref(), &self.config)
    }

    /// Parses every header in a file. Nothing is synthesized until a
    /// function is first called.
    pub fn load_module(&self, path: &Path) -> Result<LoadedModule> {
        let module = Module::load(path)?;
        let functions = module
            .functions
            .iter()
            .map(|f| (f.spec.name.clone(), LazyFunction::new(f.spec.clone(), self.clone())))
            .collect();
        Ok(LoadedModule { module, functions })
    }
}

pub struct LoadedModule {
    pub module: Module,
    functions: BTreeMap<String, LazyFunction>,
}

impl LoadedModule {
    pub fn function(&self, name: &str) -> Option<&LazyFunction> {
        self.functions.get(name)
    }

    pub fn functions(&self) -> impl Iterator<Item = &LazyFunction> {
        self.functions.values()
    }

    pub fn call(&self, name: &str, args: &[Json]) -> Result<Json> {
        self.function(name)
            .ok_or_else(|| Error::Config(format!("no decorated function named `{name}`")))?
            .call(args)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{ScriptEntry, ScriptedBackend};
    use crate::spec::{EngineOptions, RawTest};
    use crate::validation::Outcome;

    fn spec(tests: &[&str], max_retries: u32) -> FunctionSpec {
        FunctionSpec::from_raw(
            "double",
            "(x: int) -> int",
            "Returns twice x.",
            tests.iter().map(|t| RawTest::text(*t)).collect(),
            EngineOptions {
                max_retries,
                ..EngineOptions::default()
            },
        )
        .unwrap()
    }

    fn scripted(responses: &[&str]) -> Arc<ScriptedBackend> {
        Arc::new(ScriptedBackend::new("scripted", responses.iter().map(|r| ScriptEntry::any(*r)).collect()).unwrap())
    }

    const WRONG: &str = "```python\ndef double(x: int) -> int:\n    return x + 2\n```";
    const RIGHT: &str = "```python\ndef double(x: int) -> int:\n    return 2 * x\n```";

    #[test]
    fn repairs_then_caches_then_hits() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path());
        let s = spec(&["assert double(3) == 6"], 3);
        let b = scripted(&[WRONG, RIGHT]);
        let r = synthesize(&s, b.as_ref(), Some(&cache), &ValidationConfig::default()).unwrap();
        assert_eq!(r.status, SynthesisStatus::Synthesized);
        assert_eq!(r.attempts_used, 2);
        assert_eq!(r.reports[0].outcome, Outcome::TestFail);
        assert_eq!(r.candidates[1].prompt_kind, crate::prompting::PromptKind::Repair);

        let again = scripted(&[WRONG]);
        let hit = synthesize(&s, again.as_ref(), Some(&cache), &ValidationConfig::default()).unwrap();
        assert_eq!(hit.status, SynthesisStatus::CachedHit);
        assert_eq!(hit.code, r.code);
        assert_eq!(again.usage().calls, 0);
    }

    #[test]
    fn extraction_failure_consumes_an_attempt() {
        let s = spec(&["assert double(3) == 6"], 2);
        let b = scripted(&["I am not able to do that.", RIGHT]);
        let r = synthesize(&s, b.as_ref(), None, &ValidationConfig::default()).unwrap();
        assert_eq!(r.status, SynthesisStatus::Synthesized);
        assert_eq!(r.attempts_used, 2);
        assert_eq!(r.reports[0].outcome, Outcome::CompileFail);
    }

    #[test]
    fn backend_error_fails_with_backend_report() {
        let s = spec(&["assert double(3) == 6"], 3);
        let b = scripted(&[WRONG]);
        let r = synthesize(&s, b.as_ref(), None, &ValidationConfig::default()).unwrap();
        assert_eq!(r.status, SynthesisStatus::Failed);
        assert_eq!(r.attempts_used, 2);
        assert_eq!(r.last_report().unwrap().outcome, Outcome::BackendError);
        let err = install(&s, &r, &PythonRuntime::default()).unwrap_err();
        assert!(err.to_string().contains("failed after 2 attempt(s)"), "{err}");
    }

    #[test]
    fn mismatched_model_is_a_config_error() {
        let s = spec(&[], 1).with_backend_id("http:other");
        assert!(matches!(
            synthesize(&s, scripted(&[RIGHT]).as_ref(), None, &ValidationConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn lazy_function_synthesizes_once() {
        let b = scripted(&[RIGHT]);
        let engine = Engine::new(b.clone());
        let f = LazyFunction::new(spec(&["assert double(3) == 6"], 3), engine);
        assert_eq!(b.usage().calls, 0);
        assert_eq!(f.call(&[json!(21)]).unwrap(), json!(42));
        assert_eq!(f.call(&[json!(-1)]).unwrap(), json!(-2));
        assert_eq!(b.usage().calls, 1);
        assert!(matches!(f.call(&[json!("a"), json!(1)]), Err(Error::Call { .. })));
    }

    #[test]
    fn advisory_phase_keeps_passing_augmented_tests() {
        let mut s = spec(&["assert double(3) == 6", "double of x is always even"], 1);
        s.options.augment_tests = true;
        let b = Arc::new(
            ScriptedBackend::new(
                "scripted",
                vec![
                    ScriptEntry::when("Required properties", RIGHT),
                    ScriptEntry::when("requirement", "```python\nassert double(x) % 2 == 0\n```"),
                    ScriptEntry::any("```python\nassert double(0) == 0\nassert double(1) == 3\n```"),
                ],
            )
            .unwrap(),
        );
        let r = synthesize(&s, b.as_ref(), None, &ValidationConfig::default()).unwrap();
        assert_eq!(r.status, SynthesisStatus::Synthesized);
        assert_eq!(b.usage().calls, 3);
        let formalized: Vec<_> = r.advisory.iter().filter(|c| c.kind == CheckKind::NlFormalized).collect();
        assert_eq!(formalized.len(), 1);
        assert!(formalized[0].passed);
        assert_eq!(
            r.augmented_tests.iter().map(|t| t.text()).collect::<Vec<_>>(),
            vec!["assert double(0) == 0"]
        );
    }
}
