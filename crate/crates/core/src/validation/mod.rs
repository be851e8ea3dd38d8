//! Candidate validation: a static compile check, a structural check against
//! the signature, then every test in spec order. Execution happens in a
//! separate interpreter process (see [`worker`]), so a hanging or crashing
//! candidate is reported rather than taking the engine down.

pub mod fuzz;
mod returns;
pub mod worker;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rustpython_parser::ast;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub use fuzz::{render_bindings, Bindings, Counterexample, FuzzOutcome, PropertyRunner, Verdict};
pub use returns::return_check;
pub use worker::{CandidateSession, PythonRuntime, Response, SuiteCaseFailure, WorkerFailure};

use crate::pyast::{self, SyntaxDiagnostic};
use crate::spec::{Domain, FunctionSpec, ParamKind, Signature, TestSpec, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    Pass,
    CompileFail,
    StructureFail,
    TestFail,
    PropertyFail,
    Timeout,
    RuntimeError,
    /// The backend failed before a candidate could be produced.
    BackendError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CheckKind {
    Compile,
    Structure,
    Assertion,
    Suite,
    Property,
    NlFormalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Evidence {
    Diagnostic {
        message: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        line: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        column: Option<usize>,
    },
    Observed {
        observed: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expected: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        message: Option<String>,
    },
    Counterexample(Counterexample),
    RuntimeError {
        error: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bindings: Option<Bindings>,
    },
    Timeout {
        seconds: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        last_binding: Option<Bindings>,
        /// The check never started because the batch budget was already spent.
        #[serde(default)]
        skipped: bool,
    },
    ReturnType {
        value: String,
        annotation: String,
    },
    SuiteFailures {
        ran: u64,
        failures: Vec<SuiteCaseFailure>,
    },
    Warning {
        message: String,
    },
    Backend {
        message: String,
    },
}

impl Evidence {
    /// One-line rendering used in reports and repair prompts.
    pub fn render(&self) -> String {
        match self {
            Evidence::Diagnostic {
                message,
                line: Some(l),
                column: Some(c),
            } => format!("line {l}, column {c}: {message}"),
            Evidence::Diagnostic { message, .. } => message.clone(),
            Evidence::Observed {
                observed,
                expected,
                message,
            } => {
                let mut s = format!("observed: {observed}");
                if let Some(e) = expected {
                    s.push_str(&format!("\nexpected: {e}"));
                }
                if let Some(m) = message {
                    s.push_str(&format!("\nmessage: {m}"));
                }
                s
            }
            Evidence::Counterexample(cx) => format!(
                "counterexample: {}\nproperty: {}\n{}",
                cx.render_bindings(),
                cx.property_text,
                cx.observed
            ),
            Evidence::RuntimeError { error, bindings } => match bindings {
                Some(b) => format!("raised {error} with {}", render_bindings(b)),
                None => format!("raised {error}"),
            },
            Evidence::Timeout {
                seconds,
                last_binding,
                skipped,
            } => {
                let mut s = if *skipped {
                    format!("not run: the {seconds}s time budget was already spent")
                } else {
                    format!("timed out after {seconds}s")
                };
                if let Some(b) = last_binding {
                    s.push_str(&format!(" (last input: {})", render_bindings(b)));
                }
                s
            }
            Evidence::ReturnType { value, annotation } => {
                format!("returned {value}, which does not conform to the annotation `{annotation}`")
            }
            Evidence::SuiteFailures { ran, failures } => {
                let names: Vec<String> = failures
                    .iter()
                    .map(|f| format!("{}: {}", f.test, f.detail))
                    .collect();
                format!("{} of {ran} case(s) failed\n{}", failures.len(), names.join("\n"))
            }
            Evidence::Warning { message } => format!("warning: {message}"),
            Evidence::Backend { message } => format!("backend error: {message}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub kind: CheckKind,
    pub subject: String,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<Evidence>,
    /// For formalized natural-language tests, the original prose.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formalized_from: Option<String>,
}

impl CheckResult {
    fn pass(kind: CheckKind, subject: impl Into<String>) -> Self {
        CheckResult {
            kind,
            subject: subject.into(),
            passed: true,
            evidence: None,
            formalized_from: None,
        }
    }

    fn fail(kind: CheckKind, subject: impl Into<String>, outcome: Outcome, evidence: Evidence) -> Self {
        let check = CheckResult {
            kind,
            subject: subject.into(),
            passed: false,
            evidence: Some(evidence),
            formalized_from: None,
        };
        debug_assert_eq!(check.failure_outcome(), Some(outcome));
        check
    }

    /// The report outcome this failed check implies, derived from its kind and evidence.
    pub fn failure_outcome(&self) -> Option<Outcome> {
        if self.passed {
            return None;
        }
        Some(match (&self.kind, &self.evidence) {
            (_, Some(Evidence::Backend { .. })) => Outcome::BackendError,
            (_, Some(Evidence::Timeout { .. })) => Outcome::Timeout,
            (_, Some(Evidence::RuntimeError { .. })) => Outcome::RuntimeError,
            (CheckKind::Structure, _) | (_, Some(Evidence::ReturnType { .. })) => Outcome::StructureFail,
            (CheckKind::Compile, _) => Outcome::CompileFail,
            (_, Some(Evidence::Counterexample(_))) => Outcome::PropertyFail,
            _ => Outcome::TestFail,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub outcome: Outcome,
    pub checks: Vec<CheckResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_failure: Option<usize>,
}

impl ValidationReport {
    pub fn from_checks(checks: Vec<CheckResult>) -> Self {
        let first_failure = checks.iter().position(|c| !c.passed);
        let outcome = first_failure
            .and_then(|i| checks[i].failure_outcome())
            .unwrap_or(Outcome::Pass);
        ValidationReport {
            outcome,
            checks,
            first_failure,
        }
    }

    /// A report for an attempt where no candidate could be obtained.
    pub fn backend_failure(message: impl Into<String>) -> Self {
        Self::from_checks(vec![CheckResult::fail(
            CheckKind::Compile,
            "backend request",
            Outcome::BackendError,
            Evidence::Backend {
                message: message.into(),
            },
        )])
    }

    /// A report for a response that contained no extractable code.
    pub fn extraction_failure(message: impl Into<String>) -> Self {
        Self::from_checks(vec![CheckResult::fail(
            CheckKind::Compile,
            "code extraction",
            Outcome::CompileFail,
            Evidence::Diagnostic {
                message: message.into(),
                line: None,
                column: None,
            },
        )])
    }

    pub fn passed(&self) -> bool {
        self.outcome == Outcome::Pass
    }

    pub fn first_failed_check(&self) -> Option<&CheckResult> {
        self.first_failure.map(|i| &self.checks[i])
    }

    /// Deterministic JSON rendering.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// Number of passed checks per kind.
    pub fn passed_by_kind(&self) -> BTreeMap<CheckKind, u32> {
        let mut out = BTreeMap::new();
        for c in self.checks.iter().filter(|c| c.passed) {
            *out.entry(c.kind).or_insert(0) += 1;
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ValidationConfig {
    pub seed: u64,
    pub runtime: PythonRuntime,
    /// Formalizations of natural-language tests, keyed by the prose. When
    /// present, the matching natural-language test runs as a formal check.
    pub formalized: BTreeMap<String, TestSpec>,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            seed: 0,
            runtime: PythonRuntime::default(),
            formalized: BTreeMap::new(),
        }
    }
}

impl ValidationConfig {
    pub fn with_seed(seed: u64) -> Self {
        ValidationConfig {
            seed,
            ..Self::default()
        }
    }
}

/// Result of a successful [`compile_check`].
#[derive(Debug, Clone)]
pub struct ParsedUnit {
    pub source: String,
    pub functions: Vec<(String, Signature)>,
}

pub fn compile_check(source: &str) -> Result<ParsedUnit, SyntaxDiagnostic> {
    let suite = pyast::parse_suite(source)?;
    let functions: Vec<(String, Signature)> = suite
        .iter()
        .filter_map(|stmt| match stmt {
            ast::Stmt::FunctionDef(f) => Some((
                f.name.to_string(),
                Signature::from_def(source, &f.args, f.returns.as_deref()),
            )),
            ast::Stmt::AsyncFunctionDef(f) => Some((
                f.name.to_string(),
                Signature::from_def(source, &f.args, f.returns.as_deref()),
            )),
            _ => None,
        })
        .collect();
    if functions.is_empty() {
        let line = source.lines().count().max(1);
        return Err(SyntaxDiagnostic {
            message: "no function defined".into(),
            line,
            column: 1,
        });
    }
    Ok(ParsedUnit {
        source: source.to_string(),
        functions,
    })
}

fn comparable_kind(kind: ParamKind) -> ParamKind {
    match kind {
        ParamKind::PositionalOnly => ParamKind::Positional,
        k => k,
    }
}

pub fn structure_check(unit: &ParsedUnit, spec: &FunctionSpec) -> Result<(), String> {
    let matching: Vec<&Signature> = unit
        .functions
        .iter()
        .filter(|(n, _)| *n == spec.name)
        .map(|(_, s)| s)
        .collect();
    let found = match matching.as_slice() {
        [] => {
            let names: Vec<&str> = unit.functions.iter().map(|(n, _)| n.as_str()).collect();
            return Err(format!(
                "no top-level function named `{}` (found: {})",
                spec.name,
                names.join(", ")
            ));
        }
        [one] => *one,
        many => {
            return Err(format!(
                "`{}` is defined {} times at top level",
                spec.name,
                many.len()
            ))
        }
    };
    let expected = spec.signature();
    let shape = |s: &Signature| -> Vec<(String, ParamKind)> {
        s.params
            .iter()
            .map(|p| (p.name.clone(), comparable_kind(p.kind)))
            .collect()
    };
    if shape(found) != shape(&expected) {
        return Err(format!(
            "`{}` takes ({}) but the signature declares ({})",
            spec.name,
            found.param_names().join(", "),
            expected.param_names().join(", ")
        ));
    }
    Ok(())
}

/// Runs the full check sequence over `source`.
pub fn validate(source: &str, spec: &FunctionSpec, config: &ValidationConfig) -> ValidationReport {
    let timeout = spec.options.timeout();
    let mut checks = Vec::new();

    let unit = match compile_check(source) {
        Ok(unit) => unit,
        Err(d) => {
            checks.push(CheckResult::fail(
                CheckKind::Compile,
                d.message.clone(),
                Outcome::CompileFail,
                Evidence::Diagnostic {
                    message: d.message,
                    line: Some(d.line),
                    column: Some(d.column),
                },
            ));
            return ValidationReport::from_checks(checks);
        }
    };
    checks.push(CheckResult::pass(CheckKind::Compile, "source parses"));

    let structure_subject = spec.signature_line();
    if let Err(message) = structure_check(&unit, spec) {
        checks.push(CheckResult::fail(
            CheckKind::Structure,
            structure_subject,
            Outcome::StructureFail,
            Evidence::Diagnostic {
                message,
                line: None,
                column: None,
            },
        ));
        return ValidationReport::from_checks(checks);
    }

    let annotation = spec.signature().returns;
    let returns = annotation.as_deref().and_then(return_check);
    let mut session = CandidateSession::new(&config.runtime, source, &spec.name, returns);
    match load(&mut session, timeout) {
        Ok(()) => checks.push(CheckResult::pass(CheckKind::Structure, structure_subject)),
        Err(LoadFailure::Compile(d)) => {
            checks[0] = CheckResult::fail(
                CheckKind::Compile,
                d.message.clone(),
                Outcome::CompileFail,
                Evidence::Diagnostic {
                    message: d.message,
                    line: Some(d.line),
                    column: Some(d.column),
                },
            );
            return ValidationReport::from_checks(checks);
        }
        Err(LoadFailure::Other(outcome, evidence)) => {
            checks.push(CheckResult::fail(CheckKind::Structure, structure_subject, outcome, evidence));
            return ValidationReport::from_checks(checks);
        }
    }

    let tests: Vec<(TestSpec, Option<String>)> = spec
        .tests
        .iter()
        .filter_map(|t| match t {
            TestSpec::NaturalLanguage { text } => config
                .formalized
                .get(text)
                .map(|f| (f.clone(), Some(text.clone()))),
            other => Some((other.clone(), None)),
        })
        .collect();
    let mut results = run_batch(&mut session, &tests, config.seed, spec.options.fuzz_samples, timeout);
    fill_annotation(&mut results, annotation.as_deref());

    if let Some(value) = results.iter().find_map(|c| match &c.evidence {
        Some(Evidence::ReturnType { value, .. }) if !c.passed => Some(value.clone()),
        _ => None,
    }) {
        let structure = checks.last_mut().expect("structure check pushed");
        *structure = CheckResult::fail(
            CheckKind::Structure,
            structure.subject.clone(),
            Outcome::StructureFail,
            Evidence::ReturnType {
                value,
                annotation: annotation.unwrap_or_default(),
            },
        );
    }
    checks.extend(results);
    ValidationReport::from_checks(checks)
}

/// Loads `source` and runs `tests` against it without the compile and
/// structure phases. Used for advisory checks on already-accepted code.
pub fn run_tests(
    source: &str,
    spec: &FunctionSpec,
    tests: &[TestSpec],
    config: &ValidationConfig,
) -> Vec<CheckResult> {
    let returns = spec.signature().returns.as_deref().and_then(return_check);
    let mut session = CandidateSession::new(&config.runtime, source, &spec.name, returns);
    let timeout = spec.options.timeout();
    if let Err(failure) = load(&mut session, timeout) {
        let evidence = match failure {
            LoadFailure::Compile(d) => Evidence::RuntimeError {
                error: format!("SyntaxError: {d}"),
                bindings: None,
            },
            LoadFailure::Other(_, e) => e,
        };
        return tests
            .iter()
            .map(|t| {
                let mut check = CheckResult::pass(kind_of(t), t.text());
                check.passed = false;
                check.evidence = Some(evidence.clone());
                check
            })
            .collect();
    }
    let tests: Vec<(TestSpec, Option<String>)> = tests.iter().map(|t| (t.clone(), None)).collect();
    let mut results = run_batch(&mut session, &tests, config.seed, spec.options.fuzz_samples, timeout);
    fill_annotation(&mut results, spec.signature().returns.as_deref());
    results
}

fn fill_annotation(results: &mut [CheckResult], returns: Option<&str>) {
    for r in results {
        if let Some(Evidence::ReturnType { annotation, .. }) = &mut r.evidence {
            *annotation = returns.unwrap_or_default().to_string();
        }
    }
}

enum LoadFailure {
    Compile(SyntaxDiagnostic),
    Other(Outcome, Evidence),
}

fn load(session: &mut CandidateSession, timeout: Duration) -> Result<(), LoadFailure> {
    match session.start(timeout) {
        Ok(Ok(())) => Ok(()),
        Ok(Err(err)) => {
            if let Some(d) = parse_compile_error(&err) {
                return Err(LoadFailure::Compile(d));
            }
            Err(LoadFailure::Other(
                Outcome::RuntimeError,
                Evidence::RuntimeError {
                    error: err,
                    bindings: None,
                },
            ))
        }
        Err(WorkerFailure::Timeout) => Err(LoadFailure::Other(
            Outcome::Timeout,
            Evidence::Timeout {
                seconds: timeout.as_secs_f64(),
                last_binding: None,
                skipped: false,
            },
        )),
        Err(WorkerFailure::Died(message)) => Err(LoadFailure::Other(
            Outcome::RuntimeError,
            Evidence::RuntimeError {
                error: message,
                bindings: None,
            },
        )),
    }
}

/// The worker tags errors raised by `compile()` as `compile_error:<line>:<col>:<msg>`.
fn parse_compile_error(err: &str) -> Option<SyntaxDiagnostic> {
    let rest = err.strip_prefix("compile_error:")?;
    let mut parts = rest.splitn(3, ':');
    let line = parts.next()?.parse().ok()?;
    let column = parts.next()?.parse().ok()?;
    Some(SyntaxDiagnostic {
        message: parts.next()?.to_string(),
        line,
        column,
    })
}

fn kind_of(test: &TestSpec) -> CheckKind {
    match test {
        TestSpec::Assertion { .. } => CheckKind::Assertion,
        TestSpec::Suite(_) => CheckKind::Suite,
        TestSpec::Property { .. } => CheckKind::Property,
        TestSpec::NaturalLanguage { .. } => CheckKind::NlFormalized,
    }
}

/// Runs every test under one shared time budget.
fn run_batch(
    session: &mut CandidateSession,
    tests: &[(TestSpec, Option<String>)],
    seed: u64,
    samples: u32,
    timeout: Duration,
) -> Vec<CheckResult> {
    let deadline = Instant::now() + timeout;
    let seconds = timeout.as_secs_f64();
    tests
        .iter()
        .map(|(test, formalized_from)| {
            let mut result = if Instant::now() >= deadline {
                CheckResult::fail(
                    kind_of(test),
                    test.text(),
                    Outcome::Timeout,
                    Evidence::Timeout {
                        seconds,
                        last_binding: None,
                        skipped: true,
                    },
                )
            } else {
                match test {
                    TestSpec::Assertion { text } => run_assertion(session, text, deadline, seconds),
                    TestSpec::Suite(suite) => run_suite(session, suite, deadline, seconds),
                    TestSpec::Property { text, domains } => {
                        fuzz_property(session, text, domains, samples, seed, deadline, seconds)
                    }
                    TestSpec::NaturalLanguage { text } => CheckResult::fail(
                        CheckKind::NlFormalized,
                        text.clone(),
                        Outcome::TestFail,
                        Evidence::Diagnostic {
                            message: "natural-language test has no executable form".into(),
                            line: None,
                            column: None,
                        },
                    ),
                }
            };
            if let Some(prose) = formalized_from {
                result.kind = CheckKind::NlFormalized;
                result.formalized_from = Some(prose.clone());
            }
            result
        })
        .collect()
}

fn return_type_failure(kind: CheckKind, subject: &str, value: String) -> CheckResult {
    CheckResult::fail(
        kind,
        subject,
        Outcome::StructureFail,
        Evidence::ReturnType {
            value,
            annotation: String::new(),
        },
    )
}

fn worker_failure(kind: CheckKind, subject: &str, failure: WorkerFailure, seconds: f64) -> CheckResult {
    match failure {
        WorkerFailure::Timeout => CheckResult::fail(
            kind,
            subject,
            Outcome::Timeout,
            Evidence::Timeout {
                seconds,
                last_binding: None,
                skipped: false,
            },
        ),
        WorkerFailure::Died(error) => CheckResult::fail(
            kind,
            subject,
            Outcome::RuntimeError,
            Evidence::RuntimeError { error, bindings: None },
        ),
    }
}

/// Executes one ground assertion with only the candidate in scope.
pub fn run_assertion(session: &mut CandidateSession, text: &str, deadline: Instant, seconds: f64) -> CheckResult {
    let kind = CheckKind::Assertion;
    let remaining = deadline.saturating_duration_since(Instant::now());
    let resp = match session.request(json!({"op": "assert", "text": text}), remaining) {
        Ok(r) => r,
        Err(f) => return worker_failure(kind, text, f, seconds),
    };
    match resp.status.as_str() {
        "pass" => CheckResult::pass(kind, text),
        "fail" => CheckResult::fail(
            kind,
            text,
            Outcome::TestFail,
            Evidence::Observed {
                observed: resp.observed.unwrap_or_default(),
                expected: resp.expected,
                message: resp.message,
            },
        ),
        "return_type" => return_type_failure(kind, text, resp.value_text()),
        _ => CheckResult::fail(
            kind,
            text,
            Outcome::RuntimeError,
            Evidence::RuntimeError {
                error: resp.error.unwrap_or_else(|| "unknown error".into()),
                bindings: None,
            },
        ),
    }
}

pub fn run_suite(
    session: &mut CandidateSession,
    suite: &crate::spec::SuiteRef,
    deadline: Instant,
    seconds: f64,
) -> CheckResult {
    let kind = CheckKind::Suite;
    let subject = suite.handle.as_str();
    let remaining = deadline.saturating_duration_since(Instant::now());
    let req = json!({"op": "suite", "source": suite.module_source, "class_name": suite.class_name});
    let resp = match session.request(req, remaining) {
        Ok(r) => r,
        Err(f) => return worker_failure(kind, subject, f, seconds),
    };
    let ran = resp.ran.unwrap_or(0);
    match resp.status.as_str() {
        "pass" if ran == 0 => CheckResult {
            evidence: Some(Evidence::Warning {
                message: "suite contains no test cases".into(),
            }),
            ..CheckResult::pass(kind, subject)
        },
        "pass" => CheckResult::pass(kind, subject),
        "fail" => CheckResult::fail(
            kind,
            subject,
            Outcome::TestFail,
            Evidence::SuiteFailures {
                ran,
                failures: resp.failures.unwrap_or_default(),
            },
        ),
        "return_type" => return_type_failure(kind, subject, resp.value_text()),
        _ => CheckResult::fail(
            kind,
            subject,
            Outcome::RuntimeError,
            Evidence::RuntimeError {
                error: resp.error.unwrap_or_else(|| "suite could not run".into()),
                bindings: None,
            },
        ),
    }
}

impl Response {
    fn value_text(&self) -> String {
        match &self.value {
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(v) => v.to_string(),
            None => String::new(),
        }
    }
}

fn binding_json(bindings: &Bindings) -> serde_json::Value {
    serde_json::to_value(bindings).expect("values serialize")
}

/// Evaluates a property in a worker.
pub struct WorkerProperty<'a> {
    session: &'a mut CandidateSession,
    text: &'a str,
}

impl<'a> WorkerProperty<'a> {
    pub fn new(session: &'a mut CandidateSession, text: &'a str) -> Self {
        WorkerProperty { session, text }
    }
}

impl PropertyRunner for WorkerProperty<'_> {
    fn check(&mut self, bindings: &Bindings, deadline: Instant) -> Verdict {
        let remaining = deadline.saturating_duration_since(Instant::now());
        if remaining.is_zero() {
            return Verdict::Timeout;
        }
        let req = json!({"op": "property", "text": self.text, "bindings": binding_json(bindings)});
        match self.session.request(req, remaining) {
            Ok(resp) => match resp.status.as_str() {
                "pass" => Verdict::Holds,
                "fail" => Verdict::Fails {
                    observed: match (resp.observed, resp.expected) {
                        (Some(o), Some(e)) => format!("observed: {o}\nexpected: {e}"),
                        (Some(o), None) => format!("observed: {o}"),
                        _ => "assertion failed".into(),
                    },
                },
                "return_type" => Verdict::ReturnType {
                    value: resp.value_text(),
                },
                _ => Verdict::Fails {
                    observed: format!("raised {}", resp.error.unwrap_or_default()),
                },
            },
            Err(WorkerFailure::Timeout) => Verdict::Timeout,
            Err(WorkerFailure::Died(m)) => Verdict::Died(m),
        }
    }
}

pub fn fuzz_property(
    session: &mut CandidateSession,
    text: &str,
    domains: &BTreeMap<String, Domain>,
    samples: u32,
    seed: u64,
    deadline: Instant,
    seconds: f64,
) -> CheckResult {
    let kind = CheckKind::Property;
    let mut runner = WorkerProperty::new(session, text);
    match fuzz::fuzz(&mut runner, text, domains, samples, seed, deadline) {
        FuzzOutcome::Passed { .. } => CheckResult::pass(kind, text),
        FuzzOutcome::Failed { counterexample, .. } => CheckResult::fail(
            kind,
            text,
            Outcome::PropertyFail,
            Evidence::Counterexample(counterexample),
        ),
        FuzzOutcome::ReturnType { value, .. } => return_type_failure(kind, text, value),
        FuzzOutcome::Timeout { last } => CheckResult::fail(
            kind,
            text,
            Outcome::Timeout,
            Evidence::Timeout {
                seconds,
                last_binding: last,
                skipped: false,
            },
        ),
        FuzzOutcome::Died { message, bindings } => CheckResult::fail(
            kind,
            text,
            Outcome::RuntimeError,
            Evidence::RuntimeError {
                error: message,
                bindings: Some(bindings),
            },
        ),
    }
}

/// Replays a property under fixed bindings; true iff the property holds.
pub fn replay_property(
    source: &str,
    name: &str,
    text: &str,
    bindings: &BTreeMap<String, Value>,
    runtime: &PythonRuntime,
) -> crate::Result<Verdict> {
    let mut session = CandidateSession::new(runtime, source, name, None);
    let timeout = Duration::from_secs(10);
    match session.start(timeout) {
        Ok(Ok(())) => {}
        Ok(Err(e)) => return Err(crate::Error::Worker(e)),
        Err(e) => return Err(crate::Error::Worker(format!("{e:?}"))),
    }
    let mut runner = WorkerProperty::new(&mut session, text);
    Ok(runner.check(bindings, Instant::now() + timeout))
}
