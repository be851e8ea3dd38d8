//! Benchmark corpus: problems with hand-written oracles, hidden suites
//! generated from those oracles, and scoring of synthesized code.
//!
//! A corpus is a directory with one sub-directory per problem:
//!
//! ```text
//! corpus/
//!   maxIncSubarrays/
//!     problem.toml   name, signature, description, visible tests, generator
//!     oracle.py      brute-force reference implementation
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use crate::backends::Backend;
use crate::engine::{synthesize, SynthesisStatus};
use crate::error::{Error, Result};
use crate::spec::{Domain, EngineOptions, FunctionSpec, RawTest};
use crate::validation::fuzz::sample;
use crate::validation::{run_tests, CandidateSession, PythonRuntime, ValidationConfig};

pub const PROBLEM_FILE: &str = "problem.toml";
pub const ORACLE_FILE: &str = "oracle.py";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    DescriptionOnly,
    FullSpec,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::DescriptionOnly => "description-only",
            Mode::FullSpec => "full-spec",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "description-only" => Ok(Mode::DescriptionOnly),
            "full-spec" => Ok(Mode::FullSpec),
            other => Err(format!("unknown mode `{other}`; expected description-only or full-spec")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertyEntry {
    pub text: String,
    #[serde(default)]
    pub domains: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub size: usize,
    /// One domain per parameter, in domain notation.
    pub domains: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    name: String,
    signature: String,
    description: String,
    #[serde(default)]
    visible_tests: Vec<String>,
    #[serde(default)]
    properties: Vec<PropertyEntry>,
    #[serde(default)]
    max_retries: Option<u32>,
    #[serde(default)]
    timeout: Option<f64>,
    generator: GeneratorConfig,
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub dir: PathBuf,
    pub name: String,
    pub signature_text: String,
    pub description: String,
    pub visible_tests: Vec<String>,
    pub properties: Vec<PropertyEntry>,
    pub oracle_source: String,
    pub generator: GeneratorConfig,
    pub options: EngineOptions,
}

impl Problem {
    pub fn load(dir: &Path) -> Result<Problem> {
        let meta = dir.join(PROBLEM_FILE);
        let text = std::fs::read_to_string(&meta)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", meta.display())))?;
        let file: ProblemFile = toml::from_str(&text).map_err(|e| Error::Parse {
            path: meta.display().to_string(),
            message: e.to_string(),
        })?;
        let oracle_path = dir.join(ORACLE_FILE);
        let oracle_source = std::fs::read_to_string(&oracle_path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", oracle_path.display())))?;
        let mut options = EngineOptions::default();
        if let Some(n) = file.max_retries {
            options.max_retries = n;
        }
        if let Some(t) = file.timeout {
            options.test_timeout_seconds = t;
        }
        let problem = Problem {
            dir: dir.to_path_buf(),
            name: file.name,
            signature_text: file.signature,
            description: file.description,
            visible_tests: file.visible_tests,
            properties: file.properties,
            oracle_source,
            generator: file.generator,
            options,
        };
        problem.spec(Mode::FullSpec)?;
        problem.hidden_domains()?;
        Ok(problem)
    }

    /// The header for this problem. Description-only mode drops every test.
    pub fn spec(&self, mode: Mode) -> Result<FunctionSpec> {
        let mut raw: Vec<RawTest> = self.visible_tests.iter().map(|t| RawTest::text(t.as_str())).collect();
        for p in &self.properties {
            let domains = p
                .domains
                .iter()
                .map(|(k, v)| Ok((k.clone(), Domain::parse(v)?)))
                .collect::<Result<BTreeMap<_, _>>>()?;
            raw.push(RawTest::Property {
                text: p.text.clone(),
                domains,
            });
        }
        let spec = FunctionSpec::from_raw(
            self.name.clone(),
            self.signature_text.clone(),
            self.description.clone(),
            raw,
            self.options.clone(),
        )?;
        Ok(match mode {
            Mode::FullSpec => spec,
            Mode::DescriptionOnly => spec.without_tests(),
        })
    }

    /// Generator domains in parameter order.
    pub fn hidden_domains(&self) -> Result<Vec<Domain>> {
        let spec = self.spec(Mode::DescriptionOnly)?;
        spec.signature()
            .param_names()
            .iter()
            .map(|p| {
                let notation = self
                    .generator
                    .domains
                    .get(*p)
                    .ok_or_else(|| Error::Config(format!("{}: generator has no domain for `{p}`", self.name)))?;
                Domain::parse(notation)
            })
            .collect()
    }
}

/// Every problem directory under `root`, sorted by name.
pub fn load_corpus(root: &Path) -> Result<Vec<Problem>> {
    let entries = std::fs::read_dir(root)
        .map_err(|e| Error::Config(format!("cannot read corpus {}: {e}", root.display())))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(PROBLEM_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Config(format!("{} contains no problems", root.display())));
    }
    dirs.iter().map(|d| Problem::load(d)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenCase {
    pub args: Vec<Json>,
    pub expected: Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenSuite {
    pub seed: u64,
    pub cases: Vec<HiddenCase>,
}

/// Inputs only: `size` argument lists drawn from the problem's generator
/// domains. Deterministic per seed.
pub fn draw_inputs(problem: &Problem, seed: u64, size: usize) -> Result<Vec<Vec<Json>>> {
    let domains = problem.hidden_domains()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..size)
        .map(|_| {
            domains
                .iter()
                .map(|d| serde_json::to_value(sample(d, &mut rng)).expect("values serialize"))
                .collect()
        })
        .collect())
}

fn call_timeout(problem: &Problem) -> Duration {
    problem.options.timeout()
}

fn start(runtime: &PythonRuntime, source: &str, name: &str, timeout: Duration) -> Result<CandidateSession> {
    let mut session = CandidateSession::new(runtime, source, name, None);
    match session.start(timeout) {
        Ok(Ok(())) => Ok(session),
        Ok(Err(msg)) => Err(Error::Worker(format!("`{name}` failed to load: {msg}"))),
        Err(f) => Err(Error::Worker(format!("`{name}` failed to start: {f:?}"))),
    }
}

/// Pairs `size` drawn inputs with the oracle's outputs.
pub fn generate_hidden_suite(
    problem: &Problem,
    seed: u64,
    size: usize,
    runtime: &PythonRuntime,
) -> Result<HiddenSuite> {
    let inputs = draw_inputs(problem, seed, size)?;
    let timeout = call_timeout(problem);
    let mut oracle = start(runtime, &problem.oracle_source, &problem.name, timeout)?;
    let mut cases = Vec::with_capacity(inputs.len());
    for args in inputs {
        let resp = oracle
            .request(json!({"op": "call", "args": args}), timeout)
            .map_err(|f| Error::Worker(format!("oracle for `{}` failed: {f:?}", problem.name)))?;
        if resp.status != "ok" {
            return Err(Error::Worker(format!(
                "oracle for `{}` raised on {}: {}",
                problem.name,
                Json::Array(args.clone()),
                resp.error.unwrap_or_default()
            )));
        }
        cases.push(HiddenCase {
            args,
            expected: resp.value.unwrap_or(Json::Null),
        });
    }
    Ok(HiddenSuite { seed, cases })
}

/// Runs `code` on every hidden input and counts exact matches. Each call
/// gets the problem's timeout; a hung or crashing call counts as a miss.
pub fn score(code: &str, problem: &Problem, suite: &HiddenSuite, runtime: &PythonRuntime) -> Result<(usize, usize)> {
    let timeout = call_timeout(problem);
    let total = suite.cases.len();
    if total == 0 {
        return Ok((0, 0));
    }
    let mut session = match start(runtime, code, &problem.name, timeout) {
        Ok(s) => s,
        Err(e) => {
            log::warn!("{e}");
            return Ok((0, total));
        }
    };
    let mut passed = 0;
    for case in &suite.cases {
        match session.request(json!({"op": "call", "args": case.args}), timeout) {
            Ok(resp) if resp.status == "ok" && resp.value.as_ref() == Some(&case.expected) => passed += 1,
            _ => {}
        }
    }
    Ok((passed, total))
}

/// One row of the bench report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemReport {
    pub name: String,
    pub mode: Mode,
    pub attempts: u32,
    pub accepted: bool,
    pub visible_tests_passed: usize,
    pub hidden_passed: usize,
    pub hidden_total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchReport {
    pub mode: Mode,
    pub seed: u64,
    pub problems: Vec<ProblemReport>,
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize") + "\n"
    }
}

pub type BackendFactory<'a> = dyn Fn(&Problem) -> Result<Arc<dyn Backend>> + Send + Sync + 'a;

pub struct BenchOptions {
    pub mode: Mode,
    /// Fuzzing seed for validation.
    pub seed: u64,
    pub jobs: usize,
    pub runtime: PythonRuntime,
    /// Overrides each problem's hidden suite size.
    pub hidden_size: Option<usize>,
}

/// Synthesizes and scores one problem. Nothing is cached.
pub fn run_problem(problem: &Problem, backend: &dyn Backend, options: &BenchOptions) -> Result<ProblemReport> {
    let spec = problem.spec(options.mode)?;
    let full = problem.spec(Mode::FullSpec)?;
    let config = ValidationConfig {
        seed: options.seed,
        runtime: options.runtime.clone(),
        ..ValidationConfig::default()
    };
    let result = synthesize(&spec, backend, None, &config)?;
    let accepted = result.status != SynthesisStatus::Failed;
    let size = options.hidden_size.unwrap_or(problem.generator.size);
    let (visible_tests_passed, hidden_passed, hidden_total) = match (&result.code, accepted) {
        (Some(code), true) => {
            let visible = run_tests(code, &full, &full.tests, &config)
                .iter()
                .filter(|c| c.passed)
                .count();
            let suite = generate_hidden_suite(problem, problem.generator.seed, size, &options.runtime)?;
            let (passed, total) = score(code, problem, &suite, &options.runtime)?;
            (visible, passed, total)
        }
        _ => (0, 0, size),
    };
    Ok(ProblemReport {
        name: problem.name.clone(),
        mode: options.mode,
        attempts: result.attempts_used,
        accepted,
        visible_tests_passed,
        hidden_passed,
        hidden_total,
    })
}

/// Runs every problem, up to `jobs` at a time. Rows keep corpus order.
pub fn run_bench(problems: &[Problem], backend: &BackendFactory<'_>, options: &BenchOptions) -> Result<BenchReport> {
    let next = AtomicUsize::new(0);
    let rows: Mutex<Vec<Option<Result<ProblemReport>>>> = Mutex::new(problems.iter().map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..options.jobs.clamp(1, problems.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(problem) = problems.get(i) else { break };
                let row = backend(problem).and_then(|b| run_problem(problem, b.as_ref(), options));
                rows.lock().unwrap()[i] = Some(row);
            });
        }
    });
    let problems = rows
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every problem ran"))
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchReport {
        mode: options.mode,
        seed: options.seed,
        problems,
    })
}

#[derive(Debug, thiserror::Error)]
#[error("input outside the oracle's domain: {0}")]
pub struct DomainError(pub String);

/// Reference oracles for the shipped corpus, used to cross-check the
/// Python oracles.
pub mod oracles {
    use super::DomainError;

    fn strictly_increasing(xs: &[i64]) -> bool {
        xs.windows(2).all(|w| w[0] < w[1])
    }

    /// Largest `k` such that two adjacent length-`k` windows are both
    /// strictly increasing.
    pub fn max_inc_subarrays(nums: &[i64]) -> Result<usize, DomainError> {
        if nums.len() < 2 {
            return Err(DomainError(format!("need at least two elements, got {}", nums.len())));
        }
        for k in (1..=nums.len() / 2).rev() {
            for s in 0..=nums.len() - 2 * k {
                if strictly_increasing(&nums[s..s + k]) && strictly_increasing(&nums[s + k..s + 2 * k]) {
                    return Ok(k);
                }
            }
        }
        unreachable!("k = 1 always succeeds")
    }

    pub fn fibonacci(n: u32) -> u128 {
        let (mut a, mut b) = (0u128, 1u128);
        for _ in 0..n {
            (a, b) = (b, a + b);
        }
        a
    }

    /// Longest substring without a repeated character, by checking every substring.
    pub fn length_of_longest_substring(s: &str) -> usize {
        let chars: Vec<char> = s.chars().collect();
        let mut best = 0;
        for i in 0..chars.len() {
            for j in i..chars.len() {
                let window = &chars[i..=j];
                let unique = window.iter().collect::<std::collections::BTreeSet<_>>().len() == window.len();
                if unique {
                    best = best.max(window.len());
                }
            }
        }
        best
    }
}
