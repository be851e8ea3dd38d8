//! The behavioral-header data model.
//!
//! A [`FunctionSpec`] is what a developer writes on top of a stub: the
//! function's name and signature, a prose description, and an ordered list
//! of tests in one of four forms (see [`TestSpec`]).

mod canonical;
mod classify;
mod domain;
mod signature;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use canonical::{hash_spec, CanonicalSpec, SpecHash, CANONICAL_MAGIC};
pub use classify::{classify_test, free_variables, RawTest};
pub use domain::{default_domain, Domain, Value};
pub use signature::{Param, ParamKind, Signature};

use crate::error::{Error, Result};
use crate::pyast;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub name: String,
    /// Parameter list plus optional return annotation, exactly as written,
    /// e.g. `(nums: List[int]) -> int`.
    pub signature_text: String,
    pub description: String,
    pub tests: Vec<TestSpec>,
    pub options: EngineOptions,
}

impl FunctionSpec {
    /// Builds and checks a spec. Property variables without an explicit
    /// domain receive one inferred from the signature.
    pub fn new(
        name: impl Into<String>,
        signature_text: impl Into<String>,
        description: impl Into<String>,
        tests: Vec<TestSpec>,
        options: EngineOptions,
    ) -> Result<Self> {
        let name = name.into();
        let signature_text = signature_text.into();
        let description = description.into();
        if !pyast::is_identifier(&name) {
            return Err(Error::spec(format!("`{name}` is not a valid function name")));
        }
        if description.trim().is_empty() {
            return Err(Error::spec(format!(
                "`{name}` has an empty description; the header must describe the function's purpose"
            )));
        }
        let signature = Signature::parse(&signature_text)?;
        options.check()?;
        let tests = tests
            .into_iter()
            .map(|t| t.with_default_domains(&name, &signature))
            .collect::<Result<Vec<_>>>()?;
        Ok(FunctionSpec {
            name,
            signature_text,
            description,
            tests,
            options,
        })
    }

    /// Classifies raw test entries against this function's name, then builds the spec.
    pub fn from_raw(
        name: impl Into<String>,
        signature_text: impl Into<String>,
        description: impl Into<String>,
        raw_tests: Vec<RawTest>,
        options: EngineOptions,
    ) -> Result<Self> {
        let name = name.into();
        let tests = raw_tests
            .into_iter()
            .map(|raw| classify_test(raw, &name))
            .collect::<Result<Vec<_>>>()?;
        Self::new(name, signature_text, description, tests, options)
    }

    pub fn signature(&self) -> Signature {
        Signature::parse(&self.signature_text).expect("signature checked at construction")
    }

    /// The `def` line used in prompts, e.g. `def f(x: int) -> int:`.
    pub fn signature_line(&self) -> String {
        format!("def {}{}:", self.name, self.signature_text)
    }

    pub fn hash(&self) -> SpecHash {
        hash_spec(self)
    }

    pub fn with_backend_id(mut self, backend_id: impl Into<String>) -> Self {
        self.options.backend_id = backend_id.into();
        self
    }

    pub fn without_tests(mut self) -> Self {
        self.tests.clear();
        self
    }
}

/// One test attached to a header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestSpec {
    /// A ground one-line assertion such as `assert f(5) == 2`.
    Assertion { text: String },
    /// A reference to a `unittest.TestCase` class.
    Suite(SuiteRef),
    /// An assertion with free variables, checked by fuzzing.
    Property {
        text: String,
        domains: BTreeMap<String, Domain>,
    },
    NaturalLanguage { text: String },
}

impl TestSpec {
    pub fn tag(&self) -> &'static str {
        match self {
            TestSpec::Assertion { .. } => "assertion",
            TestSpec::Suite(_) => "suite",
            TestSpec::Property { .. } => "property",
            TestSpec::NaturalLanguage { .. } => "natural_language",
        }
    }

    /// The text that identifies the test in prompts, reports and the spec hash.
    pub fn text(&self) -> &str {
        match self {
            TestSpec::Assertion { text }
            | TestSpec::Property { text, .. }
            | TestSpec::NaturalLanguage { text } => text,
            TestSpec::Suite(s) => &s.handle,
        }
    }

    pub fn is_formal(&self) -> bool {
        !matches!(self, TestSpec::NaturalLanguage { .. })
    }

    fn with_default_domains(self, target: &str, signature: &Signature) -> Result<Self> {
        match self {
            TestSpec::Property { text, mut domains } => {
                let stmt = pyast::parse_single_statement(&text)
                    .ok_or_else(|| Error::spec(format!("property does not parse: {text}")))?;
                let vars = classify::statement_free_variables(&stmt, target)
                    .ok_or_else(|| Error::spec(format!("property is not an assertion: {text}")))?;
                for name in domains.keys() {
                    if !vars.contains(name) {
                        return Err(Error::spec(format!(
                            "domain given for `{name}`, which is not a free variable of `{text}`"
                        )));
                    }
                }
                for var in vars {
                    if !domains.contains_key(&var) {
                        let d = default_domain(&var, signature);
                        domains.insert(var, d);
                    }
                }
                for (var, d) in &domains {
                    d.check().map_err(|e| Error::spec(format!("domain of `{var}`: {e}")))?;
                }
                Ok(TestSpec::Property { text, domains })
            }
            other => Ok(other),
        }
    }
}

/// A `unittest.TestCase` class, identified by `handle`, along with the
/// source of the module that defines it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteRef {
    pub handle: String,
    pub class_name: String,
    pub module_source: String,
}

impl SuiteRef {
    pub fn new(
        handle: impl Into<String>,
        class_name: impl Into<String>,
        module_source: impl Into<String>,
    ) -> Result<Self> {
        let handle = handle.into();
        let class_name = class_name.into();
        let module_source = module_source.into();
        if handle.trim().is_empty() || handle.contains('\n') {
            return Err(Error::spec(format!("malformed suite handle {handle:?}")));
        }
        if !pyast::is_identifier(&class_name) {
            return Err(Error::spec(format!(
                "suite handle {handle:?} does not name a class"
            )));
        }
        let suite = pyast::parse_suite(&module_source)
            .map_err(|d| Error::spec(format!("suite module for {handle:?} does not parse: {d}")))?;
        let defined = suite.iter().any(|s| {
            matches!(s, rustpython_parser::ast::Stmt::ClassDef(c) if c.name.as_str() == class_name)
        });
        if !defined {
            return Err(Error::spec(format!(
                "suite {handle:?} not found: no top-level class `{class_name}`"
            )));
        }
        Ok(SuiteRef {
            handle,
            class_name,
            module_source,
        })
    }

    /// Source text of the referenced class, including its decorators.
    pub fn class_source(&self) -> &str {
        let suite = pyast::parse_suite(&self.module_source).expect("checked at construction");
        suite
            .iter()
            .find_map(|s| match s {
                rustpython_parser::ast::Stmt::ClassDef(c) if c.name.as_str() == self.class_name => {
                    let start = c
                        .decorator_list
                        .iter()
                        .map(|d| pyast::start(d).saturating_sub(1))
                        .chain([pyast::start(c)])
                        .min()
                        .unwrap_or(0);
                    let start = pyast::line_start(&self.module_source, start);
                    Some(&self.module_source[start..pyast::end(c)])
                }
                _ => None,
            })
            .unwrap_or(&self.module_source)
    }

    /// Resolves a handle of the form `path/to/module.py::ClassName`.
    pub fn from_handle(handle: &str) -> Result<Self> {
        let (path, class) = handle
            .rsplit_once("::")
            .ok_or_else(|| Error::spec(format!("malformed suite handle {handle:?}; expected FILE::CLASS")))?;
        let source = std::fs::read_to_string(Path::new(path))
            .map_err(|e| Error::spec(format!("suite {handle:?} not resolvable: {e}")))?;
        Self::new(handle, class, source)
    }
}

/// Per-header engine options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineOptions {
    pub max_retries: u32,
    pub fuzz_samples: u32,
    pub test_timeout_seconds: f64,
    /// Backend identity. Empty means "whatever backend synthesizes it".
    pub backend_id: String,
    pub regenerate: bool,
    pub augment_tests: bool,
    pub strict_nl: bool,
    pub verbose: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            max_retries: 3,
            fuzz_samples: 100,
            test_timeout_seconds: 10.0,
            backend_id: String::new(),
            regenerate: false,
            augment_tests: false,
            strict_nl: false,
            verbose: false,
        }
    }
}

impl EngineOptions {
    pub fn check(&self) -> Result<()> {
        if self.max_retries < 1 {
            return Err(Error::spec("max_retries must be at least 1"));
        }
        if self.fuzz_samples < 1 {
            return Err(Error::spec("fuzz_samples must be at least 1"));
        }
        if !(self.test_timeout_seconds > 0.0 && self.test_timeout_seconds.is_finite()) {
            return Err(Error::spec("timeout must be a positive number of seconds"));
        }
        Ok(())
    }

    pub fn timeout(&self) -> std::time::Duration {
        std::time::Duration::from_secs_f64(self.test_timeout_seconds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> EngineOptions {
        EngineOptions::default()
    }

    #[test]
    fn empty_description_is_rejected() {
        let err = FunctionSpec::new("f", "(x)", "  ", vec![], opts()).unwrap_err();
        assert!(matches!(err, Error::Spec(_)));
    }

    #[test]
    fn invalid_name_is_rejected() {
        assert!(FunctionSpec::new("class", "(x)", "d", vec![], opts()).is_err());
        assert!(FunctionSpec::new("a-b", "(x)", "d", vec![], opts()).is_err());
    }

    #[test]
    fn bad_signature_is_rejected() {
        assert!(FunctionSpec::new("f", "(x", "d", vec![], opts()).is_err());
    }

    #[test]
    fn option_invariants() {
        let mut o = opts();
        o.max_retries = 0;
        assert!(FunctionSpec::new("f", "(x)", "d", vec![], o).is_err());
        let mut o = opts();
        o.test_timeout_seconds = 0.0;
        assert!(FunctionSpec::new("f", "(x)", "d", vec![], o).is_err());
    }

    #[test]
    fn property_domains_default_from_signature() {
        let spec = FunctionSpec::from_raw(
            "fibonacci",
            "(n: int) -> int",
            "fib",
            vec![RawTest::text("assert fibonacci(n+2) == fibonacci(n+1) + fibonacci(n)")],
            opts(),
        )
        .unwrap();
        let TestSpec::Property { domains, .. } = &spec.tests[0] else { panic!() };
        assert_eq!(domains["n"], Domain::IntRange { lo: -1000, hi: 1000 });
    }

    #[test]
    fn explicit_domain_wins() {
        let mut d = BTreeMap::new();
        d.insert("n".to_string(), Domain::IntRange { lo: 0, hi: 20 });
        let spec = FunctionSpec::from_raw(
            "fibonacci",
            "(n: int) -> int",
            "fib",
            vec![RawTest::Property {
                text: "assert fibonacci(n+2) == fibonacci(n+1) + fibonacci(n)".into(),
                domains: d,
            }],
            opts(),
        )
        .unwrap();
        let TestSpec::Property { domains, .. } = &spec.tests[0] else { panic!() };
        assert_eq!(domains["n"], Domain::IntRange { lo: 0, hi: 20 });
    }

    #[test]
    fn domain_for_unknown_variable_is_rejected() {
        let mut d = BTreeMap::new();
        d.insert("m".to_string(), Domain::Bool);
        let err = FunctionSpec::from_raw(
            "f",
            "(n)",
            "d",
            vec![RawTest::Property { text: "assert f(n) >= 0".into(), domains: d }],
            opts(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("`m`"));
    }

    #[test]
    fn invalid_domain_is_rejected() {
        let mut d = BTreeMap::new();
        d.insert("n".to_string(), Domain::IntRange { lo: 5, hi: 1 });
        assert!(FunctionSpec::from_raw(
            "f",
            "(n)",
            "d",
            vec![RawTest::Property { text: "assert f(n) >= 0".into(), domains: d }],
            opts(),
        )
        .is_err());
    }

    #[test]
    fn suite_ref_requires_class() {
        let src = "import unittest\nclass T(unittest.TestCase):\n    def test_a(self): pass\n";
        assert!(SuiteRef::new("T", "T", src).is_ok());
        assert!(SuiteRef::new("U", "U", src).is_err());
        assert!(SuiteRef::new("", "T", src).is_err());
        assert!(SuiteRef::from_handle("no-separator").is_err());
    }

    #[test]
    fn signature_line() {
        let spec = FunctionSpec::new("f", "(x: int) -> int", "d", vec![], opts()).unwrap();
        assert_eq!(spec.signature_line(), "def f(x: int) -> int:");
    }
}
