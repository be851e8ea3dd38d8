//! Reading behavioral headers out of Python source files.
//!
//! A header is a `@pythoness.spec(...)` (or imported `@spec(...)`) decorator
//! on a top-level stub:
//!
//! ```python
//! import pythoness
//!
//! @pythoness.spec("Returns the n-th Fibonacci number.",
//!                 tests=["assert fibonacci(10) == 55",
//!                        ("assert fibonacci(n+2) == fibonacci(n+1) + fibonacci(n)", {"n": "integers(0, 20)"})],
//!                 max_retries=3)
//! def fibonacci(n: int) -> int:
//!     ...
//! ```
//!
//! Test entries are strings (classified by parsing), names of
//! `unittest.TestCase` classes defined in the same file, or
//! `(property, {var: strategy})` pairs with explicit domains.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rustpython_parser::ast::{self, Constant, Expr, Stmt};
use rustpython_parser::lexer::lex_starts_at;
use rustpython_parser::text_size::TextSize;
use rustpython_parser::{Mode, Tok};

use crate::error::{Error, Result};
use crate::pyast;
use crate::spec::{Domain, EngineOptions, FunctionSpec, RawTest, SuiteRef};

/// Where a header and its stub sit in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeaderSite {
    /// Whole lines holding the header decorator.
    pub decorator_lines: Range<usize>,
    /// Start of the line holding the first decorator of the function.
    pub decorated_start: usize,
    /// Start of the line holding `def`.
    pub def_line_start: usize,
    /// Leading whitespace of the `def` line.
    pub indent: String,
    /// Offset just past the `:` that ends the `def` header.
    pub colon_end: usize,
    /// From the start of the first body statement to the end of the last.
    pub body: Range<usize>,
    /// The body starts on the same line as the `def`.
    pub body_inline: bool,
    pub has_docstring: bool,
}

#[derive(Debug, Clone)]
pub struct DecoratedFunction {
    pub spec: FunctionSpec,
    pub site: HeaderSite,
}

/// A parsed source file with its headers.
#[derive(Debug, Clone)]
pub struct Module {
    pub path: PathBuf,
    pub source: String,
    pub functions: Vec<DecoratedFunction>,
    /// Whole-line ranges of `import pythoness` / `from pythoness import ...`.
    pub dsl_imports: Vec<Range<usize>>,
}

impl Module {
    /// Parses every header in the file. Malformed headers are errors here,
    /// before anything is synthesized.
    pub fn load(path: &Path) -> Result<Module> {
        let source = std::fs::read_to_string(path)?;
        Self::parse(path, source)
    }

    pub fn parse(path: &Path, source: String) -> Result<Module> {
        let label = path.display().to_string();
        let suite = pyast::parse_suite(&source).map_err(|d| Error::Parse {
            path: label.clone(),
            message: d.to_string(),
        })?;
        let aliases = DslAliases::collect(&suite);
        let dsl_imports = suite
            .iter()
            .filter(|s| is_dsl_import(s))
            .map(|s| whole_lines(&source, pyast::start(s), pyast::end(s)))
            .collect();
        let mut functions = Vec::new();
        for stmt in &suite {
            let (name, decorators, args, returns, body, range) = match stmt {
                Stmt::FunctionDef(f) => (&f.name, &f.decorator_list, &f.args, &f.returns, &f.body, f.range),
                Stmt::AsyncFunctionDef(f) => (&f.name, &f.decorator_list, &f.args, &f.returns, &f.body, f.range),
                _ => continue,
            };
            let headers: Vec<&Expr> = decorators.iter().filter(|d| aliases.is_header(d)).collect();
            let header = match headers.as_slice() {
                [] => continue,
                [one] => *one,
                _ => {
                    return Err(Error::spec(format!("`{name}` has more than one header")));
                }
            };
            let _ = (args, returns);
            let def_start = range.start().to_usize();
            let colon = def_header_colon(&source, def_start)
                .ok_or_else(|| Error::spec(format!("cannot locate the signature of `{name}`")))?;
            let lpar = source[def_start..colon.start]
                .find('(')
                .map(|i| def_start + i)
                .ok_or_else(|| Error::spec(format!("cannot locate the signature of `{name}`")))?;
            let signature_text = source[lpar..colon.start].trim_end().to_string();
            let docstring = body.first().and_then(docstring_of);
            let spec = header_spec(name.as_str(), &signature_text, docstring.as_deref(), header, &source, path)
                .map_err(|e| match e {
                    Error::Spec(m) => Error::Spec(format!("{label}: header of `{name}`: {m}")),
                    other => other,
                })?;
            let first = body.first().expect("a def has a body");
            let last = body.last().expect("a def has a body");
            let def_line_start = pyast::line_start(&source, def_start);
            let header_start = pyast::start(header).saturating_sub(1);
            let first_decorator = decorators.iter().map(pyast::start).min().unwrap_or(def_start);
            let site = HeaderSite {
                decorator_lines: whole_lines(&source, header_start, pyast::end(header)),
                decorated_start: pyast::line_start(&source, first_decorator.saturating_sub(1)),
                def_line_start,
                indent: source[def_line_start..def_start].to_string(),
                colon_end: colon.end,
                body: pyast::start(first)..pyast::end(last),
                body_inline: pyast::line_start(&source, pyast::start(first)) == pyast::line_start(&source, colon.start),
                has_docstring: docstring.is_some(),
            };
            functions.push(DecoratedFunction { spec, site });
        }
        Ok(Module {
            path: path.to_path_buf(),
            source,
            functions,
            dsl_imports,
        })
    }

    pub fn function(&self, name: &str) -> Option<&DecoratedFunction> {
        self.functions.iter().find(|f| f.spec.name == name)
    }
}

/// Line-aligned span covering `start..end`, including the final newline.
pub(crate) fn whole_lines(source: &str, start: usize, end: usize) -> Range<usize> {
    pyast::line_start(source, start)..pyast::line_end_inclusive(source, end.saturating_sub(1).max(start))
}

fn is_dsl_import(stmt: &Stmt) -> bool {
    match stmt {
        Stmt::Import(i) => i.names.iter().all(|a| a.name.as_str() == "pythoness"),
        Stmt::ImportFrom(i) => i.module.as_deref() == Some("pythoness") && i.level.map_or(true, |l| l.to_u32() == 0),
        _ => false,
    }
}

struct DslAliases {
    modules: Vec<String>,
    functions: Vec<String>,
}

impl DslAliases {
    fn collect(suite: &[Stmt]) -> Self {
        let mut modules = Vec::new();
        let mut functions = Vec::new();
        for stmt in suite {
            match stmt {
                Stmt::Import(i) => {
                    for a in &i.names {
                        if a.name.as_str() == "pythoness" {
                            modules.push(a.asname.as_deref().unwrap_or("pythoness").to_string());
                        }
                    }
                }
                Stmt::ImportFrom(i) if i.module.as_deref() == Some("pythoness") => {
                    for a in &i.names {
                        if a.name.as_str() == "spec" {
                            functions.push(a.asname.as_deref().unwrap_or("spec").to_string());
                        }
                    }
                }
                _ => {}
            }
        }
        if modules.is_empty() {
            modules.push("pythoness".into());
        }
        DslAliases { modules, functions }
    }

    fn is_header(&self, decorator: &Expr) -> bool {
        let func = match decorator {
            Expr::Call(c) => &c.func,
            other => other,
        };
        let Some(name) = pyast::dotted_name(func) else {
            return false;
        };
        self.functions.contains(&name)
            || self
                .modules
                .iter()
                .any(|m| name.strip_prefix(m.as_str()) == Some(".spec"))
    }
}

/// Byte range of the `:` closing a `def` header that starts at `def_start`.
fn def_header_colon(source: &str, def_start: usize) -> Option<Range<usize>> {
    let mut depth = 0i32;
    let offset = TextSize::try_from(def_start).ok()?;
    for token in lex_starts_at(&source[def_start..], Mode::Module, offset) {
        let (tok, range) = token.ok()?;
        match tok {
            Tok::Lpar | Tok::Lsqb | Tok::Lbrace => depth += 1,
            Tok::Rpar | Tok::Rsqb | Tok::Rbrace => depth -= 1,
            Tok::Colon if depth == 0 => return Some(range.start().to_usize()..range.end().to_usize()),
            _ => {}
        }
    }
    None
}

fn docstring_of(stmt: &Stmt) -> Option<String> {
    match stmt {
        Stmt::Expr(e) => match e.value.as_ref() {
            Expr::Constant(c) => match &c.value {
                Constant::Str(s) => Some(clean_doc(s)),
                _ => None,
            },
            _ => None,
        },
        _ => None,
    }
}

/// Normalizes docstring indentation the way `inspect.cleandoc` does.
pub fn clean_doc(doc: &str) -> String {
    let expanded = doc.replace('\t', "        ");
    let lines: Vec<&str> = expanded.lines().collect();
    let Some((first, rest)) = lines.split_first() else {
        return String::new();
    };
    let margin = rest
        .iter()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.len() - l.trim_start().len())
        .min()
        .unwrap_or(0);
    let mut out: Vec<String> = vec![first.trim_start().to_string()];
    out.extend(rest.iter().map(|l| l.get(margin..).unwrap_or("").trim_end().to_string()));
    while out.last().is_some_and(|l| l.is_empty()) {
        out.pop();
    }
    while out.first().is_some_and(|l| l.is_empty()) {
        out.remove(0);
    }
    out.join("\n")
}

fn header_spec(
    name: &str,
    signature_text: &str,
    docstring: Option<&str>,
    header: &Expr,
    source: &str,
    path: &Path,
) -> Result<FunctionSpec> {
    let (args, keywords): (&[Expr], &[ast::Keyword]) = match header {
        Expr::Call(c) => (&c.args, &c.keywords),
        _ => (&[], &[]),
    };
    let positional = match args {
        [] => None,
        [d] => Some(
            pyast::string_literal(d)
                .ok_or_else(|| Error::spec("the description must be a string literal"))?
                .to_string(),
        ),
        _ => return Err(Error::spec("the header takes at most one positional argument (the description)")),
    };
    let description = [docstring.map(str::to_string), positional.map(|p| clean_doc(&p))]
        .into_iter()
        .flatten()
        .filter(|s| !s.trim().is_empty())
        .collect::<Vec<_>>()
        .join("\n\n");

    let mut options = EngineOptions::default();
    let mut raw_tests = Vec::new();
    for kw in keywords {
        let Some(arg) = kw.arg.as_deref() else {
            return Err(Error::spec("`**kwargs` is not supported in a header"));
        };
        let v = &kw.value;
        let int = |what: &str| -> Result<u32> {
            pyast::int_literal(v)
                .and_then(|i| u32::try_from(i).ok())
                .ok_or_else(|| Error::spec(format!("`{what}` must be a non-negative integer literal")))
        };
        let boolean = |what: &str| -> Result<bool> {
            pyast::bool_literal(v).ok_or_else(|| Error::spec(format!("`{what}` must be True or False")))
        };
        match arg {
            "tests" => raw_tests = header_tests(v, source, path)?,
            "max_retries" => options.max_retries = int(arg)?,
            "fuzz_samples" => options.fuzz_samples = int(arg)?,
            "timeout" => {
                options.test_timeout_seconds = pyast::float_literal(v)
                    .ok_or_else(|| Error::spec("`timeout` must be a number of seconds"))?
            }
            "model" => {
                let model = pyast::string_literal(v).ok_or_else(|| Error::spec("`model` must be a string"))?;
                options.backend_id = format!("http:{model}");
            }
            "regenerate" => options.regenerate = boolean(arg)?,
            "augment_tests" => options.augment_tests = boolean(arg)?,
            "strict_nl" => options.strict_nl = boolean(arg)?,
            "verbose" => options.verbose = boolean(arg)?,
            other => return Err(Error::spec(format!("unknown header option `{other}`"))),
        }
    }
    FunctionSpec::from_raw(name, signature_text, description, raw_tests, options)
}

fn header_tests(value: &Expr, source: &str, path: &Path) -> Result<Vec<RawTest>> {
    let items = match value {
        Expr::List(l) => &l.elts,
        Expr::Tuple(t) => &t.elts,
        _ => return Err(Error::spec("`tests` must be a list")),
    };
    items.iter().map(|item| header_test(item, source, path)).collect()
}

fn header_test(item: &Expr, source: &str, path: &Path) -> Result<RawTest> {
    if let Some(s) = pyast::string_literal(item) {
        return Ok(RawTest::text(s));
    }
    match item {
        Expr::Name(n) => {
            let handle = format!("{}::{}", path.display(), n.id);
            Ok(RawTest::Suite(SuiteRef::new(handle, n.id.as_str(), source)?))
        }
        Expr::Tuple(t) if t.elts.len() == 2 => {
            let text = pyast::string_literal(&t.elts[0])
                .ok_or_else(|| Error::spec("a property entry must start with the property text"))?;
            let Expr::Dict(d) = &t.elts[1] else {
                return Err(Error::spec("a property entry must end with a {variable: strategy} dict"));
            };
            let mut domains = BTreeMap::new();
            for (k, v) in d.keys.iter().zip(&d.values) {
                let var = k
                    .as_ref()
                    .and_then(pyast::string_literal)
                    .ok_or_else(|| Error::spec("domain keys must be variable names"))?;
                let domain = match pyast::string_literal(v) {
                    Some(notation) => Domain::parse(notation)?,
                    None => {
                        let d = Domain::from_expr(v).map_err(|e| Error::spec(format!("domain of `{var}`: {e}")))?;
                        d.check().map_err(|e| Error::spec(format!("domain of `{var}`: {e}")))?;
                        d
                    }
                };
                domains.insert(var.to_string(), domain);
            }
            Ok(RawTest::Property {
                text: text.to_string(),
                domains,
            })
        }
        _ => Err(Error::spec(
            "each test must be a string, a TestCase class name, or a (property, domains) pair",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::TestSpec;

    const FIB: &str = r#"import pythoness
from typing import List

@pythoness.spec(
    "Returns the n-th Fibonacci number.",
    tests=[
        "assert fibonacci(10) == 55",
        ("assert fibonacci(n+2) == fibonacci(n+1) + fibonacci(n)", {"n": "integers(0, 20)"}),
        "output of fibonacci is never negative",
    ],
    max_retries=4,
    timeout=2.5,
)
def fibonacci(n: int) -> int:
    """Fibonacci with fib(0) = 0."""
    ...

def helper(x):
    return x
"#;

    fn parse(src: &str) -> Result<Module> {
        Module::parse(Path::new("m.py"), src.to_string())
    }

    #[test]
    fn reads_a_header() {
        let m = parse(FIB).unwrap();
        assert_eq!(m.functions.len(), 1);
        let f = &m.functions[0];
        assert_eq!(f.spec.name, "fibonacci");
        assert_eq!(f.spec.signature_text, "(n: int) -> int");
        assert_eq!(
            f.spec.description,
            "Fibonacci with fib(0) = 0.\n\nReturns the n-th Fibonacci number."
        );
        assert_eq!(f.spec.options.max_retries, 4);
        assert_eq!(f.spec.options.test_timeout_seconds, 2.5);
        assert!(matches!(f.spec.tests[0], TestSpec::Assertion { .. }));
        match &f.spec.tests[1] {
            TestSpec::Property { domains, .. } => {
                assert_eq!(domains["n"], Domain::IntRange { lo: 0, hi: 20 })
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(f.spec.tests[2], TestSpec::NaturalLanguage { .. }));
        assert_eq!(&m.source[f.site.decorator_lines.clone()][..16], "@pythoness.spec(");
        assert!(m.source[f.site.decorator_lines.clone()].ends_with(")\n"));
        assert_eq!(m.dsl_imports, vec![0..17]);
        assert!(f.site.has_docstring);
        assert!(!f.site.body_inline);
    }

    #[test]
    fn non_list_tests_is_a_spec_error() {
        let src = "import pythoness\n@pythoness.spec('d', tests=42)\ndef f(x):\n    pass\n";
        assert!(matches!(parse(src), Err(Error::Spec(_))));
    }

    #[test]
    fn missing_description_is_a_spec_error() {
        let src = "import pythoness\n@pythoness.spec(tests=[])\ndef f(x):\n    pass\n";
        assert!(matches!(parse(src), Err(Error::Spec(_))));
    }

    #[test]
    fn imported_decorator_and_suite_reference() {
        let src = "from pythoness import spec as s\nimport unittest\n\nclass T(unittest.TestCase):\n    def test_a(self):\n        self.assertEqual(f(1), 1)\n\n@s('identity', tests=[T])\ndef f(x): return x\n";
        let m = parse(src).unwrap();
        let f = &m.functions[0];
        match &f.spec.tests[0] {
            TestSpec::Suite(r) => assert_eq!(r.handle, "m.py::T"),
            other => panic!("{other:?}"),
        }
        assert!(f.site.body_inline);
        assert_eq!(&m.source[f.site.body.clone()], "return x");
    }

    #[test]
    fn multiline_signature_is_kept_verbatim() {
        let src = "import pythoness\n@pythoness.spec('d')\ndef f(a: int,\n      b: dict = {'k': 1}) -> int:  # note\n    pass\n";
        let m = parse(src).unwrap();
        assert_eq!(m.functions[0].spec.signature_text, "(a: int,\n      b: dict = {'k': 1}) -> int");
    }

    #[test]
    fn unknown_options_are_rejected() {
        let src = "import pythoness\n@pythoness.spec('d', retries=3)\ndef f(x):\n    pass\n";
        assert!(parse(src).is_err());
    }

    #[test]
    fn clean_doc_matches_python() {
        assert_eq!(clean_doc("  First.\n\n    More\n      indented\n  "), "First.\n\nMore\n  indented");
    }
}
