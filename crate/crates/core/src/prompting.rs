//! Prompt construction and code extraction.
//!
//! Prompt text lives in versioned template files under `templates/`; this
//! module only decides what goes into each placeholder.

use std::sync::OnceLock;

use minijinja::{context, Environment};
use rustpython_parser::ast;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pyast;
use crate::spec::{classify_test, FunctionSpec, RawTest, TestSpec};
use crate::validation::{CheckKind, ValidationReport};

pub const TEMPLATE_VERSION: &str = "v1";

const TEMPLATES: &[(&str, &str)] = &[
    ("system", include_str!("../templates/v1/system.txt")),
    ("generate", include_str!("../templates/v1/generate.txt")),
    ("repair", include_str!("../templates/v1/repair.txt")),
    ("formalize", include_str!("../templates/v1/formalize.txt")),
    ("augment", include_str!("../templates/v1/augment.txt")),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PromptKind {
    Generate,
    Repair,
    Formalize,
    Augment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system_text: String,
    pub user_text: String,
    pub kind: PromptKind,
}

/// One backend-produced implementation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateCode {
    pub source_text: String,
    pub attempt_index: u32,
    pub prompt_kind: PromptKind,
    pub raw_response: String,
}

fn env() -> &'static Environment<'static> {
    static ENV: OnceLock<Environment<'static>> = OnceLock::new();
    ENV.get_or_init(|| {
        let mut env = Environment::new();
        env.set_trim_blocks(true);
        env.set_undefined_behavior(minijinja::UndefinedBehavior::Strict);
        for (name, source) in TEMPLATES {
            env.add_template(name, source).expect("bundled templates parse");
        }
        env
    })
}

fn render(name: &str, ctx: minijinja::Value) -> String {
    let text = env()
        .get_template(name)
        .and_then(|t| t.render(ctx))
        .unwrap_or_else(|e| panic!("template `{name}` failed to render: {e}"));
    text.trim_end().to_string() + "\n"
}

fn system_text() -> String {
    render("system", context! {})
}

/// Tests as they appear in prompts: the text itself on the first line,
/// followed by the domains of a property or the body of a suite.
fn formal_test_lines(spec: &FunctionSpec) -> Vec<String> {
    spec.tests
        .iter()
        .filter_map(|t| match t {
            TestSpec::Assertion { text } => Some(text.clone()),
            TestSpec::Property { text, domains } => {
                let mut s = text.clone();
                for (var, d) in domains {
                    s.push_str(&format!("\n# {var} ranges over {}", d.notation()));
                }
                Some(s)
            }
            TestSpec::Suite(suite) => Some(format!(
                "# unittest suite {}\n{}",
                suite.handle,
                suite.class_source().trim_end()
            )),
            TestSpec::NaturalLanguage { .. } => None,
        })
        .collect()
}

fn nl_tests(spec: &FunctionSpec) -> Vec<String> {
    spec.tests
        .iter()
        .filter_map(|t| match t {
            TestSpec::NaturalLanguage { text } => Some(text.clone()),
            _ => None,
        })
        .collect()
}

pub fn build_generation_prompt(spec: &FunctionSpec) -> Prompt {
    let user_text = render(
        "generate",
        context! {
            name => &spec.name,
            signature_line => spec.signature_line(),
            description => spec.description.trim(),
            tests => formal_test_lines(spec),
            properties => nl_tests(spec),
        },
    );
    Prompt {
        system_text: system_text(),
        user_text,
        kind: PromptKind::Generate,
    }
}

fn kind_label(kind: CheckKind) -> &'static str {
    match kind {
        CheckKind::Compile => "compilation",
        CheckKind::Structure => "signature and return type",
        CheckKind::Assertion => "assertion",
        CheckKind::Suite => "test suite",
        CheckKind::Property => "property",
        CheckKind::NlFormalized => "formalized requirement",
    }
}

/// Builds a repair prompt from the previous candidate and its report. Only
/// the first failure is detailed; later failures are listed by subject.
pub fn build_repair_prompt(
    spec: &FunctionSpec,
    failed: &CandidateCode,
    report: &ValidationReport,
) -> Result<Prompt> {
    let Some(first) = report.first_failed_check() else {
        return Err(Error::Internal("repair requested for a passing report".into()));
    };
    let evidence = first
        .evidence
        .as_ref()
        .map(|e| e.render())
        .unwrap_or_default();
    let others: Vec<String> = report
        .checks
        .iter()
        .enumerate()
        .filter(|(i, c)| !c.passed && Some(*i) != report.first_failure)
        .map(|(_, c)| c.subject.clone())
        .collect();
    let generation = build_generation_prompt(spec).user_text;
    let user_text = render(
        "repair",
        context! {
            name => &spec.name,
            generation => generation.trim_end(),
            failed_source => failed.source_text.trim_end(),
            failure_kind => kind_label(first.kind),
            failure_subject => &first.subject,
            failure_evidence => evidence,
            other_failures => others,
        },
    );
    Ok(Prompt {
        system_text: system_text(),
        user_text,
        kind: PromptKind::Repair,
    })
}

fn parameter_list(spec: &FunctionSpec) -> String {
    spec.signature()
        .param_names()
        .iter()
        .map(|n| format!("`{n}`"))
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn build_formalization_prompt(nl: &str, spec: &FunctionSpec) -> Prompt {
    let user_text = render(
        "formalize",
        context! {
            name => &spec.name,
            signature_line => spec.signature_line(),
            description => spec.description.trim(),
            requirement => nl.trim(),
            parameters => parameter_list(spec),
        },
    );
    Prompt {
        system_text: system_text(),
        user_text,
        kind: PromptKind::Formalize,
    }
}

pub fn build_augmentation_prompt(spec: &FunctionSpec, accepted: &CandidateCode) -> Prompt {
    let user_text = render(
        "augment",
        context! {
            name => &spec.name,
            signature_line => spec.signature_line(),
            description => spec.description.trim(),
            tests => formal_test_lines(spec),
            accepted_source => accepted.source_text.trim_end(),
            parameters => parameter_list(spec),
        },
    );
    Prompt {
        system_text: system_text(),
        user_text,
        kind: PromptKind::Augment,
    }
}

/// Content of the first fenced block, if any. The opening fence may carry a
/// language tag; an unterminated block runs to the end of the text.
fn first_fenced_block(raw: &str) -> Option<String> {
    let mut lines = raw.lines();
    lines.by_ref().find(|l| l.trim_start().starts_with("```"))?;
    let body: Vec<&str> = lines
        .take_while(|l| !l.trim_start().starts_with("```"))
        .collect();
    Some(body.join("\n"))
}

fn dedent(text: &str) -> String {
    let indent = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.len() - l.trim_start().len())
        .min()
        .unwrap_or(0);
    text.lines()
        .map(|l| if l.len() >= indent { &l[indent..] } else { l.trim_start() })
        .collect::<Vec<_>>()
        .join("\n")
}

fn tidy(text: &str) -> String {
    let dedented = dedent(text);
    let trimmed: Vec<&str> = dedented
        .lines()
        .skip_while(|l| l.trim().is_empty())
        .collect();
    trimmed.join("\n").trim_end().to_string()
}

fn defines_function(source: &str) -> bool {
    pyast::parse_suite(source).is_ok_and(|suite| {
        suite
            .iter()
            .any(|s| matches!(s, ast::Stmt::FunctionDef(_) | ast::Stmt::AsyncFunctionDef(_)))
    })
}

fn is_def_line(line: &str) -> bool {
    let t = line.trim_start();
    t.starts_with("def ") || t.starts_with("async def ")
}

/// The region starting at the first `def` line (with any decorators right
/// above it).
fn def_suffix(text: &str) -> Option<String> {
    let lines: Vec<&str> = text.lines().collect();
    let mut start = lines.iter().position(|l| is_def_line(l))?;
    while start > 0 && lines[start - 1].trim_start().starts_with('@') {
        start -= 1;
    }
    Some(tidy(&lines[start..].join("\n")))
}

fn normalize(region: &str) -> Option<String> {
    let tidied = tidy(region);
    if defines_function(&tidied) {
        return Some(tidied);
    }
    def_suffix(&tidied).filter(|s| !s.is_empty())
}

/// Pulls the code region out of a chat response.
pub fn extract_code(raw_response: &str) -> Result<String> {
    match first_fenced_block(raw_response) {
        Some(block) => normalize(&block),
        None => normalize(raw_response),
    }
    .ok_or(Error::Extraction)
}

/// Lines of a response that are single `assert` statements, fenced or not.
fn assert_lines(raw: &str) -> Vec<String> {
    let region = first_fenced_block(raw).unwrap_or_else(|| raw.to_string());
    region
        .lines()
        .map(str::trim)
        .filter(|l| l.starts_with("assert"))
        .filter(|l| matches!(pyast::parse_single_statement(l), Some(ast::Stmt::Assert(_))))
        .map(str::to_string)
        .collect()
}

/// Reads a formalization reply: the first assert line, classified against
/// the spec. Replies that are not executable yield `None`.
pub fn parse_formalization(raw: &str, spec: &FunctionSpec) -> Option<TestSpec> {
    assert_lines(raw).into_iter().find_map(|line| formal(&line, spec))
}

/// Reads an augmentation reply: every executable assert line, deduplicated
/// against the spec's own tests.
pub fn parse_augmentation(raw: &str, spec: &FunctionSpec) -> Vec<TestSpec> {
    let mut out: Vec<TestSpec> = Vec::new();
    for line in assert_lines(raw) {
        let duplicate = spec.tests.iter().chain(out.iter()).any(|t| t.text() == line);
        if duplicate {
            continue;
        }
        if let Some(t) = formal(&line, spec) {
            out.push(t);
        }
    }
    out
}

fn formal(line: &str, spec: &FunctionSpec) -> Option<TestSpec> {
    let test = classify_test(RawTest::text(line), &spec.name).ok()?;
    if !test.is_formal() {
        return None;
    }
    // fills in default domains for property variables
    FunctionSpec::new(
        spec.name.clone(),
        spec.signature_text.clone(),
        spec.description.clone(),
        vec![test],
        spec.options.clone(),
    )
    .ok()
    .and_then(|s| s.tests.into_iter().next())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::EngineOptions;
    use proptest::prelude::*;

    const PIECES: &[&str] = &[
        "Here is the code:",
        "Sure",
        "```python",
        "```",
        "def f(x):",
        "    return x",
        "  return 1",
        "@decorator",
        "",
        "    ",
        "x = 1",
        "async def g():",
        "    pass",
        "import math",
        "Hope this helps!",
    ];

    proptest! {
        #[test]
        fn extract_code_is_idempotent(idx in prop::collection::vec(0..PIECES.len(), 0..14)) {
            let raw: Vec<&str> = idx.iter().map(|&i| PIECES[i]).collect();
            let raw = raw.join("\n");
            if let Ok(once) = extract_code(&raw) {
                prop_assert_eq!(extract_code(&once).unwrap(), once);
            }
        }
    }

    fn spec(tests: &[&str]) -> FunctionSpec {
        FunctionSpec::from_raw(
            "f",
            "(x: int) -> int",
            "Doubles x.",
            tests.iter().map(|t| RawTest::text(*t)).collect(),
            EngineOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn extracts_first_fenced_block() {
        let raw = "Here you go:\n```\ndef f(x): return x\n```";
        assert_eq!(extract_code(raw).unwrap(), "def f(x): return x");
        let raw = "```python\ndef f(x):\n    return x\n```\nand also\n```python\ndef g(): pass\n```";
        assert_eq!(extract_code(raw).unwrap(), "def f(x):\n    return x");
    }

    #[test]
    fn bare_definition_is_returned_unchanged() {
        let raw = "def f(x):\n    return 2 * x";
        assert_eq!(extract_code(raw).unwrap(), raw);
    }

    #[test]
    fn prose_without_code_is_an_extraction_error() {
        assert!(matches!(extract_code("I cannot help with that."), Err(Error::Extraction)));
        assert!(matches!(extract_code("Sure"), Err(Error::Extraction)));
    }

    #[test]
    fn unfenced_prose_is_stripped() {
        let raw = "Sure! Here is the code.\n\n@cache\ndef f(x):\n    return x\n";
        assert_eq!(extract_code(raw).unwrap(), "@cache\ndef f(x):\n    return x");
    }

    #[test]
    fn fenced_block_keeps_imports_and_helpers() {
        let raw = "```python\nfrom typing import List\n\ndef helper(y):\n    return y\n\ndef f(x):\n    return helper(x)\n```";
        assert!(extract_code(raw).unwrap().starts_with("from typing import List"));
    }

    #[test]
    fn generation_prompt_lists_tests_in_order() {
        let s = spec(&["assert f(2) == 4", "assert f(n) % 2 == 0", "output of f is always even"]);
        let p = build_generation_prompt(&s);
        assert_eq!(p.kind, PromptKind::Generate);
        let u = &p.user_text;
        assert!(u.contains("def f(x: int) -> int:"));
        let a = u.find("assert f(2) == 4").unwrap();
        let b = u.find("assert f(n) % 2 == 0").unwrap();
        let c = u.find("Required properties:").unwrap();
        assert!(a < b && b < c);
        assert!(u[c..].contains("output of f is always even"));
        assert!(u.contains("# n ranges over integers(0, 100)"));
    }

    #[test]
    fn description_only_prompt_has_no_test_section() {
        let p = build_generation_prompt(&spec(&[]));
        assert!(!p.user_text.contains("must pass"));
        assert!(!p.user_text.contains("Required properties"));
        assert!(p.user_text.contains("Doubles x."));
    }

    #[test]
    fn formalization_reply_is_classified() {
        let s = FunctionSpec::from_raw(
            "srt",
            "(xs: List[int]) -> List[int]",
            "Sorts.",
            vec![],
            EngineOptions::default(),
        )
        .unwrap();
        let reply = "```python\nassert all(a <= b for a, b in zip(srt(xs), srt(xs)[1:]))\n```";
        let t = parse_formalization(reply, &s).unwrap();
        assert!(matches!(t, TestSpec::Property { .. }), "{t:?}");
        assert!(parse_formalization("It is sorted.", &s).is_none());
    }

    #[test]
    fn augmentation_skips_duplicates_and_prose() {
        let s = spec(&["assert f(2) == 4"]);
        let reply = "```python\nassert f(2) == 4\nassert f(0) == 0\nnot a test\nassert f(-1) == -2\nassert f(0) == 0\n```";
        let got: Vec<String> = parse_augmentation(reply, &s).iter().map(|t| t.text().to_string()).collect();
        assert_eq!(got, vec!["assert f(0) == 0", "assert f(-1) == -2"]);
    }
}
