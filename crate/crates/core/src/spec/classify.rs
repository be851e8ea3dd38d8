use std::collections::{BTreeMap, BTreeSet};

use rustpython_parser::ast;

use super::{Domain, SuiteRef, TestSpec};
use crate::error::{Error, Result};
use crate::pyast;

/// A test entry as it appears in a header, before classification.
#[derive(Debug, Clone, PartialEq)]
pub enum RawTest {
    Text(String),
    Suite(SuiteRef),
    /// A property string with explicitly declared variable domains.
    Property {
        text: String,
        domains: BTreeMap<String, Domain>,
    },
}

impl RawTest {
    pub fn text(s: impl Into<String>) -> Self {
        RawTest::Text(s.into())
    }
}

/// Classifies a raw test by parsing it, never by prefix matching.
///
/// A string that parses as a single `assert` statement is an assertion when
/// it has no free variables and a property otherwise; anything else
/// (prose, other statements, several statements) is natural language.
pub fn classify_test(raw: RawTest, target_name: &str) -> Result<TestSpec> {
    match raw {
        RawTest::Suite(s) => Ok(TestSpec::Suite(s)),
        RawTest::Text(text) => Ok(classify_text(text, target_name)),
        RawTest::Property { text, domains } => match classify_text(text, target_name) {
            TestSpec::Property { text, .. } => Ok(TestSpec::Property { text, domains }),
            other => Err(Error::spec(format!(
                "`{}` was given variable domains but is not a property test",
                other.text()
            ))),
        },
    }
}

fn classify_text(text: String, target_name: &str) -> TestSpec {
    let vars = pyast::parse_single_statement(&text)
        .and_then(|stmt| statement_free_variables(&stmt, target_name));
    match vars {
        Some(vars) if vars.is_empty() => TestSpec::Assertion { text },
        Some(_) => TestSpec::Property {
            text,
            domains: BTreeMap::new(),
        },
        None => TestSpec::NaturalLanguage { text },
    }
}

/// Free variables of an assertion, excluding the target function and builtins.
pub fn free_variables(prop_text: &str, target_name: &str) -> Result<BTreeSet<String>> {
    let stmt = pyast::parse_suite(prop_text)
        .map_err(|d| Error::spec(format!("`{prop_text}` does not parse: {d}")))
        .and_then(|mut suite| match suite.len() {
            1 => Ok(suite.pop().unwrap()),
            n => Err(Error::spec(format!(
                "`{prop_text}` is {n} statements, expected one assertion"
            ))),
        })?;
    statement_free_variables(&stmt, target_name)
        .ok_or_else(|| Error::spec(format!("`{prop_text}` is not an assertion statement")))
}

pub(crate) fn statement_free_variables(stmt: &ast::Stmt, target_name: &str) -> Option<BTreeSet<String>> {
    let ast::Stmt::Assert(a) = stmt else {
        return None;
    };
    let mut exprs = vec![a.test.as_ref()];
    if let Some(msg) = &a.msg {
        exprs.push(msg.as_ref());
    }
    let names = pyast::free_names(&exprs)
        .into_iter()
        .filter(|n| n != target_name && !pyast::is_builtin(n))
        .collect();
    Some(names)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classify(s: &str, target: &str) -> TestSpec {
        classify_test(RawTest::text(s), target).unwrap()
    }

    #[test]
    fn ground_assertion() {
        assert_eq!(
            classify("assert f(5) == 2", "f"),
            TestSpec::Assertion { text: "assert f(5) == 2".into() }
        );
    }

    #[test]
    fn prose_is_natural_language() {
        assert!(matches!(
            classify("output of f is always even", "f"),
            TestSpec::NaturalLanguage { .. }
        ));
        // starts with the keyword but does not parse
        assert!(matches!(
            classify("assert that it is fast", "f"),
            TestSpec::NaturalLanguage { .. }
        ));
    }

    #[test]
    fn other_statements_are_natural_language() {
        assert!(matches!(classify("f(3)", "f"), TestSpec::NaturalLanguage { .. }));
        assert!(matches!(
            classify("assert f(1) == 1; assert f(2) == 2", "f"),
            TestSpec::NaturalLanguage { .. }
        ));
    }

    #[test]
    fn recurrence_is_property() {
        let t = classify("assert fibonacci(n+2) == fibonacci(n+1) + fibonacci(n)", "fibonacci");
        assert!(matches!(t, TestSpec::Property { .. }));
    }

    #[test]
    fn free_variable_examples() {
        let fv = |t: &str, n: &str| free_variables(t, n).unwrap().into_iter().collect::<Vec<_>>();
        assert_eq!(
            fv("assert fibonacci(n+2) == fibonacci(n+1) + fibonacci(n)", "fibonacci"),
            ["n"]
        );
        assert!(fv("assert f(0) == 0", "f").is_empty());
        assert_eq!(fv("assert g(a, b) == g(b, a)", "g"), ["a", "b"]);
        assert_eq!(fv("assert len(f(xs)) <= len(xs)", "f"), ["xs"]);
    }

    #[test]
    fn free_variables_parse_failure_names_text() {
        let err = free_variables("assert (", "f").unwrap_err();
        assert!(err.to_string().contains("assert ("));
        assert!(free_variables("x = 1", "f").is_err());
    }

    #[test]
    fn domains_on_non_property_are_rejected() {
        let raw = RawTest::Property {
            text: "assert f(1) == 1".into(),
            domains: BTreeMap::new(),
        };
        assert!(classify_test(raw, "f").is_err());
    }

    #[test]
    fn classification_is_deterministic() {
        for s in ["assert f(x) > 0", "hello", "assert f(1) == 1"] {
            assert_eq!(classify(s, "f"), classify(s, "f"));
        }
    }
}
