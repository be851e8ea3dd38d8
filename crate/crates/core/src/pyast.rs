//! Thin helpers over the Python parser: syntax diagnostics, offset
//! arithmetic, literal extraction and free-name analysis.

use std::collections::{BTreeSet, HashSet};

use rustpython_parser::ast::{self, Constant, Expr, Ranged};
use rustpython_parser::Parse;
use serde::{Deserialize, Serialize};

/// A syntax error with a 1-based line and column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntaxDiagnostic {
    pub message: String,
    pub line: usize,
    pub column: usize,
}

impl std::fmt::Display for SyntaxDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

pub fn parse_suite(source: &str) -> Result<ast::Suite, SyntaxDiagnostic> {
    ast::Suite::parse(source, "<source>").map_err(|err| {
        let (line, column) = line_col(source, err.offset.to_usize());
        SyntaxDiagnostic {
            message: err.error.to_string(),
            line,
            column,
        }
    })
}

/// Parses `text` and returns the statement iff it is exactly one statement.
pub fn parse_single_statement(text: &str) -> Option<ast::Stmt> {
    let mut suite = parse_suite(text).ok()?;
    if suite.len() == 1 {
        suite.pop()
    } else {
        None
    }
}

pub fn line_col(source: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(source.len());
    let before = &source[..offset];
    let line = before.matches('\n').count() + 1;
    let line_start = before.rfind('\n').map(|i| i + 1).unwrap_or(0);
    let column = before[line_start..].chars().count() + 1;
    (line, column)
}

pub fn start(node: &impl Ranged) -> usize {
    node.range().start().to_usize()
}

pub fn end(node: &impl Ranged) -> usize {
    node.range().end().to_usize()
}

/// Byte offset of the first character of the line containing `offset`.
pub fn line_start(source: &str, offset: usize) -> usize {
    source[..offset].rfind('\n').map(|i| i + 1).unwrap_or(0)
}

/// Byte offset just past the newline ending the line containing `offset`
/// (or the end of the source).
pub fn line_end_inclusive(source: &str, offset: usize) -> usize {
    match source[offset..].find('\n') {
        Some(i) => offset + i + 1,
        None => source.len(),
    }
}

pub fn string_literal(expr: &Expr) -> Option<&str> {
    match expr {
        Expr::Constant(c) => match &c.value {
            Constant::Str(s) => Some(s.as_str()),
            _ => None,
        },
        _ => None,
    }
}

pub fn int_literal(expr: &Expr) -> Option<i64> {
    match expr {
        Expr::Constant(c) => match &c.value {
            Constant::Int(i) => i.to_string().parse().ok(),
            _ => None,
        },
        Expr::UnaryOp(u) if matches!(u.op, ast::UnaryOp::USub) => int_literal(&u.operand)?.checked_neg(),
        Expr::UnaryOp(u) if matches!(u.op, ast::UnaryOp::UAdd) => int_literal(&u.operand),
        _ => None,
    }
}

pub fn float_literal(expr: &Expr) -> Option<f64> {
    match expr {
        Expr::Constant(c) => match &c.value {
            Constant::Float(f) => Some(*f),
            Constant::Int(i) => i.to_string().parse().ok(),
            _ => None,
        },
        Expr::UnaryOp(u) if matches!(u.op, ast::UnaryOp::USub) => float_literal(&u.operand).map(|f| -f),
        Expr::UnaryOp(u) if matches!(u.op, ast::UnaryOp::UAdd) => float_literal(&u.operand),
        _ => None,
    }
}

pub fn bool_literal(expr: &Expr) -> Option<bool> {
    match expr {
        Expr::Constant(c) => match &c.value {
            Constant::Bool(b) => Some(*b),
            _ => None,
        },
        _ => None,
    }
}

/// Dotted name of a `Name` or `Attribute` chain, e.g. `pythoness.spec`.
pub fn dotted_name(expr: &Expr) -> Option<String> {
    match expr {
        Expr::Name(n) => Some(n.id.to_string()),
        Expr::Attribute(a) => Some(format!("{}.{}", dotted_name(&a.value)?, a.attr)),
        _ => None,
    }
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c == '_' || c.is_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c == '_' || c.is_alphanumeric()) && !KEYWORDS.contains(&s)
}

pub const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue",
    "def", "del", "elif", "else", "except", "finally", "for", "from", "global", "if", "import",
    "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try", "while",
    "with", "yield",
];

/// Names bound in the host's `builtins` module.
pub const BUILTINS: &[&str] = &[
    "ArithmeticError", "AssertionError", "AttributeError", "BaseException", "BlockingIOError",
    "BrokenPipeError", "BufferError", "BytesWarning", "ChildProcessError",
    "ConnectionAbortedError", "ConnectionError", "ConnectionRefusedError", "ConnectionResetError",
    "DeprecationWarning", "EOFError", "Ellipsis", "EncodingWarning", "EnvironmentError",
    "Exception", "False", "FileExistsError", "FileNotFoundError", "FloatingPointError",
    "FutureWarning", "GeneratorExit", "IOError", "ImportError", "ImportWarning",
    "IndentationError", "IndexError", "InterruptedError", "IsADirectoryError", "KeyError",
    "KeyboardInterrupt", "LookupError", "MemoryError", "ModuleNotFoundError", "NameError", "None",
    "NotADirectoryError", "NotImplemented", "NotImplementedError", "OSError", "OverflowError",
    "PendingDeprecationWarning", "PermissionError", "ProcessLookupError", "RecursionError",
    "ReferenceError", "ResourceWarning", "RuntimeError", "RuntimeWarning", "StopAsyncIteration",
    "StopIteration", "SyntaxError", "SyntaxWarning", "SystemError", "SystemExit", "TabError",
    "TimeoutError", "True", "TypeError", "UnboundLocalError", "UnicodeDecodeError",
    "UnicodeEncodeError", "UnicodeError", "UnicodeTranslateError", "UnicodeWarning",
    "UserWarning", "ValueError", "Warning", "ZeroDivisionError", "__build_class__", "__debug__",
    "__doc__", "__import__", "__loader__", "__name__", "__package__", "__spec__", "abs", "aiter",
    "all", "anext", "any", "ascii", "bin", "bool", "breakpoint", "bytearray", "bytes", "callable",
    "chr", "classmethod", "compile", "complex", "copyright", "credits", "delattr", "dict", "dir",
    "divmod", "enumerate", "eval", "exec", "exit", "filter", "float", "format", "frozenset",
    "getattr", "globals", "hasattr", "hash", "help", "hex", "id", "input", "int", "isinstance",
    "issubclass", "iter", "len", "license", "list", "locals", "map", "max", "memoryview", "min",
    "next", "object", "oct", "open", "ord", "pow", "print", "property", "quit", "range", "repr",
    "reversed", "round", "set", "setattr", "slice", "sorted", "staticmethod", "str", "sum",
    "super", "tuple", "type", "vars", "zip",
];

pub fn is_builtin(name: &str) -> bool {
    BUILTINS.binary_search(&name).is_ok()
}

/// Names read by an expression that are not bound inside it (by a lambda,
/// comprehension or assignment expression).
pub fn free_names(exprs: &[&Expr]) -> BTreeSet<String> {
    let mut walker = FreeNames::default();
    for e in exprs {
        walker.collect_walrus(e);
    }
    for e in exprs {
        walker.expr(e);
    }
    walker.free
}

#[derive(Default)]
struct FreeNames {
    scopes: Vec<HashSet<String>>,
    walrus: HashSet<String>,
    free: BTreeSet<String>,
}

impl FreeNames {
    fn bound(&self, name: &str) -> bool {
        self.walrus.contains(name) || self.scopes.iter().any(|s| s.contains(name))
    }

    fn collect_walrus(&mut self, e: &Expr) {
        if let Expr::NamedExpr(n) = e {
            if let Expr::Name(name) = n.target.as_ref() {
                self.walrus.insert(name.id.to_string());
            }
        }
        for child in children(e) {
            self.collect_walrus(child);
        }
    }

    fn bind_target(scope: &mut HashSet<String>, target: &Expr) {
        match target {
            Expr::Name(n) => {
                scope.insert(n.id.to_string());
            }
            Expr::Tuple(t) => t.elts.iter().for_each(|e| Self::bind_target(scope, e)),
            Expr::List(l) => l.elts.iter().for_each(|e| Self::bind_target(scope, e)),
            Expr::Starred(s) => Self::bind_target(scope, &s.value),
            _ => {}
        }
    }

    fn arguments(&mut self, args: &ast::Arguments) -> HashSet<String> {
        let mut scope = HashSet::new();
        let all = args
            .posonlyargs
            .iter()
            .chain(args.args.iter())
            .chain(args.kwonlyargs.iter());
        for a in all {
            if let Some(d) = &a.default {
                self.expr(d);
            }
            scope.insert(a.def.arg.to_string());
        }
        if let Some(v) = &args.vararg {
            scope.insert(v.arg.to_string());
        }
        if let Some(k) = &args.kwarg {
            scope.insert(k.arg.to_string());
        }
        scope
    }

    fn comprehension(&mut self, generators: &[ast::Comprehension], tail: &[&Expr]) {
        let mut scope = HashSet::new();
        for (i, g) in generators.iter().enumerate() {
            if i == 0 {
                // the outermost iterable is evaluated in the enclosing scope
                self.expr(&g.iter);
                self.scopes.push(HashSet::new());
            } else {
                self.expr(&g.iter);
            }
            Self::bind_target(&mut scope, &g.target);
            self.scopes.last_mut().unwrap().extend(scope.drain());
            for cond in &g.ifs {
                self.expr(cond);
            }
        }
        for e in tail {
            self.expr(e);
        }
        if !generators.is_empty() {
            self.scopes.pop();
        }
    }

    fn expr(&mut self, e: &Expr) {
        match e {
            Expr::Name(n) => {
                if matches!(n.ctx, ast::ExprContext::Load) && !self.bound(&n.id) {
                    self.free.insert(n.id.to_string());
                }
            }
            Expr::Lambda(l) => {
                let scope = self.arguments(&l.args);
                self.scopes.push(scope);
                self.expr(&l.body);
                self.scopes.pop();
            }
            Expr::ListComp(c) => self.comprehension(&c.generators, &[&c.elt]),
            Expr::SetComp(c) => self.comprehension(&c.generators, &[&c.elt]),
            Expr::GeneratorExp(c) => self.comprehension(&c.generators, &[&c.elt]),
            Expr::DictComp(c) => self.comprehension(&c.generators, &[&c.key, &c.value]),
            Expr::NamedExpr(n) => self.expr(&n.value),
            other => {
                for child in children(other) {
                    self.expr(child);
                }
            }
        }
    }
}

/// Direct sub-expressions, in evaluation order. Scoping constructs are
/// included so walrus collection can see through them.
fn children(e: &Expr) -> Vec<&Expr> {
    match e {
        Expr::BoolOp(b) => b.values.iter().collect(),
        Expr::NamedExpr(n) => vec![&n.target, &n.value],
        Expr::BinOp(b) => vec![&b.left, &b.right],
        Expr::UnaryOp(u) => vec![&u.operand],
        Expr::Lambda(l) => vec![&l.body],
        Expr::IfExp(i) => vec![&i.test, &i.body, &i.orelse],
        Expr::Dict(d) => d
            .keys
            .iter()
            .flatten()
            .chain(d.values.iter())
            .collect(),
        Expr::Set(s) => s.elts.iter().collect(),
        Expr::ListComp(c) => comp_children(&c.generators, [&*c.elt].into_iter()),
        Expr::SetComp(c) => comp_children(&c.generators, [&*c.elt].into_iter()),
        Expr::GeneratorExp(c) => comp_children(&c.generators, [&*c.elt].into_iter()),
        Expr::DictComp(c) => comp_children(&c.generators, [&*c.key, &*c.value].into_iter()),
        Expr::Await(a) => vec![&a.value],
        Expr::Yield(y) => y.value.iter().map(|v| v.as_ref()).collect(),
        Expr::YieldFrom(y) => vec![&y.value],
        Expr::Compare(c) => std::iter::once(&*c.left).chain(c.comparators.iter()).collect(),
        Expr::Call(c) => std::iter::once(&*c.func)
            .chain(c.args.iter())
            .chain(c.keywords.iter().map(|k| &k.value))
            .collect(),
        Expr::FormattedValue(f) => std::iter::once(&*f.value)
            .chain(f.format_spec.iter().map(|s| s.as_ref()))
            .collect(),
        Expr::JoinedStr(j) => j.values.iter().collect(),
        Expr::Constant(_) => vec![],
        Expr::Attribute(a) => vec![&a.value],
        Expr::Subscript(s) => vec![&s.value, &s.slice],
        Expr::Starred(s) => vec![&s.value],
        Expr::Name(_) => vec![],
        Expr::List(l) => l.elts.iter().collect(),
        Expr::Tuple(t) => t.elts.iter().collect(),
        Expr::Slice(s) => [&s.lower, &s.upper, &s.step]
            .into_iter()
            .flatten()
            .map(|b| b.as_ref())
            .collect(),
    }
}

fn comp_children<'a>(
    generators: &'a [ast::Comprehension],
    tail: impl Iterator<Item = &'a Expr>,
) -> Vec<&'a Expr> {
    let mut out = Vec::new();
    for g in generators {
        out.push(&g.target);
        out.push(&g.iter);
        out.extend(g.ifs.iter());
    }
    out.extend(tail);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn free(text: &str) -> Vec<String> {
        let stmt = parse_single_statement(text).unwrap();
        let ast::Stmt::Assert(a) = stmt else { panic!() };
        let mut exprs = vec![a.test.as_ref()];
        if let Some(m) = &a.msg {
            exprs.push(m);
        }
        free_names(&exprs).into_iter().collect()
    }

    #[test]
    fn builtins_sorted() {
        let mut sorted = BUILTINS.to_vec();
        sorted.sort();
        assert_eq!(sorted, BUILTINS);
    }

    #[test]
    fn comprehension_targets_are_bound() {
        assert_eq!(free("assert all(f(x) > y for x in xs)"), ["all", "f", "xs", "y"]);
        assert_eq!(free("assert [i for i in range(n) if i] == []"), ["n", "range"]);
        assert_eq!(free("assert {k: v for k, v in d.items()}"), ["d"]);
    }

    #[test]
    fn lambda_params_are_bound() {
        assert_eq!(free("assert (lambda a, b=c: a + b)(1) == z"), ["c", "z"]);
    }

    #[test]
    fn walrus_targets_are_bound() {
        assert_eq!(free("assert (m := f(n)) == m"), ["f", "n"]);
    }

    #[test]
    fn attributes_do_not_leak() {
        assert_eq!(free("assert math.sqrt(q) == x.y"), ["math", "q", "x"]);
    }

    #[test]
    fn line_col_is_one_based() {
        assert_eq!(line_col("ab\ncd", 0), (1, 1));
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
    }

    #[test]
    fn syntax_error_reports_line() {
        let err = parse_suite("x = 1\ndef f(x) return x").unwrap_err();
        assert_eq!(err.line, 2);
    }

    #[test]
    fn identifiers() {
        assert!(is_identifier("maxIncSubarrays"));
        assert!(is_identifier("_x1"));
        assert!(!is_identifier("1x"));
        assert!(!is_identifier("def"));
        assert!(!is_identifier(""));
    }
}
