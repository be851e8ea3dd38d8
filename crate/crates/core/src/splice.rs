//! Inlining validated code into the source file and removing its header.
//!
//! Only the header decorator lines and the stub body are rewritten; every
//! other byte of the file is kept. A function is spliced only when a cache
//! record matches its header exactly as written today, so edited headers
//! are never paired with stale code.

use std::collections::BTreeSet;
use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rustpython_parser::ast::Stmt;
use rustpython_parser::lexer::lex;
use rustpython_parser::{Mode, Tok};
use serde::Serialize;
use similar::TextDiff;

use crate::cache::{Cache, CacheRecord};
use crate::error::{Error, Result};
use crate::header::{DecoratedFunction, Module};
use crate::pyast;
use crate::spec::SpecHash;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpliceTarget {
    All,
    Function(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SpliceStatus {
    Spliced,
    /// No cache record exists for the function.
    SpliceMiss,
    /// Records exist for the function but none matches the current header.
    SpliceStale,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FunctionSplice {
    pub function: String,
    pub status: SpliceStatus,
    /// Hash of the header as currently written, when it could be bound to a record.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec_hash: Option<SpecHash>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SpliceReport {
    pub path: PathBuf,
    pub functions: Vec<FunctionSplice>,
    pub changed: bool,
    pub nothing_to_do: bool,
    pub dry_run: bool,
    /// Unified diff of the rewrite, for dry runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diff: Option<String>,
    /// Cache records are left in place after splicing.
    pub cache_records_kept: bool,
}

impl SpliceReport {
    pub fn spliced(&self) -> usize {
        self.functions.iter().filter(|f| f.status == SpliceStatus::Spliced).count()
    }

    pub fn all_spliced(&self) -> bool {
        self.functions.iter().all(|f| f.status == SpliceStatus::Spliced)
    }
}

enum Lookup {
    Found(CacheRecord),
    Miss,
    Stale,
}

fn lookup(f: &DecoratedFunction, records: &[CacheRecord]) -> Lookup {
    let mut seen = false;
    for r in records.iter().filter(|r| r.function_name == f.spec.name) {
        seen = true;
        let spec = if f.spec.options.backend_id.is_empty() {
            f.spec.clone().with_backend_id(r.backend_id.clone())
        } else {
            f.spec.clone()
        };
        if spec.hash() == r.spec_hash {
            return Lookup::Found(r.clone());
        }
    }
    if seen {
        Lookup::Stale
    } else {
        Lookup::Miss
    }
}

/// Rewrites `path` in place, or only computes the diff when `dry_run`.
/// Parse failures and I/O errors leave the file untouched.
pub fn splice_file(path: &Path, target: &SpliceTarget, cache: &Cache, dry_run: bool) -> Result<SpliceReport> {
    let source = std::fs::read_to_string(path)?;
    let module = Module::parse(path, source.clone())?;
    let targeted: Vec<&DecoratedFunction> = module
        .functions
        .iter()
        .filter(|f| match target {
            SpliceTarget::All => true,
            SpliceTarget::Function(name) => &f.spec.name == name,
        })
        .collect();
    let mut report = SpliceReport {
        path: path.to_path_buf(),
        functions: vec![],
        changed: false,
        nothing_to_do: targeted.is_empty(),
        dry_run,
        diff: None,
        cache_records_kept: true,
    };
    if targeted.is_empty() {
        return Ok(report);
    }

    let records = cache.records()?;
    let mut edits: Vec<(Range<usize>, String)> = Vec::new();
    for f in &targeted {
        let (status, hash) = match lookup(f, &records) {
            Lookup::Found(record) => {
                edits.extend(function_edits(&source, f, &record.source_text)?);
                (SpliceStatus::Spliced, Some(record.spec_hash))
            }
            Lookup::Miss => (SpliceStatus::SpliceMiss, None),
            Lookup::Stale => (SpliceStatus::SpliceStale, None),
        };
        report.functions.push(FunctionSplice {
            function: f.spec.name.clone(),
            status,
            spec_hash: hash,
        });
    }
    if report.spliced() == module.functions.len() {
        edits.extend(module.dsl_imports.iter().map(|r| (r.clone(), String::new())));
    }
    if edits.is_empty() {
        return Ok(report);
    }

    let rewritten = apply(&source, edits);
    Module::parse(path, rewritten.clone()).map_err(|e| Error::Internal(format!("spliced output does not parse: {e}")))?;
    report.changed = rewritten != source;
    if dry_run {
        let label = path.display().to_string();
        let label = label.trim_start_matches('/');
        report.diff = Some(
            TextDiff::from_lines(&source, &rewritten)
                .unified_diff()
                .header(&format!("a/{label}"), &format!("b/{label}"))
                .to_string(),
        );
    } else if report.changed {
        write_atomically(path, &rewritten)?;
    }
    Ok(report)
}

fn apply(source: &str, mut edits: Vec<(Range<usize>, String)>) -> String {
    edits.sort_by_key(|(r, _)| std::cmp::Reverse((r.start, r.end)));
    let mut out = source.to_string();
    for (range, text) in edits {
        out.replace_range(range, &text);
    }
    out
}

fn write_atomically(path: &Path, text: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let permissions = std::fs::metadata(path)?.permissions();
    let mut tmp = tempfile::Builder::new()
        .prefix(".splice-")
        .tempfile_in(dir)
        .map_err(|e| Error::storage(dir, e))?;
    tmp.write_all(text.as_bytes())
        .and_then(|_| tmp.as_file().sync_all())
        .and_then(|_| std::fs::set_permissions(tmp.path(), permissions))
        .map_err(|e| Error::storage(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::storage(path, e.error))?;
    Ok(())
}

/// Lines that start inside a multi-line string literal. Their content
/// belongs to the string and must not be re-indented.
fn string_interior_lines(code: &str) -> BTreeSet<usize> {
    let mut inside = BTreeSet::new();
    for (tok, range) in lex(code, Mode::Module).flatten() {
        if !matches!(tok, Tok::String { .. }) {
            continue;
        }
        let (start, end) = (range.start().to_usize(), range.end().to_usize());
        let mut i = start;
        while let Some(nl) = code[i..end].find('\n') {
            i += nl + 1;
            inside.insert(i);
        }
    }
    inside
}

/// Re-indents whole lines of `code` from `from` to `to` indentation.
fn reindent(code: &str, from: &str, to: &str) -> String {
    let protected = string_interior_lines(code);
    let mut out = String::new();
    let mut offset = 0;
    for line in code.split_inclusive('\n') {
        if protected.contains(&offset) {
            out.push_str(line);
        } else if line.trim().is_empty() {
            if line.ends_with('\n') {
                out.push('\n');
            }
        } else {
            out.push_str(to);
            out.push_str(line.strip_prefix(from).unwrap_or(line.trim_start()));
        }
        offset += line.len();
    }
    out
}

fn leading_ws(line: &str) -> &str {
    &line[..line.len() - line.trim_start().len()]
}

struct CachedParts {
    prelude: Vec<String>,
    decorators: String,
    body: String,
    body_indent: String,
}

fn cached_parts(code: &str, name: &str) -> Result<CachedParts> {
    let code = if code.ends_with('\n') {
        code.to_string()
    } else {
        format!("{code}\n")
    };
    let suite = pyast::parse_suite(&code)
        .map_err(|d| Error::Internal(format!("cached code for `{name}` does not parse: {d}")))?;
    let mut prelude = Vec::new();
    let mut parts = None;
    for stmt in &suite {
        let def = match stmt {
            Stmt::FunctionDef(f) if f.name.as_str() == name => Some((&f.decorator_list, &f.body)),
            Stmt::AsyncFunctionDef(f) if f.name.as_str() == name => Some((&f.decorator_list, &f.body)),
            _ => None,
        };
        let Some((decorators, body)) = def else {
            let lines = crate::header::whole_lines(&code, pyast::start(stmt), pyast::end(stmt));
            prelude.push(code[lines].to_string());
            continue;
        };
        let decorators = match decorators.first() {
            Some(d) => {
                let start = pyast::line_start(&code, pyast::start(d).saturating_sub(1));
                let def_line = pyast::line_start(&code, pyast::start(stmt));
                code[start..def_line].to_string()
            }
            None => String::new(),
        };
        let statements: Vec<&Stmt> = body
            .iter()
            .enumerate()
            .filter(|(i, s)| !(*i == 0 && is_docstring(s)))
            .map(|(_, s)| s)
            .collect();
        let (body, body_indent) = match (statements.first(), statements.last()) {
            (Some(first), Some(last)) => {
                let first_line = pyast::line_start(&code, pyast::start(*first));
                let inline = first_line == pyast::line_start(&code, pyast::start(stmt))
                    || code[first_line..pyast::start(*first)].trim() != "";
                if inline {
                    let text = code[pyast::start(*first)..pyast::end(*last)].trim_end().to_string();
                    (format!("{text}\n"), String::new())
                } else {
                    let end = pyast::line_end_inclusive(&code, pyast::end(*last).saturating_sub(1));
                    let indent = leading_ws(&code[first_line..]).to_string();
                    (code[first_line..end].to_string(), indent)
                }
            }
            _ => ("pass\n".to_string(), String::new()),
        };
        parts = Some((decorators, body, body_indent));
    }
    let (decorators, body, body_indent) =
        parts.ok_or_else(|| Error::Internal(format!("cached code does not define `{name}`")))?;
    Ok(CachedParts {
        prelude,
        decorators,
        body,
        body_indent,
    })
}

fn is_docstring(stmt: &Stmt) -> bool {
    matches!(stmt, Stmt::Expr(e) if pyast::string_literal(&e.value).is_some())
}

fn docstring_literal(description: &str, indent: &str) -> String {
    let escaped = description.replace('\\', "\\\\").replace("\"\"\"", "\\\"\\\"\\\"");
    let mut lines = escaped.lines();
    let mut out = format!("{indent}\"\"\"{}", lines.next().unwrap_or(""));
    let rest: Vec<&str> = lines.collect();
    if rest.is_empty() {
        out.push_str("\"\"\"\n");
        return out;
    }
    for line in rest {
        out.push('\n');
        if !line.is_empty() {
            out.push_str(indent);
            out.push_str(line);
        }
    }
    out.push_str(&format!("\n{indent}\"\"\"\n"));
    out
}

fn function_edits(source: &str, f: &DecoratedFunction, cached: &str) -> Result<Vec<(Range<usize>, String)>> {
    let site = &f.site;
    let parts = cached_parts(cached, &f.spec.name)?;
    let mut edits = Vec::new();

    let present: BTreeSet<&str> = source.lines().map(str::trim_end).collect();
    let prelude: String = parts
        .prelude
        .iter()
        .filter(|p| !(p.trim_end().lines().count() == 1 && present.contains(p.trim_end())))
        .map(|p| reindent(p, "", &site.indent))
        .collect();
    if !prelude.is_empty() {
        let defines = prelude
            .lines()
            .any(|l| l.trim_start().starts_with("def ") || l.trim_start().starts_with("class "));
        let gap = if defines { "\n\n\n" } else { "\n\n" };
        edits.push((site.decorated_start..site.decorated_start, format!("{}{gap}", prelude.trim_end())));
    }
    edits.push((
        site.decorator_lines.clone(),
        reindent(&parts.decorators, "", &site.indent),
    ));

    let body_line = pyast::line_start(source, site.body.start);
    let unit_indent = if site.body_inline {
        format!("{}    ", site.indent)
    } else {
        leading_ws(&source[body_line..]).to_string()
    };
    let docstring = existing_docstring(source, f, &unit_indent)
        .unwrap_or_else(|| docstring_literal(&f.spec.description, &unit_indent));
    let body = reindent(&parts.body, &parts.body_indent, &unit_indent);
    let body_end = pyast::line_end_inclusive(source, site.body.end.saturating_sub(1));
    let mut replacement = format!("{docstring}{body}");
    if body_end == source.len() && !source.ends_with('\n') {
        replacement.truncate(replacement.trim_end_matches('\n').len());
    }
    if site.body_inline {
        edits.push((site.colon_end..body_end, format!("\n{replacement}")));
    } else {
        edits.push((body_line..body_end, replacement));
    }
    Ok(edits)
}

/// The stub's own docstring, verbatim, when it alone makes up the description.
fn existing_docstring(source: &str, f: &DecoratedFunction, indent: &str) -> Option<String> {
    if !f.site.has_docstring || f.site.body_inline {
        return None;
    }
    let suite = pyast::parse_suite(&source[f.site.body.clone()]).ok()?;
    let first = suite.first()?;
    let Stmt::Expr(e) = first else { return None };
    let doc = pyast::string_literal(&e.value)?;
    if crate::header::clean_doc(doc) != f.spec.description {
        return None;
    }
    let text = &source[f.site.body.start..f.site.body.start + pyast::end(first)];
    Some(format!("{indent}{text}\n"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::ValidationSummary;

    const STUB: &str = r#"# helpers above
import pythoness
from typing import List


def untouched(x):
    return x  # keep me


@pythoness.spec(
    "Returns twice x.",
    tests=["assert double(2) == 4"],
)
def double(x: int) -> int:
    ...


# trailing comment
"#;

    fn put(cache: &Cache, module: &Module, name: &str, code: &str) {
        let f = module.function(name).unwrap();
        let spec = f.spec.clone().with_backend_id("scripted");
        cache
            .put(&CacheRecord::new(spec.hash(), name, code, "scripted", 1, ValidationSummary::default()))
            .unwrap();
    }

    fn setup(src: &str) -> (tempfile::TempDir, PathBuf, Cache) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.py");
        std::fs::write(&path, src).unwrap();
        let cache = Cache::new(dir.path().join("cache"));
        (dir, path, cache)
    }

    #[test]
    fn splices_and_is_idempotent() {
        let (_d, path, cache) = setup(STUB);
        let module = Module::load(&path).unwrap();
        put(&cache, &module, "double", "import math\n\ndef double(x: int) -> int:\n    \"\"\"doc\"\"\"\n    return 2 * x\n");
        let report = splice_file(&path, &SpliceTarget::All, &cache, false).unwrap();
        assert!(report.changed && report.all_spliced());
        let out = std::fs::read_to_string(&path).unwrap();
        let expected = r#"# helpers above
from typing import List


def untouched(x):
    return x  # keep me


import math

def double(x: int) -> int:
    """Returns twice x."""
    return 2 * x


# trailing comment
"#;
        assert_eq!(out, expected);
        let again = splice_file(&path, &SpliceTarget::All, &cache, false).unwrap();
        assert!(again.nothing_to_do && !again.changed);
        assert_eq!(std::fs::read_to_string(&path).unwrap(), expected);
    }

    #[test]
    fn miss_and_stale_leave_the_file_alone() {
        let (_d, path, cache) = setup(STUB);
        let r = splice_file(&path, &SpliceTarget::All, &cache, false).unwrap();
        assert_eq!(r.functions[0].status, SpliceStatus::SpliceMiss);
        cache
            .put(&CacheRecord::new(
                SpecHash::parse(&"0".repeat(64)).unwrap(),
                "double",
                "def double(x):\n    return 0\n",
                "scripted",
                1,
                ValidationSummary::default(),
            ))
            .unwrap();
        let r = splice_file(&path, &SpliceTarget::All, &cache, false).unwrap();
        assert_eq!(r.functions[0].status, SpliceStatus::SpliceStale);
        assert!(!r.changed);
        assert_eq!(std::fs::read_to_string(&path).unwrap(), STUB);
    }

    #[test]
    fn dry_run_only_diffs() {
        let (_d, path, cache) = setup(STUB);
        let module = Module::load(&path).unwrap();
        put(&cache, &module, "double", "def double(x):\n    return 2 * x\n");
        let r = splice_file(&path, &SpliceTarget::All, &cache, true).unwrap();
        let diff = r.diff.unwrap();
        assert!(diff.contains("-@pythoness.spec("));
        assert!(diff.contains("+    return 2 * x"));
        assert_eq!(std::fs::read_to_string(&path).unwrap(), STUB);
    }

    #[test]
    fn multiline_strings_keep_their_content() {
        let code = "def f(x):\n    s = \"\"\"a\n  b\"\"\"\n    return s\n";
        assert_eq!(reindent(code, "", "    "), "    def f(x):\n        s = \"\"\"a\n  b\"\"\"\n        return s\n");
    }

    #[test]
    fn docstring_escaping() {
        assert_eq!(docstring_literal("a \"\"\" b", "  "), "  \"\"\"a \\\"\\\"\\\" b\"\"\"\n");
        assert_eq!(docstring_literal("one\n\ntwo", ""), "\"\"\"one\n\ntwo\n\"\"\"\n");
    }
}
