use std::fmt;

use rustpython_parser::ast::{self, Expr};
use serde::{Deserialize, Serialize};

use super::Signature;
use crate::error::{Error, Result};
use crate::pyast;

/// The set a property variable ranges over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Domain {
    /// Inclusive on both ends.
    IntRange { lo: i64, hi: i64 },
    FloatRange { lo: f64, hi: f64 },
    Bool,
    /// Printable ASCII strings of at most `max_len` characters.
    Text { max_len: usize },
    ListOf {
        element: Box<Domain>,
        min_len: usize,
        max_len: usize,
    },
    OneOf { values: Vec<Value> },
}

/// A concrete value drawn from a [`Domain`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
    List(Vec<Value>),
}

impl Domain {
    pub fn check(&self) -> std::result::Result<(), String> {
        match self {
            Domain::IntRange { lo, hi } if lo > hi => Err(format!("empty range {lo}..={hi}")),
            Domain::FloatRange { lo, hi } if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() => {
                Err(format!("invalid float range {lo}..={hi}"))
            }
            Domain::ListOf {
                element,
                min_len,
                max_len,
            } => {
                if min_len > max_len {
                    return Err(format!("list length bounds {min_len} > {max_len}"));
                }
                element.check()
            }
            Domain::OneOf { values } if values.is_empty() => Err("sampled_from needs at least one value".into()),
            _ => Ok(()),
        }
    }

    pub fn contains(&self, value: &Value) -> bool {
        match (self, value) {
            (Domain::IntRange { lo, hi }, Value::Int(v)) => lo <= v && v <= hi,
            (Domain::FloatRange { lo, hi }, Value::Float(v)) => lo <= v && v <= hi,
            (Domain::Bool, Value::Bool(_)) => true,
            (Domain::Text { max_len }, Value::Text(s)) => s.chars().count() <= *max_len,
            (
                Domain::ListOf {
                    element,
                    min_len,
                    max_len,
                },
                Value::List(items),
            ) => {
                (*min_len..=*max_len).contains(&items.len()) && items.iter().all(|v| element.contains(v))
            }
            (Domain::OneOf { values }, v) => values.contains(v),
            _ => false,
        }
    }

    /// Parses the header notation for domains, which borrows the names of
    /// common property-testing strategies:
    ///
    /// `integers(lo, hi)`, `floats(lo, hi)`, `booleans()`, `text(max_size=N)`,
    /// `lists(ELEM, min_size=A, max_size=B)`, `sampled_from([v, ...])`.
    pub fn parse(text: &str) -> Result<Self> {
        let expr = match pyast::parse_single_statement(text) {
            Some(ast::Stmt::Expr(e)) => *e.value,
            _ => return Err(Error::spec(format!("domain {text:?} is not an expression"))),
        };
        let d = Self::from_expr(&expr).map_err(|e| Error::spec(format!("domain {text:?}: {e}")))?;
        d.check().map_err(|e| Error::spec(format!("domain {text:?}: {e}")))?;
        Ok(d)
    }

    pub(crate) fn from_expr(expr: &Expr) -> std::result::Result<Self, String> {
        let Expr::Call(call) = expr else {
            return Err("expected a strategy call such as integers(0, 10)".into());
        };
        let func = pyast::dotted_name(&call.func).ok_or("unknown strategy")?;
        let func = func.rsplit('.').next().unwrap_or(&func).to_string();
        let arg = |pos: usize, kw: &str| -> Option<&Expr> {
            call.keywords
                .iter()
                .find(|k| k.arg.as_deref() == Some(kw))
                .map(|k| &k.value)
                .or_else(|| call.args.get(pos))
        };
        let int_arg = |pos: usize, kw: &str, default: Option<i64>| -> std::result::Result<i64, String> {
            match arg(pos, kw) {
                Some(e) => pyast::int_literal(e).ok_or_else(|| format!("`{kw}` must be an integer literal")),
                None => default.ok_or_else(|| format!("`{func}` requires `{kw}`")),
            }
        };
        let float_arg = |pos: usize, kw: &str| -> std::result::Result<f64, String> {
            arg(pos, kw)
                .and_then(pyast::float_literal)
                .ok_or_else(|| format!("`{kw}` must be a numeric literal"))
        };
        let usize_arg = |pos, kw, default| -> std::result::Result<usize, String> {
            let v = int_arg(pos, kw, default)?;
            usize::try_from(v).map_err(|_| format!("`{kw}` must be non-negative"))
        };
        match func.as_str() {
            "integers" => Ok(Domain::IntRange {
                lo: int_arg(0, "min_value", None)?,
                hi: int_arg(1, "max_value", None)?,
            }),
            "floats" => Ok(Domain::FloatRange {
                lo: float_arg(0, "min_value")?,
                hi: float_arg(1, "max_value")?,
            }),
            "booleans" => Ok(Domain::Bool),
            "text" => Ok(Domain::Text {
                max_len: usize_arg(0, "max_size", Some(20))?,
            }),
            "lists" => {
                let element = arg(0, "elements").ok_or("`lists` requires an element strategy")?;
                Ok(Domain::ListOf {
                    element: Box::new(Self::from_expr(element)?),
                    min_len: usize_arg(1, "min_size", Some(0))?,
                    max_len: usize_arg(2, "max_size", Some(20))?,
                })
            }
            "sampled_from" => {
                let values = match arg(0, "elements") {
                    Some(Expr::List(l)) => &l.elts,
                    Some(Expr::Tuple(t)) => &t.elts,
                    _ => return Err("`sampled_from` takes a list literal".into()),
                };
                let values = values
                    .iter()
                    .map(value_from_expr)
                    .collect::<Option<Vec<_>>>()
                    .ok_or("`sampled_from` values must be literals")?;
                Ok(Domain::OneOf { values })
            }
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

impl Domain {
    /// Strategy notation accepted by [`Domain::parse`].
    pub fn notation(&self) -> String {
        match self {
            Domain::IntRange { lo, hi } => format!("integers({lo}, {hi})"),
            Domain::FloatRange { lo, hi } => {
                format!("floats({}, {})", python_float(*lo), python_float(*hi))
            }
            Domain::Bool => "booleans()".into(),
            Domain::Text { max_len } => format!("text(max_size={max_len})"),
            Domain::ListOf {
                element,
                min_len,
                max_len,
            } => format!(
                "lists({}, min_size={min_len}, max_size={max_len})",
                element.notation()
            ),
            Domain::OneOf { values } => {
                let vs: Vec<String> = values.iter().map(Value::to_python).collect();
                format!("sampled_from([{}])", vs.join(", "))
            }
        }
    }
}

fn value_from_expr(e: &Expr) -> Option<Value> {
    if let Some(b) = pyast::bool_literal(e) {
        return Some(Value::Bool(b));
    }
    if let Some(i) = pyast::int_literal(e) {
        return Some(Value::Int(i));
    }
    if let Some(f) = pyast::float_literal(e) {
        return Some(Value::Float(f));
    }
    if let Some(s) = pyast::string_literal(e) {
        return Some(Value::Text(s.to_string()));
    }
    match e {
        Expr::List(l) => l.elts.iter().map(value_from_expr).collect::<Option<_>>().map(Value::List),
        _ => None,
    }
}

const DEFAULT_INT: Domain = Domain::IntRange { lo: -1000, hi: 1000 };

/// Domain for a property variable with no explicit declaration: inferred from
/// the matching parameter's annotation, else `IntRange(0, 100)`.
pub fn default_domain(var: &str, signature: &Signature) -> Domain {
    let annotation = signature
        .param(var)
        .and_then(|p| p.annotation.as_deref())
        .map(|a| a.replace(' ', ""));
    match annotation.as_deref() {
        Some(a) => domain_for_annotation(a).unwrap_or(Domain::IntRange { lo: 0, hi: 100 }),
        None => Domain::IntRange { lo: 0, hi: 100 },
    }
}

fn domain_for_annotation(a: &str) -> Option<Domain> {
    let scalar = |s: &str| match s {
        "int" => Some(DEFAULT_INT),
        "float" => Some(Domain::FloatRange { lo: -1000.0, hi: 1000.0 }),
        "bool" => Some(Domain::Bool),
        "str" => Some(Domain::Text { max_len: 20 }),
        _ => None,
    };
    if let Some(d) = scalar(a) {
        return Some(d);
    }
    let (outer, inner) = a.strip_suffix(']')?.split_once('[')?;
    match outer {
        "List" | "list" | "Sequence" | "typing.List" => Some(Domain::ListOf {
            element: Box::new(scalar(inner)?),
            min_len: 0,
            max_len: 20,
        }),
        _ => None,
    }
}

impl Value {
    /// Renders the value the way the host's `repr` would.
    pub fn to_python(&self) -> String {
        match self {
            Value::Bool(true) => "True".into(),
            Value::Bool(false) => "False".into(),
            Value::Int(i) => i.to_string(),
            Value::Float(f) => python_float(*f),
            Value::Text(s) => python_str(s),
            Value::List(items) => {
                let inner: Vec<String> = items.iter().map(Value::to_python).collect();
                format!("[{}]", inner.join(", "))
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_python())
    }
}

fn python_float(f: f64) -> String {
    if f.is_nan() {
        "nan".into()
    } else if f.is_infinite() {
        if f > 0.0 { "inf".into() } else { "-inf".into() }
    } else if f == f.trunc() && f.abs() < 1e16 {
        format!("{f:.1}")
    } else {
        format!("{f:?}")
    }
}

fn python_str(s: &str) -> String {
    let quote = if s.contains('\'') && !s.contains('"') { '"' } else { '\'' };
    let mut out = String::with_capacity(s.len() + 2);
    out.push(quote);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c if (c as u32) < 0x20 || c as u32 == 0x7f => out.push_str(&format!("\\x{:02x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_domain() -> impl Strategy<Value = Domain> {
        let leaf = prop_oneof![
            (-1000i64..1000, 0i64..1000).prop_map(|(lo, span)| Domain::IntRange { lo, hi: lo + span }),
            (-100i32..100, 0i32..100)
                .prop_map(|(lo, span)| Domain::FloatRange { lo: lo as f64 / 4.0, hi: (lo + span) as f64 / 4.0 }),
            Just(Domain::Bool),
            (0usize..30).prop_map(|max_len| Domain::Text { max_len }),
            prop::collection::vec(-5i64..5, 1..4)
                .prop_map(|v| Domain::OneOf { values: v.into_iter().map(Value::Int).collect() }),
        ];
        leaf.prop_recursive(2, 8, 1, |inner| {
            (inner, 0usize..5, 0usize..10).prop_map(|(e, min_len, extra)| Domain::ListOf {
                element: Box::new(e),
                min_len,
                max_len: min_len + extra,
            })
        })
    }

    proptest! {
        #[test]
        fn notation_round_trips(d in arb_domain()) {
            prop_assert_eq!(Domain::parse(&d.notation()).unwrap(), d);
        }
    }

    #[test]
    fn parses_strategies() {
        assert_eq!(Domain::parse("integers(0, 20)").unwrap(), Domain::IntRange { lo: 0, hi: 20 });
        assert_eq!(
            Domain::parse("integers(min_value=-5, max_value=5)").unwrap(),
            Domain::IntRange { lo: -5, hi: 5 }
        );
        assert_eq!(
            Domain::parse("lists(integers(-50, 50), min_size=2, max_size=50)").unwrap(),
            Domain::ListOf {
                element: Box::new(Domain::IntRange { lo: -50, hi: 50 }),
                min_len: 2,
                max_len: 50
            }
        );
        assert_eq!(Domain::parse("booleans()").unwrap(), Domain::Bool);
        assert_eq!(Domain::parse("text(max_size=8)").unwrap(), Domain::Text { max_len: 8 });
        assert_eq!(
            Domain::parse("sampled_from([1, 'a', True])").unwrap(),
            Domain::OneOf {
                values: vec![Value::Int(1), Value::Text("a".into()), Value::Bool(true)]
            }
        );
        assert_eq!(
            Domain::parse("st.floats(-1, 1.5)").unwrap(),
            Domain::FloatRange { lo: -1.0, hi: 1.5 }
        );
    }

    #[test]
    fn rejects_bad_domains() {
        assert!(Domain::parse("integers(5, 1)").is_err());
        assert!(Domain::parse("sampled_from([])").is_err());
        assert!(Domain::parse("lists(integers(0,1), min_size=3, max_size=2)").is_err());
        assert!(Domain::parse("whatever()").is_err());
        assert!(Domain::parse("integers(x, 1)").is_err());
    }

    #[test]
    fn defaults_follow_annotations() {
        let sig = Signature::parse("(n: int, nums: List[int], s: str, other)").unwrap();
        assert_eq!(default_domain("n", &sig), Domain::IntRange { lo: -1000, hi: 1000 });
        assert_eq!(
            default_domain("nums", &sig),
            Domain::ListOf {
                element: Box::new(Domain::IntRange { lo: -1000, hi: 1000 }),
                min_len: 0,
                max_len: 20
            }
        );
        assert_eq!(default_domain("s", &sig), Domain::Text { max_len: 20 });
        assert_eq!(default_domain("other", &sig), Domain::IntRange { lo: 0, hi: 100 });
        assert_eq!(default_domain("k", &sig), Domain::IntRange { lo: 0, hi: 100 });
    }

    #[test]
    fn python_rendering() {
        assert_eq!(Value::Int(7).to_python(), "7");
        assert_eq!(Value::Float(2.0).to_python(), "2.0");
        assert_eq!(Value::Text("it's".into()).to_python(), "\"it's\"");
        assert_eq!(Value::Text("a\nb".into()).to_python(), "'a\\nb'");
        assert_eq!(
            Value::List(vec![Value::Bool(true), Value::Int(-1)]).to_python(),
            "[True, -1]"
        );
    }

    #[test]
    fn value_json_round_trip() {
        let v = Value::List(vec![Value::Int(3), Value::Float(2.5), Value::Text("x".into())]);
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"[3,2.5,"x"]"#);
        assert_eq!(serde_json::from_str::<Value>(&s).unwrap(), v);
    }
}
