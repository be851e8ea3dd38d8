use rustpython_parser::ast::{self, Expr};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pyast;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    PositionalOnly,
    Positional,
    VarArgs,
    KeywordOnly,
    VarKeywords,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub annotation: Option<String>,
}

/// A parsed parameter list with its optional return annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub params: Vec<Param>,
    pub returns: Option<String>,
}

impl Signature {
    /// Parses `(a: int, b) -> int` style text.
    pub fn parse(signature_text: &str) -> Result<Self> {
        let trimmed = signature_text.trim();
        if !trimmed.starts_with('(') {
            return Err(Error::spec(format!(
                "signature {signature_text:?} must start with a parameter list"
            )));
        }
        let source = format!("def __signature__{trimmed}:\n    pass\n");
        let suite = pyast::parse_suite(&source)
            .map_err(|d| Error::spec(format!("signature {signature_text:?} does not parse: {d}")))?;
        match suite.as_slice() {
            [ast::Stmt::FunctionDef(f)] => Ok(Self::from_def(&source, &f.args, f.returns.as_deref())),
            _ => Err(Error::spec(format!("signature {signature_text:?} does not parse"))),
        }
    }

    /// Reads the signature of a parsed `def`; annotation text is sliced from `source`.
    pub fn from_def(source: &str, args: &ast::Arguments, returns: Option<&Expr>) -> Self {
        let text = |e: &Expr| source[pyast::start(e)..pyast::end(e)].to_string();
        let mut params = Vec::new();
        let mut push = |a: &ast::Arg, kind| {
            params.push(Param {
                name: a.arg.to_string(),
                kind,
                annotation: a.annotation.as_deref().map(text),
            })
        };
        for a in &args.posonlyargs {
            push(&a.def, ParamKind::PositionalOnly);
        }
        for a in &args.args {
            push(&a.def, ParamKind::Positional);
        }
        if let Some(v) = &args.vararg {
            push(v, ParamKind::VarArgs);
        }
        for a in &args.kwonlyargs {
            push(&a.def, ParamKind::KeywordOnly);
        }
        if let Some(k) = &args.kwarg {
            push(k, ParamKind::VarKeywords);
        }
        Signature {
            params,
            returns: returns.map(text),
        }
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_names(&self) -> Vec<&str> {
        self.params.iter().map(|p| p.name.as_str()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_annotations() {
        let sig = Signature::parse("(nums: List[int], k=3) -> int").unwrap();
        assert_eq!(sig.param_names(), ["nums", "k"]);
        assert_eq!(sig.params[0].annotation.as_deref(), Some("List[int]"));
        assert_eq!(sig.params[1].annotation, None);
        assert_eq!(sig.returns.as_deref(), Some("int"));
    }

    #[test]
    fn parameter_kinds() {
        let sig = Signature::parse("(a, /, b, *args, c, **kw)").unwrap();
        let kinds: Vec<_> = sig.params.iter().map(|p| p.kind).collect();
        assert_eq!(
            kinds,
            [
                ParamKind::PositionalOnly,
                ParamKind::Positional,
                ParamKind::VarArgs,
                ParamKind::KeywordOnly,
                ParamKind::VarKeywords
            ]
        );
        assert_eq!(sig.returns, None);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Signature::parse("x").is_err());
        assert!(Signature::parse("(x").is_err());
        assert!(Signature::parse("(x): pass\ndef g()").is_err());
    }
}
