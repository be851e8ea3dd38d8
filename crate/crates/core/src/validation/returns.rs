use rustpython_parser::ast::{self, Constant, Expr};
use serde_json::{json, Value as Json};

use crate::pyast;

const SCALARS: &[&str] = &["int", "float", "str", "bool", "bytes"];

fn container(name: &str) -> Option<&'static str> {
    Some(match name {
        "list" | "List" | "typing.List" => "list",
        "dict" | "Dict" | "typing.Dict" => "dict",
        "tuple" | "Tuple" | "typing.Tuple" => "tuple",
        "set" | "Set" | "typing.Set" => "set",
        "frozenset" | "FrozenSet" | "typing.FrozenSet" => "frozenset",
        _ => return None,
    })
}

/// Translates a return annotation into the worker's type-check descriptor.
///
/// Only exact builtin types and builtin containers of builtins (one level
/// deep) are checked; anything else yields `None` and no check is armed.
pub fn return_check(annotation: &str) -> Option<Json> {
    let expr = match pyast::parse_single_statement(annotation.trim())? {
        ast::Stmt::Expr(e) => *e.value,
        _ => return None,
    };
    outer(&expr)
}

fn scalar(expr: &Expr) -> Option<Json> {
    if let Expr::Constant(c) = expr {
        if matches!(c.value, Constant::None) {
            return Some(json!({"type": "None"}));
        }
    }
    let name = pyast::dotted_name(expr)?;
    if SCALARS.contains(&name.as_str()) {
        return Some(json!({"type": name}));
    }
    if name == "None" {
        return Some(json!({"type": "None"}));
    }
    None
}

fn outer(expr: &Expr) -> Option<Json> {
    if let Some(s) = scalar(expr) {
        return Some(s);
    }
    match expr {
        Expr::Subscript(sub) => {
            let kind = container(&pyast::dotted_name(&sub.value)?)?;
            let args: Vec<&Expr> = match sub.slice.as_ref() {
                Expr::Tuple(t) => t.elts.iter().collect(),
                other => vec![other],
            };
            let mut desc = json!({"type": kind});
            match kind {
                "list" | "set" | "frozenset" => {
                    if let [only] = args.as_slice() {
                        if let Some(items) = scalar(only) {
                            desc["items"] = items;
                        }
                    }
                }
                "dict" => {
                    if let [k, v] = args.as_slice() {
                        if let (Some(k), Some(v)) = (scalar(k), scalar(v)) {
                            desc["keys"] = k;
                            desc["values"] = v;
                        }
                    }
                }
                "tuple" => {
                    let ellipsis =
                        |e: &Expr| matches!(e, Expr::Constant(c) if matches!(c.value, Constant::Ellipsis));
                    match args.as_slice() {
                        [each, dots] if ellipsis(dots) => {
                            if let Some(each) = scalar(each) {
                                desc["each"] = each;
                            }
                        }
                        items => {
                            if let Some(items) = items.iter().map(|e| scalar(e)).collect::<Option<Vec<_>>>() {
                                desc["items"] = Json::Array(items);
                            }
                        }
                    }
                }
                _ => {}
            }
            Some(desc)
        }
        other => {
            let name = pyast::dotted_name(other)?;
            container(&name).map(|kind| json!({"type": kind}))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins() {
        assert_eq!(return_check("int"), Some(json!({"type": "int"})));
        assert_eq!(return_check("None"), Some(json!({"type": "None"})));
        assert_eq!(return_check("list"), Some(json!({"type": "list"})));
    }

    #[test]
    fn containers_one_level_deep() {
        assert_eq!(
            return_check("List[int]"),
            Some(json!({"type": "list", "items": {"type": "int"}}))
        );
        assert_eq!(
            return_check("dict[str, float]"),
            Some(json!({"type": "dict", "keys": {"type": "str"}, "values": {"type": "float"}}))
        );
        assert_eq!(
            return_check("Tuple[int, ...]"),
            Some(json!({"type": "tuple", "each": {"type": "int"}}))
        );
        assert_eq!(
            return_check("tuple[int, str]"),
            Some(json!({"type": "tuple", "items": [{"type": "int"}, {"type": "str"}]}))
        );
        // nested containers only check the outer layer
        assert_eq!(return_check("list[list[int]]"), Some(json!({"type": "list"})));
    }

    #[test]
    fn unsupported_annotations_arm_nothing() {
        assert_eq!(return_check("Optional[int]"), None);
        assert_eq!(return_check("MyClass"), None);
        assert_eq!(return_check("'int'"), None);
    }
}
