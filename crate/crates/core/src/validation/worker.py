# Candidate execution worker.
#
# Frames on stdin/stdout are a 4-byte big-endian length followed by a UTF-8
# JSON object. Every request carries "v" (protocol version) and "op"; every
# response carries "v" and "status".

import ast
import builtins
import functools
import json
import operator
import os
import struct
import sys
import traceback
import types
import unittest

PROTOCOL_VERSION = 1
REPR_LIMIT = 2000


class ReturnTypeViolation(BaseException):
    pass


def safe_repr(value):
    try:
        text = repr(value)
    except BaseException as exc:  # noqa: B902
        text = "<unrepresentable %s: %s>" % (type(value).__name__, exc)
    if len(text) > REPR_LIMIT:
        text = text[:REPR_LIMIT] + "..."
    return text


def describe_exception(exc):
    lines = traceback.format_exception_only(type(exc), exc)
    return "".join(lines).strip()


def to_json(value):
    if value is None or isinstance(value, (bool, int, str)):
        return value
    if isinstance(value, float):
        if value != value or value in (float("inf"), float("-inf")):
            return repr(value)
        return value
    if isinstance(value, (list, tuple)):
        return [to_json(v) for v in value]
    if isinstance(value, dict):
        return {str(k): to_json(v) for k, v in value.items()}
    if isinstance(value, (set, frozenset)):
        return sorted((to_json(v) for v in value), key=repr)
    return safe_repr(value)


BUILTIN_TYPES = {
    "int": int,
    "float": float,
    "str": str,
    "bool": bool,
    "bytes": bytes,
    "None": type(None),
    "list": list,
    "dict": dict,
    "tuple": tuple,
    "set": set,
    "frozenset": frozenset,
}


def conforms(value, spec):
    kind = spec["type"]
    if type(value) is not BUILTIN_TYPES[kind]:
        return False
    if kind in ("list", "set", "frozenset") and "items" in spec:
        return all(conforms(v, spec["items"]) for v in value)
    if kind == "dict" and "keys" in spec:
        return all(conforms(k, spec["keys"]) and conforms(v, spec["values"]) for k, v in value.items())
    if kind == "tuple":
        if "each" in spec:
            return all(conforms(v, spec["each"]) for v in value)
        if "items" in spec:
            items = spec["items"]
            return len(value) == len(items) and all(conforms(v, s) for v, s in zip(value, items))
    return True


CMP = {
    ast.Eq: operator.eq,
    ast.NotEq: operator.ne,
    ast.Lt: operator.lt,
    ast.LtE: operator.le,
    ast.Gt: operator.gt,
    ast.GtE: operator.ge,
    ast.Is: operator.is_,
    ast.IsNot: operator.is_not,
    ast.In: lambda a, b: a in b,
    ast.NotIn: lambda a, b: a not in b,
}


class State:
    def __init__(self):
        self.name = None
        self.fn = None
        self.violation = None
        self.returns = None

    def test_globals(self, bindings):
        g = {"__builtins__": builtins, self.name: self.fn}
        g.update(bindings)
        return g

    def wrap(self, fn):
        spec = self.returns
        if spec is None:
            return fn
        state = self

        @functools.wraps(fn)
        def checked(*args, **kwargs):
            value = fn(*args, **kwargs)
            if not conforms(value, spec):
                state.violation = safe_repr(value)
                raise ReturnTypeViolation(state.violation)
            return value

        return checked


def op_load(state, req):
    state.name = req["name"]
    state.returns = req.get("returns")
    state.fn = None
    namespace = {"__name__": "candidate", "__builtins__": builtins}
    try:
        code = compile(req["source"], "<candidate>", "exec")
    except SyntaxError as exc:
        return {
            "status": "error",
            "error": "compile_error:%s:%s:%s" % (exc.lineno or 1, exc.offset or 1, exc.msg),
        }
    try:
        exec(code, namespace)
    except BaseException as exc:
        return {"status": "error", "error": describe_exception(exc)}
    fn = namespace.get(state.name)
    if not callable(fn):
        return {"status": "error", "error": "`%s` is not defined after loading" % state.name}
    checked = state.wrap(fn)
    # recursive calls resolve through the module namespace, so they are checked too
    namespace[state.name] = checked
    state.fn = checked
    return {"status": "ok"}


def evaluate_assertion(state, text, bindings):
    tree = ast.parse(text, mode="exec")
    if len(tree.body) != 1 or not isinstance(tree.body[0], ast.Assert):
        return {"status": "error", "error": "not a single assert statement"}
    stmt = tree.body[0]
    env = state.test_globals(bindings)

    def ev(node):
        return eval(compile(ast.Expression(body=node), "<test>", "eval"), env)

    state.violation = None
    try:
        test = stmt.test
        detail = {}
        if isinstance(test, ast.Compare) and len(test.ops) == 1 and type(test.ops[0]) in CMP:
            left = ev(test.left)
            right = ev(test.comparators[0])
            ok = bool(CMP[type(test.ops[0])](left, right))
            detail["observed"] = safe_repr(left)
            detail["expected"] = safe_repr(right)
        else:
            value = ev(test)
            ok = bool(value)
            detail["observed"] = safe_repr(value)
        if ok:
            return {"status": "pass"}
        if stmt.msg is not None:
            detail["message"] = safe_repr(ev(stmt.msg))
        detail["status"] = "fail"
        return detail
    except ReturnTypeViolation:
        return {"status": "return_type", "value": state.violation}
    except BaseException as exc:
        if state.violation is not None:
            return {"status": "return_type", "value": state.violation}
        return {"status": "error", "error": describe_exception(exc)}


def op_assert(state, req):
    return evaluate_assertion(state, req["text"], {})


def op_property(state, req):
    return evaluate_assertion(state, req["text"], req.get("bindings") or {})


def op_suite(state, req):
    fake = types.ModuleType("pythoness")
    fake.spec = lambda *args, **kwargs: (lambda f: f)
    sys.modules["pythoness"] = fake
    module = types.ModuleType("suite_module")
    state.violation = None
    try:
        exec(compile(req["source"], "<suite>", "exec"), module.__dict__)
    except BaseException as exc:
        return {"status": "unresolved", "error": "suite module failed to load: " + describe_exception(exc)}
    module.__dict__[state.name] = state.fn
    cls = module.__dict__.get(req["class_name"])
    if not (isinstance(cls, type) and issubclass(cls, unittest.TestCase)):
        return {"status": "unresolved", "error": "`%s` is not a unittest.TestCase" % req["class_name"]}
    suite = unittest.TestLoader().loadTestsFromTestCase(cls)
    result = unittest.TestResult()
    suite.run(result)
    if state.violation is not None:
        return {"status": "return_type", "value": state.violation}
    failures = []
    for case, tb in result.failures + result.errors:
        test_id = case.id().split(".", 1)[-1]
        failures.append({"test": test_id, "detail": tb.strip().splitlines()[-1] if tb.strip() else ""})
    return {"status": "pass" if not failures else "fail", "ran": result.testsRun, "failures": failures}


def op_call(state, req):
    state.violation = None
    try:
        value = state.fn(*req.get("args", []))
    except ReturnTypeViolation:
        return {"status": "return_type", "value": state.violation}
    except BaseException as exc:
        return {"status": "error", "error": describe_exception(exc)}
    return {"status": "ok", "value": to_json(value), "repr": safe_repr(value)}


def op_ping(state, req):
    return {"status": "ok"}


OPS = {
    "load": op_load,
    "assert": op_assert,
    "property": op_property,
    "suite": op_suite,
    "call": op_call,
    "ping": op_ping,
}


def read_exact(stream, n):
    buf = b""
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return buf


def main():
    proto_in = os.fdopen(os.dup(0), "rb", buffering=0)
    proto_out = os.fdopen(os.dup(1), "wb")
    devnull = os.open(os.devnull, os.O_RDONLY)
    os.dup2(devnull, 0)
    os.dup2(2, 1)
    sys.stdin = open(os.devnull)
    sys.stdout = sys.stderr
    state = State()
    while True:
        header = read_exact(proto_in, 4)
        if header is None:
            return
        (length,) = struct.unpack(">I", header)
        body = read_exact(proto_in, length)
        if body is None:
            return
        try:
            req = json.loads(body.decode("utf-8"))
            if req.get("v") != PROTOCOL_VERSION:
                resp = {"status": "error", "error": "unsupported protocol version %r" % req.get("v")}
            elif req.get("op") not in OPS:
                resp = {"status": "error", "error": "unknown op %r" % req.get("op")}
            elif req["op"] not in ("load", "ping") and state.fn is None:
                resp = {"status": "error", "error": "no candidate loaded"}
            else:
                resp = OPS[req["op"]](state, req)
        except BaseException as exc:
            resp = {"status": "error", "error": "worker: " + describe_exception(exc)}
        resp["v"] = PROTOCOL_VERSION
        data = json.dumps(resp, allow_nan=False).encode("utf-8")
        proto_out.write(struct.pack(">I", len(data)) + data)
        proto_out.flush()


if __name__ == "__main__":
    main()
