"""External SMT back end speaking SMT-LIB v2 over a subprocess.

Each query runs against a fresh solver process: declarations, assertion,
check-sat, and get-model are written to stdin and the answer is parsed from
stdout.  The command is configurable (CLI flag or the PLCREACH_SOLVER
environment variable, e.g. "z3 -in -smt2"); without a configured or
discoverable solver the engine runs internal-only and rejects nonlinear
queries.  Launch or protocol failures raise BackendError; they are never
silently mapped to unknown.
"""

from __future__ import annotations

import os
import shlex
import shutil
import subprocess
from fractions import Fraction

from .solver import SAT, UNKNOWN, UNSAT, SmtVerdict
from .values import And, Cmp, Not, Or, Poly, bool_variables, conjuncts


class BackendError(Exception):
    pass


def _rat_s(f: Fraction) -> str:
    n, d = f.numerator, f.denominator
    if d == 1:
        return str(n) if n >= 0 else f"(- {-n})"
    body = f"(/ {abs(n)} {d})"
    return body if n >= 0 else f"(- {body})"


def _poly_s(p: Poly) -> str:
    if not p.terms:
        return "0"
    parts = []
    for mono, c in p.terms:
        factors = [_rat_s(c)]
        for v, pow_ in mono:
            factors.extend([v] * pow_)
        parts.append(factors[0] if len(factors) == 1 else "(* " + " ".join(factors) + ")")
    return parts[0] if len(parts) == 1 else "(+ " + " ".join(parts) + ")"


def _expr_s(e) -> str:
    if e is True:
        return "true"
    if e is False:
        return "false"
    if isinstance(e, Cmp):
        op = {"<=": "<=", "<": "<", "==": "="}[e.op]
        return f"({op} {_poly_s(e.lhs)} 0)"
    if isinstance(e, Not):
        return f"(not {_expr_s(e.arg)})"
    if isinstance(e, And):
        return "(and " + " ".join(_expr_s(a) for a in e.args) + ")"
    if isinstance(e, Or):
        return "(or " + " ".join(_expr_s(a) for a in e.args) + ")"
    raise TypeError(f"cannot serialize {e!r}")


def _is_linear(e) -> bool:
    if isinstance(e, bool):
        return True
    if isinstance(e, Cmp):
        return e.lhs.is_linear()
    if isinstance(e, Not):
        return _is_linear(e.arg)
    if isinstance(e, (And, Or)):
        return all(_is_linear(a) for a in e.args)
    return True


def to_script(expr, want_model: bool = True) -> str:
    """Render a complete SMT-LIB v2 script for one query."""
    logic = "QF_LRA" if _is_linear(expr) else "QF_NRA"
    lines = [f"(set-logic {logic})"]
    for v in sorted(bool_variables(expr)):
        lines.append(f"(declare-const {v} Real)")
    for c in conjuncts(expr) or (expr,):
        if c is True:
            continue
        lines.append(f"(assert {_expr_s(c)})")
    lines.append("(check-sat)")
    if want_model:
        lines.append("(get-model)")
    lines.append("(exit)")
    return "\n".join(lines) + "\n"


# --- minimal s-expression reading for get-model output ---------------------


def _tokenize(text: str):
    return text.replace("(", " ( ").replace(")", " ) ").split()


def _read_sexprs(tokens):
    out, stack = [], []
    for tok in tokens:
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if not stack:
                raise BackendError("unbalanced model output")
            node = stack.pop()
            (stack[-1] if stack else out).append(node)
        else:
            (stack[-1] if stack else out).append(tok)
    if stack:
        raise BackendError("unbalanced model output")
    return out


def _value_of(node) -> Fraction:
    if isinstance(node, str):
        return Fraction(node)
    if not node:
        raise BackendError(f"cannot read model value {node!r}")
    head = node[0]
    if head == "-" and len(node) == 2:
        return -_value_of(node[1])
    if head == "/" and len(node) == 3:
        return _value_of(node[1]) / _value_of(node[2])
    if head == "+" and len(node) == 2:
        return _value_of(node[1])
    raise BackendError(f"cannot read model value {node!r}")


def parse_model(text: str) -> dict:
    model = {}
    for node in _read_sexprs(_tokenize(text)):
        entries = node
        if node and node[0] == "model":
            entries = node[1:]
        for entry in entries:
            if (
                isinstance(entry, list)
                and len(entry) >= 5
                and entry[0] == "define-fun"
                and entry[2] == []
            ):
                model[entry[1]] = _value_of(entry[4])
    return model


class SmtLibSolver:
    """One external solver invocation per query."""

    def __init__(self, command, timeout: float = 60.0):
        if isinstance(command, str):
            command = shlex.split(command)
        self.command = list(command)
        self.timeout = timeout

    def check(self, expr, want_model: bool = True) -> SmtVerdict:
        script = to_script(expr, want_model=want_model)
        try:
            proc = subprocess.run(
                self.command,
                input=script,
                capture_output=True,
                text=True,
                timeout=self.timeout,
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise BackendError(f"solver launch failed: {exc}") from exc
        lines = [ln.strip() for ln in proc.stdout.splitlines() if ln.strip()]
        answer = next((ln for ln in lines if ln in ("sat", "unsat", "unknown")), None)
        if answer is None:
            raise BackendError(
                f"no verdict from {self.command[0]}: "
                f"stdout={proc.stdout!r} stderr={proc.stderr!r}"
            )
        if answer == "unsat":
            return SmtVerdict(UNSAT)
        if answer == "unknown":
            return SmtVerdict(UNKNOWN, reason="external solver answered unknown")
        model = {}
        if want_model:
            idx = lines.index("sat")
            tail = "\n".join(lines[idx + 1 :])
            try:
                model = parse_model(tail)
            except BackendError:
                model = {}
        return SmtVerdict(SAT, model=model)


_PROBES = [
    ["z3", "-in", "-smt2"],
    ["cvc5", "--lang", "smt2", "-"],
    ["cvc4", "--lang", "smt2", "-"],
]


def resolve_external(command=None, timeout: float = 60.0):
    """Build the external backend from a command, the environment, or PATH."""
    if command:
        return SmtLibSolver(command, timeout=timeout)
    env = os.environ.get("PLCREACH_SOLVER")
    if env:
        return SmtLibSolver(env, timeout=timeout)
    for probe in _PROBES:
        if shutil.which(probe[0]):
            return SmtLibSolver(probe, timeout=timeout)
    return None
