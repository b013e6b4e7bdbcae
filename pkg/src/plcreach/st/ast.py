"""Syntax tree for the Structured Text subset, plus a pretty-printer.

Nodes are frozen dataclasses so they can live inside hashable machine
configurations.  Source positions ride along but never take part in
equality.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union


@dataclass(frozen=True)
class Pos:
    line: int = 0
    col: int = 0


_NOPOS = Pos()


# -- expressions ------------------------------------------------------------


@dataclass(frozen=True)
class Lit:
    value: object  # int | Fraction | bool | str
    pos: Pos = field(compare=False, default=_NOPOS)


@dataclass(frozen=True)
class VarRef:
    name: str
    pos: Pos = field(compare=False, default=_NOPOS)


@dataclass(frozen=True)
class FieldRef:
    base: str
    field: str
    pos: Pos = field(compare=False, default=_NOPOS)


@dataclass(frozen=True)
class BinOp:
    op: str  # + - * / = <> < <= > >= AND OR
    lhs: "Expr"
    rhs: "Expr"
    pos: Pos = field(compare=False, default=_NOPOS)


@dataclass(frozen=True)
class UnOp:
    op: str  # - NOT
    operand: "Expr"
    pos: Pos = field(compare=False, default=_NOPOS)


@dataclass(frozen=True)
class CallExpr:
    """Intrinsic use in expression position, e.g. isConnected(ID)."""

    name: str
    args: tuple
    pos: Pos = field(compare=False, default=_NOPOS)


Expr = Union[Lit, VarRef, FieldRef, BinOp, UnOp, CallExpr]


# -- statements -------------------------------------------------------------


@dataclass(frozen=True)
class Assign:
    target: Union[VarRef, FieldRef]
    expr: Expr
    pos: Pos = field(compare=False, default=_NOPOS)


@dataclass(frozen=True)
class IfStmt:
    cond: Expr
    then_body: tuple
    else_body: tuple
    pos: Pos = field(compare=False, default=_NOPOS)


@dataclass(frozen=True)
class WhileStmt:
    cond: Expr
    body: tuple
    pos: Pos = field(compare=False, default=_NOPOS)


@dataclass(frozen=True)
class ReturnStmt:
    pos: Pos = field(compare=False, default=_NOPOS)


@dataclass(frozen=True)
class ArgBind:
    name: Optional[str]  # None for positional
    expr: Expr
    pos: Pos = field(compare=False, default=_NOPOS)


@dataclass(frozen=True)
class CallStmt:
    """Function-block invocation or intrinsic call in statement position."""

    name: str
    args: tuple
    pos: Pos = field(compare=False, default=_NOPOS)


@dataclass(frozen=True)
class AssertTimeAnn:
    lo: Fraction
    hi: Fraction
    pos: Pos = field(compare=False, default=_NOPOS)


@dataclass(frozen=True)
class DelayAnn:
    a: str
    b: str
    lo: Fraction
    hi: Fraction
    pos: Pos = field(compare=False, default=_NOPOS)


Stmt = Union[Assign, IfStmt, WhileStmt, ReturnStmt, CallStmt, AssertTimeAnn, DelayAnn]


# -- declarations -----------------------------------------------------------


@dataclass(frozen=True)
class VarDecl:
    name: str
    type_name: str  # INT, DINT, REAL, BOOL, STRING, ANY, or an FB name
    init: Optional[Expr] = None
    pos: Pos = field(compare=False, default=_NOPOS)


@dataclass(frozen=True)
class Pou:
    kind: str  # "program" | "function_block"
    name: str
    inputs: tuple
    outputs: tuple
    locals: tuple
    body: tuple
    pos: Pos = field(compare=False, default=_NOPOS)


# -- pretty-printer ---------------------------------------------------------


def expr_to_st(e: Expr) -> str:
    if isinstance(e, Lit):
        if isinstance(e.value, bool):
            return "TRUE" if e.value else "FALSE"
        if isinstance(e.value, str):
            return '"%s"' % e.value
        if isinstance(e.value, Fraction) and e.value.denominator != 1:
            return str(float(e.value))
        return str(e.value)
    if isinstance(e, VarRef):
        return e.name
    if isinstance(e, FieldRef):
        return f"{e.base}.{e.field}"
    if isinstance(e, UnOp):
        inner = expr_to_st(e.operand)
        if isinstance(e.operand, (BinOp, UnOp)):
            inner = f"({inner})"
        return f"NOT {inner}" if e.op == "NOT" else f"-{inner}"
    if isinstance(e, BinOp):
        lhs, rhs = expr_to_st(e.lhs), expr_to_st(e.rhs)
        if isinstance(e.lhs, (BinOp, UnOp)):
            lhs = f"({lhs})"
        if isinstance(e.rhs, (BinOp, UnOp)):
            rhs = f"({rhs})"
        return f"{lhs} {e.op} {rhs}"
    if isinstance(e, CallExpr):
        return "%s(%s)" % (e.name, ", ".join(expr_to_st(a) for a in e.args))
    raise TypeError(f"not an expression: {e!r}")


def _stmt_lines(s: Stmt, indent: str) -> list:
    if isinstance(s, Assign):
        return [f"{indent}{expr_to_st(s.target)} := {expr_to_st(s.expr)};"]
    if isinstance(s, IfStmt):
        out = [f"{indent}IF {expr_to_st(s.cond)} THEN"]
        for t in s.then_body:
            out.extend(_stmt_lines(t, indent + "    "))
        if s.else_body:
            out.append(f"{indent}ELSE")
            for t in s.else_body:
                out.extend(_stmt_lines(t, indent + "    "))
        out.append(f"{indent}END_IF;")
        return out
    if isinstance(s, WhileStmt):
        out = [f"{indent}WHILE {expr_to_st(s.cond)} DO"]
        for t in s.body:
            out.extend(_stmt_lines(t, indent + "    "))
        out.append(f"{indent}END_WHILE;")
        return out
    if isinstance(s, ReturnStmt):
        return [f"{indent}RETURN;"]
    if isinstance(s, CallStmt):
        parts = []
        for a in s.args:
            txt = expr_to_st(a.expr)
            parts.append(f"{a.name} := {txt}" if a.name else txt)
        return [f"{indent}{s.name}(%s);" % ", ".join(parts)]
    if isinstance(s, AssertTimeAnn):
        return [f"{indent}//assertTime({_num(s.lo)}, {_num(s.hi)})"]
    if isinstance(s, DelayAnn):
        return [f"{indent}//delay({s.a}, {s.b}, {_num(s.lo)}, {_num(s.hi)})"]
    raise TypeError(f"not a statement: {s!r}")


def _num(x: Fraction) -> str:
    return str(x) if x.denominator == 1 else str(float(x))


def _decl_lines(section: str, decls: tuple, indent: str) -> list:
    if not decls:
        return []
    out = [f"{indent}{section}"]
    for d in decls:
        init = f" := {expr_to_st(d.init)}" if d.init is not None else ""
        out.append(f"{indent}    {d.name} : {d.type_name}{init};")
    out.append(f"{indent}END_VAR")
    return out


def pou_to_st(p: Pou) -> str:
    head = "PROGRAM" if p.kind == "program" else "FUNCTION_BLOCK"
    tail = "END_PROGRAM" if p.kind == "program" else "END_FUNCTION_BLOCK"
    lines = [f"{head} {p.name}"]
    lines.extend(_decl_lines("VAR_INPUT", p.inputs, "    "))
    lines.extend(_decl_lines("VAR_OUTPUT", p.outputs, "    "))
    lines.extend(_decl_lines("VAR", p.locals, "    "))
    for s in p.body:
        lines.extend(_stmt_lines(s, "    "))
    lines.append(tail)
    return "\n".join(lines) + "\n"
