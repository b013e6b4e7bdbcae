"""Exact value domain shared by the concrete and symbolic engines.

Concrete runtime values are Python bool/int/str and fractions.Fraction.
Symbolic real values are Poly: a normalized polynomial over named variables
with Fraction coefficients.  Symbolic booleans are BoolExpr trees whose
atoms are polynomial comparisons against zero.  Every structure here is
immutable and hashable so machine states can be shared and canonicalized.

All time arithmetic in the package goes through Fraction or Poly; floats
never enter the value domain.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Union

Rat = Fraction

# monomial: ((var, power), ...) sorted by var name; () is the constant term
Monomial = tuple


def rat(x) -> Fraction:
    """Coerce ints, strings like '3/4', and Fractions to Fraction exactly."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        return Fraction(1 if x else 0)
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, float):
        # floats only appear via JSON configs; convert through repr so that
        # "0.5" means one half, not the binary float neighborhood
        return Fraction(str(x))
    raise TypeError(f"cannot interpret {x!r} as a rational")


class Poly:
    """Polynomial over real variables, kept in a canonical sorted form."""

    __slots__ = ("terms", "_hash")

    def __init__(self, terms: Mapping[Monomial, Fraction] | Iterable = ()):
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict[Monomial, Fraction] = {}
        for mono, c in items:
            c = rat(c)
            if c:
                acc[mono] = acc.get(mono, Fraction(0)) + c
        self.terms = tuple(sorted((m, c) for m, c in acc.items() if c))
        self._hash = hash(self.terms)

    @classmethod
    def _raw(cls, terms: tuple) -> "Poly":
        # terms must already be canonical: sorted, nonzero Fraction coeffs
        p = cls.__new__(cls)
        p.terms = terms
        p._hash = hash(terms)
        return p

    @staticmethod
    def const(c) -> "Poly":
        c = rat(c)
        return Poly({(): c} if c else {})

    @staticmethod
    def var(name: str) -> "Poly":
        return Poly({((name, 1),): Fraction(1)})

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return isinstance(other, Poly) and self.terms == other.terms

    def __bool__(self):
        return bool(self.terms)

    def is_const(self) -> bool:
        return all(m == () for m, _ in self.terms)

    def const_value(self) -> Fraction:
        if not self.terms:
            return Fraction(0)
        if self.is_const():
            return self.terms[0][1]
        raise ValueError(f"{self} is not constant")

    def variables(self) -> set:
        return {v for m, _ in self.terms for v, _ in m}

    def degree(self) -> int:
        return max((sum(p for _, p in m) for m, _ in self.terms), default=0)

    def is_linear(self) -> bool:
        return self.degree() <= 1

    def coeff(self, name: str) -> Fraction:
        """Coefficient of the degree-1 term in name (linear use only)."""
        return dict(self.terms).get(((name, 1),), Fraction(0))

    def drop(self, name: str) -> "Poly":
        return Poly._raw(
            tuple(t for t in self.terms if all(v != name for v, _ in t[0]))
        )

    def __add__(self, other):
        other = as_poly(other)
        acc = dict(self.terms)
        for m, c in other.terms:
            acc[m] = acc.get(m, Fraction(0)) + c
        return Poly(acc)

    __radd__ = __add__

    def __neg__(self):
        # monomials are distinct, so term order survives sign flips
        return Poly._raw(tuple((m, -c) for m, c in self.terms))

    def __sub__(self, other):
        return self + (-as_poly(other))

    def __rsub__(self, other):
        return as_poly(other) + (-self)

    def __mul__(self, other):
        other = as_poly(other)
        acc: dict[Monomial, Fraction] = {}
        for m1, c1 in self.terms:
            for m2, c2 in other.terms:
                m = _mono_mul(m1, m2)
                acc[m] = acc.get(m, Fraction(0)) + c1 * c2
        return Poly(acc)

    __rmul__ = __mul__

    def scale(self, k) -> "Poly":
        k = rat(k)
        if not k:
            return Poly._raw(())
        return Poly._raw(tuple((m, c * k) for m, c in self.terms))

    def rename(self, names: Mapping[str, str]) -> "Poly":
        """Injective variable renaming; much cheaper than substitute."""
        if not names:
            return self
        return Poly._raw(
            tuple(
                sorted(
                    (tuple(sorted((names.get(v, v), p) for v, p in m)), c)
                    for m, c in self.terms
                )
            )
        )

    def substitute(self, mapping: Mapping[str, "Poly | Fraction | int"]) -> "Poly":
        if self.degree() <= 1:
            # degree-1 terms splice replacement terms in directly
            acc: dict[Monomial, Fraction] = {}
            for m, c in self.terms:
                rep = mapping.get(m[0][0]) if m else None
                if rep is None:
                    acc[m] = acc.get(m, Fraction(0)) + c
                elif isinstance(rep, Poly):
                    for m2, c2 in rep.terms:
                        acc[m2] = acc.get(m2, Fraction(0)) + c * c2
                else:
                    acc[()] = acc.get((), Fraction(0)) + c * rat(rep)
            return Poly(acc)
        out = Poly()
        for m, c in self.terms:
            term = Poly.const(c)
            for v, p in m:
                rep = mapping.get(v)
                rep = Poly.var(v) if rep is None else as_poly(rep)
                for _ in range(p):
                    term = term * rep
            out = out + term
        return out

    def evaluate(self, assignment: Mapping[str, Fraction]) -> Fraction:
        total = Fraction(0)
        for m, c in self.terms:
            val = c
            for v, p in m:
                val *= rat(assignment[v]) ** p
            total += val
        return total

    def __repr__(self):
        if not self.terms:
            return "0"
        parts = []
        for m, c in self.terms:
            body = "*".join(v if p == 1 else f"{v}^{p}" for v, p in m)
            if not body:
                parts.append(str(c))
            elif c == 1:
                parts.append(body)
            elif c == -1:
                parts.append(f"-{body}")
            else:
                parts.append(f"{c}*{body}")
        return " + ".join(parts).replace("+ -", "- ")


def _mono_mul(m1: Monomial, m2: Monomial) -> Monomial:
    acc: dict[str, int] = {}
    for v, p in m1:
        acc[v] = acc.get(v, 0) + p
    for v, p in m2:
        acc[v] = acc.get(v, 0) + p
    return tuple(sorted(acc.items()))


def as_poly(x) -> Poly:
    if isinstance(x, Poly):
        return x
    return Poly.const(rat(x))


# ---------------------------------------------------------------------------
# boolean expressions


@dataclass(frozen=True)
class Cmp:
    """Atomic constraint: lhs op 0, with op one of <=, <, ==."""

    op: str
    lhs: Poly

    def __repr__(self):
        return f"({self.lhs} {self.op} 0)"


@dataclass(frozen=True)
class Not:
    arg: "BoolExpr"

    def __repr__(self):
        return f"(not {self.arg})"


@dataclass(frozen=True)
class And:
    args: tuple

    def __repr__(self):
        return "(" + " and ".join(map(repr, self.args)) + ")"


@dataclass(frozen=True)
class Or:
    args: tuple

    def __repr__(self):
        return "(" + " or ".join(map(repr, self.args)) + ")"


BoolExpr = Union[Cmp, Not, And, Or]


def _norm_cmp(op: str, lhs: Poly):
    """Fold constant comparisons and scale the polynomial canonically."""
    if lhs.is_const():
        c = lhs.const_value()
        return {"<=": c <= 0, "<": c < 0, "==": c == 0}[op]
    lead = lhs.terms[0][1]
    if op == "==":
        if lead < 0:
            lhs = lhs.scale(-1)
            lead = -lead
        return Cmp("==", lhs.scale(1 / lead))
    # direction-preserving positive scaling
    return Cmp(op, lhs.scale(1 / abs(lead)))


def cmp_le(a, b):
    return _norm_cmp("<=", as_poly(a) - as_poly(b))


def cmp_lt(a, b):
    return _norm_cmp("<", as_poly(a) - as_poly(b))


def cmp_eq(a, b):
    return _norm_cmp("==", as_poly(a) - as_poly(b))


def bnot(e):
    if isinstance(e, bool):
        return not e
    if isinstance(e, Not):
        return e.arg
    if isinstance(e, Cmp):
        # not(p <= 0) is -p < 0, not(p < 0) is -p <= 0
        if e.op == "<=":
            return _norm_cmp("<", -e.lhs)
        if e.op == "<":
            return _norm_cmp("<=", -e.lhs)
        return Not(e)
    if isinstance(e, And):
        return bor(*(bnot(a) for a in e.args))
    if isinstance(e, Or):
        return band(*(bnot(a) for a in e.args))
    raise TypeError(f"not a boolean expression: {e!r}")


def band(*es):
    flat = []
    for e in es:
        if e is True:
            continue
        if e is False:
            return False
        if isinstance(e, And):
            flat.extend(e.args)
        else:
            flat.append(e)
    uniq = sorted(set(flat), key=ckey)
    if not uniq:
        return True
    if len(uniq) == 1:
        return uniq[0]
    return And(tuple(uniq))


def bor(*es):
    flat = []
    for e in es:
        if e is False:
            continue
        if e is True:
            return True
        if isinstance(e, Or):
            flat.extend(e.args)
        else:
            flat.append(e)
    uniq = sorted(set(flat), key=ckey)
    if not uniq:
        return False
    if len(uniq) == 1:
        return uniq[0]
    return Or(tuple(uniq))


def conjuncts(e) -> tuple:
    """Flatten a constraint into its top-level conjuncts."""
    if e is True:
        return ()
    if isinstance(e, And):
        return e.args
    return (e,)


def bool_rename(e, names):
    """Injective variable renaming; keeps atoms atoms, so no solver folding."""
    if isinstance(e, bool):
        return e
    if isinstance(e, Cmp):
        lhs = e.lhs.rename(names)
        # renaming can reorder terms, so re-pin the leading coefficient
        lead = lhs.terms[0][1]
        if e.op == "==":
            if lead != 1:
                lhs = lhs.scale(1 / lead)
        elif abs(lead) != 1:
            lhs = lhs.scale(1 / abs(lead))
        return Cmp(e.op, lhs)
    if isinstance(e, Not):
        return Not(bool_rename(e.arg, names))
    if isinstance(e, And):
        return band(*(bool_rename(a, names) for a in e.args))
    if isinstance(e, Or):
        return bor(*(bool_rename(a, names) for a in e.args))
    raise TypeError(f"not a boolean expression: {e!r}")


def bool_substitute(e, mapping):
    if isinstance(e, bool):
        return e
    if isinstance(e, Cmp):
        return _norm_cmp(e.op, e.lhs.substitute(mapping))
    if isinstance(e, Not):
        return bnot(bool_substitute(e.arg, mapping))
    if isinstance(e, And):
        return band(*(bool_substitute(a, mapping) for a in e.args))
    if isinstance(e, Or):
        return bor(*(bool_substitute(a, mapping) for a in e.args))
    raise TypeError(f"not a boolean expression: {e!r}")


def bool_evaluate(e, assignment) -> bool:
    if isinstance(e, bool):
        return e
    if isinstance(e, Cmp):
        v = e.lhs.evaluate(assignment)
        return {"<=": v <= 0, "<": v < 0, "==": v == 0}[e.op]
    if isinstance(e, Not):
        return not bool_evaluate(e.arg, assignment)
    if isinstance(e, And):
        return all(bool_evaluate(a, assignment) for a in e.args)
    if isinstance(e, Or):
        return any(bool_evaluate(a, assignment) for a in e.args)
    raise TypeError(f"not a boolean expression: {e!r}")


def bool_variables(e) -> set:
    if isinstance(e, bool):
        return set()
    if isinstance(e, Cmp):
        return e.lhs.variables()
    if isinstance(e, Not):
        return bool_variables(e.arg)
    if isinstance(e, (And, Or)):
        out = set()
        for a in e.args:
            out |= bool_variables(a)
        return out
    raise TypeError(f"not a boolean expression: {e!r}")


# ---------------------------------------------------------------------------
# runtime value helpers; the evaluator works over this mixed domain


@dataclass(frozen=True)
class RcvError:
    """Sentinel pushed by failed receives; compares equal only to itself."""

    def __repr__(self):
        return "rcvError"


RCV_ERROR = RcvError()

SymValue = Union[bool, int, str, Fraction, Poly, Cmp, Not, And, Or, RcvError]


def is_numeric(v) -> bool:
    return isinstance(v, (int, Fraction, Poly)) and not isinstance(v, bool)


def is_boolish(v) -> bool:
    return isinstance(v, (bool, Cmp, Not, And, Or))


class EvalError(Exception):
    """Runtime evaluation fault: type mismatch, division by zero, etc."""


def _num(v):
    if not is_numeric(v):
        raise EvalError(f"expected a numeric value, got {v!r}")
    return v


def vadd(a, b):
    a, b = _num(a), _num(b)
    if isinstance(a, Poly) or isinstance(b, Poly):
        return as_poly(a) + as_poly(b)
    return a + b


def vsub(a, b):
    a, b = _num(a), _num(b)
    if isinstance(a, Poly) or isinstance(b, Poly):
        return as_poly(a) - as_poly(b)
    return a - b


def vmul(a, b):
    a, b = _num(a), _num(b)
    if isinstance(a, Poly) or isinstance(b, Poly):
        return as_poly(a) * as_poly(b)
    return a * b


def vneg(a):
    a = _num(a)
    return -a


def vdiv(a, b):
    a, b = _num(a), _num(b)
    if isinstance(b, Poly):
        if not b.is_const():
            raise EvalError("division by a symbolic value is not supported")
        b = b.const_value()
    if b == 0:
        raise EvalError("division by zero")
    if isinstance(a, Poly):
        return a.scale(Fraction(1) / rat(b))
    q = Fraction(a) / Fraction(b)
    if isinstance(a, int) and isinstance(b, int) and q.denominator == 1:
        return int(q)
    return q


def vcmp(op: str, a, b):
    """Relational operators; returns bool or a BoolExpr for symbolic args."""
    if isinstance(a, (str, RcvError)) or isinstance(b, (str, RcvError)):
        if op == "=":
            return a == b
        if op == "<>":
            return a != b
        raise EvalError(f"ordering is undefined for {a!r} and {b!r}")
    if is_boolish(a) or is_boolish(b):
        if not (is_boolish(a) and is_boolish(b)):
            raise EvalError(f"type mismatch comparing {a!r} and {b!r}")
        if op == "=":
            if isinstance(a, bool) and isinstance(b, bool):
                return a == b
            return bor(band(a, b), band(bnot(a), bnot(b)))
        if op == "<>":
            return bnot(vcmp("=", a, b))
        raise EvalError("ordering is undefined for booleans")
    a, b = _num(a), _num(b)
    if isinstance(a, Poly) or isinstance(b, Poly):
        table = {
            "=": lambda: cmp_eq(a, b),
            "<>": lambda: bnot(cmp_eq(a, b)),
            "<": lambda: cmp_lt(a, b),
            "<=": lambda: cmp_le(a, b),
            ">": lambda: cmp_lt(b, a),
            ">=": lambda: cmp_le(b, a),
        }
        return table[op]()
    table = {
        "=": a == b,
        "<>": a != b,
        "<": a < b,
        "<=": a <= b,
        ">": a > b,
        ">=": a >= b,
    }
    return table[op]


def vand(a, b):
    if not (is_boolish(a) and is_boolish(b)):
        raise EvalError(f"AND expects booleans, got {a!r}, {b!r}")
    return band(a, b)


def vor(a, b):
    if not (is_boolish(a) and is_boolish(b)):
        raise EvalError(f"OR expects booleans, got {a!r}, {b!r}")
    return bor(a, b)


def vnot(a):
    if not is_boolish(a):
        raise EvalError(f"NOT expects a boolean, got {a!r}")
    return bnot(a)


# ---------------------------------------------------------------------------
# time arithmetic: Fraction when concrete, Poly once symbolic

Time = Union[Fraction, Poly]

INF = float("inf")  # only as an mte result, never stored in a state


def is_concrete_time(t) -> bool:
    return isinstance(t, Fraction) or (isinstance(t, Poly) and t.is_const())


def time_value(t) -> Fraction:
    if isinstance(t, Fraction):
        return t
    if isinstance(t, Poly) and t.is_const():
        return t.const_value()
    raise ValueError(f"time {t!r} is symbolic")


def t_sub(t, d):
    """Plain subtraction; symbolic timers rely on constraints for bounds."""
    if isinstance(t, Poly) or isinstance(d, Poly):
        return as_poly(t) - as_poly(d)
    return rat(t) - rat(d)


def monus(t, d):
    """Truncated subtraction max(t - d, 0) for concrete times."""
    if isinstance(t, Poly) or isinstance(d, Poly):
        return t_sub(t, d)
    r = rat(t) - rat(d)
    return r if r > 0 else Fraction(0)


def t_add(t, d):
    if isinstance(t, Poly) or isinstance(d, Poly):
        return as_poly(t) + as_poly(d)
    return rat(t) + rat(d)


# ---------------------------------------------------------------------------
# canonical ordering key for hashing and deterministic iteration


def ckey(v):
    """Total ordering key over the whole value domain."""
    if isinstance(v, bool):
        return (0, v)
    if isinstance(v, (int, Fraction)):
        f = Fraction(v)
        return (1, f.numerator, f.denominator)
    if isinstance(v, str):
        return (2, v)
    if isinstance(v, RcvError):
        return (3,)
    if isinstance(v, Poly):
        return (4, tuple((m, (c.numerator, c.denominator)) for m, c in v.terms))
    if isinstance(v, Cmp):
        return (5, v.op, ckey(v.lhs))
    if isinstance(v, Not):
        return (6, ckey(v.arg))
    if isinstance(v, And):
        return (7, tuple(ckey(a) for a in v.args))
    if isinstance(v, Or):
        return (8, tuple(ckey(a) for a in v.args))
    if isinstance(v, tuple):
        return (9, tuple(ckey(a) for a in v))
    raise TypeError(f"no canonical key for {v!r}")
