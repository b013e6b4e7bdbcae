"""Constraint-side helpers for symbolic runs.

Fresh variables come from a counter stored in the system state, so every
run names them identically.  Duration variables are prefixed `_d`, free
input variables `_u`; the leading underscore marks a name as renameable
when states are canonicalized.
"""

from __future__ import annotations

from dataclasses import replace
from fractions import Fraction

from .model import SystemState
from .solver import SmtCheck
from .values import Poly, band, bool_evaluate, cmp_eq, cmp_le, cmp_lt


def fresh_var(s: SystemState, prefix: str):
    """Allocate one fresh symbolic variable; returns (state, Poly)."""
    name = f"_{prefix}{s.fresh_counter}"
    return replace(s, fresh_counter=s.fresh_counter + 1), Poly.var(name)


def feasible(checker: SmtCheck, s: SystemState, *extra, cls: str = "internal") -> bool:
    """Is the path condition still satisfiable with `extra` added?"""
    parts = list(s.constraints) + [e for e in extra if e is not True]
    if any(e is False for e in extra):
        return False
    cond = band(*parts)
    if isinstance(cond, bool):
        return cond
    return checker.is_sat(cond, cls=cls)


def assume(s: SystemState, *extra) -> SystemState:
    """Conjoin constraints onto the path condition."""
    return s.add_constraints(*extra)


def concrete_or_none(v):
    """A Fraction/int if the value is concrete, else None."""
    if isinstance(v, (int, Fraction)) and not isinstance(v, bool):
        return v
    if isinstance(v, Poly) and v.is_const():
        return v.const_value()
    return None


def evaluate_path(s: SystemState, assignment: dict) -> bool:
    """Check every collected conjunct under a concrete assignment."""
    full = {name: Fraction(0) for c in s.constraints for name in _vars_of(c)}
    full.update({k: Fraction(v) for k, v in assignment.items()})
    return all(bool_evaluate(c, full) for c in s.constraints)


def _vars_of(c):
    from .values import bool_variables

    return bool_variables(c)
