"""Networked system state: controllers, links, in-flight messages.

A system snapshot combines one execution configuration per controller with
the physical state each controller senses and drives, the point-to-point
links, and (for symbolic runs) the path constraint collected so far.
Everything is immutable; rules in the timed/comm layers produce new
snapshots.

Physical quantities evolve between scans according to per-variable change
laws: polynomials in the elapsed time `t` whose other names refer to the
values held when the segment began.  A law must reproduce the current value
at t = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional

from .kmachine import KConfig, config_key, config_vars
from .values import (
    And,
    Cmp,
    Not,
    Or,
    Poly,
    as_poly,
    band,
    bool_rename,
    bool_substitute,
    bool_variables,
    ckey,
)

_BOOL_EXPRS = (Cmp, Not, And, Or)

FLOW_TIME = "t"  # reserved name inside change laws


class ModelError(Exception):
    pass


# -- static configuration ---------------------------------------------------


@dataclass(frozen=True)
class InputSpec:
    """How one program variable gets refreshed at the top of each cycle."""

    prog: str
    var: str
    kind: str  # "script" | "enumerate" | "free"
    values: tuple = ()  # script: per-cycle; enumerate: domain
    lo: Optional[Fraction] = None  # free: interval bounds (else finite domain)
    hi: Optional[Fraction] = None


@dataclass(frozen=True)
class Options:
    mode: str = "concrete"  # "concrete" | "symbolic"
    por: bool = False
    clock_sep: bool = False
    rcv_no_on_pending: bool = False
    reliable_connect: bool = False

    @property
    def symbolic(self) -> bool:
        return self.mode == "symbolic"


# -- dynamic pieces ---------------------------------------------------------


@dataclass(frozen=True)
class Msg:
    sender: str  # sending program
    receiver: str  # destination program
    send_fb: str  # block instance that sent
    recv_fb: str  # block instance expected to pick it up
    data: object
    min_timer: object  # Fraction | Poly: delivery opens at 0
    max_timer: object  # Fraction | Poly: delivery forced by 0
    seq: int = field(compare=False, default=0)


@dataclass(frozen=True)
class Conn:
    pair: tuple  # sorted (prog, prog)
    valid: bool = False
    buffer: tuple = ()  # Msg, in insertion order
    delay_lo: Fraction = Fraction(10)
    delay_hi: Fraction = Fraction(20)


def conn_pair(a: str, b: str) -> tuple:
    return tuple(sorted((a, b)))


@dataclass(frozen=True)
class PLCMachine:
    mid: str
    cfg: KConfig
    timer: object  # Fraction | Poly; time left until the next scan starts
    env_timer: Fraction  # concrete countdown to the next physical update
    state: tuple  # ((name, value), ...) sorted
    flow: tuple  # ((name, Poly), ...) sorted; values at elapsed t
    cycle_time: Fraction
    cycle_index: int = 0
    inputs: tuple = ()  # (InputSpec, ...)
    in_vars: tuple = ()  # ((prog, (name, ...)), ...) sensed from state
    out_vars: tuple = ()  # ((prog, (name, ...)), ...) driven into state

    def state_value(self, name: str):
        for nm, v in self.state:
            if nm == name:
                return v
        raise ModelError(f"{self.mid} has no state variable {name}")

    def with_state(self, updates: dict) -> "PLCMachine":
        known = {nm for nm, _ in self.state}
        bad = set(updates) - known
        if bad:
            raise ModelError(f"{self.mid} has no state variable(s) {sorted(bad)}")
        new = tuple((nm, updates.get(nm, v)) for nm, v in self.state)
        return replace(self, state=new)


@dataclass(frozen=True)
class SystemState:
    machines: tuple  # (PLCMachine, ...) ordered by mid
    conns: tuple  # (Conn, ...) ordered by pair
    clock: object  # Fraction | Poly
    constraints: tuple = ()  # conjuncts, sorted by ckey, deduplicated
    fresh_counter: int = 0
    msg_seq: int = 0
    ticked: bool = False
    options: Options = Options()

    def machine(self, mid: str) -> PLCMachine:
        for m in self.machines:
            if m.mid == mid:
                return m
        raise ModelError(f"no machine {mid}")

    def with_machine(self, m: PLCMachine) -> "SystemState":
        return replace(
            self, machines=tuple(m if x.mid == m.mid else x for x in self.machines)
        )

    def conn(self, a: str, b: str) -> Optional[Conn]:
        pair = conn_pair(a, b)
        for c in self.conns:
            if c.pair == pair:
                return c
        return None

    def with_conn(self, c: Conn) -> "SystemState":
        if any(x.pair == c.pair for x in self.conns):
            conns = tuple(c if x.pair == c.pair else x for x in self.conns)
        else:
            conns = tuple(sorted(self.conns + (c,), key=lambda x: x.pair))
        return replace(self, conns=conns)

    def machine_for_program(self, prog: str) -> Optional[PLCMachine]:
        for m in self.machines:
            if prog in m.cfg.programs:
                return m
        return None

    def add_constraints(self, *conjuncts) -> "SystemState":
        merged = band(*self.constraints, *conjuncts)
        if merged is True:
            return replace(self, constraints=())
        if merged is False:
            raise ModelError("constraint set collapsed to false")
        from .values import conjuncts as split

        return replace(self, constraints=split(merged))

    def path_condition(self):
        return band(*self.constraints)


# -- change laws ------------------------------------------------------------


def validate_flow(name: str, law: Poly):
    """At t = 0 the law must give back the variable itself."""
    if name == FLOW_TIME:
        raise ModelError(f"{FLOW_TIME!r} cannot be a state variable")
    at_zero = law.substitute({FLOW_TIME: Poly.const(0)})
    if at_zero != Poly.var(name):
        raise ModelError(f"change law for {name} does not start from {name}: {law!r}")


def apply_flow(m: PLCMachine, duration) -> PLCMachine:
    """Advance the physical state by `duration` along the change laws."""
    if not m.flow:
        return m
    base = {nm: as_poly(v) for nm, v in m.state if not isinstance(v, (bool, str))}
    base[FLOW_TIME] = as_poly(duration)
    updates = {}
    for nm, law in m.flow:
        out = law.substitute(base)
        updates[nm] = out.const_value() if out.is_const() else out
    return m.with_state(updates)


# -- scan boundary helpers --------------------------------------------------


def actuate(m: PLCMachine) -> PLCMachine:
    """Publish declared outputs into same-named physical state variables."""
    known = {nm for nm, _ in m.state}
    updates = {}
    for prog, names in m.out_vars:
        env = dict(m.cfg.prog_env(prog))
        for nm in names:
            if nm in known:
                updates[nm] = m.cfg.read(env[nm])
    if not updates:
        return m
    return m.with_state(updates)


def sense(m: PLCMachine) -> PLCMachine:
    """Copy physical state into same-named declared inputs."""
    values = dict(m.state)
    writes = []
    for prog, names in m.in_vars:
        env = dict(m.cfg.prog_env(prog))
        for nm in names:
            if nm in values:
                writes.append((env[nm], values[nm]))
    if not writes:
        return m
    return replace(m, cfg=m.cfg.write_many(writes))


# -- pinned variables -------------------------------------------------------


def _fresh_rank(name: str) -> int:
    i = len(name)
    while i > 0 and name[i - 1].isdigit():
        i -= 1
    return int(name[i:]) if i < len(name) else -1


def _solve_eq(c, anchored):
    """Solve a linear equality conjunct for one fresh variable.

    Returns (var, solution polynomial) with the newest eliminable variable
    chosen, or None.  Newest-first matters: chained time jumps constrain
    sums of durations, and eliminating the later variable rewrites the
    state in terms of the earlier one instead of the other way round.
    """
    if not isinstance(c, Cmp) or c.op != "==" or not c.lhs.is_linear():
        return None
    for x in sorted(c.lhs.variables(), key=_fresh_rank, reverse=True):
        if not _is_fresh(x) or x in anchored:
            continue
        a = c.lhs.coeff(x)
        if a:
            return x, c.lhs.drop(x).scale(Fraction(-1) / a)
    return None


def propagate_pins(s: SystemState) -> SystemState:
    """Eliminate fresh variables the path condition determines.

    Each linear equality conjunct is solved for one variable and the
    solution substituted through the whole snapshot: a logically neutral
    rewrite, but it lets snapshots that differ only in how they spell a
    quantity share a canonical form, and it keeps guards over determined
    durations concrete instead of forking.  A variable still referenced
    from inside a controller configuration is left alone; its equality
    then stays in the path condition, which keeps the pin observable.
    """
    if not s.constraints:
        return s
    anchored = {n for m in s.machines for n in config_vars(m.cfg) if _is_fresh(n)}
    for _ in range(32):
        sol = None
        for c in s.constraints:
            sol = _solve_eq(c, anchored)
            if sol:
                break
        if not sol:
            return s
        s = _substitute_state(s, {sol[0]: sol[1]})
    return s


def _substitute_state(s: SystemState, mapping) -> SystemState:
    def pv(v):
        if isinstance(v, Poly):
            out = v.substitute(mapping)
            return out.const_value() if out.is_const() else out
        if isinstance(v, _BOOL_EXPRS):
            return bool_substitute(v, mapping)
        return v

    machines = tuple(
        replace(m, timer=pv(m.timer), state=tuple((nm, pv(v)) for nm, v in m.state))
        for m in s.machines
    )
    conns = tuple(
        replace(
            c,
            buffer=tuple(
                replace(
                    msg,
                    data=pv(msg.data),
                    min_timer=pv(msg.min_timer),
                    max_timer=pv(msg.max_timer),
                )
                for msg in c.buffer
            ),
        )
        for c in s.conns
    )
    merged = band(*(pv(c) for c in s.constraints))
    if merged is False:
        raise ModelError("pinned substitution contradicts the path condition")
    from .values import conjuncts as split

    constraints = () if merged is True else split(merged)
    return replace(
        s, machines=machines, conns=conns, clock=pv(s.clock), constraints=constraints
    )


# -- canonical form ---------------------------------------------------------


def _is_fresh(name: str) -> bool:
    return name.startswith("_")


def _poly_fresh_vars(p: Poly):
    for mono, _ in p.terms:
        for v, _ in mono:
            if _is_fresh(v):
                yield v


def _value_fresh_vars(v):
    if isinstance(v, Poly):
        yield from _poly_fresh_vars(v)
    elif isinstance(v, _BOOL_EXPRS):
        for name in sorted(bool_variables(v)):
            if _is_fresh(name):
                yield name


def _masked(v) -> object:
    """Structural serialization with fresh names blanked out."""
    if isinstance(v, Poly):
        return (
            "p",
            tuple(
                (tuple(("#" if _is_fresh(n) else n, e) for n, e in mono), c)
                for mono, c in v.terms
            ),
        )
    if isinstance(v, Cmp):
        return ("c", v.op, _masked(v.lhs))
    if isinstance(v, Not):
        return ("n", _masked(v.arg))
    if isinstance(v, And):
        return ("a", tuple(_masked(a) for a in v.args))
    if isinstance(v, Or):
        return ("o", tuple(_masked(a) for a in v.args))
    return ("l", v)


def _canon_order(s: SystemState):
    """First-use order of fresh variables, plus the live constraint slice."""
    order: list = []
    seen: set = set()

    def note(names):
        for n in names:
            if n not in seen:
                seen.add(n)
                order.append(n)

    for m in s.machines:
        if isinstance(m.timer, Poly):
            note(_poly_fresh_vars(m.timer))
        for _, v in m.state:
            note(_value_fresh_vars(v))
        note(n for n in config_vars(m.cfg) if _is_fresh(n))
    for c in s.conns:
        for msg in c.buffer:
            note(_value_fresh_vars(msg.data))
            for t in (msg.min_timer, msg.max_timer):
                if isinstance(t, Poly):
                    note(_poly_fresh_vars(t))
    if isinstance(s.clock, Poly):
        note(_poly_fresh_vars(s.clock))
    live = set(order)

    # Keep only constraints transitively linked to live variables; the rest
    # restrict variables nothing refers to any more, and each stored state
    # already has a satisfiable path condition.
    remaining = list(s.constraints)
    kept: list = []
    changed = True
    while changed:
        changed = False
        still = []
        for c in remaining:
            cv = bool_variables(c)
            if cv & live:
                kept.append(c)
                live |= cv
                changed = True
            else:
                still.append(c)
        remaining = still

    kept.sort(key=lambda c: (repr(_masked(c)), ckey(c)))
    for c in kept:
        note(n for n in sorted(bool_variables(c)) if _is_fresh(n))
    return order, kept


def canonicalize(s: SystemState) -> tuple:
    """Hashable key: fresh variables renamed by first use, dead constraints
    dropped, message identities ignored."""
    order, kept = _canon_order(s)
    rename = {n: f"v{i}" for i, n in enumerate(order)}

    def rv(v):
        if isinstance(v, Poly):
            return v.rename(rename)
        if isinstance(v, _BOOL_EXPRS):
            return bool_rename(v, rename)
        return v

    machines_key = tuple(
        (
            m.mid,
            config_key(m.cfg, rename),
            rv(m.timer) if isinstance(m.timer, Poly) else m.timer,
            m.env_timer,
            tuple((nm, rv(v)) for nm, v in m.state),
            m.cycle_time,
            m.cycle_index,
        )
        for m in s.machines
    )
    conns_key = tuple(
        (
            c.pair,
            c.valid,
            c.delay_lo,
            c.delay_hi,
            # receive matches on headers, never on buffer position, so the
            # buffer is a multiset: sort to merge send-order interleavings
            tuple(
                sorted(
                    (
                        (
                            msg.sender,
                            msg.receiver,
                            msg.send_fb,
                            msg.recv_fb,
                            rv(msg.data),
                            rv(msg.min_timer) if isinstance(msg.min_timer, Poly) else msg.min_timer,
                            rv(msg.max_timer) if isinstance(msg.max_timer, Poly) else msg.max_timer,
                        )
                        for msg in c.buffer
                    ),
                    key=repr,
                )
            ),
        )
        for c in s.conns
    )
    constraints_key = tuple(sorted((rv(c) for c in kept), key=ckey))
    clock_key = rv(s.clock) if isinstance(s.clock, Poly) else s.clock
    # The post-tick flag only gates the symbolic jump fold; with exact
    # durations it is pure history and must not split states.
    ticked_key = s.ticked if s.options.symbolic else False
    return (machines_key, conns_key, clock_key, constraints_key, ticked_key)


def state_fresh_rename(s: SystemState) -> dict:
    """The renaming canonicalize would apply, for replay comparisons."""
    order, _ = _canon_order(s)
    return {n: f"v{i}" for i, n in enumerate(order)}
