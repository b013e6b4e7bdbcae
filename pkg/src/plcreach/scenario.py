"""Scenario files: JSON description of a machine network plus analysis.

A scenario names the controller programs (from .st sources), the physical
state each machine owns with its flow laws, per-cycle input feeds, the
connections between programs, and the analysis settings.  Loading one
yields ready-to-run initial states; analysis flags can be overridden per
run so the same file serves comparisons.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path

from .kmachine import idle_config, load_programs
from .model import (
    Conn,
    InputSpec,
    Options,
    PLCMachine,
    SystemState,
    conn_pair,
    validate_flow,
)
from .solver import SmtCheck
from .st import (
    BinOp,
    CallStmt,
    DelayAnn,
    IfStmt,
    Lit,
    ParseError,
    PouTable,
    UnOp,
    VarRef,
    WhileStmt,
    parse_expression,
    parse_file,
)
from .timed import RuleCtx
from .values import Poly, vadd, vdiv, vmul, vneg, vsub


class ScenarioError(Exception):
    pass


_ANALYSIS_KEYS = {
    "bound",
    "mode",
    "por",
    "clockSep",
    "property",
    "maxSolutions",
    "maxStates",
}
_MACHINE_KEYS = {"id", "programs", "cycleTime", "state", "flow", "inputs", "preload"}
_TOP_KEYS = {
    "machines",
    "connections",
    "analysis",
    "sources",
    "rcvNoOnPending",
    "reliableConnect",
}


@dataclass
class Analysis:
    bound: Fraction = Fraction(100)
    mode: str = "concrete"
    por: bool = False
    clock_sep: bool = False
    property: str = None
    max_solutions: int = 1
    max_states: int = None


@dataclass
class Scenario:
    table: PouTable
    machines: tuple  # PLCMachine templates (idle or preloaded)
    conns: tuple
    analysis: Analysis
    rcv_no_on_pending: bool = False
    reliable_connect: bool = False

    def options(self, **overrides) -> Options:
        base = dict(
            mode=self.analysis.mode,
            por=self.analysis.por,
            clock_sep=self.analysis.clock_sep,
            rcv_no_on_pending=self.rcv_no_on_pending,
            reliable_connect=self.reliable_connect,
        )
        unknown = set(overrides) - set(base)
        if unknown:
            raise ScenarioError(f"unknown option overrides: {sorted(unknown)}")
        base.update({k: v for k, v in overrides.items() if v is not None})
        return Options(**base)

    def initial_state(self, **overrides) -> SystemState:
        opts = self.options(**overrides)
        if opts.mode == "concrete":
            _reject_free_inputs(self.machines)
        return SystemState(
            machines=self.machines,
            conns=self.conns,
            clock=Fraction(0),
            options=opts,
        )

    def context(self, external=None) -> RuleCtx:
        return RuleCtx(
            self.table,
            SmtCheck(external=external),
            comm_ample=_links_stable(self.table, self.conns),
        )


# -- link stability ----------------------------------------------------------

_BUILTIN_BLOCKS = ("CONNECT", "USEND", "URCV")


def _links_stable(table: PouTable, conns: tuple) -> bool:
    """May the reduction treat link state as write-once?

    True only when every link has a positive minimum delay and no loaded
    program can drop a link or retune its delays: no delay annotations,
    no direct disconnect calls, and every CONNECT invocation enables the
    link with a literal TRUE.
    """
    if any(c.delay_lo <= 0 for c in conns):
        return False
    for name, pou in table.pous.items():
        if name in _BUILTIN_BLOCKS:
            continue
        types = {d.name: d.type_name for d in pou.inputs + pou.outputs + pou.locals}
        if not _stmts_keep_links(pou.body, types):
            return False
    return True


def _stmts_keep_links(body, types) -> bool:
    for st in body:
        if isinstance(st, DelayAnn):
            return False
        if isinstance(st, IfStmt):
            if not _stmts_keep_links(st.then_body, types):
                return False
            if not _stmts_keep_links(st.else_body, types):
                return False
        elif isinstance(st, WhileStmt):
            if not _stmts_keep_links(st.body, types):
                return False
        elif isinstance(st, CallStmt):
            if st.name == "disconnect":
                return False
            if types.get(st.name) == "CONNECT":
                en = None
                for i, a in enumerate(st.args):
                    if a.name == "ENC" or (a.name is None and i == 0):
                        en = a.expr
                if not (isinstance(en, Lit) and en.value is True):
                    return False
    return True


# -- value parsing -----------------------------------------------------------


def _num(v, where: str):
    if isinstance(v, bool):
        return v
    if isinstance(v, int):
        return Fraction(v)
    if isinstance(v, float):
        return Fraction(str(v))
    if isinstance(v, str):
        try:
            return Fraction(v)
        except ValueError:
            raise ScenarioError(f"{where}: not a number: {v!r}")
    raise ScenarioError(f"{where}: unsupported value {v!r}")


def _flow_poly(text: str, where: str) -> Poly:
    try:
        expr = parse_expression(text)
    except ParseError as e:
        raise ScenarioError(f"{where}: {e}")
    return _to_poly(expr, where)


def _to_poly(e, where: str):
    if isinstance(e, Lit):
        if isinstance(e.value, bool):
            raise ScenarioError(f"{where}: booleans have no flow")
        return Poly.const(Fraction(e.value))
    if isinstance(e, VarRef):
        return Poly.var(e.name)
    if isinstance(e, UnOp) and e.op == "-":
        return vneg(_to_poly(e.operand, where))
    if isinstance(e, BinOp) and e.op in {"+", "-", "*", "/"}:
        a = _to_poly(e.lhs, where)
        b = _to_poly(e.rhs, where)
        op = {"+": vadd, "-": vsub, "*": vmul, "/": vdiv}[e.op]
        try:
            return op(a, b)
        except Exception as ex:
            raise ScenarioError(f"{where}: {ex}")
    raise ScenarioError(f"{where}: flow laws are polynomial expressions over "
                        f"state names and t")


# -- machine construction ----------------------------------------------------


def _input_specs(doc: dict, programs: tuple, mid: str) -> tuple:
    out = []
    for var, spec in (doc or {}).items():
        where = f"machine {mid!r} input {var!r}"
        if not isinstance(spec, dict):
            raise ScenarioError(f"{where}: expected an object")
        prog = spec.get("program")
        if prog is None:
            if len(programs) != 1:
                raise ScenarioError(f"{where}: 'program' required when the "
                                    f"machine runs several programs")
            prog = programs[0]
        elif prog not in programs:
            raise ScenarioError(f"{where}: {prog!r} not on this machine")
        kind = spec.get("kind")
        if kind not in {"script", "enumerate", "free"}:
            raise ScenarioError(f"{where}: kind must be script, enumerate or free")
        values = tuple(_num(v, where) for v in spec.get("values", []))
        lo = hi = None
        if kind == "free":
            if "values" in spec:
                if not values:
                    raise ScenarioError(f"{where}: empty domain")
            else:
                if "min" not in spec or "max" not in spec:
                    raise ScenarioError(f"{where}: free inputs need min/max "
                                        f"or a finite values list")
                lo = _num(spec["min"], where)
                hi = _num(spec["max"], where)
        elif kind in {"script", "enumerate"} and not values:
            raise ScenarioError(f"{where}: 'values' must be non-empty")
        out.append(InputSpec(prog, var, kind, values, lo, hi))
    return tuple(sorted(out, key=lambda i: (i.prog, i.var)))


def _check_vars_exist(table: PouTable, specs, mid: str):
    for spec in specs:
        pou = table.get(spec.prog)
        names = {d.name for d in pou.inputs + pou.outputs + pou.locals}
        if spec.var not in names:
            raise ScenarioError(
                f"machine {mid!r}: program {spec.prog!r} has no variable "
                f"{spec.var!r}"
            )


def _build_machine(table: PouTable, doc: dict) -> PLCMachine:
    extra = set(doc) - _MACHINE_KEYS
    if extra:
        raise ScenarioError(f"machine entry: unknown keys {sorted(extra)}")
    mid = doc.get("id")
    if not mid or not isinstance(mid, str):
        raise ScenarioError("machine entry: 'id' (string) is required")
    programs = tuple(doc.get("programs") or ())
    if not programs:
        raise ScenarioError(f"machine {mid!r}: 'programs' must be non-empty")
    for p in programs:
        try:
            pou = table.get(p)
        except Exception:
            raise ScenarioError(f"machine {mid!r}: unknown program {p!r}")
        if pou.kind != "program":
            raise ScenarioError(f"machine {mid!r}: {p!r} is not a program")
    cycle = doc.get("cycleTime")
    if cycle is None:
        raise ScenarioError(f"machine {mid!r}: 'cycleTime' is required")
    cycle = _num(cycle, f"machine {mid!r} cycleTime")
    if not isinstance(cycle, Fraction) or cycle <= 0:
        raise ScenarioError(f"machine {mid!r}: cycleTime must be positive")

    state_doc = doc.get("state") or {}
    state = {k: _num(v, f"machine {mid!r} state {k!r}") for k, v in state_doc.items()}
    # every actuated output is part of the physical state it drives
    for p in programs:
        for d in table.get(p).outputs:
            state.setdefault(d.name, _default_state_value(d.type_name))
    flows = {}
    for name, law in (doc.get("flow") or {}).items():
        if name not in state:
            raise ScenarioError(f"machine {mid!r}: flow for unknown state {name!r}")
        flows[name] = _flow_poly(str(law), f"machine {mid!r} flow {name!r}")
        validate_flow(name, flows[name])

    specs = _input_specs(doc.get("inputs"), programs, mid)
    _check_vars_exist(table, specs, mid)

    cfg = idle_config(table, programs)
    in_vars = tuple((p, tuple(d.name for d in table.get(p).inputs)) for p in programs)
    out_vars = tuple((p, tuple(d.name for d in table.get(p).outputs)) for p in programs)
    m = PLCMachine(
        mid=mid,
        cfg=cfg,
        timer=Fraction(0),
        env_timer=Fraction(0),
        state=tuple(sorted(state.items())),
        flow=tuple(sorted(flows.items())),
        cycle_time=cycle,
        inputs=specs,
        in_vars=in_vars,
        out_vars=out_vars,
    )
    if doc.get("preload"):
        m = _preload(table, m)
    return m


def _default_state_value(type_name: str):
    return False if type_name == "BOOL" else Fraction(0)


def _preload(table: PouTable, m: PLCMachine) -> PLCMachine:
    """Treat cycle 0 as already begun: programs loaded, first inputs fed."""
    cfg = load_programs(table, m.cfg)
    writes = []
    for spec in m.inputs:
        if spec.kind != "script":
            raise ScenarioError(
                f"machine {m.mid!r}: preload only works with script inputs"
            )
        env = dict(cfg.prog_env(spec.prog))
        writes.append((env[spec.var], spec.values[0]))
    cfg = cfg.write_many(writes)
    return replace(m, cfg=cfg, timer=m.cycle_time, cycle_index=1)


# -- scenario assembly -------------------------------------------------------


def scenario_from_dict(doc: dict, table: PouTable) -> Scenario:
    extra = set(doc) - _TOP_KEYS
    if extra:
        raise ScenarioError(f"unknown top-level keys {sorted(extra)}")
    machines_doc = doc.get("machines")
    if not machines_doc:
        raise ScenarioError("'machines' must be a non-empty list")
    machines = [_build_machine(table, md) for md in machines_doc]
    ids = [m.mid for m in machines]
    if len(set(ids)) != len(ids):
        raise ScenarioError("duplicate machine ids")
    prog_owner = {}
    for m in machines:
        for p in m.cfg.programs:
            if p in prog_owner:
                raise ScenarioError(f"program {p!r} assigned to two machines")
            prog_owner[p] = m.mid

    conns = []
    for cd in doc.get("connections") or []:
        extra = set(cd) - {"a", "b", "delay"}
        if extra:
            raise ScenarioError(f"connection entry: unknown keys {sorted(extra)}")
        a, b = cd.get("a"), cd.get("b")
        if not a or not b or a == b:
            raise ScenarioError("connection needs two distinct program names")
        for end in (a, b):
            if end not in prog_owner:
                raise ScenarioError(f"connection end {end!r} is not a loaded program")
        delay = cd.get("delay", [10, 20])
        if not (isinstance(delay, (list, tuple)) and len(delay) == 2):
            raise ScenarioError("connection delay must be [min, max]")
        lo = _num(delay[0], "connection delay")
        hi = _num(delay[1], "connection delay")
        if lo < 0 or hi < lo:
            raise ScenarioError("connection delay needs 0 <= min <= max")
        conns.append(Conn(pair=conn_pair(a, b), delay_lo=lo, delay_hi=hi))
    pairs = [c.pair for c in conns]
    if len(set(pairs)) != len(pairs):
        raise ScenarioError("duplicate connection")

    analysis = _build_analysis(doc.get("analysis") or {})
    scen = Scenario(
        table=table,
        machines=tuple(sorted(machines, key=lambda m: m.mid)),
        conns=tuple(sorted(conns, key=lambda c: c.pair)),
        analysis=analysis,
        rcv_no_on_pending=bool(doc.get("rcvNoOnPending", False)),
        reliable_connect=bool(doc.get("reliableConnect", False)),
    )
    _check_free_inputs_mode(scen)
    return scen


def _build_analysis(doc: dict) -> Analysis:
    extra = set(doc) - _ANALYSIS_KEYS
    if extra:
        raise ScenarioError(f"analysis: unknown keys {sorted(extra)}")
    mode = doc.get("mode", "concrete")
    if mode not in {"concrete", "symbolic"}:
        raise ScenarioError("analysis.mode must be 'concrete' or 'symbolic'")
    a = Analysis(
        bound=_num(doc.get("bound", 100), "analysis.bound"),
        mode=mode,
        por=bool(doc.get("por", False)),
        clock_sep=bool(doc.get("clockSep", False)),
        property=doc.get("property"),
        max_solutions=int(doc.get("maxSolutions", 1)),
        max_states=doc.get("maxStates"),
    )
    if a.bound < 0:
        raise ScenarioError("analysis.bound must be >= 0")
    return a


def _check_free_inputs_mode(scen: Scenario):
    if scen.analysis.mode != "symbolic":
        _reject_free_inputs(scen.machines)


def _reject_free_inputs(machines):
    for m in machines:
        for spec in m.inputs:
            if spec.kind == "free":
                raise ScenarioError(
                    f"machine {m.mid!r} input {spec.var!r}: free inputs "
                    f"need symbolic mode (use 'enumerate' or 'script')"
                )


def load_scenario(path, extra_sources=()) -> Scenario:
    """Read a scenario JSON file; .st sources resolve next to it."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{path}: not valid JSON: {e}")
    units = []
    sources = list(doc.get("sources") or [])
    if not sources and not extra_sources:
        raise ScenarioError(f"{path}: no 'sources' listed and none supplied")
    for src in sources:
        sp = path.parent / src
        if not sp.exists():
            raise ScenarioError(f"{path}: source {src!r} not found")
        units.extend(_parse_source(sp.read_text(), sp))
    for text, name in extra_sources:
        units.extend(_parse_source(text, name))
    table = PouTable.from_units(units)
    return scenario_from_dict(doc, table)


def _parse_source(text: str, name):
    try:
        return parse_file(text)
    except ParseError as e:
        raise ScenarioError(f"{name}: {e}")
