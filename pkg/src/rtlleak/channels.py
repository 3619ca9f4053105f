"""Secret-dependent timing: cycle-stamped taint and conditional updates.

Taint starts at the secret in cycle 0 and spreads through every
assignment the FSM can execute in a given cycle, guard reads included.
A register tainted by an assignment firing in cycle t is readable as
tainted from t+1; wires and inputs are readable in the same cycle.

A conditional assignment whose condition reads a tainted signal before
the update lands is a timing-channel finding. The state register's own
comparisons are the schedule, not a data condition, so they are skipped.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .dfg import Assignment, DataflowGraph, GuardAtom
from .errors import Span
from .frontend import ast as A
from .frontend.printer import format_expr
from .fsm import Fsm
from .refine import FsmContext
from .sim import eval_expr, mask


@dataclass(frozen=True)
class SequentialDependencyList:
    entries: dict[str, int]  # signal -> first cycle its value depends on the secret
    horizon: int
    truncated: bool = False  # taint was still spreading in the last cycle

    def readable(self, name: str, cycle: int, sequential: bool) -> bool:
        stamp = self.entries.get(name)
        if stamp is None:
            return False
        return stamp + 1 <= cycle if sequential else stamp <= cycle


@dataclass(frozen=True)
class TimingChannelFinding:
    location: Optional[Span]
    assignment: int
    condition_signal: str
    condition_tainted_cycle: int
    condition: str
    assignment_target: str
    assignment_cycle: int
    assignment_cycle_window: tuple[int, ...]  # FSM states the assignment fires in
    exempted: bool = False
    exemption_reason: Optional[str] = None
    exemption_kind: Optional[str] = None  # if | case

    def sort_key(self):
        loc = self.location
        return (loc.file, loc.line, loc.col) if loc else ("", 0, 0), self.assignment


@dataclass(frozen=True)
class ChannelReport:
    deplist: SequentialDependencyList
    findings: tuple[TimingChannelFinding, ...]
    schedule: tuple[tuple[int, ...], ...] = field(default=(), compare=False)  # primary FSM states per cycle

    @property
    def count(self) -> int:
        return sum(1 for f in self.findings if not f.exempted)


def default_horizon(graph: DataflowGraph, contexts: list[FsmContext]) -> int:
    """2 x states x largest loop bound, at least one cycle per register plus one."""
    from .refine import loop_states, min_iterations

    states = max((len(c.fsm.states) for c in contexts), default=1)
    bound = 1
    for c in contexts:
        for s in loop_states(c):
            bound = max(bound, min_iterations(graph, c, s)[0])
    return max(2 * states * bound, len(graph.registers()) + 1)


class _Schedule:
    """Which assignments may fire in which cycle."""

    def __init__(self, contexts: list[FsmContext], horizon: int):
        self.contexts = contexts
        self.per_cycle = [c.sg.reachable_at(horizon) for c in contexts]

    def fires(self, a: Assignment, t: int) -> bool:
        if a.reset:
            return False
        return all(c.enabled(a) & self.per_cycle[i][t] for i, c in enumerate(self.contexts))

    def window(self, a: Assignment) -> tuple[int, ...]:
        if not self.contexts:
            return ()
        return tuple(sorted(self.contexts[0].enabled(a)))


def build_dependency_list(graph: DataflowGraph, fsms: list[Fsm], horizon: int,
                          contexts: Optional[list[FsmContext]] = None) -> SequentialDependencyList:
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    secret = graph.secret
    if secret is None:
        raise ValueError("no secret labeled")
    contexts = contexts if contexts is not None else [FsmContext(graph, f) for f in fsms]
    sched = _Schedule(contexts, horizon)
    seq = {n for n, s in graph.signals.items() if s.sequential}
    taint: dict[str, int] = {secret.signal: 0}
    grew_last = False
    for t in range(horizon):
        firing = [a for a in graph.assignments if sched.fires(a, t)]
        changed = True
        grew = False
        while changed:
            changed = False
            for a in firing:
                if a.target in taint:
                    continue
                if any(_readable(taint, n, t, n in seq) for n in sorted(a.support())):
                    taint[a.target] = t
                    changed = grew = True
        grew_last = grew and t == horizon - 1
    # a register stamped in the last cycle only becomes readable beyond the horizon
    return SequentialDependencyList(dict(sorted(taint.items())), horizon, grew_last)


def _readable(taint: dict[str, int], name: str, t: int, sequential: bool) -> bool:
    stamp = taint.get(name)
    if stamp is None:
        return False
    return stamp + 1 <= t if sequential else stamp <= t


# -- exemption --------------------------------------------------------------------


def normalize(expr: A.Expr, widths: dict[str, int], width: int) -> str:
    """Canonical text after constant folding, truncated to ``width``."""
    if not A.support(expr):
        return f"#{eval_expr(expr, {}, widths) & mask(width)}"
    return format_expr(_fold(expr, widths))


def _fold(e: A.Expr, widths) -> A.Expr:
    if isinstance(e, A.Const):
        return A.Const(e.value & mask(e.size))
    if not A.support(e) and not isinstance(e, A.Ident):
        return A.Const(eval_expr(e, {}, widths))
    if isinstance(e, A.Unary):
        return A.Unary(e.op, _fold(e.operand, widths))
    if isinstance(e, A.Binary):
        return A.Binary(e.op, _fold(e.left, widths), _fold(e.right, widths))
    if isinstance(e, A.Ternary):
        return A.Ternary(_fold(e.cond, widths), _fold(e.then, widths), _fold(e.else_, widths))
    if isinstance(e, A.Concat):
        return A.Concat(tuple(_fold(p, widths) for p in e.parts))
    return e


def _signature(a: Assignment, k: int, widths) -> tuple:
    """Identity of an assignment below guard position ``k``."""
    suffix = tuple((g.condition, g.polarity, g.values, g.excluded) for g in a.guards[k + 1:])
    return a.target, a.msb, a.lsb, normalize(a.rhs, widths, a.width), suffix


def exemption(graph: DataflowGraph, a: Assignment, k: int) -> Optional[tuple[str, str]]:
    """(reason, kind) when every arm of the statement at guard ``k`` makes the same assignment."""
    atom = a.guards[k]
    if not atom.complete:
        return None
    widths = graph.widths
    mine = _signature(a, k, widths)
    prefix = a.guards[:k]
    covered = set()
    for b in graph.assignments:
        if len(b.guards) <= k or b.guards[:k] != prefix:
            continue
        g = b.guards[k]
        if g.stmt_id != atom.stmt_id or _signature(b, k, widths) != mine:
            continue
        covered.add(g.branch)
    if covered >= set(atom.arms):
        kind = "case" if atom.polarity in ("case", "default") else "if"
        where = "case arm" if kind == "case" else "if/else branch"
        return f"identical assignment in every {where}", kind
    return None


# -- detection ----------------------------------------------------------------------


def detect_timing_channels(graph: DataflowGraph, fsms: list[Fsm], deplist: SequentialDependencyList,
                           contexts: Optional[list[FsmContext]] = None) -> list[TimingChannelFinding]:
    contexts = contexts if contexts is not None else [FsmContext(graph, f) for f in fsms]
    sched = _Schedule(contexts, deplist.horizon)
    fsm_regs = {c.reg for c in contexts}
    seq = {n for n, s in graph.signals.items() if s.sequential}
    taint = deplist.entries
    out = []
    for a in graph.assignments:
        if a.reset:
            continue
        hit = None
        for k, g in enumerate(a.guards):
            if g.is_reset or (g.support and g.support <= fsm_regs):
                continue
            tainted = sorted((taint[n], n) for n in g.support if n in taint)
            if tainted:
                hit = (k, g, tainted)
                break
        if hit is None:
            continue
        k, g, tainted = hit
        fire = None
        for t in range(deplist.horizon):
            if sched.fires(a, t) and any(_readable(taint, n, t, n in seq) for _, n in tainted):
                fire = t
                break
        if fire is None:
            continue
        stamp, cond_sig = next((s, n) for s, n in tainted if _readable(taint, n, fire, n in seq))
        lands = fire + 1 if a.sequential else fire
        if not stamp < lands:
            continue
        ex = exemption(graph, a, k)
        out.append(TimingChannelFinding(
            a.span, a.id, cond_sig, stamp, g.text(), a.target, lands, sched.window(a),
            ex is not None, ex[0] if ex else None, ex[1] if ex else None,
        ))
    out.sort(key=lambda f: f.sort_key())
    return out


def analyze_channels(graph: DataflowGraph, fsms: list[Fsm], horizon: Optional[int] = None) -> ChannelReport:
    contexts = [FsmContext(graph, f) for f in fsms]
    h = horizon or default_horizon(graph, contexts)
    deplist = build_dependency_list(graph, fsms, h, contexts)
    findings = detect_timing_channels(graph, fsms, deplist, contexts)
    schedule = tuple(tuple(sorted(s)) for s in contexts[0].sg.reachable_at(h)) if contexts else ()
    return ChannelReport(deplist, tuple(findings), schedule)
