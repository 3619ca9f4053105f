"""State-machine recovery from a dataflow graph.

A state register is a clocked signal that is only ever assigned constants
and is compared against constants in at least one guard. Guard atoms that
read only the register are evaluated per state; the remaining atoms form
the transition guard.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .dfg import Assignment, DataflowGraph, GuardAtom
from .errors import FsmError, ResetError
from .frontend import ast as A
from .sim import eval_expr


@dataclass(frozen=True)
class StateRegister:
    signal: str
    width: int
    score: tuple[int, int]  # (guard uses, constant assignments)


@dataclass(frozen=True)
class Transition:
    frm: int
    to: int
    guard: tuple[GuardAtom, ...]
    assignment: int = field(compare=False)

    @property
    def guard_support(self) -> frozenset[str]:
        out: set[str] = set()
        for g in self.guard:
            out |= g.support
        return frozenset(out)

    def guard_text(self) -> str:
        return " && ".join(g.text() for g in self.guard) or "1"


@dataclass(frozen=True)
class Fsm:
    register: StateRegister
    states: frozenset[int]
    transitions: tuple[Transition, ...]
    reset_state: Optional[int]
    names: dict[int, str] = field(default_factory=dict, compare=False)
    warnings: tuple[str, ...] = field(default=(), compare=False)

    @property
    def initial_states(self) -> frozenset[int]:
        return self.states if self.reset_state is None else frozenset({self.reset_state})

    def name(self, state: int) -> str:
        return self.names.get(state, str(state))


@dataclass(frozen=True)
class StateGraph:
    states: frozenset[int]
    adjacency: dict[int, frozenset[int]]
    initial: frozenset[int]
    reachable: frozenset[int]

    @property
    def unreachable(self) -> frozenset[int]:
        return self.states - self.reachable

    def successors(self, states) -> frozenset[int]:
        out: set[int] = set()
        for s in states:
            out |= self.adjacency.get(s, frozenset())
        return frozenset(out)

    def reachable_at(self, horizon: int) -> list[frozenset[int]]:
        """States occupied at cycles 0 .. horizon-1 after reset."""
        cur = self.initial
        out = []
        for _ in range(horizon):
            out.append(cur)
            cur = self.successors(cur)
        return out

    def distance(self, src: int, dst: int) -> Optional[int]:
        """Fewest transitions (at least one) leading from ``src`` to ``dst``."""
        seen = set()
        frontier = deque((n, 1) for n in sorted(self.adjacency.get(src, ())))
        while frontier:
            node, d = frontier.popleft()
            if node == dst:
                return d
            if node in seen:
                continue
            seen.add(node)
            frontier.extend((n, d + 1) for n in sorted(self.adjacency.get(node, ())))
        return None


# -- helpers -----------------------------------------------------------------


def _is_const(e: A.Expr) -> bool:
    return isinstance(e, A.Const)


def _compares_against_const(atom: GuardAtom, reg: str) -> bool:
    if atom.support != {reg}:
        return False
    if atom.polarity in ("case", "default"):
        return True
    c = atom.condition
    return isinstance(c, A.Binary) and c.op in A.COMPARE_OPS and (_is_const(c.left) or _is_const(c.right))


def state_atom(atom: GuardAtom, reg: str) -> bool:
    return not atom.is_reset and atom.support == {reg}


def _whole(a: Assignment, width: int) -> bool:
    return a.lsb == 0 and a.msb == width - 1


def find_state_registers(graph: DataflowGraph) -> list[StateRegister]:
    """Candidate state registers, best first."""
    out = []
    for name in graph.registers():
        width = graph.signals[name].width
        assigns = graph.assignments_to(name)
        if not assigns or not all(_is_const(a.rhs) and _whole(a, width) for a in assigns):
            continue
        uses = set()
        for a in graph.assignments:
            for g in a.guards:
                if _compares_against_const(g, name):
                    uses.add((g.stmt_id, g.branch, g.polarity))
        if not uses:
            continue
        out.append(StateRegister(name, width, (len(uses), len(assigns))))
    out.sort(key=lambda r: (-r.score[0], -r.score[1], r.signal))
    return out


def _state_values(graph: DataflowGraph, reg: str) -> set[int]:
    vals = {a.rhs.value for a in graph.assignments_to(reg)}
    for a in graph.assignments:
        for g in a.guards:
            if g.support != {reg}:
                continue
            if g.polarity == "case":
                vals.update(g.values)
            c = g.condition
            if isinstance(c, A.Binary) and c.op in ("==", "!="):
                for side in (c.left, c.right):
                    if isinstance(side, A.Const):
                        vals.add(side.value)
    width = graph.signals[reg].width
    return {v for v in vals if v < (1 << width)}


def _state_names(graph: DataflowGraph, reg: str) -> dict[int, str]:
    names: dict[int, str] = {}

    def visit(e: A.Expr) -> None:
        if isinstance(e, A.Const) and e.label:
            names.setdefault(e.value, e.label.split("__")[-1])
        for ch in A.children(e):
            visit(ch)

    for a in graph.assignments:
        if a.target == reg:
            visit(a.rhs)
        for g in a.guards:
            if g.support == {reg}:
                visit(g.condition)
    width = graph.signals[reg].width
    by_value: dict[int, list[str]] = {}
    for pname, (value, pw) in sorted(graph.params.items()):
        if pw == width:
            by_value.setdefault(value, []).append(pname.split("__")[-1])
    for value, cands in by_value.items():
        if value not in names and len(cands) == 1:
            names[value] = cands[0]
    return names


def enabling_states(atoms, reg: str, states, widths) -> frozenset[int]:
    """States in which every register-only atom holds."""
    sat = []
    for s in sorted(states):
        env = {reg: s}
        if all(g.holds(eval_expr(g.condition, env, widths)) for g in atoms if state_atom(g, reg)):
            sat.append(s)
    return frozenset(sat)


def find_reset_state(graph: DataflowGraph, reg: StateRegister) -> int:
    values = sorted({a.rhs.value for a in graph.assignments_to(reg.signal) if a.reset and _is_const(a.rhs)})
    if not values:
        raise ResetError(f"reset state unidentifiable for `{reg.signal}`")
    if len(values) > 1:
        raise ResetError(f"ambiguous reset for `{reg.signal}`: " + ", ".join(map(str, values)))
    return values[0]


def extract_fsm(graph: DataflowGraph, reg: StateRegister) -> Fsm:
    name = reg.signal
    widths = graph.widths
    for a in graph.assignments_to(name):
        if not _is_const(a.rhs):
            raise FsmError(f"`{name}` has a non-constant assignment", a.span)
    states = _state_values(graph, name)
    warnings = []
    try:
        reset = find_reset_state(graph, reg)
    except ResetError as exc:
        if "ambiguous" in exc.message:
            raise
        reset = None
        warnings.append(f"{exc.message}; all states treated as initial")
    if reset is not None:
        states.add(reset)
    states_f = frozenset(states)

    latest: dict[tuple[int, tuple[GuardAtom, ...]], Transition] = {}
    for a in sorted(graph.assignments_to(name), key=lambda a: (a.block, a.order)):
        if a.reset:
            continue
        guard = tuple(g for g in a.guards if not g.is_reset and not state_atom(g, name))
        for s in enabling_states(a.guards, name, states_f, widths):
            latest[(s, guard)] = Transition(s, a.rhs.value, guard, a.id)
    transitions = tuple(sorted(latest.values(), key=lambda t: (t.frm, t.to, t.guard_text(), t.assignment)))
    return Fsm(reg, states_f, transitions, reset, _state_names(graph, name), tuple(warnings))


def extract_all(graph: DataflowGraph) -> list[Fsm]:
    return [extract_fsm(graph, r) for r in find_state_registers(graph)]


def state_graph(fsm: Fsm) -> StateGraph:
    adj: dict[int, set[int]] = {s: set() for s in fsm.states}
    leaves_always: set[int] = set()
    for t in fsm.transitions:
        adj[t.frm].add(t.to)
        if not t.guard:
            leaves_always.add(t.frm)
    for s in fsm.states:
        if s not in leaves_always:
            adj[s].add(s)  # no assignment fires: the register holds
    adjacency = {s: frozenset(v) for s, v in adj.items()}
    initial = fsm.initial_states
    seen = set(initial)
    todo = deque(sorted(initial))
    while todo:
        s = todo.popleft()
        for n in sorted(adjacency[s]):
            if n not in seen:
                seen.add(n)
                todo.append(n)
    return StateGraph(fsm.states, adjacency, initial, frozenset(seen))


def to_dot(fsm: Fsm) -> str:
    lines = [f'digraph "{fsm.register.signal}" {{']
    for s in sorted(fsm.states):
        shape = "doublecircle" if s == fsm.reset_state else "circle"
        lines.append(f'  s{s} [label="{fsm.name(s)}", shape={shape}];')
    for t in fsm.transitions:
        label = t.guard_text().replace('"', '\\"')
        lines.append(f'  s{t.frm} -> s{t.to} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def counter_iterations(graph: DataflowGraph, fsm: Fsm, loop_state: int) -> Optional[int]:
    """Iterations of a self-looping state exited by ``cnt == K``.

    The counter must be set to a constant on entry (or at reset) and
    incremented by one in the loop state. Returns None when the pattern is
    absent.
    """
    reg = fsm.register.signal
    widths = graph.widths
    best = None
    for t in fsm.transitions:
        if t.frm != loop_state or t.to == loop_state:
            continue
        for g in t.guard:
            c = g.condition
            if g.polarity != "then" or not (isinstance(c, A.Binary) and c.op == "=="):
                continue
            if isinstance(c.left, A.Ident) and isinstance(c.right, A.Const):
                cnt, k = c.left.name, c.right.value
            elif isinstance(c.right, A.Ident) and isinstance(c.left, A.Const):
                cnt, k = c.right.name, c.left.value
            else:
                continue
            if cnt not in graph.signals or not graph.signals[cnt].sequential:
                continue
            init, step = set(), False
            for a in graph.assignments_to(cnt):
                if not _whole(a, widths[cnt]):
                    continue
                in_loop = loop_state in enabling_states(a.guards, reg, fsm.states, widths)
                if _is_const(a.rhs) and (a.reset or not in_loop):
                    init.add(a.rhs.value)
                elif in_loop and _is_increment(a.rhs, cnt):
                    step = True
            if step and len(init) == 1:
                c0 = next(iter(init))
                if k >= c0:
                    n = k - c0 + 1
                    best = n if best is None else min(best, n)
    return best


def _is_increment(e: A.Expr, name: str) -> bool:
    if not (isinstance(e, A.Binary) and e.op == "+"):
        return False
    pair = (e.left, e.right)
    return any(
        isinstance(x, A.Ident) and x.name == name and isinstance(y, A.Const) and y.value == 1
        for x, y in (pair, pair[::-1])
    )
