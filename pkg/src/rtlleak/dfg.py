"""Guarded dataflow graph built from a flattened module.

Every procedural or continuous assignment becomes an :class:`Assignment`
that carries the full path condition (list of :class:`GuardAtom`) from the
root of its block. Dependencies include the signals read by those
conditions, so implicit flows through control are edges like any other.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

import networkx as nx

from .errors import CombinationalLoopError, ElaborationError, GraphError, LabelError, Span
from .frontend import ast as A
from .frontend.printer import format_expr

RESET_NAME = re.compile(r"^(rst|reset)|(rst|reset)(_n|_b|n)?$", re.IGNORECASE)

Bit = tuple[str, int]


@dataclass(frozen=True)
class GuardAtom:
    """One branch decision on the path to an assignment.

    ``polarity`` is ``then``/``else`` for if-statements and ternaries,
    ``case`` for an arm (subject in ``values`` and not in ``excluded``) and
    ``default`` (subject not in ``excluded``).
    """

    condition: A.Expr
    polarity: str
    values: tuple[int, ...] = ()
    excluded: tuple[int, ...] = ()
    stmt_id: int = field(default=-1, compare=False)
    branch: int = field(default=0, compare=False)
    is_reset: bool = field(default=False, compare=False)
    arms: tuple[int, ...] = field(default=(), compare=False)  # branch indices of the statement
    complete: bool = field(default=False, compare=False)  # has else / default

    @property
    def support(self) -> frozenset[str]:
        return A.support(self.condition)

    def holds(self, value: int) -> bool:
        """Truth of the atom given the condition's value."""
        if self.polarity == "then":
            return value != 0
        if self.polarity == "else":
            return value == 0
        if self.polarity == "case":
            return value in self.values and value not in self.excluded
        return value not in self.excluded

    def text(self) -> str:
        cond = format_expr(self.condition, labels=True)
        if self.polarity == "then":
            return cond
        if self.polarity == "else":
            if isinstance(self.condition, A.Unary) and self.condition.op == "!":
                return format_expr(self.condition.operand, labels=True)
            return f"!{cond}"
        if self.polarity == "case":
            return f"{cond} in {{{', '.join(map(str, self.values))}}}"
        return f"{cond} default"


@dataclass(frozen=True)
class Assignment:
    id: int
    target: str
    msb: int
    lsb: int
    rhs: A.Expr
    guards: tuple[GuardAtom, ...]
    kind: str  # sequential | combinational
    span: Optional[Span] = None
    block: int = 0
    order: int = 0
    reset: bool = False
    states: Optional[frozenset[int]] = None  # state hint for synthesized assignments

    @property
    def sequential(self) -> bool:
        return self.kind == "sequential"

    @property
    def width(self) -> int:
        return self.msb - self.lsb + 1

    def guard_support(self) -> frozenset[str]:
        out: set[str] = set()
        for g in self.guards:
            out |= g.support
        return frozenset(out)

    def support(self) -> frozenset[str]:
        return A.support(self.rhs) | self.guard_support()


@dataclass(frozen=True)
class Signal:
    name: str
    width: int
    kind: str  # input | output | wire | reg
    observability: str  # secret | public-input | output | internal
    role: str = "data"  # data | clock | reset | random
    sequential: bool = False


@dataclass(frozen=True)
class ResetInfo:
    signal: str
    active: int  # level that asserts reset
    asynchronous: bool


@dataclass(frozen=True)
class SecretLabel:
    signal: str
    bits: int


@dataclass(frozen=True)
class DataflowGraph:
    module: str
    signals: dict[str, Signal]
    assignments: tuple[Assignment, ...]
    dep_edges: frozenset[tuple[str, int, str]]
    params: dict[str, tuple[int, Optional[int]]]
    clock: Optional[str] = None
    resets: tuple[ResetInfo, ...] = ()
    reset_by_name: bool = False
    warnings: tuple[str, ...] = ()

    # convenience views ----------------------------------------------------

    @property
    def widths(self) -> dict[str, int]:
        return {n: s.width for n, s in self.signals.items()}

    @property
    def secret(self) -> Optional[SecretLabel]:
        for s in self.signals.values():
            if s.observability == "secret":
                return SecretLabel(s.name, s.width)
        return None

    def assignment(self, aid: int) -> Assignment:
        return self._by_id()[aid]

    def _by_id(self) -> dict[int, Assignment]:
        cache = self.__dict__.get("_aid_cache")
        if cache is None:
            cache = {a.id: a for a in self.assignments}
            object.__setattr__(self, "_aid_cache", cache)
        return cache

    def assignments_to(self, name: str) -> list[Assignment]:
        return [a for a in self.assignments if a.target == name]

    def outputs(self) -> list[str]:
        return sorted(n for n, s in self.signals.items() if s.observability == "output")

    def public_inputs(self) -> list[str]:
        return sorted(n for n, s in self.signals.items() if s.observability == "public-input" and s.role == "data")

    def random_inputs(self) -> list[str]:
        return sorted(n for n, s in self.signals.items() if s.role == "random")

    def registers(self) -> list[str]:
        return sorted(n for n, s in self.signals.items() if s.sequential)

    def dump(self) -> str:
        """Deterministic one-line-per-assignment text form."""
        lines = []
        for a in self.assignments:
            op = "<=" if a.sequential else "="
            rng = "" if a.width == self.signals[a.target].width else f"[{a.msb}:{a.lsb}]"
            guards = ", ".join(g.text() for g in a.guards)
            tag = " reset" if a.reset else ""
            lines.append(f"{a.target}{rng} {op} {format_expr(a.rhs, labels=True)} [{guards}]{tag} @{a.span}")
        return "\n".join(lines) + "\n"


# -- construction -----------------------------------------------------------


class _Builder:
    def __init__(self, module: A.ModuleDecl):
        self.m = module
        self.widths = module.widths()
        self.assignments: list[Assignment] = []
        self.stmt_counter = 0
        self.next_id = 0

    def add(self, target: A.Expr, rhs: A.Expr, guards, kind, span, block, order, reset) -> None:
        name, msb, lsb = A.lvalue_target(target, self.widths)
        self.assignments.append(
            Assignment(self.next_id, name, msb, lsb, rhs, tuple(guards), kind, span, block, order, reset)
        )
        self.next_id += 1

    def walk(self, stmt: A.Stmt, guards: list[GuardAtom], kind: str, block: int, reset: bool, counter: list[int]):
        if isinstance(stmt, A.Assign):
            counter[0] += 1
            self.add(stmt.lhs, stmt.rhs, guards, kind, stmt.span, block, counter[0], reset)
        elif isinstance(stmt, A.Block):
            for s in stmt.stmts:
                self.walk(s, guards, kind, block, reset, counter)
        elif isinstance(stmt, A.If):
            sid = self._sid()
            full = stmt.else_ is not None
            arms = (0, 1) if full else (0,)
            self.walk(stmt.then, guards + [GuardAtom(stmt.cond, "then", stmt_id=sid, branch=0, arms=arms, complete=full)],
                      kind, block, reset, counter)
            if full:
                self.walk(stmt.else_, guards + [GuardAtom(stmt.cond, "else", stmt_id=sid, branch=1, arms=arms, complete=True)],
                          kind, block, reset, counter)
        elif isinstance(stmt, A.Case):
            sid = self._sid()
            seen: list[int] = []
            arms = tuple(range(len(stmt.items)))
            full = any(item.values is None for item in stmt.items)
            for k, item in enumerate(stmt.items):
                if item.values is None:
                    continue
                vals = []
                for v in item.values:
                    if not isinstance(v, A.Const):
                        raise ElaborationError("case item values must be constants", item.span)
                    vals.append(v.value)
                atom = GuardAtom(stmt.subject, "case", tuple(vals), tuple(seen), sid, k, arms=arms, complete=full)
                self.walk(item.body, guards + [atom], kind, block, reset, counter)
                seen.extend(vals)
            for k, item in enumerate(stmt.items):
                if item.values is None:
                    atom = GuardAtom(stmt.subject, "default", (), tuple(sorted(set(seen))), sid, k, arms=arms, complete=True)
                    self.walk(item.body, guards + [atom], kind, block, reset, counter)
        else:
            raise TypeError(stmt)

    def _sid(self) -> int:
        self.stmt_counter += 1
        return self.stmt_counter


def _alias_root(name: str, copies: dict[str, str]) -> str:
    seen = set()
    while name in copies and name not in seen:
        seen.add(name)
        name = copies[name]
    return name


def _reset_level(cond: A.Expr, sig: str, width: int) -> Optional[int]:
    from .sim import eval_const_expr

    for v in (0, 1):
        if eval_const_expr(cond, {sig: v}, {sig: width}):
            return v
    return None


def build_graph(module: A.ModuleDecl) -> DataflowGraph:
    """Convert a flattened module into a guarded dataflow graph."""
    b = _Builder(module)
    widths = b.widths
    inputs = {p.name for p in module.ports if p.direction == "input"}
    outputs = {p.name for p in module.ports if p.direction == "output"}
    regs = {p.name for p in module.ports if p.is_reg} | {n.name for n in module.nets if n.kind == "reg"}

    copies = {}
    for it in module.items:
        if isinstance(it, A.ContAssign) and isinstance(it.lhs, A.Ident) and isinstance(it.rhs, A.Ident):
            copies[it.lhs.name] = it.rhs.name

    clocks: set[str] = set()
    resets: dict[str, ResetInfo] = {}
    by_name = False
    warnings: list[str] = []
    block = 0
    for it in module.items:
        block += 1
        if isinstance(it, A.ContAssign):
            b.add(it.lhs, it.rhs, [], "combinational", it.span, block, 1, False)
            continue
        if isinstance(it, A.Instance):
            raise GraphError("graph construction requires a flattened module", it.span)
        sens = it.sensitivity
        if sens.kind == "comb":
            b.walk(it.body, [], "combinational", block, False, [0])
            continue
        clocks.add(_alias_root(sens.clock[1], copies))
        body = it.body
        while isinstance(body, A.Block) and len(body.stmts) == 1:
            body = body.stmts[0]
        reset_sig, asynchronous = None, False
        if sens.async_reset is not None:
            reset_sig, asynchronous = sens.async_reset[1], True
        elif isinstance(body, A.If):
            sup = A.support(body.cond)
            if len(sup) == 1:
                cand = next(iter(sup))
                root = _alias_root(cand, copies)
                if root in inputs and RESET_NAME.search(root) and widths[cand] == 1:
                    reset_sig = cand
                    by_name = True
        if reset_sig is not None and isinstance(body, A.If) and A.support(body.cond) == {reset_sig}:
            level = _reset_level(body.cond, reset_sig, widths[reset_sig])
            root = _alias_root(reset_sig, copies)
            # the condition is satisfied when the root holds `level` (copies are exact)
            resets[root] = ResetInfo(root, level if level is not None else 1, asynchronous)
            sid = b._sid()
            counter = [0]
            ratom = GuardAtom(body.cond, "then", stmt_id=sid, branch=0, is_reset=True)
            b.walk(body.then, [ratom], "sequential", block, True, counter)
            if body.else_ is not None:
                eatom = GuardAtom(body.cond, "else", stmt_id=sid, branch=1, is_reset=True)
                b.walk(body.else_, [eatom], "sequential", block, False, counter)
        else:
            if sens.async_reset is not None:
                raise ElaborationError("async reset block must start with `if` on the reset signal", it.span)
            b.walk(it.body, [], "sequential", block, False, [0])

    if len(clocks) > 1:
        raise ElaborationError("subset violation: multiple clock domains (" + ", ".join(sorted(clocks)) + ")")

    seq_targets = {a.target for a in b.assignments if a.sequential}
    comb_targets = {a.target for a in b.assignments if not a.sequential}
    both = seq_targets & comb_targets
    if both:
        raise GraphError("signal assigned in both clocked and combinational logic: " + ", ".join(sorted(both)))

    signals: dict[str, Signal] = {}
    for name, w in widths.items():
        if name in inputs:
            kind, obs = "input", "public-input"
        elif name in outputs:
            kind, obs = "output", "output"
        else:
            kind, obs = ("reg" if name in regs else "wire"), "internal"
        role = "data"
        if name in clocks:
            role = "clock"
        elif name in resets:
            role = "reset"
        signals[name] = Signal(name, w, kind, obs, role, name in seq_targets)

    for o in sorted(outputs):
        if o not in seq_targets | comb_targets:
            raise GraphError(f"output `{o}` is never assigned")
    for name in sorted(set(widths) - inputs - seq_targets - comb_targets - outputs):
        used = any(name in a.support() for a in b.assignments)
        if used:
            warnings.append(f"`{name}` is read but never assigned; treated as constant 0")
    if by_name:
        warnings.append("reset identified by signal-name heuristic")

    edges = frozenset((src, a.id, a.target) for a in b.assignments for src in a.support())
    _check_comb_loops(b.assignments)
    params = {p.name: (p.value, p.width) for p in module.params}
    return DataflowGraph(
        module.name, signals, tuple(b.assignments), edges, params,
        next(iter(clocks)) if clocks else None, tuple(resets[k] for k in sorted(resets)), by_name, tuple(warnings),
    )


def _check_comb_loops(assignments: Iterable[Assignment]) -> None:
    g = nx.DiGraph()
    for a in assignments:
        if a.sequential:
            continue
        for src in sorted(a.support()):
            g.add_edge(src, a.target)
    try:
        cycle = nx.find_cycle(g)
    except nx.NetworkXNoCycle:
        return
    raise CombinationalLoopError(sorted({u for u, _ in cycle}))


def comb_block_order(graph: DataflowGraph) -> list[list[Assignment]]:
    """Combinational assignments grouped by block, in evaluation order."""
    blocks: dict[int, list[Assignment]] = {}
    for a in graph.assignments:
        if not a.sequential:
            blocks.setdefault(a.block, []).append(a)
    writer = {a.target: a.block for lst in blocks.values() for a in lst}
    g = nx.DiGraph()
    g.add_nodes_from(blocks)
    for bid, lst in blocks.items():
        for a in lst:
            for src in a.support():
                if src in writer and writer[src] != bid:
                    g.add_edge(writer[src], bid)
    try:
        order = list(nx.lexicographical_topological_sort(g))
    except nx.NetworkXUnfeasible:
        raise CombinationalLoopError(sorted(writer)) from None
    return [sorted(blocks[bid], key=lambda a: a.order) for bid in order]


# -- labels -----------------------------------------------------------------


def label_secret(graph: DataflowGraph, signal_name: str) -> DataflowGraph:
    """Mark one input or register as the secret; any previous secret is cleared."""
    sig = graph.signals.get(signal_name)
    if sig is None:
        raise LabelError(f"unknown signal `{signal_name}`")
    if sig.observability == "output":
        raise LabelError(f"`{signal_name}` is an output; an observable secret contradicts the threat model")
    if sig.kind not in ("input", "reg") or sig.role != "data":
        raise LabelError(f"`{signal_name}` must be a data input or a register to be labeled secret")
    signals = {}
    for n, s in graph.signals.items():
        if s.observability == "secret":
            s = replace(s, observability="public-input" if s.kind == "input" else "internal")
        if n == signal_name:
            s = replace(s, observability="secret")
        signals[n] = s
    return replace(graph, signals=signals)


def label_random(graph: DataflowGraph, signal_name: str) -> DataflowGraph:
    """Mark an input as an unobservable uniform random source (e.g. a TRNG)."""
    sig = graph.signals.get(signal_name)
    if sig is None:
        raise LabelError(f"unknown signal `{signal_name}`")
    if sig.kind != "input" or sig.observability != "public-input" or sig.role != "data":
        raise LabelError(f"`{signal_name}` must be a public data input to be labeled random")
    signals = dict(graph.signals)
    signals[signal_name] = replace(sig, observability="internal", role="random")
    return replace(graph, signals=signals)


# -- bit-level dependencies --------------------------------------------------

# maps a source bit to the ternary atoms under which it reaches the result bit
BitDeps = dict[Bit, frozenset[GuardAtom]]


def _merge(a: BitDeps, b: BitDeps) -> BitDeps:
    out = dict(a)
    for k, atoms in b.items():
        out[k] = out[k] & atoms if k in out else atoms
    return out


def _all_bits(deps: list[BitDeps]) -> BitDeps:
    out: BitDeps = {}
    for d in deps:
        for k in d:
            out[k] = frozenset()
    return out


def _extend(deps: list[BitDeps], width: int) -> list[BitDeps]:
    return deps[:width] + [{} for _ in range(width - len(deps))]


def expr_bit_deps(expr: A.Expr, widths: dict[str, int]) -> list[BitDeps]:
    """Per result bit, the source bits it may depend on.

    Exact for copies, selects, concatenation, bitwise operators, constant
    shifts and ternary data inputs; conservative (every bit) otherwise.
    """
    w = A.expr_width(expr, widths)
    if isinstance(expr, A.Const):
        return [{} for _ in range(w)]
    if isinstance(expr, A.Ident):
        return [{(expr.name, i): frozenset()} for i in range(w)]
    if isinstance(expr, A.Index):
        base = expr_bit_deps(expr.base, widths)
        if isinstance(expr.index, A.Const):
            i = expr.index.value
            return [dict(base[i]) if i < len(base) else {}]
        return [_merge(_all_bits(base), _all_bits(expr_bit_deps(expr.index, widths)))]
    if isinstance(expr, A.Slice):
        base = expr_bit_deps(expr.base, widths)
        return [dict(base[i]) for i in range(expr.lsb, expr.msb + 1)]
    if isinstance(expr, A.Concat):
        out: list[BitDeps] = []
        for part in reversed(expr.parts):
            out.extend(expr_bit_deps(part, widths))
        return out
    if isinstance(expr, A.Repl):
        inner = expr_bit_deps(expr.expr, widths)
        return [dict(d) for _ in range(expr.count) for d in inner]
    if isinstance(expr, A.Unary):
        inner = expr_bit_deps(expr.operand, widths)
        if expr.op == "~":
            return inner
        return [_all_bits(inner)]
    if isinstance(expr, A.Binary):
        left = expr_bit_deps(expr.left, widths)
        right = expr_bit_deps(expr.right, widths)
        if expr.op in A.BITWISE_OPS:
            left, right = _extend(left, w), _extend(right, w)
            return [_merge(left[i], right[i]) for i in range(w)]
        if expr.op in A.SHIFT_OPS and isinstance(expr.right, A.Const):
            c = expr.right.value
            if expr.op == "<<":
                return [dict(left[i - c]) if i >= c else {} for i in range(w)]
            return [dict(left[i + c]) if i + c < w else {} for i in range(w)]
        every = _merge(_all_bits(left), _all_bits(right))
        return [dict(every) for _ in range(w)]
    if isinstance(expr, A.Ternary):
        cond = _all_bits(expr_bit_deps(expr.cond, widths))
        t_atom = GuardAtom(expr.cond, "then")
        e_atom = GuardAtom(expr.cond, "else")
        then = _extend(expr_bit_deps(expr.then, widths), w)
        else_ = _extend(expr_bit_deps(expr.else_, widths), w)
        out = []
        for i in range(w):
            d = dict(cond)
            d = _merge(d, {k: v | {t_atom} for k, v in then[i].items()})
            d = _merge(d, {k: v | {e_atom} for k, v in else_[i].items()})
            out.append(d)
        return out
    raise TypeError(expr)


def assignment_bit_deps(a: Assignment, widths: dict[str, int]) -> dict[int, BitDeps]:
    """Target bit -> source bits (with ternary atoms), guard reads included."""
    rhs = _extend(expr_bit_deps(a.rhs, widths), a.width)
    guard_bits: BitDeps = {}
    for g in a.guards:
        for name in sorted(g.support):
            for i in range(widths[name]):
                guard_bits[(name, i)] = frozenset()
    return {a.lsb + j: _merge(rhs[j], guard_bits) for j in range(a.width)}


def bit_slice_deps(a: Assignment, widths: dict[str, int]) -> dict[int, set[Bit]]:
    return {t: set(d) for t, d in assignment_bit_deps(a, widths).items()}


def xor_terms(expr: A.Expr, bit: int, widths: dict[str, int]) -> Optional[list[Bit]]:
    """Source bits combined purely by XOR/NOT at result ``bit``; None if nonlinear."""
    if isinstance(expr, A.Const):
        return []
    if isinstance(expr, A.Ident):
        return [(expr.name, bit)] if bit < widths[expr.name] else []
    if isinstance(expr, A.Index):
        if bit > 0:
            return []
        if isinstance(expr.index, A.Const):
            return xor_terms(expr.base, expr.index.value, widths)
        return None
    if isinstance(expr, A.Slice):
        if bit > expr.msb - expr.lsb:
            return []
        return xor_terms(expr.base, expr.lsb + bit, widths)
    if isinstance(expr, A.Concat):
        off = 0
        for part in reversed(expr.parts):
            pw = A.expr_width(part, widths)
            if bit < off + pw:
                return xor_terms(part, bit - off, widths)
            off += pw
        return []
    if isinstance(expr, A.Unary) and expr.op == "~":
        return xor_terms(expr.operand, bit, widths)
    if isinstance(expr, A.Binary) and expr.op == "^":
        lt = xor_terms(expr.left, bit, widths)
        rt = xor_terms(expr.right, bit, widths)
        if lt is None or rt is None:
            return None
        return lt + rt
    return None


def bit_fanout(graph: DataflowGraph) -> dict[Bit, int]:
    """Number of (assignment, target bit) pairs each source bit feeds."""
    widths = graph.widths
    count: dict[Bit, int] = {}
    for a in graph.assignments:
        for deps in assignment_bit_deps(a, widths).values():
            for src in deps:
                count[src] = count.get(src, 0) + 1
    return count
