"""Timing-aware refinement of leakage paths.

Each path is replayed against the extracted state machine. The carrier of
the secret is tracked as the set of states in which it can still be read:
a clocked hop moves the value one transition forward and keeps it alive
until a state that unconditionally rewrites the carried bits. A path whose
set becomes empty is invalid.

Loops (signals feeding themselves while the FSM sits in one state) are
unrolled into chains of fresh ``<sig>__u<k>`` wires, one per iteration,
and the engine is rerun on the result until no new loop appears.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

import networkx as nx

from .dfg import Assignment, DataflowGraph, GuardAtom, Signal
from .engine import (
    DEFAULT_MAX_PATH_LEN,
    DEFAULT_PATH_CAP,
    BitLeakage,
    LeakagePath,
    enumerate_paths,
    quantify,
)
from .errors import GraphError
from .frontend import ast as A
from .fsm import Fsm, StateGraph, counter_iterations, enabling_states, state_atom, state_graph

UNROLL_TAG = "__u"
DEFAULT_MAX_ROUNDS = 4


@dataclass(frozen=True)
class SequenceEntry:
    hop: int
    states: tuple[int, ...]
    cycle: int


@dataclass(frozen=True)
class StateSequence:
    register: str
    entries: tuple[SequenceEntry, ...]
    leaking_cycle: Optional[int]
    empty_state: bool = False


@dataclass(frozen=True)
class PathVerdict:
    path_id: str
    verdict: str  # valid | invalid | looped
    reason: Optional[str] = None  # order-mismatch | overwrite
    detail: Optional[str] = None
    loop_hops: tuple[int, ...] = ()
    min_iterations: Optional[int] = None
    structural: bool = False

    @property
    def invalid(self) -> bool:
        return self.verdict == "invalid"


@dataclass(frozen=True)
class UnrollPlan:
    register: str  # FSM register governing the loop
    state: int
    signals: tuple[str, ...]
    iterations: int
    min_iterations: int
    structural: bool = False

    def __post_init__(self):
        if self.iterations < 1 or self.iterations < self.min_iterations:
            raise ValueError("iterations must be >= max(1, min_iterations)")


@dataclass(frozen=True)
class ChainInfo:
    original: str
    k: int
    iterations: int
    state: int
    register: str  # FSM register
    sequential: bool  # copy of a clocked signal


# -- per-FSM context ----------------------------------------------------------------


class FsmContext:
    """Reachability, enabling sets and overwrite points for one FSM."""

    def __init__(self, base: DataflowGraph, fsm: Fsm):
        self.fsm = fsm
        self.reg = fsm.register.signal
        self.sg: StateGraph = state_graph(fsm)
        self.widths = base.widths
        self._en_cache: dict[tuple, frozenset[int]] = {}
        self.first_cycle = self._first_cycles()
        self.killers = self._killers(base)

    def _first_cycles(self) -> dict[int, int]:
        out: dict[int, int] = {}
        frontier = sorted(self.sg.initial)
        t = 0
        seen = set()
        while frontier:
            nxt = []
            for s in frontier:
                if s not in seen:
                    seen.add(s)
                    out[s] = t
                    nxt.extend(sorted(self.sg.adjacency[s]))
            frontier = [s for s in nxt if s not in seen]
            t += 1
        return out

    def enabled(self, a: Assignment) -> frozenset[int]:
        key = (a.guards, a.reset, a.states)
        hit = self._en_cache.get(key)
        if hit is None:
            if a.reset:
                hit = self.sg.initial
            else:
                hit = enabling_states(a.guards, self.reg, self.sg.reachable, self.widths)
            if a.states is not None:
                hit = hit & a.states
            self._en_cache[key] = hit
        return hit

    def _killers(self, base: DataflowGraph) -> dict[str, list[tuple[frozenset[int], int, int]]]:
        """target -> [(states, msb, lsb)] of unconditional rewrites."""
        out: dict[str, list] = {}
        for a in base.assignments:
            if a.reset or not a.sequential:
                continue
            if all(g.is_reset or state_atom(g, self.reg) for g in a.guards):
                out.setdefault(a.target, []).append((self.enabled(a), a.msb, a.lsb))
        return out

    def kill_states(self, target: str, bits) -> frozenset[int]:
        bits = set(bits)
        out: set[int] = set()
        for states, msb, lsb in self.killers.get(target, ()):
            if all(lsb <= b <= msb for b in bits):
                out |= states
        return frozenset(out)

    def advance(self, start: dict[int, int], kill: frozenset[int]) -> dict[int, int]:
        """States reachable in >= 1 step, passing only through non-killing states."""
        best: dict[int, int] = {}
        todo = deque()
        for s, c in sorted(start.items()):
            for n in sorted(self.sg.adjacency[s]):
                todo.append((n, c + 1))
        while todo:
            s, c = todo.popleft()
            if s in best and best[s] <= c:
                continue
            best[s] = c
            if s in kill:
                continue
            for n in sorted(self.sg.adjacency[s]):
                if n not in best or best[n] > c + 1:
                    todo.append((n, c + 1))
        return best


# -- state sequences and verdicts --------------------------------------------------


def _replay(path: LeakagePath, ctx: FsmContext, graph: DataflowGraph, chains: dict[str, ChainInfo],
            ignore_kills: bool = False):
    """Propagate readable states along the path. Returns (sequence, failed hop or None)."""
    live: dict[int, int] = {s: ctx.first_cycle[s] for s in sorted(ctx.sg.reachable)}
    entries = []
    for k, hop in enumerate(path.hops):
        a = graph.assignment(hop.assignment)
        en = ctx.enabled(a)
        usable = {s: c for s, c in live.items() if s in en}
        if not usable:
            seq = StateSequence(ctx.reg, tuple(entries), None, empty_state=not en)
            return seq, k
        entries.append(SequenceEntry(k, tuple(sorted(usable)), min(usable.values())))
        info = chains.get(hop.target)
        if info is not None and info.register == ctx.reg:
            if info.sequential and info.k == info.iterations:
                kill = frozenset() if ignore_kills else ctx.kill_states(info.original, hop.target_bits) - {info.state}
                after = ctx.advance(usable, kill)
                after.update(usable)
                live = after
            else:
                live = usable
        elif a.sequential:
            kill = frozenset() if ignore_kills else ctx.kill_states(hop.target, hop.target_bits)
            live = ctx.advance(usable, kill)
        else:
            live = usable
        if not live:
            seq = StateSequence(ctx.reg, tuple(entries), None)
            return seq, k + 1
    last = entries[-1].cycle if entries else 0
    return StateSequence(ctx.reg, tuple(entries), last), None


def compute_state_sequence(path: LeakagePath, ctx: FsmContext, graph: DataflowGraph,
                           chains: Optional[dict[str, ChainInfo]] = None) -> StateSequence:
    return _replay(path, ctx, graph, chains or {})[0]


def validate_path(path: LeakagePath, ctx: FsmContext, graph: DataflowGraph,
                  chains: Optional[dict[str, ChainInfo]] = None) -> PathVerdict:
    chains = chains or {}
    seq, failed = _replay(path, ctx, graph, chains)
    if failed is None:
        return PathVerdict(path.id, "valid")
    if seq.empty_state:
        return PathVerdict(path.id, "invalid", "order-mismatch", f"empty-state at hop {failed}")
    _, failed_free = _replay(path, ctx, graph, chains, ignore_kills=True)
    if failed_free is None:
        return PathVerdict(path.id, "invalid", "overwrite", f"carrier rewritten before hop {failed}")
    return PathVerdict(path.id, "invalid", "order-mismatch", f"no transition sequence reaches hop {failed}")


# -- loops -----------------------------------------------------------------------------


def _data_support(a: Assignment, reg: str) -> set[str]:
    sup = set(A.support(a.rhs))
    for g in a.guards:
        if not g.is_reset and not state_atom(g, reg):
            sup |= g.support
    return sup


def loop_signals(graph: DataflowGraph, ctx: FsmContext, state: int) -> tuple[set[str], set[str]]:
    """(looping registers, combinational signals computed from them) while in ``state``."""
    g = nx.DiGraph()
    for a in graph.assignments:
        if a.reset or state not in ctx.enabled(a) or a.target == ctx.reg:
            continue
        for src in _data_support(a, ctx.reg):
            if src != ctx.reg:
                g.add_edge(src, a.target)
    regs: set[str] = set()
    for comp in nx.strongly_connected_components(g):
        if len(comp) > 1 or any(g.has_edge(n, n) for n in comp):
            regs |= {n for n in comp if graph.signals[n].sequential}
    comb: set[str] = set()
    frontier = set(regs)
    while frontier:
        nxt = set()
        for a in graph.assignments:
            if a.sequential or a.target in comb or a.target in regs:
                continue
            if A.support(a.rhs) & frontier or any(g2.support & frontier for g2 in a.guards):
                nxt.add(a.target)
        comb |= nxt
        frontier = nxt
    return regs, comb


def loop_states(ctx: FsmContext) -> list[int]:
    return sorted(s for s in ctx.sg.reachable if s in ctx.sg.adjacency[s])


def min_iterations(graph: DataflowGraph, ctx: FsmContext, state: int) -> tuple[int, bool]:
    """(iterations, structural flag). Counter-bounded loops are exact, others count 1."""
    n = counter_iterations(graph, ctx.fsm, state)
    if n is not None:
        return n, False
    return 1, True


def detect_loops(path: LeakagePath, ctx: FsmContext, graph: DataflowGraph,
                 loops: dict[int, set[str]]) -> Optional[tuple[int, tuple[int, ...]]]:
    """(loop state, hop indices) for the first loop the path runs through."""
    for state in sorted(loops):
        sigs = loops[state]
        hops = tuple(
            k for k, h in enumerate(path.hops)
            if h.target in sigs and state in ctx.enabled(graph.assignment(h.assignment))
        )
        if hops:
            return state, hops
    return None


def _rename_atom(g: GuardAtom, mapping: dict[str, A.Expr]) -> GuardAtom:
    return replace(g, condition=A.rename(g.condition, mapping))


def unroll(graph: DataflowGraph, ctx: FsmContext, plan: UnrollPlan,
           chains: Optional[dict[str, ChainInfo]] = None) -> tuple[DataflowGraph, dict[str, ChainInfo]]:
    """Replace the loop in ``plan.state`` by ``plan.iterations`` unrolled copies."""
    chains = dict(chains or {})
    L, N = plan.state, plan.iterations
    _, comb = loop_signals(graph, ctx, L)
    regs = set(plan.signals)
    copied = regs | comb
    signals = dict(graph.signals)

    def name(sig: str, k: int) -> str:
        return f"{sig}{UNROLL_TAG}{k}"

    for sig in sorted(copied):
        for k in range(1, N + 1):
            fresh = name(sig, k)
            if fresh in signals:
                raise GraphError(f"unrolled name `{fresh}` collides with an existing signal")
            signals[fresh] = Signal(fresh, graph.signals[sig].width, "wire", "internal")
            chains[fresh] = ChainInfo(sig, k, N, L, ctx.reg, sig in regs)

    def view(k: int) -> dict[str, A.Expr]:
        """Names seen during iteration k (1-based): registers from k-1, comb from k."""
        m: dict[str, A.Expr] = {}
        for sig in regs:
            if k - 1 >= 1:
                m[sig] = A.Ident(name(sig, k - 1))
        for sig in comb:
            m[sig] = A.Ident(name(sig, k))
        return m

    def after(k: int) -> dict[str, A.Expr]:
        return {sig: A.Ident(name(sig, k)) for sig in copied}

    next_id = max((a.id for a in graph.assignments), default=-1) + 1
    next_block = max((a.block for a in graph.assignments), default=0) + 1
    out: list[Assignment] = []
    hint = frozenset({L})

    def clean(guards, mapping) -> tuple[GuardAtom, ...]:
        return tuple(_rename_atom(g, mapping) for g in guards if not g.is_reset and not state_atom(g, ctx.reg))

    for a in graph.assignments:
        en = ctx.enabled(a)
        if a.target in regs and a.sequential and not a.reset and L in en:
            rest = en - {L}
            if rest:  # still fires in other states
                out.append(replace(a, states=rest))
            continue  # the back edge is cut
        out.append(a)

    new: list[Assignment] = []
    for k in range(1, N + 1):
        mp = view(k)
        for sig in sorted(comb):
            blk = next_block
            next_block += 1
            for a in graph.assignments_to(sig):
                new.append(Assignment(
                    next_id, name(sig, k), a.msb, a.lsb, A.rename(a.rhs, mp), clean(a.guards, mp),
                    "combinational", a.span, blk, a.order, False, hint,
                ))
                next_id += 1
        for sig in sorted(regs):
            blk = next_block
            next_block += 1
            prev = A.Ident(name(sig, k - 1)) if k > 1 else A.Ident(sig)
            w = graph.signals[sig].width
            new.append(Assignment(next_id, name(sig, k), w - 1, 0, prev, (), "combinational", None, blk, 0, False, hint))
            next_id += 1
            for a in sorted(graph.assignments_to(sig), key=lambda a: (a.block, a.order)):
                if a.reset or L not in ctx.enabled(a) or not a.sequential:
                    continue
                new.append(Assignment(
                    next_id, name(sig, k), a.msb, a.lsb, A.rename(a.rhs, mp), clean(a.guards, mp),
                    "combinational", a.span, blk, a.order, False, hint,
                ))
                next_id += 1

    # consumers outside the loop
    for a in list(out):
        if a.target in copied or a.reset:
            continue
        reads = A.support(a.rhs) | a.guard_support()
        if not reads & copied:
            continue
        en = ctx.enabled(a)
        if L in en and a.sequential:
            for k in range(1, N + 1):
                mp = view(k)
                new.append(replace(
                    a, id=next_id, rhs=A.rename(a.rhs, mp),
                    guards=tuple(_rename_atom(g, mp) for g in a.guards), states=hint,
                ))
                next_id += 1
        if a.sequential and en - {L}:
            mp = after(N)
            new.append(replace(
                a, id=next_id, rhs=A.rename(a.rhs, mp),
                guards=tuple(_rename_atom(g, mp) for g in a.guards), states=en - {L},
            ))
            next_id += 1

    assigns = tuple(out + new)
    edges = frozenset((src, a.id, a.target) for a in assigns for src in a.support())
    g2 = DataflowGraph(graph.module, signals, assigns, edges, graph.params, graph.clock, graph.resets,
                       graph.reset_by_name, graph.warnings)
    return g2, chains


# -- fixpoint driver --------------------------------------------------------------------


@dataclass(frozen=True)
class RoundStats:
    round: int
    paths: int
    invalid_order: int
    invalid_overwrite: int
    looped: int
    loops: tuple[tuple[str, int, int, bool], ...]  # (fsm register, state, iterations, structural)
    signals_introduced: int
    seconds: float = field(default=0.0, compare=False)


@dataclass(frozen=True)
class RefinementResult:
    graph: DataflowGraph
    paths: tuple[LeakagePath, ...]
    verdicts: dict[str, PathVerdict]
    bits: tuple[BitLeakage, ...]
    rounds: tuple[RoundStats, ...]
    plans: tuple[UnrollPlan, ...]
    partial: bool
    chains: dict[str, ChainInfo]
    sequences: dict[str, StateSequence]
    fsms: tuple[Fsm, ...]

    @property
    def valid_paths(self) -> list[LeakagePath]:
        return [p for p in self.paths if not self.verdicts[p.id].invalid]


def refine_and_rerun(graph: DataflowGraph, fsms: list[Fsm], max_rounds: int = DEFAULT_MAX_ROUNDS,
                     max_path_len: int = DEFAULT_MAX_PATH_LEN, cap: int = DEFAULT_PATH_CAP) -> RefinementResult:
    contexts = [FsmContext(graph, f) for f in fsms]
    current = graph
    chains: dict[str, ChainInfo] = {}
    done: set[tuple[str, int]] = set()
    plans: list[UnrollPlan] = []
    rounds: list[RoundStats] = []
    partial = True
    verdicts: dict[str, PathVerdict] = {}
    sequences: dict[str, StateSequence] = {}
    paths: list[LeakagePath] = []
    analysed = current
    for r in range(1, max_rounds + 1):
        t0 = time.perf_counter()
        analysed = current
        paths = enumerate_paths(current, max_path_len, cap, schedule=[c.reg for c in contexts])
        verdicts, sequences = {}, {}
        loops_by_ctx = []
        for ctx in contexts:
            loops = {}
            for s in loop_states(ctx):
                regs, _ = loop_signals(current, ctx, s)
                if regs and (ctx.reg, s) not in done:
                    loops[s] = regs
            loops_by_ctx.append(loops)
        new_loops: dict[tuple[int, int], set[str]] = {}
        for p in paths:
            verdict = PathVerdict(p.id, "valid")
            for ci, ctx in enumerate(contexts):
                v = validate_path(p, ctx, current, chains)
                if ci == 0:
                    sequences[p.id] = compute_state_sequence(p, ctx, current, chains)
                if v.invalid:
                    verdict = v
                    break
            if not verdict.invalid:
                for ci, ctx in enumerate(contexts):
                    hit = detect_loops(p, ctx, current, loops_by_ctx[ci])
                    if hit is not None:
                        state, hops = hit
                        n, structural = min_iterations(current, ctx, state)
                        verdict = PathVerdict(p.id, "looped", loop_hops=hops, min_iterations=n, structural=structural)
                        new_loops[(ci, state)] = loops_by_ctx[ci][state]
                        break
            verdicts[p.id] = verdict
        introduced = 0
        round_plans = []
        for (ci, state), regs in sorted(new_loops.items()):
            ctx = contexts[ci]
            n, structural = min_iterations(current, ctx, state)
            plan = UnrollPlan(ctx.reg, state, tuple(sorted(regs)), n, n, structural)
            before = len(current.signals)
            current, chains = unroll(current, ctx, plan, chains)
            introduced += len(current.signals) - before
            done.add((ctx.reg, state))
            round_plans.append(plan)
        plans.extend(round_plans)
        vals = list(verdicts.values())
        rounds.append(RoundStats(
            r, len(paths),
            sum(1 for v in vals if v.reason == "order-mismatch"),
            sum(1 for v in vals if v.reason == "overwrite"),
            sum(1 for v in vals if v.verdict == "looped"),
            tuple((p.register, p.state, p.iterations, p.structural) for p in round_plans),
            introduced, time.perf_counter() - t0,
        ))
        if not round_plans:
            partial = False
            break
    valid = [p for p in paths if not verdicts[p.id].invalid]
    bits = quantify(analysed, valid) if analysed.secret else []
    return RefinementResult(analysed, tuple(paths), verdicts, tuple(bits), tuple(rounds), tuple(plans),
                            partial, chains, sequences, tuple(fsms))
