"""Time-agnostic leakage paths and per-bit quantification.

Paths are enumerated over bit-slice dependencies, guard reads included.
A hop moves a set of source bits through one assignment into the target
bits they influence; no (assignment, target bit) pair is used twice in a
path, so a loop is walked once per bit it can still reach.

Quantification turns each path into an event over the public inputs: the
conjunction of its guard atoms that read public inputs only. Atoms that
read anything else are assumed to hold. A secret bit's leakage is the
probability that at least one of its paths is enabled, which bounds the
exact ``2V - 1`` from above when inputs are held for the whole trace.
"""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

from .dfg import Bit, DataflowGraph, GuardAtom, assignment_bit_deps, bit_fanout, xor_terms
from .errors import PathExplosionError
from .sim import eval_expr

DEFAULT_MAX_PATH_LEN = 64
DEFAULT_PATH_CAP = 1_000_000
EXACT_UNION_BITS = 20


@dataclass(frozen=True)
class Hop:
    source: str
    source_bits: tuple[int, ...]
    assignment: int
    target: str
    target_bits: tuple[int, ...]
    atoms: tuple[GuardAtom, ...] = field(default=(), compare=False)  # ternary selects on this hop

    def text(self) -> str:
        return f"{self.source}{list(self.source_bits)}-a{self.assignment}->{self.target}{list(self.target_bits)}"


@dataclass(frozen=True)
class LeakagePath:
    id: str
    secret_bit: int
    hops: tuple[Hop, ...]
    terminal: str
    guards_on_path: tuple[GuardAtom, ...] = field(compare=False)

    @property
    def length(self) -> int:
        return len(self.hops)

    def signals(self) -> list[str]:
        return [self.hops[0].source] + [h.target for h in self.hops]


@dataclass(frozen=True)
class Thresholds:
    detect: float = 0.02026
    warn: float = 0.001

    def __post_init__(self):
        if not (0 < self.warn < self.detect < 1):
            raise ValueError(f"thresholds must satisfy 0 < warn < detect < 1 (got warn={self.warn}, detect={self.detect})")

    def classify(self, value: float) -> str:
        if value >= self.detect:
            return "detected"
        if value >= self.warn:
            return "warned"
        return "negligible"


@dataclass(frozen=True)
class BitLeakage:
    secret_bit: int
    value: float
    witness_path: Optional[str]
    classification: str = "negligible"
    paths: int = 0


@dataclass(frozen=True)
class Summary:
    detected: int
    detected_avg: Optional[float]
    warned: int
    warned_avg: Optional[float]

    @staticmethod
    def cell(n: int, avg: Optional[float]) -> str:
        if n == 0 or avg is None:
            return "0/-"
        return f"{n}/{format_value(avg)}"

    def cells(self) -> tuple[str, str]:
        return self.cell(self.detected, self.detected_avg), self.cell(self.warned, self.warned_avg)


def format_value(v: float) -> str:
    txt = f"{v:.3f}".rstrip("0").rstrip(".")
    if txt in ("0", "") and v > 0:
        return f"{v:.1e}"
    return txt


def path_id(secret: str, bit: int, hops: Iterable[Hop]) -> str:
    text = f"{secret}[{bit}]|" + "|".join(h.text() for h in hops)
    return hashlib.sha1(text.encode()).hexdigest()[:16]


# -- enumeration ---------------------------------------------------------------


class _Edges:
    """Per-assignment bit dependencies indexed by source signal."""

    def __init__(self, graph: DataflowGraph, schedule: frozenset[str] = frozenset()):
        widths = graph.widths

        def data_view(a):
            # reads of a schedule register in a guard select the state, they carry no data
            if not schedule:
                return a
            return replace(a, guards=tuple(g for g in a.guards if not (g.support and g.support <= schedule)))

        self.deps = {a.id: assignment_bit_deps(data_view(a), widths) for a in graph.assignments}
        readers: dict[str, set[int]] = {}
        for a in graph.assignments:
            for d in self.deps[a.id].values():
                for sig, _ in d:
                    readers.setdefault(sig, set()).add(a.id)
        self.readers = {k: sorted(v) for k, v in readers.items()}
        self.target = {a.id: a.target for a in graph.assignments}
        self.guards = {a.id: a.guards for a in graph.assignments}

    def step(self, sig: str, bits: frozenset[int], aid: int):
        """Target bits reached from ``sig[bits]`` and the atoms common to every route."""
        reached: list[int] = []
        common: Optional[frozenset[GuardAtom]] = None
        for t, d in sorted(self.deps[aid].items()):
            hit = False
            for b in bits:
                atoms = d.get((sig, b))
                if atoms is None:
                    continue
                hit = True
                common = atoms if common is None else common & atoms
            if hit:
                reached.append(t)
        return reached, common or frozenset()


def enumerate_paths(graph: DataflowGraph, max_path_len: int = DEFAULT_MAX_PATH_LEN,
                    cap: int = DEFAULT_PATH_CAP, bits: Optional[Iterable[int]] = None,
                    schedule: Iterable[str] = ()) -> list[LeakagePath]:
    """Every hop chain from a secret bit to an output, sorted by (bit, id).

    Guard reads of ``schedule`` registers (FSM state registers whose order
    is checked separately) do not create hops.
    """
    secret = graph.secret
    if secret is None:
        raise ValueError("no secret labeled")
    edges = _Edges(graph, frozenset(schedule))
    outputs = set(graph.outputs())
    found: list[LeakagePath] = []

    def emit(b: int, hops: list[Hop]) -> None:
        guards: list[GuardAtom] = []
        for h in hops:
            guards.extend(edges.guards[h.assignment])
            guards.extend(h.atoms)
        found.append(LeakagePath(path_id(secret.signal, b, hops), b, tuple(hops), hops[-1].target, tuple(guards)))
        if len(found) > cap:
            raise PathExplosionError(
                f"path enumeration exceeded the cap of {cap} paths; partial results are unusable", found
            )

    for b in sorted(bits) if bits is not None else range(secret.bits):
        used: dict[int, set[int]] = {}
        hops: list[Hop] = []

        def dfs(sig: str, cur: frozenset[int]) -> None:
            if len(hops) >= max_path_len:
                return
            for aid in edges.readers.get(sig, ()):
                reached, atoms = edges.step(sig, cur, aid)
                fresh = [t for t in reached if t not in used.get(aid, ())]
                if not fresh:
                    continue
                tgt = edges.target[aid]
                hop = Hop(sig, tuple(sorted(cur)), aid, tgt, tuple(fresh),
                          tuple(sorted(atoms, key=lambda g: g.text())))
                used.setdefault(aid, set()).update(fresh)
                hops.append(hop)
                if tgt in outputs:
                    emit(b, hops)
                elif tgt != secret.signal:
                    dfs(tgt, frozenset(fresh))
                hops.pop()
                used[aid].difference_update(fresh)

        dfs(secret.signal, frozenset({b}))
    found.sort(key=lambda p: (p.secret_bit, p.id))
    return found


# -- quantification ------------------------------------------------------------


class Quantifier:
    def __init__(self, graph: DataflowGraph):
        self.graph = graph
        self.widths = graph.widths
        self.public = set(graph.public_inputs())
        self.fanout = bit_fanout(graph)
        sec = graph.secret
        self.secret = sec.signal if sec else None
        self.secret_fixed = sec is not None and not graph.assignments_to(sec.signal)
        self.random = set(graph.random_inputs())

    def is_mask_hop(self, hop: Hop) -> bool:
        """Secret bit XORed with a random bit that feeds nothing else."""
        if not self.secret_fixed or hop.source != self.secret or len(hop.source_bits) != 1:
            return False
        if len(hop.target_bits) != 1:
            return False
        a = self.graph.assignment(hop.assignment)
        if a.guards and any(self.secret in g.support for g in a.guards):
            return False
        terms = xor_terms(a.rhs, hop.target_bits[0] - a.lsb, self.widths)
        if terms is None:
            return False
        src = (self.secret, hop.source_bits[0])
        if terms.count(src) != 1:
            return False
        return any(
            sig in self.random and terms.count((sig, i)) == 1 and self.fanout.get((sig, i), 0) == 1
            for sig, i in terms
        )

    def event(self, path: LeakagePath) -> Optional[frozenset[GuardAtom]]:
        """Public-input atoms that must hold for ``path`` to carry data; None if impossible."""
        if path.hops and self.is_mask_hop(path.hops[0]):
            return None
        atoms = set()
        for g in path.guards_on_path:
            if g.is_reset:
                continue
            sup = g.support
            if not sup:
                if not g.holds(eval_expr(g.condition, {}, self.widths)):
                    return None
                continue
            if sup <= self.public:
                atoms.add(g)
        return frozenset(atoms)

    def probability(self, events: list[frozenset[GuardAtom]]) -> float:
        """P(at least one event holds) over uniform public inputs."""
        if not events:
            return 0.0
        events = _minimal(events)
        if any(not e for e in events):
            return 1.0
        names = sorted({n for e in events for g in e for n in g.support})
        nbits = sum(self.widths[n] for n in names)
        if nbits <= EXACT_UNION_BITS:
            return self._enumerate(events, names)
        total = 0.0
        for e in events:
            sub = sorted({n for g in e for n in g.support})
            if sum(self.widths[n] for n in sub) > EXACT_UNION_BITS:
                return 1.0
            total += self._enumerate([e], sub)
        return min(1.0, total)

    def _enumerate(self, events, names) -> float:
        hits = 0
        ranges = [range(1 << self.widths[n]) for n in names]
        count = 0
        ordered = [sorted(e, key=lambda g: g.text()) for e in events]
        for combo in itertools.product(*ranges):
            env = dict(zip(names, combo))
            count += 1
            for atoms in ordered:
                if all(g.holds(eval_expr(g.condition, env, self.widths)) for g in atoms):
                    hits += 1
                    break
        return hits / count

    def quantify_bit(self, bit: int, paths: list[LeakagePath]) -> BitLeakage:
        evs: dict[frozenset[GuardAtom], str] = {}
        for p in sorted(paths, key=lambda p: p.id):
            e = self.event(p)
            if e is not None and e not in evs:
                evs[e] = p.id
        if not evs:
            return BitLeakage(bit, 0.0, None, paths=len(paths))
        value = self.probability(list(evs))
        witness = max(evs.items(), key=lambda kv: (self.probability([kv[0]]), -len(kv[0]), _neg(kv[1])))[1]
        return BitLeakage(bit, value, witness, paths=len(paths))


def _neg(s: str) -> tuple[int, ...]:
    return tuple(-ord(c) for c in s)


def _minimal(events: list[frozenset]) -> list[frozenset]:
    """Drop events implied by a smaller one (a superset of atoms is a subset of outcomes)."""
    events = sorted(set(events), key=lambda e: (len(e), sorted(g.text() for g in e)))
    keep: list[frozenset] = []
    for e in events:
        if not any(k <= e for k in keep):
            keep.append(e)
    return keep


def quantify(graph: DataflowGraph, paths: list[LeakagePath]) -> list[BitLeakage]:
    q = Quantifier(graph)
    by_bit: dict[int, list[LeakagePath]] = {b: [] for b in range(graph.secret.bits)}
    for p in paths:
        by_bit[p.secret_bit].append(p)
    return [q.quantify_bit(b, by_bit[b]) for b in sorted(by_bit)]


def quantify_bit(graph: DataflowGraph, bit: int, paths: list[LeakagePath]) -> BitLeakage:
    return Quantifier(graph).quantify_bit(bit, paths)


def classify(values: list[BitLeakage], thresholds: Thresholds = Thresholds()) -> tuple[list[BitLeakage], Summary]:
    out = [BitLeakage(v.secret_bit, v.value, v.witness_path, thresholds.classify(v.value), v.paths) for v in values]
    det = [v.value for v in out if v.classification == "detected"]
    warn = [v.value for v in out if v.classification == "warned"]
    summary = Summary(
        len(det), sum(det) / len(det) if det else None,
        len(warn), sum(warn) / len(warn) if warn else None,
    )
    return out, summary
