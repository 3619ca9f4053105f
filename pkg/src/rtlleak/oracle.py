"""Exhaustive ground truth for small designs.

Every secret value, random-input value and public-input value is enumerated
uniformly. The attacker sees the public inputs and the output trace; the
posterior Bayes vulnerability of one secret bit is the sum, over distinct
observations, of the larger joint probability of the bit being 0 or 1.
Leakage is normalised as ``2*V - 1`` so a blind guess is 0 and certainty 1.

By default public and random inputs are sampled once and held for the
whole trace (``input_mode="held"``); ``"resampled"`` draws them afresh
every cycle.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Optional

from .dfg import DataflowGraph
from .errors import OracleBudgetError
from .sim import Simulator

DEFAULT_BUDGET = 20


@dataclass(frozen=True)
class ObservationTrace:
    outputs: tuple[tuple[int, ...], ...]  # per cycle, in graph.outputs() order
    public_inputs: tuple[tuple[int, ...], ...]

    @property
    def length(self) -> int:
        return len(self.outputs)


@dataclass(frozen=True)
class TimingVariability:
    variable: Optional[bool]  # None when the completion signal never asserts
    witness: Optional[tuple[int, Optional[int], int, Optional[int]]] = None  # secret_a, cycle_a, secret_b, cycle_b
    indeterminate: bool = False


class Oracle:
    def __init__(self, graph: DataflowGraph, input_mode: str = "held", budget: int = DEFAULT_BUDGET):
        if graph.secret is None:
            raise ValueError("oracle needs a labeled secret")
        if input_mode not in ("held", "resampled"):
            raise ValueError(f"unknown input mode {input_mode!r}")
        self.graph = graph
        self.sim = Simulator(graph)
        self.mode = input_mode
        self.budget = budget
        self.secret = graph.secret
        sig = graph.signals
        self.secret_is_input = sig[self.secret.signal].kind == "input"
        self.public = graph.public_inputs()
        self.random = graph.random_inputs()
        self.out_idx = [self.sim.index(o) for o in graph.outputs()]

    def free_bits(self, horizon: int) -> int:
        w = self.graph.widths
        per = sum(w[n] for n in self.public) + sum(w[n] for n in self.random)
        return self.secret.bits + (per * horizon if self.mode == "resampled" else per)

    def _check_budget(self, horizon: int) -> None:
        n = self.free_bits(horizon)
        if n > self.budget:
            raise OracleBudgetError(f"{n} free bits exceed the oracle budget of {self.budget}")

    def _input_tuple(self, secret: int, values: dict[str, int]) -> tuple[int, ...]:
        out = []
        for name in self.sim.inputs:
            if name == self.secret.signal:
                out.append(secret)
            else:
                out.append(values.get(name, 0))
        return tuple(out)

    def _assignments(self, names: list[str]) -> Iterator[dict[str, int]]:
        w = self.graph.widths
        for combo in itertools.product(*(range(1 << w[n]) for n in names)):
            yield dict(zip(names, combo))

    def _scenarios(self, horizon: int) -> Iterator[tuple[tuple, tuple, object]]:
        """Yield (public observation key, random key, simulator inputs builder)."""
        if self.mode == "held":
            for pub in self._assignments(self.public):
                for rnd in self._assignments(self.random):
                    vals = {**pub, **rnd}
                    pkey = tuple(pub[n] for n in self.public)
                    yield pkey, tuple(rnd.values()), (lambda s, v=vals: self._input_tuple(s, v))
        else:
            per_cycle = list(self._assignments(self.public))
            per_rand = list(self._assignments(self.random))
            for pubs in itertools.product(per_cycle, repeat=horizon):
                for rnds in itertools.product(per_rand, repeat=horizon):
                    pkey = tuple(tuple(p[n] for n in self.public) for p in pubs)
                    seq = [{**p, **r} for p, r in zip(pubs, rnds)]
                    yield pkey, tuple(tuple(r.values()) for r in rnds), (
                        lambda s, q=seq: [self._input_tuple(s, v) for v in q]
                    )

    def _run(self, build, secret: int, horizon: int):
        return self.sim.run(build(secret), horizon, secret_value=None if self.secret_is_input else secret)

    # -- operations --------------------------------------------------------

    def simulate(self, secret_value: int, public_inputs, cycles: int,
                 random_inputs: Optional[dict[str, int]] = None) -> ObservationTrace:
        """Trace of outputs and public inputs; ``public_inputs`` is a dict (held) or list of dicts."""
        rnd = random_inputs or {}
        if isinstance(public_inputs, dict):
            seq = [public_inputs] * cycles
            inputs = self._input_tuple(secret_value, {**public_inputs, **rnd})
        else:
            seq = list(public_inputs)
            inputs = [self._input_tuple(secret_value, {**p, **rnd}) for p in seq]
        trace = self.sim.run(inputs, cycles, secret_value=None if self.secret_is_input else secret_value)
        outs = tuple(tuple(v[k] for k in self.out_idx) for v in trace)
        pubs = tuple(tuple(p.get(n, 0) for n in self.public) for p in seq[:cycles])
        return ObservationTrace(outs, pubs)

    def exact_leakages(self, horizon: int) -> list[float]:
        """Exact ``2V - 1`` for every secret bit, from one enumeration."""
        self._check_budget(horizon)
        nbits = self.secret.bits
        counts: dict[tuple, list[int]] = {}
        total = 0
        for pkey, _, build in self._scenarios(horizon):
            for s in range(1 << nbits):
                trace = self._run(build, s, horizon)
                obs = (pkey, tuple(tuple(v[k] for k in self.out_idx) for v in trace))
                row = counts.get(obs)
                if row is None:
                    row = counts[obs] = [0] * (2 * nbits)
                for b in range(nbits):
                    row[2 * b + ((s >> b) & 1)] += 1
                total += 1
        leak = []
        for b in range(nbits):
            v = sum(max(row[2 * b], row[2 * b + 1]) for row in counts.values()) / total
            leak.append(2 * v - 1)
        return leak

    def exact_bit_leakage(self, bit: int, horizon: int) -> float:
        return self.exact_leakages(horizon)[bit]

    def joint_probability_mass(self, horizon: int) -> float:
        """Sum of all enumerated joint probabilities (sanity check, should be 1)."""
        self._check_budget(horizon)
        n = 0
        for _ in self._scenarios(horizon):
            n += 1
        runs = n * (1 << self.secret.bits)
        return sum(1.0 / runs for _ in range(runs))

    def exact_timing_variability(self, completion: str, horizon: int) -> TimingVariability:
        """Whether the first cycle ``completion`` is asserted depends on the secret.

        Public and random inputs are held equal while the secret varies.
        """
        self._check_budget(horizon)
        k = self.sim.index(completion)
        any_asserted = False
        for _, _, build in self._scenarios(horizon):
            firsts: dict[int, Optional[int]] = {}
            for s in range(1 << self.secret.bits):
                trace = self._run(build, s, horizon)
                firsts[s] = next((t for t, v in enumerate(trace) if v[k]), None)
            seen = {c for c in firsts.values() if c is not None}
            if seen:
                any_asserted = True
            if len(set(firsts.values())) > 1 and seen:
                ordered = sorted(firsts.items(), key=lambda kv: (kv[1] is None, kv[1] or 0, kv[0]))
                (sa, ca), (sb, cb) = ordered[0], ordered[-1]
                return TimingVariability(True, (sa, ca, sb, cb), None in firsts.values())
        if not any_asserted:
            return TimingVariability(None, None, True)
        return TimingVariability(False)

    def first_difference_cycles(self, horizon: int) -> dict[str, int]:
        """Earliest cycle at which each signal differs between two secret values."""
        self._check_budget(horizon)
        names = self.sim.all_names
        first: dict[str, int] = {}
        for _, _, build in self._scenarios(horizon):
            base = self._run(build, 0, horizon)
            for s in range(1, 1 << self.secret.bits):
                trace = self._run(build, s, horizon)
                for t, (va, vb) in enumerate(zip(base, trace)):
                    if va == vb:
                        continue
                    for j, name in enumerate(names):
                        if va[j] != vb[j] and (name not in first or t < first[name]):
                            first[name] = t
        return first


def exact_bit_leakage(graph: DataflowGraph, bit: int, horizon: int, **kw) -> float:
    return Oracle(graph, **kw).exact_bit_leakage(bit, horizon)


def exact_timing_variability(graph: DataflowGraph, completion: str, horizon: int, **kw) -> TimingVariability:
    return Oracle(graph, **kw).exact_timing_variability(completion, horizon)


def simulate(graph: DataflowGraph, secret_value: int, public_inputs, cycles: int, **kw) -> ObservationTrace:
    return Oracle(graph).simulate(secret_value, public_inputs, cycles, **kw)
