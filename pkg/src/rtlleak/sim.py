"""Two-valued, cycle-based executable semantics.

Expressions compile to Python source; a whole graph compiles to a
``cycle(regs, inputs)`` function returning next-state registers and the
settled combinational values. All values are unsigned ints masked to their
self-determined widths and truncated or zero-extended on assignment.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Callable, Optional

from .frontend import ast as A


def mask(width: int) -> int:
    return (1 << width) - 1


def compile_expr(expr: A.Expr, names: Callable[[str], str], widths: dict[str, int]) -> str:
    """Python source computing ``expr``; ``names`` maps signals to variables."""

    def c(e: A.Expr) -> str:
        return compile_expr(e, names, widths)

    w = A.expr_width(expr, widths)
    m = mask(w)
    if isinstance(expr, A.Const):
        return str(expr.value & mask(expr.size))
    if isinstance(expr, A.Ident):
        return names(expr.name)
    if isinstance(expr, A.Index):
        return f"(({c(expr.base)} >> {c(expr.index)}) & 1)"
    if isinstance(expr, A.Slice):
        return f"(({c(expr.base)} >> {expr.lsb}) & {m})"
    if isinstance(expr, A.Concat):
        terms, off = [], 0
        for part in reversed(expr.parts):
            terms.append(f"({c(part)} << {off})")
            off += A.expr_width(part, widths)
        return "(" + " | ".join(terms) + ")"
    if isinstance(expr, A.Repl):
        iw = A.expr_width(expr.expr, widths)
        inner = c(expr.expr)
        return "(" + " | ".join(f"({inner} << {k * iw})" for k in range(expr.count)) + ")"
    if isinstance(expr, A.Unary):
        x = c(expr.operand)
        if expr.op == "~":
            return f"(~{x} & {m})"
        if expr.op == "!":
            return f"(0 if {x} else 1)"
        if expr.op == "r&":
            return f"int({x} == {mask(A.expr_width(expr.operand, widths))})"
        if expr.op == "r|":
            return f"int({x} != 0)"
        return f"(({x}).bit_count() & 1)"
    if isinstance(expr, A.Binary):
        a, b, op = c(expr.left), c(expr.right), expr.op
        if op in A.BITWISE_OPS:
            return f"({a} {op} {b})"
        if op in A.ARITH_OPS:
            return f"(({a} {op} {b}) & {m})"
        if op in A.COMPARE_OPS:
            return f"int({a} {op} {b})"
        if op == "&&":
            return f"int(bool({a}) and bool({b}))"
        if op == "||":
            return f"int(bool({a}) or bool({b}))"
        if op == "<<":
            return f"(({a} << min({b}, {w})) & {m})"
        if op == ">>":
            return f"({a} >> {b})"
    if isinstance(expr, A.Ternary):
        return f"({c(expr.then)} if {c(expr.cond)} else {c(expr.else_)})"
    raise TypeError(expr)


@lru_cache(maxsize=4096)
def _compiled(expr: A.Expr, widths_key: tuple[tuple[str, int], ...]):
    widths = dict(widths_key)
    src = compile_expr(expr, lambda n: f"_env[{n!r}]", widths)
    return compile(src, "<expr>", "eval")


def eval_expr(expr: A.Expr, env: dict[str, int], widths: dict[str, int]) -> int:
    """Evaluate ``expr`` with signal values taken from ``env`` (missing names read 0)."""
    sup = A.support(expr)
    key = tuple(sorted((n, widths.get(n, 32)) for n in sup))
    full = {n: env.get(n, 0) for n in sup}
    return eval(_compiled(expr, key), {"_env": full})


def eval_const_expr(expr: A.Expr, env: dict[str, int], widths: dict[str, int]) -> int:
    return eval_expr(expr, env, widths)


def atom_code(atom, names, widths) -> str:
    cond = compile_expr(atom.condition, names, widths)
    if atom.polarity == "then":
        return f"({cond} != 0)"
    if atom.polarity == "else":
        return f"({cond} == 0)"
    if atom.polarity == "case":
        return f"(({cond}) in {tuple(atom.values)!r} and ({cond}) not in {tuple(atom.excluded)!r})"
    return f"(({cond}) not in {tuple(atom.excluded)!r})"


def atom_holds(atom, env: dict[str, int], widths: dict[str, int]) -> bool:
    return atom.holds(eval_expr(atom.condition, env, widths))


class Simulator:
    """Compiled cycle function for one graph.

    ``inputs`` lists the free data inputs (public, random, secret) in a fixed
    order; clock and reset inputs are held at their inactive levels.
    """

    def __init__(self, graph, force_secret_register: bool = True):
        from .dfg import comb_block_order

        self.graph = graph
        sig = graph.signals
        self.widths = graph.widths
        self.regs = graph.registers()
        self.inputs = sorted(n for n, s in sig.items() if s.kind == "input" and s.role in ("data", "random"))
        self.outputs = graph.outputs()
        self.comb = sorted(n for n, s in sig.items() if not s.sequential and s.kind != "input")
        self.all_names = sorted(sig)
        secret = graph.secret
        self.secret_register = secret.signal if secret and sig[secret.signal].kind == "reg" and force_secret_register else None
        names = {n: f"v{k}" for k, n in enumerate(self.all_names)}
        nm = names.__getitem__
        self._names = names

        controls = {n: 0 for n, s in sig.items() if s.role == "clock"}
        for r in graph.resets:
            controls[r.signal] = 1 - r.active
        self.controls = controls
        blocks = comb_block_order(graph)
        seq = sorted((a for a in graph.assignments if a.sequential and not a.reset), key=lambda a: (a.block, a.order))
        rst = sorted((a for a in graph.assignments if a.sequential and a.reset), key=lambda a: (a.block, a.order))
        self.cycle = self._build("cycle", blocks, seq, nm, reset=False)
        self._reset_fn = self._build("reset", blocks, rst, nm, reset=True)

    def _build(self, fname, blocks, seq, nm, reset: bool):
        w = self.widths
        lines = [f"def {fname}(r, i):"]
        if self.regs:
            lines.append("    " + ", ".join(nm(n) for n in self.regs) + ", = r")
        if self.inputs:
            lines.append("    " + ", ".join(nm(n) for n in self.inputs) + ", = i")
        for n, level in sorted(self.controls.items()):
            if self.graph.signals[n].role == "reset" and reset:
                level = 1 - level
            lines.append(f"    {nm(n)} = {level}")
        for n in self.comb:
            lines.append(f"    {nm(n)} = 0")

        def emit(a, dest: str, indent: str = "    ") -> None:
            m = mask(a.width) << a.lsb
            val = f"((({compile_expr(a.rhs, nm, w)}) << {a.lsb}) & {m})"
            cond = " and ".join(atom_code(g, nm, w) for g in a.guards) or "True"
            lines.append(f"{indent}if {cond}:")
            lines.append(f"{indent}    {dest} = ({dest} & {~m & mask(w[a.target])}) | {val}")

        for blk in blocks:
            for a in blk:
                emit(a, nm(a.target))
        nxt = {n: "n" + nm(n) for n in self.regs}
        for n in self.regs:
            lines.append(f"    {nxt[n]} = {nm(n)}")
        for a in seq:
            emit(a, nxt[a.target])
        regs_t = "(" + "".join(f"{nxt[n]}, " for n in self.regs) + ")"
        vals_t = "(" + "".join(f"{nm(n)}, " for n in self.all_names) + ")"
        lines.append(f"    return {regs_t}, {vals_t}")
        ns: dict = {}
        exec(compile("\n".join(lines), f"<sim:{self.graph.module}:{fname}>", "exec"), ns)
        return ns[fname]

    # -- helpers ----------------------------------------------------------

    def index(self, name: str) -> int:
        return self.all_names.index(name)

    def reset_state(self, inputs: tuple[int, ...], secret_value: Optional[int] = None) -> tuple[int, ...]:
        regs = tuple(0 for _ in self.regs)
        regs, _ = self._reset_fn(regs, inputs)
        if self.secret_register is not None and secret_value is not None:
            k = self.regs.index(self.secret_register)
            regs = regs[:k] + (secret_value,) + regs[k + 1:]
        return regs

    def run(self, inputs_per_cycle, cycles: int, regs: Optional[tuple[int, ...]] = None,
            secret_value: Optional[int] = None, force: Optional[dict[str, int]] = None):
        """Simulate ``cycles`` cycles; returns the list of settled value tuples.

        ``inputs_per_cycle`` is either one input tuple (held) or a sequence
        of tuples. Registers start from reset unless ``regs`` is given;
        ``force`` pins registers to fixed values every cycle.
        """
        held = isinstance(inputs_per_cycle, tuple)
        first = inputs_per_cycle if held else inputs_per_cycle[0]
        if regs is None:
            regs = self.reset_state(first, secret_value)
        fidx = {self.regs.index(k): v for k, v in (force or {}).items()}
        trace = []
        for t in range(cycles):
            if fidx:
                regs = tuple(fidx.get(k, v) for k, v in enumerate(regs))
            inp = first if held else inputs_per_cycle[t]
            regs, vals = self.cycle(regs, inp)
            trace.append(vals)
        return trace

    def values(self, vals: tuple[int, ...]) -> dict[str, int]:
        return dict(zip(self.all_names, vals))
