import random

import pytest

from rtlleak.dfg import bit_slice_deps, comb_block_order, expr_bit_deps
from rtlleak.errors import CombinationalLoopError, LabelError
from rtlleak.frontend import ast as A
from rtlleak.sim import eval_expr
from tests.conftest import design_graph

GUARDED = """module m(input clk, input rst_n, input s, input [3:0] k, output reg [3:0] y);
  always @(posedge clk or negedge rst_n)
    if (!rst_n) y <= 0;
    else if (s) y <= k; else y <= 0;
endmodule"""


def test_if_else_guards(build):
    g = build(GUARDED)
    data = [a for a in g.assignments_to("y") if not a.reset]
    assert len(data) == 2
    pols = sorted(a.guards[-1].polarity for a in data)
    assert pols == ["else", "then"]
    assert all(a.guards[-1].condition == A.Ident("s") for a in data)
    edges = {(s, t) for s, _, t in g.dep_edges}
    assert ("s", "y") in edges and ("k", "y") in edges


def test_continuous_xor(build):
    g = build("module m(input a, input b, output o); assign o = a ^ b; endmodule")
    (a,) = g.assignments
    assert a.kind == "combinational" and a.guards == ()
    assert {(s, t) for s, _, t in g.dep_edges} == {("a", "o"), ("b", "o")}


def test_combinational_loop(build):
    with pytest.raises(CombinationalLoopError) as exc:
        build("module m(input i, output o); wire x, y; assign x = y; assign y = x; assign o = x ^ i; endmodule")
    assert set(exc.value.signals) >= {"x", "y"}


def test_secret_labels(build):
    g = design_graph("mini_rsa_trojan")
    assert g.signals["key"].observability == "secret"
    with pytest.raises(LabelError):
        build(GUARDED, secret="keey")
    with pytest.raises(LabelError):
        build(GUARDED, secret="y")


def test_dep_edges_recomputed():
    for name in ("mini_rsa_trojan", "sha_like", "pipeline", "exempt"):
        g = design_graph(name)
        expect = set()
        for a in g.assignments:
            for s in a.support():
                expect.add((s, a.target))
        assert {(s, t) for s, _, t in g.dep_edges} == expect


def test_comb_subgraph_acyclic():
    g = design_graph("mini_rsa_trojan")
    order = [a.target for blk in comb_block_order(g) for a in blk]
    assert len(order) == len([a for a in g.assignments if not a.sequential])


WIDTHS = {"k": 8, "a": 4, "b": 4, "c": 1}


def deps_of(expr):
    return [set(d) for d in expr_bit_deps(expr, WIDTHS)]


def test_slice_index_arithmetic():
    d = deps_of(A.Slice(A.Ident("k"), 7, 4))
    assert d == [{("k", i + 4)} for i in range(4)]


def test_concat_order():
    d = deps_of(A.Concat((A.Ident("a"), A.Ident("b"))))
    assert d[:4] == [{("b", i)} for i in range(4)]
    assert d[4:] == [{("a", i)} for i in range(4)]


def test_add_is_conservative():
    d = deps_of(A.Binary("+", A.Ident("k"), A.Const(1, 8)))
    assert all(s == {("k", i) for i in range(8)} for s in d)


def _rand_expr(rng, depth=0):
    leaf = depth > 2 or rng.random() < 0.3
    if leaf:
        r = rng.random()
        if r < 0.6:
            return A.Ident(rng.choice(["a", "b", "c"]))
        if r < 0.8:
            return A.Slice(A.Ident("a"), 3, rng.randint(0, 3)) if rng.random() < 0.5 else A.Index(A.Ident("b"), A.Const(rng.randint(0, 3), 32))
        return A.Const(rng.randint(0, 15), 4)
    kind = rng.choice(["bin", "bin", "un", "tern", "cat", "shift"])
    if kind == "bin":
        op = rng.choice(["&", "|", "^", "+", "-", "*", "==", "<", "&&", "||"])
        return A.Binary(op, _rand_expr(rng, depth + 1), _rand_expr(rng, depth + 1))
    if kind == "un":
        return A.Unary(rng.choice(["~", "!", "r&", "r|", "r^"]), _rand_expr(rng, depth + 1))
    if kind == "tern":
        return A.Ternary(_rand_expr(rng, depth + 1), _rand_expr(rng, depth + 1), _rand_expr(rng, depth + 1))
    if kind == "cat":
        return A.Concat((_rand_expr(rng, depth + 1), _rand_expr(rng, depth + 1)))
    return A.Binary(rng.choice(["<<", ">>"]), _rand_expr(rng, depth + 1), A.Const(rng.randint(0, 3), 32))


def test_bit_deps_never_narrower():
    """Flipping a source bit outside the listed deps never changes that result bit."""
    rng = random.Random(7)
    sources = [(n, i) for n in ("a", "b", "c") for i in range(WIDTHS[n])]
    for _ in range(1000):
        e = _rand_expr(rng)
        w = A.expr_width(e, WIDTHS)
        deps = deps_of(e)
        env = {"a": rng.randint(0, 15), "b": rng.randint(0, 15), "c": rng.randint(0, 1)}
        base = eval_expr(e, env, WIDTHS)
        for name, i in sources:
            flipped = dict(env)
            flipped[name] ^= 1 << i
            val = eval_expr(e, flipped, WIDTHS)
            for t in range(w):
                if (base >> t) & 1 != (val >> t) & 1:
                    assert (name, i) in deps[t], (e, name, i, t)


def test_assignment_deps_include_guards(build):
    g = build(GUARDED)
    a = next(a for a in g.assignments_to("y") if not a.reset and a.guards[-1].polarity == "then")
    deps = bit_slice_deps(a, g.widths)
    assert all(("s", 0) in deps[t] for t in range(4))
    assert ("k", 2) in deps[2] and ("k", 2) not in deps[1]
