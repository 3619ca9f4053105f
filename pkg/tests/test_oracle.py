import pytest

from rtlleak.errors import OracleBudgetError
from rtlleak.oracle import Oracle, exact_bit_leakage, exact_timing_variability, simulate
from tests.conftest import design_graph

COND = """module m(input clk, input rst_n, input sel, input key, output reg out);
  always @(posedge clk or negedge rst_n) if (!rst_n) out <= 0; else if (sel) out <= key;
endmodule"""
CONST = "module m(input [1:0] key, output [1:0] o); assign o = 2'd1; endmodule"
GATED = """module m(input clk, input rst_n, input [1:0] key, output reg done);
  always @(posedge clk or negedge rst_n) if (!rst_n) done <= 0; else done <= 0;
endmodule"""


def test_direct_trace():
    g = design_graph("direct")
    tr = simulate(g, 0b1011, {}, 3)
    assert tr.outputs == ((0b1011,),) * 3


@pytest.mark.parametrize("key", range(16))
def test_rsa_result_matches_hand_computation(key):
    """One multiply by BASE=3 per set key bit, modulo 16."""
    g = design_graph("mini_rsa_timing")
    tr = simulate(g, key, {"start": 1}, 16)
    outs = g.outputs()
    di, ri = outs.index("done"), outs.index("result")
    fin = next(t for t, o in enumerate(tr.outputs) if o[di])
    assert tr.outputs[fin + 1][ri] == pow(3, bin(key).count("1"), 16)


def test_registers_start_at_reset_values():
    g = design_graph("mini_rsa_timing")
    tr = simulate(g, 9, {"start": 0}, 4)
    assert all(o == (0, 0) for o in tr.outputs)


def test_simulation_deterministic():
    g = design_graph("sha_like")
    assert simulate(g, 7, {"start": 1}, 10) == simulate(g, 7, {"start": 1}, 10)


def test_direct_is_one(build):
    assert exact_bit_leakage(design_graph("direct"), 2, 2) == 1.0


def test_guarded_copy_half(build):
    assert exact_bit_leakage(build(COND, secret="key"), 0, 3) == pytest.approx(0.5)


def test_constant_output_zero(build):
    assert Oracle(build(CONST, secret="key")).exact_leakages(2) == [0.0, 0.0]


def test_early_exit_variable():
    tv = exact_timing_variability(design_graph("mini_rsa_timing"), "done", 12)
    assert tv.variable is True
    a, ca, b, cb = tv.witness
    assert (a, b) == (0, 15) and ca < cb


def test_constant_latency_not_variable():
    assert exact_timing_variability(design_graph("mini_rsa_ct"), "done", 12).variable is False


def test_completion_never_asserted(build):
    tv = exact_timing_variability(build(GATED, secret="key"), "done", 5)
    assert tv.variable is None and tv.indeterminate


def test_probability_mass_sums_to_one():
    for name in ("cond_copy", "pipeline"):
        assert Oracle(design_graph(name)).joint_probability_mass(3) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("name", ["cond_copy", "pipeline", "masked", "direct"])
def test_vulnerability_range(name):
    for v in Oracle(design_graph(name)).exact_leakages(3):
        assert 0.0 <= v <= 1.0  # 2V - 1 with V in [0.5, 1]


def test_budget_enforced():
    g = design_graph("mini_rsa_trojan")
    with pytest.raises(OracleBudgetError):
        Oracle(g, budget=10).exact_leakages(4)
    with pytest.raises(OracleBudgetError):
        Oracle(g, input_mode="resampled").exact_leakages(4)


def test_trojan_oracle_values(manifest):
    d = manifest["mini_rsa_trojan"]
    exact = Oracle(design_graph("mini_rsa_trojan")).exact_leakages(d["oracle_horizon"])
    assert exact == pytest.approx([0.5] * 4 + [0.0] * 4, abs=1e-12)
