import pytest

from rtlleak.errors import ResetError
from rtlleak.fsm import Transition, extract_all, find_state_registers, state_graph, to_dot
from tests.conftest import design_graph

FSM_DESIGNS = ["mini_rsa_trojan", "mini_rsa_tjfree", "mini_rsa_timing", "mini_rsa_ct", "sha_like", "order_fp", "dead_debug"]


def documented(manifest, name):
    doc = manifest[name]["fsm"]
    st = doc["states"]
    trans = sorted((st[a], st[b], tuple(sorted(sup))) for a, b, sup in doc["transitions"])
    return doc["register"], set(st.values()), st[doc["reset"]], trans


@pytest.mark.parametrize("name", FSM_DESIGNS)
def test_matches_documentation(manifest, name):
    reg, states, reset, trans = documented(manifest, name)
    (fsm,) = extract_all(design_graph(name))
    assert fsm.register.signal == reg
    assert set(fsm.states) == states
    assert fsm.reset_state == reset
    got = sorted((t.frm, t.to, tuple(sorted(t.guard_support))) for t in fsm.transitions)
    assert got == trans
    for value, label in ((v, k) for k, v in manifest[name]["fsm"]["states"].items()):
        assert fsm.name(value) == label


@pytest.mark.parametrize("name", FSM_DESIGNS)
def test_guards_exclude_state_register(name):
    for fsm in extract_all(design_graph(name)):
        assert all(fsm.register.signal not in t.guard_support for t in fsm.transitions)


@pytest.mark.parametrize("name", ["pipeline", "direct", "masked", "exempt"])
def test_no_fsm_without_state_register(name):
    assert extract_all(design_graph(name)) == []


def test_counter_not_a_state_register():
    regs = [r.signal for r in find_state_registers(design_graph("mini_rsa_trojan"))]
    assert "cnt" not in regs and regs[0] == "state"


def test_unreachable_debug_state(manifest):
    (fsm,) = extract_all(design_graph("dead_debug"))
    sg = state_graph(fsm)
    assert sg.unreachable == {3}


def test_linear_cycle_reachable():
    (fsm,) = extract_all(design_graph("mini_rsa_trojan"))
    sg = state_graph(fsm)
    assert sg.reachable == fsm.states
    assert sg.distance(1, 0) == 3  # LOAD, COMPUTE, FINISH, IDLE


def test_compute_self_edge():
    (fsm,) = extract_all(design_graph("mini_rsa_trojan"))
    assert 2 in state_graph(fsm).adjacency[2]


def test_default_arm_transition():
    (fsm,) = extract_all(design_graph("sha_like"))
    back = [t for t in fsm.transitions if t.to == 0]
    assert [(t.frm, t.guard) for t in back] == [(2, ())]


def test_reachability_monotone():
    (fsm,) = extract_all(design_graph("dead_debug"))
    before = state_graph(fsm).reachable
    extra = Transition(1, 3, (), assignment=-1)
    from dataclasses import replace
    grown = replace(fsm, transitions=fsm.transitions + (extra,))
    after = state_graph(grown).reachable
    assert before <= after and 3 in after


AMBIGUOUS = """module m(input clk, input rst_n, input go, output reg [1:0] st, output reg [1:0] o);
  always @(posedge clk or negedge rst_n)
    if (!rst_n) st <= 2'd0;
    else case (st) 2'd0: if (go) st <= 2'd1; 2'd1: st <= 2'd0; endcase
  always @(posedge clk or negedge rst_n)
    if (!rst_n) st <= 2'd1;
    else o <= st;
endmodule"""

NO_RESET = """module m(input clk, input go, output reg [1:0] st);
  always @(posedge clk)
    case (st) 2'd0: if (go) st <= 2'd1; 2'd1: st <= 2'd0; endcase
endmodule"""


def test_ambiguous_reset(build):
    from rtlleak.errors import AnalysisError
    with pytest.raises(AnalysisError):
        extract_all(build(AMBIGUOUS))


def test_missing_reset_falls_back(build):
    (fsm,) = extract_all(build(NO_RESET))
    assert fsm.reset_state is None
    assert fsm.initial_states == fsm.states
    assert any("unidentifiable" in w for w in fsm.warnings)


def test_dot_output():
    (fsm,) = extract_all(design_graph("order_fp"))
    dot = to_dot(fsm)
    assert dot.startswith('digraph "st"') and "s0 -> s1" in dot and "START" in dot
