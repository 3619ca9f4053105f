import pytest

from rtlleak.engine import BitLeakage, Summary, Thresholds, classify, enumerate_paths, quantify
from rtlleak.errors import PathExplosionError
from rtlleak.oracle import Oracle
from tests.conftest import design_graph

DIRECT = "module m(input [3:0] key, output [3:0] out); assign out = key; endmodule"
COND = """module m(input clk, input rst_n, input sel, input key, output reg out);
  always @(posedge clk or negedge rst_n) if (!rst_n) out <= 0; else if (sel) out <= key;
endmodule"""
MASK = """module m(input clk, input rst_n, input key, input r, output reg out);
  always @(posedge clk or negedge rst_n) if (!rst_n) out <= 0; else out <= key ^ r;
endmodule"""
SINK = """module m(input clk, input [1:0] key, input [1:0] p, output [1:0] o);
  reg [1:0] junk; always @(posedge clk) junk <= key ^ p;
  assign o = p;
endmodule"""


def values(g):
    return [b.value for b in quantify(g, enumerate_paths(g))]


def test_direct_one_path_per_bit(build):
    g = build(DIRECT, secret="key")
    paths = enumerate_paths(g)
    assert [p.secret_bit for p in paths] == [0, 1, 2, 3]
    assert all(p.length == 1 for p in paths)
    assert values(g) == [1.0] * 4


def test_conditional_copy_half(build):
    assert values(build(COND, secret="key")) == [0.5]


def test_one_time_pad_zero(build):
    assert values(build(MASK, secret="key", random=["r"])) == [0.0]


def test_unobserved_sink_has_no_paths(build):
    assert enumerate_paths(build(SINK, secret="key")) == []


def test_trojan_short_path_present():
    g = design_graph("mini_rsa_trojan")
    paths = enumerate_paths(g)
    # key[7:4] parked in `inter` and forwarded to `result` without a round
    short = [p for p in paths if p.secret_bit >= 4 and [h.target for h in p.hops] == ["inter", "result"]]
    assert short


def test_path_cap():
    g = design_graph("mini_rsa_trojan")
    with pytest.raises(PathExplosionError) as exc:
        enumerate_paths(g, cap=2)
    assert exc.value.partial


def test_paths_deterministic():
    g = design_graph("sha_like")
    a = [p.id for p in enumerate_paths(g)]
    b = [p.id for p in enumerate_paths(design_graph("sha_like"))]
    assert a == b


def test_classification_example():
    vals = [BitLeakage(0, 1.0, None), BitLeakage(1, 0.5, None), BitLeakage(2, 0.0005, None)]
    out, summary = classify(vals)
    assert [v.classification for v in out] == ["detected", "detected", "negligible"]
    assert summary.detected == 2 and summary.detected_avg == pytest.approx(0.75)
    assert summary.cells() == ("2/0.75", "0/-")


def test_threshold_boundary_closed():
    t = Thresholds()
    assert t.classify(t.detect) == "detected"
    assert t.classify(t.warn) == "warned"


def test_empty_summary_cells():
    _, summary = classify([])
    assert summary == Summary(0, None, 0, None)
    assert summary.cells() == ("0/-", "0/-")


@pytest.mark.parametrize("bad", [(0.001, 0.01), (1.5, 0.1), (0.1, -0.1)])
def test_invalid_thresholds(bad):
    with pytest.raises(ValueError):
        Thresholds(*bad)


def test_removing_paths_never_increases():
    g = design_graph("mini_rsa_trojan")
    paths = enumerate_paths(g)
    full = quantify(g, paths)
    for drop in range(0, len(paths), 3):
        sub = paths[:drop] + paths[drop + 1:]
        for a, b in zip(quantify(g, sub), full):
            assert a.value <= b.value


@pytest.mark.parametrize("name", ["direct", "cond_copy", "masked", "pipeline"])
def test_structural_values_equal_oracle(manifest, name):
    g = design_graph(name)
    exact = Oracle(g).exact_leakages(manifest[name]["oracle_horizon"])
    assert values(g) == pytest.approx(exact, abs=1e-12)
