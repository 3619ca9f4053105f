import pytest

from rtlleak.errors import ElaborationError, LexError, ParseError, SubsetViolation
from rtlleak.frontend import ast as A
from rtlleak.frontend.elaborate import elaborate
from rtlleak.frontend.lexer import tokenize
from rtlleak.frontend.parser import parse_source
from rtlleak.frontend.printer import format_unit
from tests.conftest import design_path


def kinds(text):
    return [t.kind for t in tokenize(text)][:-1]


def test_tokenize_assign():
    assert kinds("assign y = a & b;") == ["kw_assign", "ident", "eq", "ident", "amp", "ident", "semi"]


def test_sized_literal():
    tok = tokenize("4'hA")[0]
    assert (tok.kind, tok.value, tok.width) == ("number", 10, 4)


def test_comments_dropped():
    assert kinds("/* x */ module") == ["kw_module"]
    assert kinds("// line\nmodule") == ["kw_module"]


@pytest.mark.parametrize("bad", ["assign y = a $ b;", "/* never closed"])
def test_lex_errors_carry_location(bad):
    with pytest.raises(LexError) as exc:
        tokenize(bad, "f.v")
    assert exc.value.span is not None and exc.value.span.file == "f.v"


def test_minimal_module():
    unit = parse_source("module m(input a, output b); assign b=a; endmodule")
    m = unit.module("m")
    assert len(m.ports) == 2
    assert sum(isinstance(i, A.ContAssign) for i in m.items) == 1


def test_async_reset_block():
    src = """module m(input clk, input rst_n, input d, output reg q);
      always @(posedge clk or negedge rst_n) if (!rst_n) q <= 0; else q <= d;
    endmodule"""
    blk = next(i for i in parse_source(src).module("m").items if isinstance(i, A.AlwaysBlock))
    assert blk.sensitivity.kind == "clocked"
    assert blk.sensitivity.clock == ("pos", "clk")
    assert blk.sensitivity.async_reset == ("neg", "rst_n")


def test_generate_rejected():
    src = "module m(input a, output b); generate endgenerate assign b = a; endmodule"
    with pytest.raises(SubsetViolation) as exc:
        parse_source(src)
    assert exc.value.construct == "generate"


def test_syntax_error_lists_expected():
    with pytest.raises(ParseError) as exc:
        parse_source("module m(input a, output b) assign b = a; endmodule")
    assert exc.value.expected


ADDER = """
module add(input [3:0] x, input [3:0] y, output [3:0] s);
  assign s = x + y;
endmodule
module top(input [3:0] a, input [3:0] b, output [3:0] o, output [3:0] p);
  wire [3:0] s, t;
  add u1(.x(a), .y(b), .s(s));
  add u2(.x(s), .y(b), .s(t));
  assign o = s;
  assign p = t;
endmodule
"""


def test_flattening_prefixes_instances():
    flat = elaborate(parse_source(ADDER, top="top"))
    names = {n.name for n in flat.nets}
    assert "u1__s" in names and "u2__s" in names
    assert not ({n for n in names if n.startswith("u1__")} & {n for n in names if n.startswith("u2__")})


def test_self_instantiation_rejected():
    src = "module m(input a, output b); m inner(.a(a), .b(b)); endmodule"
    with pytest.raises(ElaborationError):
        elaborate(parse_source(src))


def test_unresolved_module_rejected():
    src = "module m(input a, output b); nothere u(.a(a)); assign b = a; endmodule"
    with pytest.raises(ElaborationError):
        elaborate(parse_source(src))


def test_flattened_names_declared_once():
    flat = elaborate(parse_source(ADDER, top="top"))
    names = [p.name for p in flat.ports] + [n.name for n in flat.nets]
    assert len(names) == len(set(names))


@pytest.mark.parametrize("name", ["mini_rsa_trojan", "mini_rsa_timing", "pipeline", "sha_like", "exempt", "dead_debug"])
def test_print_parse_round_trip(name):
    with open(design_path(name)) as fh:
        text = fh.read()
    unit = parse_source(text)
    again = parse_source(format_unit(unit))
    strip = lambda u: format_unit(u)
    assert strip(again) == strip(unit)
    assert [m.name for m in again.modules] == [m.name for m in unit.modules]


def test_width_inference_deterministic():
    a = elaborate(parse_source(ADDER, top="top"))
    b = elaborate(parse_source(ADDER, top="top"))
    assert a.widths() == b.widths()
