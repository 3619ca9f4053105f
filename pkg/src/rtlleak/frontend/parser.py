"""Recursive-descent parser for the Verilog subset."""

from __future__ import annotations

from typing import Optional

from ..errors import ParseError, Span, SubsetViolation
from . import ast as A
from .lexer import Token, tokenize

# construct keywords rejected with a subset-violation diagnostic
UNSUPPORTED = {
    "kw_generate": "generate", "kw_endgenerate": "generate", "kw_function": "function",
    "kw_task": "task", "kw_initial": "initial", "kw_inout": "inout", "kw_integer": "integer",
    "kw_genvar": "genvar", "kw_for": "for", "kw_while": "while", "kw_repeat": "repeat",
    "kw_forever": "forever", "kw_casex": "casex", "kw_casez": "casez", "kw_signed": "signed",
    "hash": "# (delay or parameter override)", "slash": "/", "percent": "%",
}

# binary precedence, loosest first
_BINARY_LEVELS = [
    {"oror": "||"},
    {"andand": "&&"},
    {"pipe": "|"},
    {"caret": "^"},
    {"amp": "&"},
    {"eqeq": "==", "neq": "!="},
    {"lt": "<", "le": "<=", "gt": ">", "ge": ">="},
    {"shl": "<<", "shr": ">>"},
    {"plus": "+", "minus": "-"},
    {"star": "*"},
]


class Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.i = 0
        self.params: dict[str, int] = {}

    # -- token helpers -------------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, *kinds: str) -> bool:
        return self.tok.kind in kinds

    def check_subset(self) -> None:
        if self.tok.kind in UNSUPPORTED:
            raise SubsetViolation(UNSUPPORTED[self.tok.kind], self.tok.span)

    def expect(self, *kinds: str) -> Token:
        self.check_subset()
        if self.tok.kind not in kinds:
            want = " or ".join(sorted(kinds))
            got = self.tok.text or self.tok.kind
            raise ParseError(f"syntax error: expected {want}, found {got!r}", self.tok.span, frozenset(kinds))
        t = self.tok
        self.i += 1
        return t

    def accept(self, kind: str) -> Optional[Token]:
        if self.tok.kind == kind:
            t = self.tok
            self.i += 1
            return t
        return None

    # -- top level -----------------------------------------------------------

    def parse_modules(self) -> list[A.ModuleDecl]:
        modules = []
        while not self.at("eof"):
            modules.append(self.parse_module())
        return modules

    def parse_module(self) -> A.ModuleDecl:
        start = self.expect("kw_module")
        name = self.expect("ident").text
        self.params = {}
        ports: list[A.PortDecl] = []
        header_names: list[str] = []
        if self.accept("lparen"):
            if not self.at("rparen"):
                if self.at("kw_input", "kw_output", "kw_inout"):
                    ports.extend(self.parse_ansi_ports())
                else:
                    header_names.append(self.expect("ident").text)
                    while self.accept("comma"):
                        header_names.append(self.expect("ident").text)
            self.expect("rparen")
        self.expect("semi")

        nets: list[A.NetDecl] = []
        params: list[A.ParamDecl] = []
        items: list[A.DesignItem] = []
        body_ports: dict[str, A.PortDecl] = {}
        while not self.at("kw_endmodule"):
            self.check_subset()
            if self.at("kw_input", "kw_output"):
                for p in self.parse_port_decl_stmt():
                    body_ports[p.name] = p
            elif self.at("kw_wire", "kw_reg"):
                decls, assigns = self.parse_net_decl()
                nets.extend(decls)
                items.extend(assigns)
            elif self.at("kw_localparam", "kw_parameter"):
                params.extend(self.parse_params())
            elif self.at("kw_assign"):
                items.extend(self.parse_cont_assign())
            elif self.at("kw_always"):
                items.append(self.parse_always())
            elif self.at("ident"):
                items.append(self.parse_instance())
            else:
                got = self.tok.text or self.tok.kind
                raise ParseError(f"syntax error: unexpected {got!r} in module body", self.tok.span)
        self.expect("kw_endmodule")

        if header_names:
            # non-ANSI header: directions come from body declarations; `reg`
            # re-declarations of output ports fold into the port
            regs = {n.name for n in nets if n.kind == "reg"}
            for pname in header_names:
                if pname not in body_ports:
                    raise ParseError(f"port `{pname}` has no direction declaration", start.span)
                p = body_ports[pname]
                ports.append(A.PortDecl(p.name, p.direction, p.width, p.is_reg or pname in regs, p.span))
            nets = [n for n in nets if n.name not in body_ports]
        elif body_ports:
            raise ParseError("port declared in body of a module with an ANSI header", next(iter(body_ports.values())).span)
        return A.ModuleDecl(name, tuple(ports), tuple(nets), tuple(params), tuple(items), start.span)

    def parse_range(self) -> int:
        """Parse an optional ``[msb:0]`` and return the width."""
        if not self.at("lbrack"):
            return 1
        t = self.expect("lbrack")
        msb = self.const_eval(self.parse_expr())
        self.expect("colon")
        lsb = self.const_eval(self.parse_expr())
        self.expect("rbrack")
        if lsb != 0 or msb < 0:
            raise ParseError("declared ranges must have the form [N-1:0]", t.span)
        return msb + 1

    def parse_ansi_ports(self) -> list[A.PortDecl]:
        ports = []
        direction, is_reg, width = None, False, 1
        while True:
            self.check_subset()
            if self.at("kw_input", "kw_output"):
                direction = self.tok.text
                self.i += 1
                is_reg = False
                if self.accept("kw_wire"):
                    pass
                elif self.accept("kw_reg"):
                    is_reg = True
                self.check_subset()
                width = self.parse_range()
            name = self.expect("ident")
            if direction == "input" and is_reg:
                raise ParseError("input ports cannot be reg", name.span)
            ports.append(A.PortDecl(name.text, direction, width, is_reg, name.span))
            if not self.accept("comma"):
                return ports

    def parse_port_decl_stmt(self) -> list[A.PortDecl]:
        direction = self.tok.text
        self.i += 1
        is_reg = False
        if self.accept("kw_reg"):
            is_reg = True
        else:
            self.accept("kw_wire")
        self.check_subset()
        width = self.parse_range()
        out = []
        while True:
            name = self.expect("ident")
            out.append(A.PortDecl(name.text, direction, width, is_reg, name.span))
            if not self.accept("comma"):
                break
        self.expect("semi")
        return out

    def parse_net_decl(self) -> tuple[list[A.NetDecl], list[A.ContAssign]]:
        kind = self.tok.text
        self.i += 1
        self.check_subset()
        width = self.parse_range()
        decls, assigns = [], []
        while True:
            name = self.expect("ident")
            if self.at("lbrack"):
                raise SubsetViolation("memory", self.tok.span)
            decls.append(A.NetDecl(name.text, kind, width, name.span))
            if self.at("eq"):
                eq = self.expect("eq")
                if kind == "reg":
                    raise SubsetViolation("reg initializer", eq.span)
                assigns.append(A.ContAssign(A.Ident(name.text, name.span), self.parse_expr(), eq.span))
            if not self.accept("comma"):
                break
        self.expect("semi")
        return decls, assigns

    def parse_params(self) -> list[A.ParamDecl]:
        self.i += 1
        width = self.parse_range() if self.at("lbrack") else None
        out = []
        while True:
            name = self.expect("ident")
            self.expect("eq")
            value = self.const_eval(self.parse_expr())
            if width is not None:
                value &= (1 << width) - 1
            self.params[name.text] = value
            out.append(A.ParamDecl(name.text, value, width, name.span))
            if not self.accept("comma"):
                break
        self.expect("semi")
        return out

    def parse_cont_assign(self) -> list[A.ContAssign]:
        self.expect("kw_assign")
        out = []
        while True:
            lhs = self.parse_lvalue()
            eq = self.expect("eq")
            out.append(A.ContAssign(lhs, self.parse_expr(), eq.span))
            if not self.accept("comma"):
                break
        self.expect("semi")
        return out

    def parse_always(self) -> A.AlwaysBlock:
        start = self.expect("kw_always")
        self.expect("at")
        edges: list[tuple[str, str]] = []
        comb = False
        if self.accept("star"):
            comb = True
        else:
            self.expect("lparen")
            if self.accept("star"):
                comb = True
            else:
                while True:
                    if self.at("kw_posedge", "kw_negedge"):
                        edge = "pos" if self.tok.kind == "kw_posedge" else "neg"
                        self.i += 1
                        edges.append((edge, self.expect("ident").text))
                    else:
                        self.expect("ident")
                        comb = True
                    if not (self.accept("kw_or") or self.accept("comma")):
                        break
            self.expect("rparen")
        if comb and edges:
            raise ParseError("mixed edge and level sensitivity", start.span)
        body = self.parse_stmt()
        if comb:
            sens = A.Sensitivity("comb")
        else:
            if len(edges) > 2:
                raise SubsetViolation("multiple clock domains", start.span)
            clock, reset = edges[0], None
            if len(edges) == 2:
                clock, reset = self._split_clock_reset(edges, body)
            sens = A.Sensitivity("clocked", clock, reset)
        self._check_assign_kinds(body, blocking=comb)
        return A.AlwaysBlock(sens, body, start.span)

    @staticmethod
    def _split_clock_reset(edges, body) -> tuple[tuple[str, str], tuple[str, str]]:
        first = body
        while isinstance(first, A.Block) and len(first.stmts) == 1:
            first = first.stmts[0]
        if isinstance(first, A.If):
            sup = A.support(first.cond)
            for k, (_, sig) in enumerate(edges):
                if sup == {sig}:
                    return edges[1 - k], edges[k]
        return edges[0], edges[1]

    @staticmethod
    def _check_assign_kinds(body: A.Stmt, blocking: bool) -> None:
        for s in A.walk_stmts(body):
            if isinstance(s, A.Assign) and s.blocking != blocking:
                if blocking:
                    raise ParseError("nonblocking assignment in combinational block", s.span)
                raise ParseError("blocking assignment in clocked block", s.span)

    def parse_instance(self) -> A.Instance:
        mod = self.expect("ident")
        self.check_subset()
        name = self.expect("ident").text
        self.expect("lparen")
        conns: list[tuple[str, Optional[A.Expr]]] = []
        if not self.at("rparen"):
            pos = 0
            while True:
                if self.accept("dot"):
                    port = self.expect("ident").text
                    self.expect("lparen")
                    expr = None if self.at("rparen") else self.parse_expr()
                    self.expect("rparen")
                    conns.append((port, expr))
                else:
                    conns.append((f"${pos}", self.parse_expr()))
                    pos += 1
                if not self.accept("comma"):
                    break
        self.expect("rparen")
        self.expect("semi")
        return A.Instance(mod.text, name, tuple(conns), mod.span)

    # -- statements ----------------------------------------------------------

    def parse_stmt(self) -> A.Stmt:
        self.check_subset()
        t = self.tok
        if self.accept("kw_begin"):
            stmts = []
            while not self.at("kw_end"):
                stmts.append(self.parse_stmt())
            self.expect("kw_end")
            return A.Block(tuple(stmts), t.span)
        if self.accept("kw_if"):
            self.expect("lparen")
            cond = self.parse_expr()
            self.expect("rparen")
            then = self.parse_stmt()
            else_ = self.parse_stmt() if self.accept("kw_else") else None
            return A.If(cond, then, else_, t.span)
        if self.accept("kw_case"):
            self.expect("lparen")
            subject = self.parse_expr()
            self.expect("rparen")
            items = []
            while not self.at("kw_endcase"):
                it = self.tok
                if self.accept("kw_default"):
                    self.accept("colon")
                    values = None
                else:
                    vals = [self.parse_expr()]
                    while self.accept("comma"):
                        vals.append(self.parse_expr())
                    self.expect("colon")
                    values = tuple(vals)
                items.append(A.CaseItem(values, self.parse_stmt(), it.span))
            self.expect("kw_endcase")
            return A.Case(subject, tuple(items), t.span)
        if self.accept("semi"):
            return A.Block((), t.span)
        lhs = self.parse_lvalue()
        op = self.expect("eq", "le")
        rhs = self.parse_expr()
        self.expect("semi")
        return A.Assign(lhs, rhs, op.kind == "eq", op.span)

    def parse_lvalue(self) -> A.Expr:
        self.check_subset()
        if self.at("lbrace"):
            raise SubsetViolation("concatenation as assignment target", self.tok.span)
        name = self.expect("ident")
        base = A.Ident(name.text, name.span)
        if self.at("lbrack"):
            sel = self.parse_select(base)
            if isinstance(sel, A.Index) and not isinstance(sel.index, A.Const):
                raise SubsetViolation("variable bit-select as assignment target", name.span)
            return sel
        return base

    # -- expressions ---------------------------------------------------------

    def parse_expr(self) -> A.Expr:
        cond = self.parse_binary(0)
        if self.at("question"):
            q = self.expect("question")
            then = self.parse_expr()
            self.expect("colon")
            else_ = self.parse_expr()
            return A.Ternary(cond, then, else_, q.span)
        return cond

    def parse_binary(self, level: int) -> A.Expr:
        if level == len(_BINARY_LEVELS):
            return self.parse_unary()
        left = self.parse_binary(level + 1)
        ops = _BINARY_LEVELS[level]
        while True:
            self.check_subset()
            if self.tok.kind not in ops:
                return left
            t = self.tok
            self.i += 1
            right = self.parse_binary(level + 1)
            left = A.Binary(ops[t.kind], left, right, t.span)

    def parse_unary(self) -> A.Expr:
        self.check_subset()
        t = self.tok
        simple = {"tilde": "~", "bang": "!", "amp": "r&", "pipe": "r|", "caret": "r^"}
        negated = {"nand": "r&", "nor": "r|", "xnor": "r^"}
        if t.kind in simple:
            self.i += 1
            return A.Unary(simple[t.kind], self.parse_unary(), t.span)
        if t.kind in negated:
            self.i += 1
            return A.Unary("~", A.Unary(negated[t.kind], self.parse_unary(), t.span), t.span)
        if t.kind == "minus":
            self.i += 1
            return A.Binary("-", A.Const(0, 1), self.parse_unary(), t.span)
        if t.kind == "plus":
            self.i += 1
            return self.parse_unary()
        return self.parse_primary()

    def parse_primary(self) -> A.Expr:
        self.check_subset()
        t = self.tok
        if self.accept("number"):
            return A.Const(t.value, t.width, t.span)
        if self.accept("lparen"):
            e = self.parse_expr()
            self.expect("rparen")
            return e
        if self.accept("lbrace"):
            first = self.parse_expr()
            if self.at("lbrace"):
                count = self.const_eval(first)
                self.expect("lbrace")
                inner = self._concat_tail(self.parse_expr(), t.span)
                self.expect("rbrace")
                self.expect("rbrace")
                if count < 1:
                    raise ParseError("replication count must be positive", t.span)
                return A.Repl(count, inner, t.span)
            e = self._concat_tail(first, t.span)
            self.expect("rbrace")
            return e
        name = self.expect("ident")
        base = A.Ident(name.text, name.span)
        if self.at("lbrack"):
            return self.parse_select(base)
        return base

    def _concat_tail(self, first: A.Expr, span: Span) -> A.Expr:
        parts = [first]
        while self.accept("comma"):
            parts.append(self.parse_expr())
        return A.Concat(tuple(parts), span)

    def parse_select(self, base: A.Expr) -> A.Expr:
        t = self.expect("lbrack")
        first = self.parse_expr()
        if self.accept("colon"):
            msb = self.const_eval(first)
            lsb = self.const_eval(self.parse_expr())
            self.expect("rbrack")
            if msb < lsb:
                raise ParseError("part-select must be [msb:lsb] with msb >= lsb", t.span)
            return A.Slice(base, msb, lsb, t.span)
        self.expect("rbrack")
        if self._is_const(first):
            first = A.Const(self.const_eval(first), None, t.span)
        return A.Index(base, first, t.span)

    def _is_const(self, e: A.Expr) -> bool:
        return all(name in self.params for name in A.support(e))

    def const_eval(self, e: A.Expr) -> int:
        if isinstance(e, A.Const):
            return e.value
        if isinstance(e, A.Ident):
            if e.name not in self.params:
                raise ParseError(f"`{e.name}` is not a constant", e.span)
            return self.params[e.name]
        if isinstance(e, A.Binary):
            a, b = self.const_eval(e.left), self.const_eval(e.right)
            ops = {
                "+": a + b, "-": a - b, "*": a * b, "<<": a << b if b < 64 else 0, ">>": a >> b,
                "&": a & b, "|": a | b, "^": a ^ b,
            }
            if e.op in ops:
                return ops[e.op]
        raise ParseError("expression is not constant", getattr(e, "span", None))


def parse_unit(tokens_by_file: list[list[Token]] | list[Token], top: Optional[str] = None,
               files: tuple[tuple[str, str], ...] = ()) -> A.SourceUnit:
    """Parse token streams (one per file) into a SourceUnit.

    ``top`` defaults to the last module that no other module instantiates.
    """
    if tokens_by_file and isinstance(tokens_by_file[0], Token):
        tokens_by_file = [tokens_by_file]  # type: ignore[list-item]
    modules: list[A.ModuleDecl] = []
    for toks in tokens_by_file:
        modules.extend(Parser(toks).parse_modules())  # type: ignore[arg-type]
    seen: dict[str, A.ModuleDecl] = {}
    for m in modules:
        if m.name in seen:
            raise ParseError(f"duplicate module `{m.name}`", m.span)
        seen[m.name] = m
    if not modules:
        raise ParseError("no modules found")
    if top is None:
        used = {it.module for m in modules for it in m.items if isinstance(it, A.Instance)}
        roots = [m.name for m in modules if m.name not in used]
        top = roots[-1] if roots else modules[-1].name
    if top not in seen:
        raise ParseError(f"top module `{top}` not found")
    return A.SourceUnit(tuple(files), tuple(modules), top)


def parse_source(text: str, filename: str = "<input>", top: Optional[str] = None) -> A.SourceUnit:
    return parse_unit([tokenize(text, filename)], top, ((filename, text),))


def parse_files(paths: list[str], top: Optional[str] = None) -> A.SourceUnit:
    files = []
    streams = []
    for p in paths:
        with open(p, encoding="utf-8") as fh:
            text = fh.read()
        files.append((p, text))
        streams.append(tokenize(text, p))
    return parse_unit(streams, top, tuple(files))
