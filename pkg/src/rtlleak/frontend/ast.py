"""Syntax tree for the supported Verilog subset.

Nodes are frozen dataclasses; source spans are excluded from equality so a
re-parsed pretty-print compares equal to the original tree.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from ..errors import Span


def _span():
    return field(default=None, compare=False, repr=False)


# -- expressions -------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: int
    width: Optional[int] = None  # None: unsized literal, 32 bits
    span: Optional[Span] = _span()
    label: Optional[str] = field(default=None, compare=False)

    @property
    def size(self) -> int:
        return 32 if self.width is None else self.width


@dataclass(frozen=True)
class Ident:
    name: str
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Index:
    base: "Expr"
    index: "Expr"
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Slice:
    base: "Expr"
    msb: int
    lsb: int
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Concat:
    parts: tuple["Expr", ...]
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Repl:
    count: int
    expr: "Expr"
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Unary:
    op: str  # ~ ! and reductions r& r| r^
    operand: "Expr"
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Ternary:
    cond: "Expr"
    then: "Expr"
    else_: "Expr"
    span: Optional[Span] = _span()


Expr = Union[Const, Ident, Index, Slice, Concat, Repl, Unary, Binary, Ternary]

BITWISE_OPS = frozenset({"&", "|", "^"})
ARITH_OPS = frozenset({"+", "-", "*"})
COMPARE_OPS = frozenset({"==", "!=", "<", ">", "<=", ">="})
LOGIC_OPS = frozenset({"&&", "||"})
SHIFT_OPS = frozenset({"<<", ">>"})
REDUCTION_OPS = frozenset({"r&", "r|", "r^"})


# -- statements --------------------------------------------------------------


@dataclass(frozen=True)
class Assign:
    lhs: Expr
    rhs: Expr
    blocking: bool
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class If:
    cond: Expr
    then: "Stmt"
    else_: Optional["Stmt"] = None
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class CaseItem:
    values: Optional[tuple[Expr, ...]]  # None marks `default`
    body: "Stmt"
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Case:
    subject: Expr
    items: tuple[CaseItem, ...]
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Block:
    stmts: tuple["Stmt", ...]
    span: Optional[Span] = _span()


Stmt = Union[Assign, If, Case, Block]


# -- module items ------------------------------------------------------------


@dataclass(frozen=True)
class PortDecl:
    name: str
    direction: str  # input | output
    width: int
    is_reg: bool = False
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class NetDecl:
    name: str
    kind: str  # wire | reg
    width: int
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class ParamDecl:
    name: str
    value: int
    width: Optional[int] = None
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class ContAssign:
    lhs: Expr
    rhs: Expr
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Sensitivity:
    kind: str  # comb | clocked
    clock: Optional[tuple[str, str]] = None  # (edge, signal)
    async_reset: Optional[tuple[str, str]] = None


@dataclass(frozen=True)
class AlwaysBlock:
    sensitivity: Sensitivity
    body: Stmt
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Instance:
    module: str
    name: str
    connections: tuple[tuple[str, Optional[Expr]], ...]
    span: Optional[Span] = _span()


DesignItem = Union[ContAssign, AlwaysBlock, Instance]


@dataclass(frozen=True)
class ModuleDecl:
    name: str
    ports: tuple[PortDecl, ...]
    nets: tuple[NetDecl, ...]
    params: tuple[ParamDecl, ...]
    items: tuple[DesignItem, ...]
    span: Optional[Span] = _span()

    def port(self, name: str) -> Optional[PortDecl]:
        for p in self.ports:
            if p.name == name:
                return p
        return None

    def widths(self) -> dict[str, int]:
        table = {p.name: p.width for p in self.ports}
        table.update({n.name: n.width for n in self.nets})
        return table

    def param_table(self) -> dict[str, ParamDecl]:
        return {p.name: p for p in self.params}


@dataclass(frozen=True)
class SourceUnit:
    files: tuple[tuple[str, str], ...]
    modules: tuple[ModuleDecl, ...]
    top_module: str

    def module(self, name: str) -> Optional[ModuleDecl]:
        for m in self.modules:
            if m.name == name:
                return m
        return None


# -- helpers -----------------------------------------------------------------


def children(expr: Expr) -> tuple[Expr, ...]:
    if isinstance(expr, (Const, Ident)):
        return ()
    if isinstance(expr, Index):
        return (expr.base, expr.index)
    if isinstance(expr, Slice):
        return (expr.base,)
    if isinstance(expr, Concat):
        return expr.parts
    if isinstance(expr, Repl):
        return (expr.expr,)
    if isinstance(expr, Unary):
        return (expr.operand,)
    if isinstance(expr, Binary):
        return (expr.left, expr.right)
    if isinstance(expr, Ternary):
        return (expr.cond, expr.then, expr.else_)
    raise TypeError(f"not an expression: {expr!r}")


def support(expr: Expr) -> frozenset[str]:
    """Names of all signals read by ``expr``."""
    if isinstance(expr, Ident):
        return frozenset((expr.name,))
    out: set[str] = set()
    for c in children(expr):
        out |= support(c)
    return frozenset(out)


def rename(expr: Expr, mapping: dict[str, Expr]) -> Expr:
    """Substitute identifiers by expressions."""
    if isinstance(expr, Ident):
        return mapping.get(expr.name, expr)
    if isinstance(expr, Const):
        return expr
    if isinstance(expr, Index):
        return Index(rename(expr.base, mapping), rename(expr.index, mapping), expr.span)
    if isinstance(expr, Slice):
        return Slice(rename(expr.base, mapping), expr.msb, expr.lsb, expr.span)
    if isinstance(expr, Concat):
        return Concat(tuple(rename(p, mapping) for p in expr.parts), expr.span)
    if isinstance(expr, Repl):
        return Repl(expr.count, rename(expr.expr, mapping), expr.span)
    if isinstance(expr, Unary):
        return Unary(expr.op, rename(expr.operand, mapping), expr.span)
    if isinstance(expr, Binary):
        return Binary(expr.op, rename(expr.left, mapping), rename(expr.right, mapping), expr.span)
    if isinstance(expr, Ternary):
        return Ternary(
            rename(expr.cond, mapping), rename(expr.then, mapping), rename(expr.else_, mapping), expr.span
        )
    raise TypeError(f"not an expression: {expr!r}")


def expr_width(expr: Expr, widths: dict[str, int]) -> int:
    """Self-determined width; arithmetic and bitwise results take the wider operand."""
    if isinstance(expr, Const):
        return expr.size
    if isinstance(expr, Ident):
        return widths[expr.name]
    if isinstance(expr, Index):
        return 1
    if isinstance(expr, Slice):
        return expr.msb - expr.lsb + 1
    if isinstance(expr, Concat):
        return sum(expr_width(p, widths) for p in expr.parts)
    if isinstance(expr, Repl):
        return expr.count * expr_width(expr.expr, widths)
    if isinstance(expr, Unary):
        if expr.op == "~":
            return expr_width(expr.operand, widths)
        return 1
    if isinstance(expr, Binary):
        if expr.op in COMPARE_OPS or expr.op in LOGIC_OPS:
            return 1
        if expr.op in SHIFT_OPS:
            return expr_width(expr.left, widths)
        return max(expr_width(expr.left, widths), expr_width(expr.right, widths))
    if isinstance(expr, Ternary):
        return max(expr_width(expr.then, widths), expr_width(expr.else_, widths))
    raise TypeError(f"not an expression: {expr!r}")


def lvalue_target(lhs: Expr, widths: dict[str, int]) -> tuple[str, int, int]:
    """(signal, msb, lsb) written by an assignment left-hand side."""
    if isinstance(lhs, Ident):
        return lhs.name, widths[lhs.name] - 1, 0
    if isinstance(lhs, Slice) and isinstance(lhs.base, Ident):
        return lhs.base.name, lhs.msb, lhs.lsb
    if isinstance(lhs, Index) and isinstance(lhs.base, Ident) and isinstance(lhs.index, Const):
        return lhs.base.name, lhs.index.value, lhs.index.value
    raise TypeError("unsupported assignment target")


def walk_stmts(stmt: Stmt):
    yield stmt
    if isinstance(stmt, Block):
        for s in stmt.stmts:
            yield from walk_stmts(s)
    elif isinstance(stmt, If):
        yield from walk_stmts(stmt.then)
        if stmt.else_ is not None:
            yield from walk_stmts(stmt.else_)
    elif isinstance(stmt, Case):
        for item in stmt.items:
            yield from walk_stmts(item.body)
