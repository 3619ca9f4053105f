"""Pretty-printer emitting re-parseable Verilog for the subset."""

from __future__ import annotations

from . import ast as A

_UNARY = {"~": "~", "!": "!", "r&": "&", "r|": "|", "r^": "^"}


def format_expr(e: A.Expr, labels: bool = False) -> str:
    """Render an expression; ``labels`` prints parameter names for constants."""
    return _fmt(e, labels)


def _fmt(e: A.Expr, labels: bool) -> str:
    format_expr = lambda x: _fmt(x, labels)  # noqa: E731
    if isinstance(e, A.Const):
        if labels and e.label:
            return e.label
        if e.width is None:
            return str(e.value)
        return f"{e.width}'d{e.value}"
    if isinstance(e, A.Ident):
        return e.name
    if isinstance(e, A.Index):
        return f"{format_expr(e.base)}[{format_expr(e.index)}]"
    if isinstance(e, A.Slice):
        return f"{format_expr(e.base)}[{e.msb}:{e.lsb}]"
    if isinstance(e, A.Concat):
        return "{" + ", ".join(format_expr(p) for p in e.parts) + "}"
    if isinstance(e, A.Repl):
        inner = format_expr(e.expr)
        if isinstance(e.expr, A.Concat):
            inner = inner[1:-1]
        return "{" + str(e.count) + "{" + inner + "}}"
    if isinstance(e, A.Unary):
        return f"{_UNARY[e.op]}({format_expr(e.operand)})"
    if isinstance(e, A.Binary):
        return f"({format_expr(e.left)} {e.op} {format_expr(e.right)})"
    if isinstance(e, A.Ternary):
        return f"({format_expr(e.cond)} ? {format_expr(e.then)} : {format_expr(e.else_)})"
    raise TypeError(e)


def _range(width: int) -> str:
    return f"[{width - 1}:0] " if width > 1 else ""


def format_stmt(s: A.Stmt, indent: int = 1) -> list[str]:
    pad = "  " * indent
    if isinstance(s, A.Assign):
        op = "=" if s.blocking else "<="
        return [f"{pad}{format_expr(s.lhs)} {op} {format_expr(s.rhs)};"]
    if isinstance(s, A.Block):
        lines = [f"{pad}begin"]
        for sub in s.stmts:
            lines.extend(format_stmt(sub, indent + 1))
        return lines + [f"{pad}end"]
    if isinstance(s, A.If):
        lines = [f"{pad}if ({format_expr(s.cond)})"]
        lines.extend(format_stmt(s.then, indent + 1))
        if s.else_ is not None:
            lines.append(f"{pad}else")
            lines.extend(format_stmt(s.else_, indent + 1))
        return lines
    if isinstance(s, A.Case):
        lines = [f"{pad}case ({format_expr(s.subject)})"]
        for item in s.items:
            label = "default" if item.values is None else ", ".join(format_expr(v) for v in item.values)
            lines.append(f"{pad}  {label}:")
            lines.extend(format_stmt(item.body, indent + 2))
        return lines + [f"{pad}endcase"]
    raise TypeError(s)


def format_module(m: A.ModuleDecl) -> str:
    ports = []
    for p in m.ports:
        kind = " reg" if p.is_reg else ""
        ports.append(f"  {p.direction}{kind} {_range(p.width)}{p.name}")
    lines = [f"module {m.name}(" + ("\n" + ",\n".join(ports) + "\n" if ports else "") + ");"]
    for prm in m.params:
        rng = _range(prm.width) if prm.width else ""
        lines.append(f"  localparam {rng}{prm.name} = {prm.value};")
    for n in m.nets:
        lines.append(f"  {n.kind} {_range(n.width)}{n.name};")
    for it in m.items:
        if isinstance(it, A.ContAssign):
            lines.append(f"  assign {format_expr(it.lhs)} = {format_expr(it.rhs)};")
        elif isinstance(it, A.AlwaysBlock):
            sens = it.sensitivity
            if sens.kind == "comb":
                lines.append("  always @(*)")
            else:
                edges = [sens.clock] + ([sens.async_reset] if sens.async_reset else [])
                txt = " or ".join(f"{e}edge {sig}" for e, sig in edges)
                lines.append(f"  always @({txt})")
            lines.extend(format_stmt(it.body, 2))
        elif isinstance(it, A.Instance):
            conns = []
            for port, expr in it.connections:
                val = "" if expr is None else format_expr(expr)
                conns.append(val if port.startswith("$") else f".{port}({val})")
            lines.append(f"  {it.module} {it.name}(" + ", ".join(conns) + ");")
    lines.append("endmodule")
    return "\n".join(lines) + "\n"


def format_unit(unit: A.SourceUnit) -> str:
    return "\n".join(format_module(m) for m in unit.modules)
