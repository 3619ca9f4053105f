"""Semantic checks and hierarchy flattening.

Instances are inlined into the top module. A signal ``sig`` of instance
``inst`` becomes ``inst__sig``; port connections turn into continuous
assignments between the parent expression and the prefixed port net.
"""

from __future__ import annotations

from . import ast as A
from ..errors import ElaborationError, Span

SEP = "__"


def _declared(m: A.ModuleDecl) -> dict[str, Span | None]:
    names: dict[str, Span | None] = {}
    for decl in (*m.ports, *m.nets, *m.params):
        if decl.name in names:
            raise ElaborationError(f"`{decl.name}` declared more than once in `{m.name}`", decl.span)
        if getattr(decl, "width", 1) is not None and getattr(decl, "width", 1) < 1:
            raise ElaborationError(f"`{decl.name}` has width < 1", decl.span)
        names[decl.name] = decl.span
    return names


def _check_expr(e: A.Expr, widths: dict[str, int], params: set[str], where: str) -> None:
    for name in A.support(e):
        if name not in widths and name not in params:
            raise ElaborationError(f"undeclared identifier `{name}` in `{where}`", getattr(e, "span", None))
    stack = [e]
    while stack:
        x = stack.pop()
        if isinstance(x, (A.Slice, A.Index)):
            if not isinstance(x.base, A.Ident) or x.base.name in params:
                raise ElaborationError("selects apply to declared signals only", x.span)
            w = widths[x.base.name]
            top = x.msb if isinstance(x, A.Slice) else (x.index.value if isinstance(x.index, A.Const) else 0)
            if top >= w:
                raise ElaborationError(f"select [{top}] out of range for `{x.base.name}` (width {w})", x.span)
        stack.extend(A.children(x))


def _assigned_on_all_paths(stmt: A.Stmt, target: str, widths) -> bool:
    if isinstance(stmt, A.Assign):
        name, msb, lsb = A.lvalue_target(stmt.lhs, widths)
        return name == target and msb - lsb + 1 == widths[name]
    if isinstance(stmt, A.Block):
        return any(_assigned_on_all_paths(s, target, widths) for s in stmt.stmts)
    if isinstance(stmt, A.If):
        return (
            stmt.else_ is not None
            and _assigned_on_all_paths(stmt.then, target, widths)
            and _assigned_on_all_paths(stmt.else_, target, widths)
        )
    if isinstance(stmt, A.Case):
        has_default = any(it.values is None for it in stmt.items)
        return has_default and all(_assigned_on_all_paths(it.body, target, widths) for it in stmt.items)
    return False


def check_module(m: A.ModuleDecl) -> None:
    """Declaration, width and subset checks for one module."""
    _declared(m)
    widths = m.widths()
    params = {p.name for p in m.params}
    regs = {p.name for p in m.ports if p.is_reg} | {n.name for n in m.nets if n.kind == "reg"}
    inputs = {p.name for p in m.ports if p.direction == "input"}
    for it in m.items:
        if isinstance(it, A.ContAssign):
            _check_expr(it.lhs, widths, set(), m.name)
            _check_expr(it.rhs, widths, params, m.name)
            name = A.lvalue_target(it.lhs, widths)[0]
            if name in regs:
                raise ElaborationError(f"continuous assignment to reg `{name}`", it.span)
            if name in inputs:
                raise ElaborationError(f"assignment to input `{name}`", it.span)
        elif isinstance(it, A.AlwaysBlock):
            sens = it.sensitivity
            for edge in (sens.clock, sens.async_reset):
                if edge and edge[1] not in widths:
                    raise ElaborationError(f"undeclared identifier `{edge[1]}` in sensitivity list", it.span)
            targets = set()
            for s in A.walk_stmts(it.body):
                if isinstance(s, A.Assign):
                    _check_expr(s.lhs, widths, set(), m.name)
                    _check_expr(s.rhs, widths, params, m.name)
                    name = A.lvalue_target(s.lhs, widths)[0]
                    if name not in regs:
                        raise ElaborationError(f"procedural assignment to non-reg `{name}`", s.span)
                    targets.add(name)
                elif isinstance(s, A.If):
                    _check_expr(s.cond, widths, params, m.name)
                elif isinstance(s, A.Case):
                    _check_expr(s.subject, widths, params, m.name)
                    for item in s.items:
                        for v in item.values or ():
                            _check_expr(v, widths, params, m.name)
            if sens.kind == "comb":
                for t in sorted(targets):
                    if not _assigned_on_all_paths(it.body, t, widths):
                        raise ElaborationError(
                            f"subset violation: `{t}` is not assigned on every path (latch)", it.span
                        )
        elif isinstance(it, A.Instance):
            for _, expr in it.connections:
                if expr is not None:
                    _check_expr(expr, widths, params, m.name)


def resolve_params(m: A.ModuleDecl) -> A.ModuleDecl:
    """Replace parameter references by labelled constants."""
    mapping = {p.name: A.Const(p.value, p.width, label=p.name) for p in m.params}
    if not mapping:
        return m
    return _map_module(m, lambda e: A.rename(e, mapping))


def _map_stmt(s: A.Stmt, f) -> A.Stmt:
    if isinstance(s, A.Assign):
        return A.Assign(f(s.lhs), f(s.rhs), s.blocking, s.span)
    if isinstance(s, A.Block):
        return A.Block(tuple(_map_stmt(x, f) for x in s.stmts), s.span)
    if isinstance(s, A.If):
        return A.If(f(s.cond), _map_stmt(s.then, f), None if s.else_ is None else _map_stmt(s.else_, f), s.span)
    if isinstance(s, A.Case):
        items = tuple(
            A.CaseItem(None if it.values is None else tuple(f(v) for v in it.values), _map_stmt(it.body, f), it.span)
            for it in s.items
        )
        return A.Case(f(s.subject), items, s.span)
    raise TypeError(s)


def _map_module(m: A.ModuleDecl, f, rename_sig=lambda n: n) -> A.ModuleDecl:
    items = []
    for it in m.items:
        if isinstance(it, A.ContAssign):
            items.append(A.ContAssign(f(it.lhs), f(it.rhs), it.span))
        elif isinstance(it, A.AlwaysBlock):
            sens = it.sensitivity
            clock = (sens.clock[0], rename_sig(sens.clock[1])) if sens.clock else None
            reset = (sens.async_reset[0], rename_sig(sens.async_reset[1])) if sens.async_reset else None
            items.append(A.AlwaysBlock(A.Sensitivity(sens.kind, clock, reset), _map_stmt(it.body, f), it.span))
        else:
            conns = tuple((p, None if e is None else f(e)) for p, e in it.connections)
            items.append(A.Instance(it.module, it.name, conns, it.span))
    return A.ModuleDecl(m.name, m.ports, m.nets, m.params, tuple(items), m.span)


def elaborate(unit: A.SourceUnit) -> A.ModuleDecl:
    """Check every module and flatten the top module's hierarchy."""
    for m in unit.modules:
        check_module(m)
    flat = _flatten(unit, unit.top_module, ())
    _post_check(flat)
    return flat


def _flatten(unit: A.SourceUnit, name: str, stack: tuple[str, ...]) -> A.ModuleDecl:
    if name in stack:
        raise ElaborationError("instantiation cycle: " + " -> ".join((*stack, name)))
    mod = unit.module(name)
    if mod is None:
        raise ElaborationError(f"unresolved module `{name}`")
    mod = resolve_params(mod)
    nets = list(mod.nets)
    params = list(mod.params)
    items: list[A.DesignItem] = []
    taken = set(_declared(mod))
    for it in mod.items:
        if not isinstance(it, A.Instance):
            items.append(it)
            continue
        child = _flatten(unit, it.module, (*stack, name))
        prefix = it.name + SEP

        def pre(n: str, prefix=prefix) -> str:
            return prefix + n

        child_names = [d.name for d in (*child.ports, *child.nets, *child.params)]
        for n in child_names:
            if pre(n) in taken:
                raise ElaborationError(f"flattened name `{pre(n)}` collides with an existing name", it.span)
            taken.add(pre(n))
        mapping = {n: A.Ident(pre(n)) for n in child_names}
        renamed = _map_module(child, lambda e, mp=mapping: A.rename(e, mp), pre)
        for p in child.ports:
            nets.append(A.NetDecl(pre(p.name), "reg" if p.is_reg else "wire", p.width, p.span))
        nets.extend(A.NetDecl(pre(n.name), n.kind, n.width, n.span) for n in child.nets)
        params.extend(A.ParamDecl(pre(p.name), p.value, p.width, p.span) for p in child.params)
        items.extend(renamed.items)

        widths = {**mod.widths(), **{n.name: n.width for n in nets}}
        conns = dict(it.connections)
        positional = [k for k in conns if k.startswith("$")]
        if positional:
            if len(positional) != len(conns):
                raise ElaborationError("mixed positional and named port connections", it.span)
            if len(positional) > len(child.ports):
                raise ElaborationError(f"too many port connections for `{child.name}`", it.span)
            conns = {child.ports[int(k[1:])].name: v for k, v in conns.items()}
        for port_name in conns:
            if child.port(port_name) is None:
                raise ElaborationError(f"module `{child.name}` has no port `{port_name}`", it.span)
        for p in child.ports:
            expr = conns.get(p.name)
            if expr is None:
                if p.direction == "input":
                    raise ElaborationError(f"input port `{p.name}` of `{it.name}` is unconnected", it.span)
                continue
            w = A.expr_width(expr, widths)
            if w != p.width:
                raise ElaborationError(
                    f"port width mismatch on `{it.name}.{p.name}`: port {p.width}, connection {w}", it.span
                )
            if p.direction == "input":
                items.append(A.ContAssign(A.Ident(pre(p.name)), expr, it.span))
            else:
                try:
                    A.lvalue_target(expr, widths)
                except TypeError:
                    raise ElaborationError(f"output port `{it.name}.{p.name}` drives a non-lvalue", it.span) from None
                items.append(A.ContAssign(expr, A.Ident(pre(p.name)), it.span))
    return A.ModuleDecl(mod.name, mod.ports, tuple(nets), tuple(params), tuple(items), mod.span)


def _post_check(m: A.ModuleDecl) -> None:
    declared = _declared(m)
    widths = m.widths()
    for it in m.items:
        if isinstance(it, A.Instance):
            raise ElaborationError("instance survived flattening", it.span)
        exprs = []
        if isinstance(it, A.ContAssign):
            exprs = [it.lhs, it.rhs]
        else:
            for s in A.walk_stmts(it.body):
                if isinstance(s, A.Assign):
                    exprs += [s.lhs, s.rhs]
                elif isinstance(s, A.If):
                    exprs.append(s.cond)
                elif isinstance(s, A.Case):
                    exprs.append(s.subject)
                    exprs += [v for item in s.items for v in (item.values or ())]
        for e in exprs:
            for n in A.support(e):
                if n not in declared:
                    raise ElaborationError(f"undeclared identifier `{n}` after flattening")
            A.expr_width(e, widths)
