"""Deterministic JSON and text renderings of an analysis."""

from __future__ import annotations

import json
from collections import Counter
from typing import Optional

from .analysis import SCHEMA, AnalysisResult, Scenario, tool_info
from .engine import LeakagePath, format_value
from .fsm import Fsm, state_graph

BAR_WIDTH = 40


def _path_json(p: LeakagePath) -> dict:
    return {
        "id": p.id,
        "bit": p.secret_bit,
        "terminal": p.terminal,
        "hops": [
            {
                "source": h.source,
                "source_bits": list(h.source_bits),
                "assignment": h.assignment,
                "target": h.target,
                "target_bits": list(h.target_bits),
            }
            for h in p.hops
        ],
    }


def scenario_json(sc: Scenario) -> dict:
    witnesses = {b.witness_path for b in sc.bits if b.witness_path}
    detected_cell, warned_cell = sc.summary.cells()
    return {
        "paths": len(sc.paths),
        "bits": [
            {
                "bit": b.secret_bit,
                "value": b.value,
                "classification": b.classification,
                "paths": b.paths,
                "witness": b.witness_path,
            }
            for b in sc.bits
        ],
        "summary": {
            "detected": sc.summary.detected,
            "detected_avg": sc.summary.detected_avg,
            "warned": sc.summary.warned,
            "warned_avg": sc.summary.warned_avg,
            "detected_cell": detected_cell,
            "warned_cell": warned_cell,
            "average_over": "classified bits in each column",
        },
        "witness_paths": [_path_json(p) for p in sc.paths if p.id in witnesses],
    }


def fsm_json(f: Fsm) -> dict:
    sg = state_graph(f)
    return {
        "register": f.register.signal,
        "width": f.register.width,
        "score": list(f.register.score),
        "states": [{"value": s, "name": f.name(s)} for s in sorted(f.states)],
        "reset_state": f.reset_state,
        "transitions": [
            {"from": t.frm, "to": t.to, "guard": t.guard_text(), "guard_support": sorted(t.guard_support)}
            for t in f.transitions
        ],
        "unreachable": sorted(sg.unreachable),
        "warnings": list(f.warnings),
    }


def build_report(res: AnalysisResult, timings: bool = False) -> dict:
    g = res.graph
    sec = g.secret
    out: dict = {
        "schema": SCHEMA,
        "tool": tool_info(),
        "config": res.config.echo(),
        "design": {
            "module": g.module,
            "secret": {"signal": sec.signal, "bits": sec.bits},
            "signals": len(g.signals),
            "assignments": len(g.assignments),
            "resets": [{"signal": r.signal, "active": r.active, "asynchronous": r.asynchronous} for r in g.resets],
            "warnings": list(g.warnings),
        },
    }
    if res.config.mode != "agnostic":
        out["fsm"] = [fsm_json(f) for f in res.fsms]
    if res.scenario1 is not None:
        out["scenario1"] = scenario_json(res.scenario1)
    if res.scenario2 is not None:
        out["scenario2"] = scenario_json(res.scenario2)
        out["refinement"] = refinement_json(res)
    if res.channels is not None:
        ch = res.channels
        out["channels"] = {
            "horizon": ch.deplist.horizon,
            "truncated": ch.deplist.truncated,
            "dependencies": ch.deplist.entries,
            "count": ch.count,
            "exempted": sum(1 for f in ch.findings if f.exempted),
            "findings": [
                {
                    "location": str(f.location) if f.location else None,
                    "target": f.assignment_target,
                    "condition": f.condition,
                    "condition_signal": f.condition_signal,
                    "condition_tainted_cycle": f.condition_tainted_cycle,
                    "assignment_cycle": f.assignment_cycle,
                    "states": list(f.assignment_cycle_window),
                    "exempted": f.exempted,
                    "exemption": f.exemption_reason,
                    "exemption_kind": f.exemption_kind,
                }
                for f in ch.findings
            ],
        }
    out["verdict"] = {"exit_code": res.exit_code, "findings": res.findings()}
    if timings:
        out["timings"] = {k: round(v, 6) for k, v in res.timings.items()}
    return out


def refinement_json(res: AnalysisResult) -> dict:
    ref = res.refinement
    first = ref.rounds[0] if ref.rounds else None
    final = Counter(
        (v.verdict, v.reason) for v in ref.verdicts.values()
    )
    return {
        "fsms": [f.register.signal for f in res.relevant_fsms],
        "fsm_merge": "a path is invalid if any governing FSM invalidates it",
        "partial": ref.partial,
        "rounds": [
            {
                "round": r.round,
                "paths": r.paths,
                "invalid_order_mismatch": r.invalid_order,
                "invalid_overwrite": r.invalid_overwrite,
                "looped": r.looped,
                "signals_introduced": r.signals_introduced,
                "loops": [
                    {"fsm": reg, "state": st, "iterations": n, "bound": "structural lower bound" if s else "counter"}
                    for reg, st, n, s in r.loops
                ],
            }
            for r in ref.rounds
        ],
        "final_verdicts": {
            "valid": final[("valid", None)],
            "looped": final[("looped", None)],
            "order_mismatch": final[("invalid", "order-mismatch")],
            "overwrite": final[("invalid", "overwrite")],
        },
        "invalid_paths": [
            {
                "id": v.path_id,
                "reason": v.reason,
                "detail": v.detail,
                "states": [list(e.states) for e in ref.sequences[v.path_id].entries] if v.path_id in ref.sequences else [],
            }
            for v in sorted(ref.verdicts.values(), key=lambda v: v.path_id)
            if v.invalid
        ][:1000],
        "rounds_total": len(ref.rounds),
        "first_round_paths": first.paths if first else 0,
    }


def to_json(report: dict) -> bytes:
    return (json.dumps(report, indent=2, sort_keys=False) + "\n").encode()


def _bar(v: float) -> str:
    return "#" * int(round(v * BAR_WIDTH))


def to_text(res: AnalysisResult) -> bytes:
    g = res.graph
    sec = g.secret
    cfg = res.config
    t = res.timings
    lines = [f"design {g.module}   secret {sec.signal}[{sec.bits - 1}:0]   mode {cfg.mode}", ""]
    lines.append(f"{'':<12}{'#Detected/Avg':>16}{'#Warned/Avg':>16}{'Time (s)':>12}")
    for label, sc, key in (("Scenario 1", res.scenario1, "scenario1"), ("Scenario 2", res.scenario2, "scenario2")):
        if sc is None:
            continue
        d, w = sc.summary.cells()
        lines.append(f"{label:<12}{d:>16}{w:>16}{t.get(key, 0.0):>12.3f}")
    if res.channels is not None:
        lines.append(f"{'Scenario 3':<12}{'#Timing channels ' + str(res.channels.count):>32}{t.get('channels', 0.0):>12.3f}")
    lines.append("")

    scen = [(n, sc) for n, sc in (("S1", res.scenario1), ("S2", res.scenario2)) if sc is not None]
    if scen:
        lines.append(f"per-bit leakage (detect >= {cfg.thresholds.detect}, warn >= {cfg.thresholds.warn})")
        header = f"  {'bit':<10}" + "".join(f"{n:>8}" for n, _ in scen)
        lines.append(header)
        for b in range(sec.bits):
            vals = [sc.bits[b] for _, sc in scen]
            cells = "".join(f"{format_value(v.value) if v.value else '0':>8}" for v in vals)
            last = vals[-1]
            mark = {"detected": "!", "warned": "?", "negligible": " "}[last.classification]
            lines.append(f"  {sec.signal + '[' + str(b) + ']':<10}{cells}  {mark} {_bar(last.value)}")
        lines.append("")

    if res.refinement is not None:
        ref = res.refinement
        for r in ref.rounds:
            loops = ", ".join(f"{reg}={st} x{n}" + (" (structural lower bound)" if s else "") for reg, st, n, s in r.loops)
            lines.append(
                f"round {r.round}: {r.paths} paths, {r.invalid_order} order-mismatch, "
                f"{r.invalid_overwrite} overwrite, {r.looped} looped" + (f"; unrolled {loops}" if loops else "")
            )
        if ref.partial:
            lines.append("refinement stopped at the round limit; results are partial")
        lines.append("")

    for f in res.fsms:
        lines.append(f"fsm {f.register.signal}: reset {f.name(f.reset_state) if f.reset_state is not None else '?'}, "
                     f"{len(f.states)} states, {len(f.transitions)} transitions")
        for w in f.warnings:
            lines.append(f"  warning: {w}")
    if res.fsms:
        lines.append("")

    if res.channels is not None:
        ch = res.channels
        if ch.deplist.truncated:
            lines.append(f"taint still spreading at horizon {ch.deplist.horizon}")
        for f in ch.findings:
            tag = f"exempt ({f.exemption_reason})" if f.exempted else "timing channel"
            lines.append(
                f"{f.location}: {tag}: `{f.assignment_target}` updated under `{f.condition}`; "
                f"`{f.condition_signal}` tainted at cycle {f.condition_tainted_cycle}, update at cycle {f.assignment_cycle}"
            )
        if ch.findings:
            lines.append("")
    for w in g.warnings:
        lines.append(f"warning: {w}")
    verdict = res.findings()
    lines.append("result: " + ("; ".join(verdict) if verdict else "clean"))
    return ("\n".join(lines) + "\n").encode()


def emit_report(res: AnalysisResult, fmt: str = "json", path: Optional[str] = None, timings: bool = False) -> bytes:
    data = to_json(build_report(res, timings)) if fmt == "json" else to_text(res)
    if path is not None:
        with open(path, "wb") as fh:
            fh.write(data)
    return data
