"""End-to-end pipeline behind the command line."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

from . import __version__
from .channels import ChannelReport, analyze_channels
from .design import graph_from_files
from .dfg import DataflowGraph
from .engine import (
    DEFAULT_MAX_PATH_LEN,
    DEFAULT_PATH_CAP,
    BitLeakage,
    LeakagePath,
    Summary,
    Thresholds,
    classify,
    enumerate_paths,
    quantify,
)
from .fsm import Fsm, extract_all, state_atom, state_graph
from .refine import DEFAULT_MAX_ROUNDS, RefinementResult, refine_and_rerun

MODES = ("agnostic", "timing", "channels", "all")
SCHEMA = "rtlleak.report/1"


@dataclass(frozen=True)
class AnalysisConfig:
    files: tuple[str, ...]
    secret: str
    top: Optional[str] = None
    random: tuple[str, ...] = ()
    mode: str = "all"
    thresholds: Thresholds = Thresholds()
    horizon: Optional[int] = None
    max_path_len: int = DEFAULT_MAX_PATH_LEN
    max_rounds: int = DEFAULT_MAX_ROUNDS
    path_cap: int = DEFAULT_PATH_CAP
    report: Optional[str] = None
    timings: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {', '.join(MODES)}")
        if self.horizon is not None and self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.max_rounds < 1 or self.max_path_len < 1:
            raise ValueError("max-rounds and max-path-len must be positive")

    def echo(self) -> dict:
        return {
            "files": list(self.files),
            "top": self.top,
            "secret": self.secret,
            "random": list(self.random),
            "mode": self.mode,
            "detect_threshold": self.thresholds.detect,
            "warn_threshold": self.thresholds.warn,
            "horizon": self.horizon,
            "max_path_len": self.max_path_len,
            "max_rounds": self.max_rounds,
        }


@dataclass
class Scenario:
    paths: list[LeakagePath]
    bits: list[BitLeakage]
    summary: Summary
    graph: DataflowGraph


@dataclass
class AnalysisResult:
    config: AnalysisConfig
    graph: DataflowGraph
    fsms: list[Fsm] = field(default_factory=list)
    relevant_fsms: list[Fsm] = field(default_factory=list)
    scenario1: Optional[Scenario] = None
    scenario2: Optional[Scenario] = None
    refinement: Optional[RefinementResult] = None
    channels: Optional[ChannelReport] = None
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return 2 if self.findings() else 0

    def findings(self) -> list[str]:
        out = []
        leak = self.scenario2 or self.scenario1
        if leak is not None and leak.summary.detected:
            tag = "timing-aware" if self.scenario2 is not None else "time-agnostic"
            out.append(f"{leak.summary.detected} secret bit(s) detected leaking ({tag})")
        if self.channels is not None and self.channels.count:
            out.append(f"{self.channels.count} timing channel(s)")
        return out


def relevant_fsms(fsms: list[Fsm], graph: DataflowGraph, paths: list[LeakagePath]) -> list[Fsm]:
    """FSMs whose register or gated assignments lie on some leakage path."""
    hop_aids = {h.assignment for p in paths for h in p.hops}
    signals = {s for p in paths for s in p.signals()}
    out = []
    for f in fsms:
        reg = f.register.signal
        if reg in signals or any(
            any(state_atom(g, reg) for g in graph.assignment(aid).guards) for aid in sorted(hop_aids)
        ):
            out.append(f)
    return out


def run_analysis(cfg: AnalysisConfig) -> AnalysisResult:
    clock = time.perf_counter
    t = clock()
    graph = graph_from_files(cfg.files, cfg.top, cfg.secret, cfg.random)
    res = AnalysisResult(cfg, graph)
    res.timings["frontend"] = clock() - t

    if cfg.mode in ("agnostic", "timing", "all"):
        t = clock()
        paths = enumerate_paths(graph, cfg.max_path_len, cfg.path_cap)
        bits, summary = classify(quantify(graph, paths), cfg.thresholds)
        res.scenario1 = Scenario(paths, bits, summary, graph)
        res.timings["scenario1"] = clock() - t

    if cfg.mode != "agnostic":
        t = clock()
        res.fsms = extract_all(graph)
        res.timings["fsm"] = clock() - t

    if cfg.mode in ("timing", "all"):
        t = clock()
        res.relevant_fsms = relevant_fsms(res.fsms, graph, res.scenario1.paths)
        ref = refine_and_rerun(graph, res.relevant_fsms, cfg.max_rounds, cfg.max_path_len, cfg.path_cap)
        bits, summary = classify(list(ref.bits), cfg.thresholds)
        res.refinement = ref
        res.scenario2 = Scenario(ref.valid_paths, bits, summary, ref.graph)
        res.timings["scenario2"] = clock() - t

    if cfg.mode in ("channels", "all"):
        t = clock()
        res.channels = analyze_channels(graph, res.fsms, cfg.horizon)
        res.timings["channels"] = clock() - t
    return res


def tool_info() -> dict:
    return {"name": "rtlleak", "version": __version__}
