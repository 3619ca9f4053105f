"""Front-to-graph convenience: parse, flatten, build, label."""

from __future__ import annotations

import json
from importlib.resources import files
from pathlib import Path
from typing import Iterable, Optional

from .dfg import DataflowGraph, build_graph, label_random, label_secret
from .frontend.elaborate import elaborate
from .frontend.parser import parse_files, parse_source


def graph_from_files(paths: Iterable[str], top: Optional[str] = None, secret: Optional[str] = None,
                     random: Iterable[str] = ()) -> DataflowGraph:
    unit = parse_files([str(p) for p in paths], top)
    return _finish(build_graph(elaborate(unit)), secret, random)


def graph_from_source(text: str, top: Optional[str] = None, secret: Optional[str] = None,
                      random: Iterable[str] = (), filename: str = "<input>") -> DataflowGraph:
    unit = parse_source(text, filename, top)
    return _finish(build_graph(elaborate(unit)), secret, random)


def _finish(graph: DataflowGraph, secret: Optional[str], random: Iterable[str]) -> DataflowGraph:
    for name in random:
        graph = label_random(graph, name)
    if secret is not None:
        graph = label_secret(graph, secret)
    return graph


def corpus_dir() -> Path:
    """Directory of the bundled example designs."""
    return Path(str(files("rtlleak") / "corpus"))


def corpus_manifest() -> dict:
    """Per-design documentation of the bundled examples (secret, FSM, expected counts)."""
    return json.loads((corpus_dir() / "manifest.json").read_text())["designs"]


def corpus_graph(name: str) -> DataflowGraph:
    d = corpus_manifest()[name]
    return graph_from_files([corpus_dir() / d["file"]], d["top"], d["secret"], d["random"])
