"""``rtlleak`` command line.

Exit codes: 0 clean, 1 analysis or usage error, 2 leaks or timing channels found.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

from . import __version__
from .analysis import MODES, AnalysisConfig, run_analysis
from .engine import DEFAULT_MAX_PATH_LEN, Thresholds
from .errors import AnalysisError
from .fsm import extract_all, to_dot
from .refine import DEFAULT_MAX_ROUNDS
from .report import emit_report

EXIT_CLEAN, EXIT_ERROR, EXIT_FINDINGS = 0, 1, 2

# config-file keys and how to coerce them
CONFIG_KEYS = {
    "top": str,
    "secret": str,
    "random": lambda v: [s.strip() for s in v.split(",") if s.strip()],
    "mode": str,
    "detect_threshold": float,
    "warn_threshold": float,
    "horizon": int,
    "max_rounds": int,
    "max_path_len": int,
    "report": str,
    "format": str,
    "timings": lambda v: v.strip().lower() in ("1", "true", "yes", "on"),
    "files": lambda v: v.split(),
}


class UsageError(Exception):
    pass


def read_config(path: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment, dashes in keys are allowed."""
    out: dict = {}
    with open(path, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in CONFIG_KEYS:
                raise UsageError(f"{path}:{n}: unknown key `{key}`")
            try:
                out[key] = CONFIG_KEYS[key](value)
            except ValueError:
                raise UsageError(f"{path}:{n}: bad value for `{key}`: {value!r}") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rtlleak", description="Static information-leakage and timing-channel analysis of Verilog RTL.")
    p.add_argument("--version", action="version", version=f"rtlleak {__version__}")
    sub = p.add_subparsers(dest="command", metavar="{analyze}")

    a = sub.add_parser("analyze", help="analyze a design")
    a.add_argument("files", nargs="*", help="Verilog source files")
    a.add_argument("--top", help="top module (default: the single uninstantiated module)")
    a.add_argument("--secret", help="secret signal name")
    a.add_argument("--random", action="append", help="input treated as a uniform random source (repeatable)")
    a.add_argument("--mode", choices=MODES, help="analysis scope (default: all)")
    a.add_argument("--detect-threshold", type=float)
    a.add_argument("--warn-threshold", type=float)
    a.add_argument("--horizon", type=int, help="cycles of taint propagation for timing channels")
    a.add_argument("--max-rounds", type=int, help=f"refinement rounds (default {DEFAULT_MAX_ROUNDS})")
    a.add_argument("--max-path-len", type=int, help=f"hops per leakage path (default {DEFAULT_MAX_PATH_LEN})")
    a.add_argument("--report", help="write the report to this path instead of stdout")
    a.add_argument("--format", choices=("json", "text"), help="report format (default json)")
    a.add_argument("--config", help="key = value file; command-line flags take precedence")
    a.add_argument("--timings", action="store_true", default=None, help="include per-phase wall-clock times in JSON")
    a.add_argument("--dump-graph", action="store_true", help="print the dataflow graph and exit")
    a.add_argument("--dump-fsm", action="store_true", help="print extracted FSMs as DOT and exit")

    o = sub.add_parser("oracle")  # exhaustive ground truth for small designs
    o.add_argument("files", nargs="+")
    o.add_argument("--top")
    o.add_argument("--secret", required=True)
    o.add_argument("--random", action="append")
    o.add_argument("--horizon", type=int, default=16)
    o.add_argument("--completion", help="report secret dependence of this signal's first assertion")
    o.add_argument("--inputs", choices=("held", "resampled"), default="held")
    return p


def _merge(args: argparse.Namespace) -> dict:
    opts = read_config(args.config) if args.config else {}
    for key in CONFIG_KEYS:
        val = getattr(args, key, None)
        if key == "files":
            val = val or None
        if val is not None:
            opts[key] = val
    return opts


def make_config(opts: dict) -> AnalysisConfig:
    if not opts.get("files"):
        raise UsageError("no input files")
    if not opts.get("secret"):
        raise UsageError("--secret is required")
    base = Thresholds()
    try:
        thresholds = Thresholds(opts.get("detect_threshold", base.detect), opts.get("warn_threshold", base.warn))
        return AnalysisConfig(
            files=tuple(opts["files"]),
            secret=opts["secret"],
            top=opts.get("top"),
            random=tuple(opts.get("random") or ()),
            mode=opts.get("mode", "all"),
            thresholds=thresholds,
            horizon=opts.get("horizon"),
            max_path_len=opts.get("max_path_len", DEFAULT_MAX_PATH_LEN),
            max_rounds=opts.get("max_rounds", DEFAULT_MAX_ROUNDS),
            report=opts.get("report"),
            timings=bool(opts.get("timings", False)),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _analyze(args: argparse.Namespace) -> int:
    opts = _merge(args)
    cfg = make_config(opts)
    if args.dump_graph or args.dump_fsm:
        from .design import graph_from_files

        graph = graph_from_files(cfg.files, cfg.top, cfg.secret, cfg.random)
        if args.dump_graph:
            sys.stdout.write(graph.dump())
        if args.dump_fsm:
            for f in extract_all(graph):
                sys.stdout.write(to_dot(f))
        return EXIT_CLEAN
    res = run_analysis(cfg)
    data = emit_report(res, opts.get("format", "json"), cfg.report, cfg.timings)
    if cfg.report is None:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    return res.exit_code


def _oracle(args: argparse.Namespace) -> int:
    from .design import graph_from_files
    from .oracle import Oracle

    graph = graph_from_files(args.files, args.top, args.secret, args.random or ())
    orc = Oracle(graph, args.inputs)
    out: dict = {"horizon": args.horizon, "leakage": orc.exact_leakages(args.horizon)}
    if args.completion:
        tv = orc.exact_timing_variability(args.completion, args.horizon)
        out["timing_variability"] = {"variable": tv.variable, "witness": tv.witness, "indeterminate": tv.indeterminate}
    sys.stdout.write(json.dumps(out, indent=2) + "\n")
    return EXIT_CLEAN


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_ERROR
    try:
        return _analyze(args) if args.command == "analyze" else _oracle(args)
    except AnalysisError as exc:
        print(exc.diagnostic(), file=sys.stderr)
    except UsageError as exc:
        print(f"rtlleak: error: {exc}", file=sys.stderr)
    except OSError as exc:
        print(f"rtlleak: error: {exc.filename or ''}: {exc.strerror}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
