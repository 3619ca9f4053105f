"""Exception hierarchy shared by every analysis stage."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Span:
    file: str
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.col}"


class AnalysisError(Exception):
    """Base class; carries an optional source location for diagnostics."""

    def __init__(self, message: str, span: Span | None = None):
        super().__init__(message)
        self.message = message
        self.span = span

    def diagnostic(self) -> str:
        if self.span is None:
            return f"error: {self.message}"
        return f"{self.span}: {self.message}"

    def __str__(self) -> str:
        return self.diagnostic()


class LexError(AnalysisError):
    pass


class ParseError(AnalysisError):
    def __init__(self, message: str, span: Span | None = None, expected: frozenset[str] = frozenset()):
        super().__init__(message, span)
        self.expected = expected


class SubsetViolation(ParseError):
    """A construct outside the supported Verilog subset."""

    def __init__(self, construct: str, span: Span | None = None):
        super().__init__(f"subset violation: `{construct}` is not supported", span)
        self.construct = construct


class ElaborationError(AnalysisError):
    pass


class GraphError(AnalysisError):
    pass


class CombinationalLoopError(GraphError):
    def __init__(self, signals: list[str]):
        super().__init__("combinational loop through " + ", ".join(signals))
        self.signals = signals


class LabelError(GraphError):
    pass


class FsmError(AnalysisError):
    pass


class ResetError(FsmError):
    pass


class PathExplosionError(AnalysisError):
    def __init__(self, message: str, partial: list | None = None):
        super().__init__(message)
        self.partial = partial or []


class OracleBudgetError(AnalysisError):
    pass
