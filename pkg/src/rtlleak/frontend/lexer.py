"""Tokenizer for the Verilog subset."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from ..errors import LexError, Span

KEYWORDS = frozenset(
    """module endmodule input output inout wire reg assign always posedge negedge or
    begin end if else case endcase default localparam parameter generate endgenerate
    function endfunction task endtask initial integer genvar for while repeat forever
    casex casez signed""".split()
)

# longest operators first
OPERATORS = [
    ("<<", "shl"), (">>", "shr"), ("<=", "le"), (">=", "ge"), ("==", "eqeq"),
    ("!=", "neq"), ("&&", "andand"), ("||", "oror"), ("~&", "nand"), ("~|", "nor"),
    ("~^", "xnor"), ("^~", "xnor"),
    ("(", "lparen"), (")", "rparen"), ("[", "lbrack"), ("]", "rbrack"),
    ("{", "lbrace"), ("}", "rbrace"), (";", "semi"), (",", "comma"), (":", "colon"),
    (".", "dot"), ("=", "eq"), ("?", "question"), ("+", "plus"), ("-", "minus"),
    ("*", "star"), ("/", "slash"), ("%", "percent"), ("&", "amp"), ("|", "pipe"),
    ("^", "caret"), ("~", "tilde"), ("!", "bang"), ("<", "lt"), (">", "gt"),
    ("@", "at"), ("#", "hash"),
]

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_$]*")
_BASED = re.compile(r"(\d[\d_]*)?\s*'\s*([sS]?)([bBoOdDhH])\s*([0-9a-fA-FxXzZ_?]+)")
_DECIMAL = re.compile(r"\d[\d_]*")
_BASES = {"b": 2, "o": 8, "d": 10, "h": 16}


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    span: Span
    value: Optional[int] = field(default=None)
    width: Optional[int] = field(default=None)

    def __repr__(self) -> str:
        if self.kind == "ident":
            return f"ident {self.text}"
        if self.kind == "number":
            return f"number({self.width}, {self.value})"
        return self.kind


def tokenize(text: str, filename: str = "<input>") -> list[Token]:
    """Split source text into tokens with line/column spans.

    Comments, whitespace and ``\\`timescale`` directives are dropped.
    """
    tokens: list[Token] = []
    pos, line, col = 0, 1, 1
    n = len(text)

    def advance(upto: int) -> None:
        nonlocal pos, line, col
        chunk = text[pos:upto]
        nl = chunk.count("\n")
        if nl:
            line += nl
            col = len(chunk) - chunk.rfind("\n")
        else:
            col += len(chunk)
        pos = upto

    while pos < n:
        ch = text[pos]
        here = Span(filename, line, col)
        if ch in " \t\r\n":
            advance(pos + 1)
            continue
        if text.startswith("//", pos):
            end = text.find("\n", pos)
            advance(n if end < 0 else end)
            continue
        if text.startswith("/*", pos):
            end = text.find("*/", pos + 2)
            if end < 0:
                raise LexError("unterminated comment", here)
            advance(end + 2)
            continue
        if ch == "`":
            m = _IDENT.match(text, pos + 1)
            if m and m.group(0) == "timescale":
                end = text.find("\n", pos)
                advance(n if end < 0 else end)
                continue
            raise LexError(f"unsupported compiler directive `{m.group(0) if m else ''}`", here)
        m = _BASED.match(text, pos)
        if m:
            size, signed, base, digits = m.groups()
            digits = digits.replace("_", "")
            if re.search(r"[xXzZ?]", digits):
                raise LexError("x/z literal digits are not supported", here)
            try:
                value = int(digits, _BASES[base.lower()])
            except ValueError:
                raise LexError(f"bad digits in literal {m.group(0)!r}", here) from None
            width = int(size.replace("_", "")) if size else None
            if width is not None:
                if width < 1:
                    raise LexError("literal width must be at least 1", here)
                value &= (1 << width) - 1
            tokens.append(Token("number", m.group(0), here, value, width))
            advance(m.end())
            continue
        m = _DECIMAL.match(text, pos)
        if m:
            tokens.append(Token("number", m.group(0), here, int(m.group(0).replace("_", "")), None))
            advance(m.end())
            continue
        m = _IDENT.match(text, pos)
        if m:
            word = m.group(0)
            kind = f"kw_{word}" if word in KEYWORDS else "ident"
            tokens.append(Token(kind, word, here))
            advance(m.end())
            continue
        for op, kind in OPERATORS:
            if text.startswith(op, pos):
                tokens.append(Token(kind, op, here))
                advance(pos + len(op))
                break
        else:
            raise LexError(f"unexpected character {ch!r}", here)
    tokens.append(Token("eof", "", Span(filename, line, col)))
    return tokens
