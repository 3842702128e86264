"""Tokenizer for MiniCU."""

from __future__ import annotations

import re
from dataclasses import dataclass

from hgrd.errors import ParseError
from hgrd.minicu.ast import SourceLoc

KEYWORDS = frozenset(
    {"__global__", "void", "int", "float", "lock", "if", "else", "for", "return", "assert"}
)

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>//[^\n]*|/\*.*?\*/)
  | (?P<int>\d+)
  | (?P<id>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op><<<|>>>|\+\+|\+=|-=|<=|>=|==|!=|&&|\|\||[-+*/%<>=!&(){}\[\];,.])
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass(frozen=True)
class Token:
    kind: str  # int | id | op | eof
    text: str
    loc: SourceLoc


def tokenize(source: str, file: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    line = 1
    line_start = 0
    n = len(source)
    while pos < n:
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            loc = SourceLoc(file, line, pos - line_start + 1)
            raise ParseError(f"unexpected character {source[pos]!r}", loc)
        kind = m.lastgroup
        text = m.group()
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, text, SourceLoc(file, line, pos - line_start + 1)))
        newlines = text.count("\n")
        if newlines:
            line += newlines
            line_start = pos + text.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", SourceLoc(file, line, pos - line_start + 1)))
    return tokens
