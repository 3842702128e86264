"""MiniCU frontend: lexer, parser, resolver and printer."""

from __future__ import annotations

from pathlib import Path

from hgrd.minicu.ast import FunctionDecl, KernelDecl, Launch, Program, walk_stmts
from hgrd.minicu.parser import parse_syntax
from hgrd.minicu.printer import format_program
from hgrd.minicu.resolve import resolve


def parse_translation_unit(source: str, file_name: str = "<input>") -> Program:
    """Parse and resolve one MiniCU translation unit."""
    return resolve(parse_syntax(source, file_name))


def parse_file(path: str | Path) -> Program:
    path = Path(path)
    return parse_translation_unit(path.read_text(encoding="utf-8"), path.name)


def list_launch_sites(program: Program) -> list[tuple[FunctionDecl, Launch, KernelDecl]]:
    """Every syntactic launch, grouped by host function in declaration order."""
    sites: list[tuple[FunctionDecl, Launch, KernelDecl]] = []
    for func in program.host_functions:
        for stmt in walk_stmts(func.body):
            if isinstance(stmt, Launch):
                sites.append((func, stmt, program.kernel(stmt.kernel)))
    return sites


__all__ = ["format_program", "list_launch_sites", "parse_file", "parse_translation_unit"]
