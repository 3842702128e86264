from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import pytest

from hgrd.cfg import build_cfg, compute_dominance
from hgrd.corpus import PROGRAMS
from hgrd.host import analyze_host
from hgrd.kernel_constraints import Options, SolverContext
from hgrd.minicu import parse_translation_unit
from hgrd.prelim import surviving_pairs
from hgrd.sync import SyncFinder


@pytest.fixture
def corpus_dir() -> Path:
    return PROGRAMS


@pytest.fixture
def parse():
    def _parse(source: str, name: str = "t.mcu"):
        return parse_translation_unit(source, name)

    return _parse


@dataclass
class KernelSetup:
    program: object
    kernel: object
    cfg: object
    dom: object
    accesses: list
    pairs: list
    dropped: int
    finder: SyncFinder

    def ctx(self, **opts) -> SolverContext:
        facts = analyze_host(self.program)
        launch = next((lf for lf in facts.launches if lf.kernel == self.kernel.name), None)
        return SolverContext(self.kernel, launch, facts, Options(**opts))

    def pair(self, line_a: int, line_b: int):
        for p in self.pairs:
            if sorted((p.first.loc.line, p.second.loc.line)) == sorted((line_a, line_b)):
                return p
        raise LookupError((line_a, line_b))


@pytest.fixture
def setup(parse):
    """Parse a program and prepare the first kernel for pair analysis."""

    def _setup(source: str, kernel: str | None = None) -> KernelSetup:
        program = parse(source)
        k = program.kernel(kernel) if kernel else program.kernels[0]
        cfg = build_cfg(k)
        dom = compute_dominance(cfg)
        accesses, pairs, dropped = surviving_pairs(k, cfg, dom)
        return KernelSetup(program, k, cfg, dom, accesses, pairs, dropped, SyncFinder(cfg, dom, accesses))

    return _setup


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
