"""The analysis driver and race reports.

`analyze` runs every launch site through the preliminary checks, the
host+kernel constraint systems, the solver and the guard check, then merges
the per-site verdicts by (kind, locations, array).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from hgrd.cfg import build_cfg, compute_dominance
from hgrd.host import HostFacts, LaunchFacts, analyze_host
from hgrd.kernel_constraints import Options, SolverContext, pair_system, used_domains
from hgrd.minicu import parse_file
from hgrd.minicu.ast import KernelDecl, Program, SourceLoc
from hgrd.prelim import ALL_KINDS, KIND_ORDER, AccessPair, surviving_pairs
from hgrd.solver import Budget, solve, verify_model
from hgrd.sync import UNDECIDED, SyncFinder, check_guarded

SCHEMA_VERSION = "1.0"
RACE, UNDECIDED_STATUS = "race", "undecided"
KIND_LABEL = {"InterBlock": "INTER-BLOCK", "IntraBlock": "INTRA-BLOCK", "IntraWarp": "INTRA-WARP"}


@dataclass(frozen=True)
class Race:
    kind: str
    loc_a: SourceLoc
    loc_b: SourceLoc
    array: str
    status: str = RACE
    witness: tuple[tuple[str, int], ...] | None = None
    reason: str | None = None
    launch: SourceLoc | None = None

    @property
    def key(self) -> tuple[str, SourceLoc, SourceLoc, str]:
        return (self.kind, self.loc_a, self.loc_b, self.array)

    @property
    def sort_key(self) -> tuple:
        return (self.loc_a, self.loc_b, KIND_ORDER[self.kind], self.array)

    @property
    def line_pair(self) -> tuple[int, int]:
        return (self.loc_a.line, self.loc_b.line)


@dataclass
class Stats:
    launch_sites: int = 0
    pairs_examined: int = 0
    pairs_filtered: int = 0
    solver_calls: int = 0
    wall_time: float = 0.0


@dataclass
class RaceReport:
    program: str
    races: list[Race] = field(default_factory=list)
    stats: Stats = field(default_factory=Stats)
    host_analysis: bool = True

    @property
    def has_undecided(self) -> bool:
        return any(r.status == UNDECIDED_STATUS for r in self.races)

    def racy_pairs(self) -> set[tuple[SourceLoc, SourceLoc]]:
        """Distinct static access pairs, the unit the race counts use."""
        return {(r.loc_a, r.loc_b) for r in self.races}

    def line_pairs(self) -> set[tuple[int, int]]:
        return {r.line_pair for r in self.races}

    def keys(self) -> set[tuple[str, int, int, str]]:
        return {(r.kind, r.loc_a.line, r.loc_b.line, r.array) for r in self.races}


@dataclass(frozen=True)
class Settings:
    """Everything `analyze` needs besides the program."""

    options: Options = field(default_factory=Options)
    budget: Budget = field(default_factory=lambda: Budget(max_nodes=200_000, time_limit=60.0))


# hook for --dump-constraints: (launch, pair, kind, system)
ConstraintSink = Callable[[LaunchFacts | None, AccessPair, str, list], None]


@dataclass
class _KernelInfo:
    kernel: KernelDecl
    pairs: list[AccessPair]
    accesses: list
    dropped: int
    finder: SyncFinder


def _kernel_info(kernel: KernelDecl) -> _KernelInfo:
    cfg = build_cfg(kernel)
    dom = compute_dominance(cfg)
    accesses, pairs, dropped = surviving_pairs(kernel, cfg, dom)
    return _KernelInfo(kernel, pairs, accesses, dropped, SyncFinder(cfg, dom, accesses))


def _ordered(pair: AccessPair) -> tuple[SourceLoc, SourceLoc]:
    a, b = pair.first.loc, pair.second.loc
    return (a, b) if a <= b else (b, a)


def _launch_targets(program: Program, facts: HostFacts) -> list[tuple[KernelDecl, LaunchFacts | None]]:
    """Each launch site; kernels never launched are analyzed without host facts."""
    out: list[tuple[KernelDecl, LaunchFacts | None]] = [(program.kernel(lf.kernel), lf) for lf in facts.launches]
    launched = {lf.kernel for lf in facts.launches}
    out += [(k, None) for k in program.kernels if k.name not in launched]
    return out


def analyze_program(program: Program, settings: Settings | None = None, sink: ConstraintSink | None = None) -> RaceReport:
    settings = settings or Settings()
    opts = settings.options
    started = time.monotonic()
    facts = analyze_host(program)
    report = RaceReport(program.file, host_analysis=opts.host_analysis)
    stats = report.stats
    infos: dict[str, _KernelInfo] = {}
    found: dict[tuple, Race] = {}

    for kernel, launch in _launch_targets(program, facts):
        stats.launch_sites += launch is not None
        info = infos.get(kernel.name)
        if info is None:
            info = infos[kernel.name] = _kernel_info(kernel)
        stats.pairs_filtered += info.dropped
        ctx = SolverContext(kernel, launch, facts, opts)
        for pair in info.pairs:
            stats.pairs_examined += 1
            loc_a, loc_b = _ordered(pair)
            for kind in sorted(pair.kinds, key=KIND_ORDER.get):
                key = (kind, loc_a, loc_b, pair.first.array)
                if key in found and found[key].status == RACE:
                    continue
                system = pair_system(pair, kind, ctx)
                if sink is not None:
                    sink(launch, pair, kind, system)
                stats.solver_calls += 1
                result = solve(system, used_domains(system, ctx), settings.budget)
                if result.is_unsat:
                    continue
                if result.is_sat:
                    stats.solver_calls += 1
                    verdict = check_guarded(pair, kind, ctx, info.finder, settings.budget, result)
                    if not verdict.is_racy:
                        continue
                    status = UNDECIDED_STATUS if verdict.status == UNDECIDED else RACE
                    model, reason = verdict.model, verdict.reason
                else:
                    status, model, reason = UNDECIDED_STATUS, None, "SolverBudget"
                if model is not None and not verify_model(system, model):
                    raise AssertionError(f"witness for {key} fails its constraint system")
                witness = tuple(sorted(model.items())) if model is not None else None
                loc = launch.loc if launch is not None else None
                prev = found.get(key)
                if prev is None or (prev.status != RACE and status == RACE):
                    found[key] = Race(kind, loc_a, loc_b, pair.first.array, status, witness, reason, loc)

    report.races = sorted(found.values(), key=lambda r: r.sort_key)
    stats.wall_time = time.monotonic() - started
    return report


def analyze(path: str | Path, settings: Settings | None = None, sink: ConstraintSink | None = None) -> RaceReport:
    return analyze_program(parse_file(path), settings, sink)


# -- rendering ---------------------------------------------------------------


def _short_witness(witness: tuple[tuple[str, int], ...]) -> str:
    """The two threads, the launch shape and the scalar parameters."""
    m = dict(witness)

    def triple(fmt: str) -> str:
        return "(" + ",".join(str(m.get(fmt.format(d), "?")) for d in "xyz") + ")"

    parts = [
        f"block{n}={triple('blockIdx.{}#' + str(n))} thread{n}={triple('threadIdx.{}#' + str(n))}"
        for n in (1, 2)
    ]
    parts.append(f"grid={triple('gridDim.{}')} blockDim={triple('blockDim.{}')}")
    parts += [f"{k[2:]}={v}" for k, v in witness if k.startswith("p:")]
    return "[" + " ".join(parts) + "]"


def render_text(report: RaceReport) -> str:
    if not report.races:
        return "no races detected\n"
    lines = []
    for r in report.races:
        label = KIND_LABEL[r.kind]
        if r.status != RACE:
            label += " (undecided)"
        line = f"{label} {r.loc_a.file}:{r.loc_a.line} <-> {r.loc_b.file}:{r.loc_b.line} on {r.array}"
        if r.witness is not None:
            line += " " + _short_witness(r.witness)
        lines.append(line)
    return "\n".join(lines) + "\n"


def _loc_json(loc: SourceLoc) -> dict:
    return {"file": loc.file, "line": loc.line, "column": loc.column}


def to_json(report: RaceReport, timing: bool = False) -> dict:
    races = []
    for r in report.races:
        races.append(
            {
                "kind": r.kind,
                "locA": _loc_json(r.loc_a),
                "locB": _loc_json(r.loc_b),
                "array": r.array,
                "status": r.status,
                "reason": r.reason,
                "launch": _loc_json(r.launch) if r.launch is not None else None,
                "witness": dict(r.witness) if r.witness is not None else None,
            }
        )
    s = report.stats
    stats: dict = {
        "launchSites": s.launch_sites,
        "pairsExamined": s.pairs_examined,
        "pairsFiltered": s.pairs_filtered,
        "solverCalls": s.solver_calls,
        "races": len(report.races),
        "racyPairs": len(report.racy_pairs()),
    }
    if timing:
        stats["wallTime"] = round(s.wall_time, 3)
    return {
        "version": SCHEMA_VERSION,
        "program": report.program,
        "hostAnalysis": report.host_analysis,
        "races": races,
        "stats": stats,
    }


def render_json(report: RaceReport, timing: bool = False) -> str:
    return json.dumps(to_json(report, timing), indent=2) + "\n"


def render(report: RaceReport, fmt: str = "text", timing: bool = False) -> str:
    if fmt == "json":
        return render_json(report, timing)
    if fmt == "text":
        return render_text(report)
    raise ValueError(f"unknown format {fmt!r}")


def exit_code(report: RaceReport) -> int:
    return 1 if report.races else 0


__all__ = [
    "ALL_KINDS",
    "Race",
    "RaceReport",
    "Settings",
    "Stats",
    "analyze",
    "analyze_program",
    "exit_code",
    "render",
]
