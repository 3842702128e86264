"""Finite-domain integer solver: presolve, bounds propagation, LP refutation, DFS.

`solve` is complete within the given domains: it answers "sat" with a
verified model, "unsat", or "unknown" when the node or time budget runs out.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from hgrd.errors import MalformedConstraint
from hgrd.solver import _pysearch
from hgrd.solver.flat import FlatSystem, flatten
from hgrd.solver.lp import relaxation_infeasible
from hgrd.solver.presolve import presolve
from hgrd.solver.terms import Constraint, Interval, Poly, all_variables, rel, to_norm

_native = None
if not os.environ.get("HGRD_PURE_PYTHON"):
    try:  # compiled kernel, built from _search.pyx when Cython is available
        from hgrd.solver import _search as _native
    except ImportError:  # pragma: no cover - exercised when the extension is absent
        _native = None

NATIVE_LIMIT = 1 << 62
NATIVE_BOUND = 1 << 31

SAT, UNSAT, UNKNOWN = "sat", "unsat", "unknown"


@dataclass(frozen=True)
class Budget:
    max_nodes: int = 200_000
    time_limit: float = 10.0


@dataclass
class SolveResult:
    status: str
    model: dict[str, int] | None = None
    nodes: int = 0
    stats: dict[str, int] = field(default_factory=dict)

    @property
    def is_sat(self) -> bool:
        return self.status == SAT

    @property
    def is_unsat(self) -> bool:
        return self.status == UNSAT


def backend_name() -> str:
    return "native" if _native is not None else "python"


def _use_native(fs: FlatSystem) -> bool:
    if _native is None:
        return False
    if any(abs(v) >= NATIVE_BOUND for v in fs.lo) or any(abs(v) >= NATIVE_BOUND for v in fs.hi):
        return False
    return fs.magnitude() < NATIVE_LIMIT


def search(fs: FlatSystem, max_nodes: int, time_limit: float, force_python: bool = False):
    """Run the DFS kernel on a flat system; returns (status code, values, nodes)."""
    if not force_python and _use_native(fs):
        return _native.search(fs, max_nodes, time_limit)
    return _pysearch.search(fs, max_nodes, time_limit)


def verify_model(constraints: Iterable[Constraint], model: Mapping[str, int]) -> bool:
    """Direct evaluation of every constraint; missing variables fail the check."""
    try:
        return all(c.holds(model) for c in constraints)
    except KeyError:
        return False


def _closest_to_zero(lo: int, hi: int) -> int:
    return 0 if lo <= 0 <= hi else (lo if lo > 0 else hi)


def solve(
    constraints: list[Constraint],
    domains: Mapping[str, Interval],
    budget: Budget | None = None,
    *,
    force_python: bool = False,
) -> SolveResult:
    budget = budget or Budget()
    started = time.monotonic()
    names = all_variables(constraints)
    for name in sorted(names):
        if name not in domains:
            raise MalformedConstraint(f"variable '{name}' has no domain")
    for name, (lo, hi) in domains.items():
        if lo > hi:
            raise MalformedConstraint(f"empty domain for '{name}': [{lo}, {hi}]")
    bounds = {n: tuple(domains[n]) for n in names}

    norms = []
    for c in constraints:
        n = to_norm(c)
        if n is False:
            return SolveResult(UNSAT)
        if n is not True:
            norms.append(n)

    pre = presolve(norms, bounds)
    stats = {"refutes": pre.refutes, "eliminated": len(pre.elim)}
    if pre.unsat:
        return SolveResult(UNSAT, stats=stats)
    fs = flatten(pre.norms, pre.bounds)
    lo, hi = list(fs.lo), list(fs.hi)
    if not _pysearch.propagate(fs, lo, hi):
        return SolveResult(UNSAT, stats=stats)
    fs.lo, fs.hi = lo, hi
    if fs.n_cons and relaxation_infeasible(fs):
        stats["lp"] = 1
        return SolveResult(UNSAT, stats=stats)
    remaining = max(0.0, budget.time_limit - (time.monotonic() - started))
    code, values, nodes = search(fs, budget.max_nodes, remaining, force_python)
    if code == _pysearch.UNSAT:
        return SolveResult(UNSAT, nodes=nodes, stats=stats)
    if code == _pysearch.UNKNOWN:
        return SolveResult(UNKNOWN, nodes=nodes, stats=stats)

    model: dict[str, int] = {}
    for i in range(fs.n_base):
        model[fs.names[i]] = values[i]
    eliminated = {x for x, _ in pre.elim}
    for name in sorted(names):
        if name not in model and name not in eliminated:
            model[name] = _closest_to_zero(*pre.bounds[name])
    for x, rest in reversed(pre.elim):
        model[x] = rest.evaluate(model)
    model = {k: model[k] for k in sorted(names)}
    if not verify_model(constraints, model) or any(
        not domains[k][0] <= v <= domains[k][1] for k, v in model.items()
    ):
        raise AssertionError("solver produced a model that fails verification")
    return SolveResult(SAT, model, nodes, stats)


__all__ = [
    "Budget",
    "Constraint",
    "Poly",
    "SolveResult",
    "backend_name",
    "rel",
    "solve",
    "verify_model",
]
