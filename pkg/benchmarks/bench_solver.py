"""Compare the compiled search kernel with the pure-Python one.

Workload: every constraint system the analysis builds for the bundled
corpus (with and without host facts), plus seeded random systems. Each
system is solved once per backend and the statuses must agree.

    python benchmarks/bench_solver.py [--repeat N] [--random N] [--end-to-end]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time
from pathlib import Path

from hgrd.corpus import load_corpus
from hgrd.kernel_constraints import Options
from hgrd.minicu import parse_file
from hgrd.report import Settings, analyze_program
from hgrd.solver import Budget, backend_name, solve

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))
from oracles import random_system  # noqa: E402


# the analysis default, so neither backend runs out of time on the corpus
BUDGET = Budget(max_nodes=200_000, time_limit=60.0)


def corpus_systems() -> list[tuple[list, dict]]:
    systems = []
    for entry in load_corpus():
        program = parse_file(entry.source)
        for host in (True, False):
            def sink(launch, pair, kind, system):
                systems.append(system)

            analyze_program(program, Settings(Options(host_analysis=host)), sink)
    out = []
    for system in systems:
        names = set().union(*(c.variables() for c in system)) if system else set()
        out.append((system, names))
    return out


def _domains(system, names, opts: Options) -> dict:
    # domains mirror the ones SolverContext assigns, keyed by naming scheme
    b, g, t = opts.domain_bound, opts.max_grid, opts.max_block
    dom = {}
    for n in names:
        if n.startswith("gridDim."):
            dom[n] = (1, g)
        elif n.startswith("blockDim."):
            dom[n] = (1, t)
        elif n.startswith("threadIdx."):
            dom[n] = (0, t - 1)
        elif n.startswith("blockIdx."):
            dom[n] = (0, g - 1)
        elif n.startswith("id#"):
            dom[n] = (0, t**3 - 1)
        elif n.startswith("wp#"):
            dom[n] = (0, (t**3 - 1) // opts.warp_size)
        else:
            dom[n] = (-b, b - 1)
    return dom


def time_backend(workload, force_python: bool, repeat: int) -> tuple[float, list[str]]:
    statuses: list[str] = []
    start = time.perf_counter()
    for _ in range(repeat):
        statuses = [solve(cs, dom, BUDGET, force_python=force_python).status for cs, dom in workload]
    return (time.perf_counter() - start) / repeat, statuses


def end_to_end() -> dict[str, float]:
    """Wall time of `hgrd corpus --no-oracle` under each backend, in fresh processes."""
    out = {}
    for label, extra in (("native", {}), ("python", {"HGRD_PURE_PYTHON": "1"})):
        env = dict(os.environ, **extra)
        start = time.perf_counter()
        subprocess.run([sys.executable, "-m", "hgrd.cli", "corpus", "--no-oracle"], env=env, capture_output=True, check=True)
        out[label] = time.perf_counter() - start
    return out


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--random", type=int, default=200, help="number of random systems")
    ap.add_argument("--end-to-end", action="store_true", help="also time the corpus command per backend")
    args = ap.parse_args(argv)

    if backend_name() != "native":
        print("compiled kernel not available; build it with `pip install -e . --no-build-isolation`")
        return 1
    opts = Options()
    workload = [(cs, _domains(cs, names, opts)) for cs, names in corpus_systems()]
    workload += [(rs.constraints(), rs.domains) for rs in map(random_system, range(args.random))]

    native, s1 = time_backend(workload, False, args.repeat)
    python, s2 = time_backend(workload, True, args.repeat)
    if s1 != s2:
        bad = sum(a != b for a, b in zip(s1, s2))
        print(f"backends disagree on {bad} systems")
        return 1
    print(f"{len(workload)} systems, {s1.count('sat')} sat, {s1.count('unsat')} unsat, {s1.count('unknown')} unknown")
    print(f"native  {native * 1000:9.1f} ms")
    print(f"python  {python * 1000:9.1f} ms")
    print(f"speedup {python / native:9.2f}x")
    if args.end_to_end:
        for label, secs in end_to_end().items():
            print(f"corpus ({label}) {secs:.1f} s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
