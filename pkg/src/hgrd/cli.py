"""Command-line entry point: `hgrd analyze`, `hgrd oracle` and `hgrd corpus`."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from hgrd import __version__
from hgrd.cfg import build_cfg, compute_dominance
from hgrd.errors import HgrdError
from hgrd.host import analyze_host
from hgrd.kernel_constraints import Options
from hgrd.minicu import parse_file
from hgrd.oracle import DEFAULT_VALUES, Caps, enumerate_verdict
from hgrd.prelim import surviving_pairs
from hgrd.report import SCHEMA_VERSION, Settings, analyze_program, exit_code, render
from hgrd.solver import Budget

EXIT_CLEAN, EXIT_RACY, EXIT_ERROR = 0, 1, 2


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _dims(text: str) -> tuple[int, int, int]:
    vals = _int_list(text)
    if len(vals) != 3 or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"expected X,Y,Z with positive entries, got {text!r}")
    return vals  # type: ignore[return-value]


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hgrd", description="Host-guided static race detection for MiniCU programs.")
    parser.add_argument("--version", action="version", version=f"hgrd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="report data races statically")
    a.add_argument("file", type=Path)
    a.add_argument("--format", choices=("text", "json"), default="text")
    a.add_argument("--no-host-analysis", action="store_true", help="ignore every fact taken from host code")
    a.add_argument("--warp-size", type=_positive, default=32)
    a.add_argument("--domain-bound", type=_positive, default=1024, help="symmetric bound B for unbounded values")
    a.add_argument("--max-grid", type=_positive, default=64, help="upper bound for each gridDim axis")
    a.add_argument("--max-block", type=_positive, default=64, help="upper bound for each blockDim axis")
    a.add_argument("--solver-budget", type=_positive, default=200_000, help="search nodes per solver call")
    a.add_argument("--time-limit", type=float, default=60.0, help="seconds per solver call")
    a.add_argument("--timing", action="store_true", help="add wall time to json stats (breaks byte-stability)")
    dumps = a.add_mutually_exclusive_group()
    for flag in ("cfg", "pairs", "host-facts", "constraints"):
        dumps.add_argument(f"--dump-{flag}", action="store_true")

    o = sub.add_parser("oracle", help="enumerate concrete executions and report observed races as json")
    o.add_argument("file", type=Path)
    o.add_argument("--max-threads", type=_positive, default=4, help="threads per block (x axis cap)")
    o.add_argument("--max-grid", type=_dims, default=(2, 2, 1), help="grid cap X,Y,Z")
    o.add_argument("--warp-size", type=_int_list, default=(2, 4), help="comma-separated warp sizes")
    o.add_argument("--input-set", type=_int_list, default=DEFAULT_VALUES, help="values for each __input()")

    c = sub.add_parser("corpus", help="check the bundled corpus against its manifests")
    c.add_argument("--no-oracle", action="store_true")
    return parser


def _settings(args: argparse.Namespace) -> Settings:
    opts = Options(
        warp_size=args.warp_size,
        domain_bound=args.domain_bound,
        max_grid=args.max_grid,
        max_block=args.max_block,
        host_analysis=not args.no_host_analysis,
    )
    return Settings(opts, Budget(max_nodes=args.solver_budget, time_limit=args.time_limit))


def _dump_static(args: argparse.Namespace, program, out) -> None:
    if args.dump_host_facts:
        out.write(analyze_host(program).dump())
        return
    for kernel in program.kernels:
        cfg = build_cfg(kernel)
        if args.dump_cfg:
            out.write(cfg.to_dot())
            continue
        _, pairs, dropped = surviving_pairs(kernel, cfg, compute_dominance(cfg))
        out.write(f"kernel {kernel.name}: {len(pairs)} pairs kept, {dropped} filtered\n")
        for p in pairs:
            out.write(f"  {p}\n")


def _constraint_printer(out):
    def sink(launch, pair, kind, system):
        where = launch.loc if launch is not None else "no launch"
        out.write(f"# {pair.first.loc} <-> {pair.second.loc} {kind} ({where})\n")
        for c in system:
            out.write(f"  {c}\n")

    return sink


def cmd_analyze(args: argparse.Namespace, out) -> int:
    program = parse_file(args.file)
    settings = _settings(args)
    dumping = args.dump_cfg or args.dump_pairs or args.dump_host_facts
    if dumping:
        _dump_static(args, program, out)
        return EXIT_CLEAN
    sink = _constraint_printer(out) if args.dump_constraints else None
    report = analyze_program(program, settings, sink)
    out.write(render(report, args.format, timing=args.timing))
    return exit_code(report)


def cmd_oracle(args: argparse.Namespace, out) -> int:
    program = parse_file(args.file)
    caps = Caps(
        grid=args.max_grid,
        block=(args.max_threads, 1, 1),
        warp_sizes=args.warp_size,
        values=args.input_set,
        max_threads=args.max_threads,
    )
    sweep = enumerate_verdict(program, caps)
    races = []
    for key in sorted(sweep.races):
        r = sweep.races[key]
        races.append(
            {
                "kind": r.kind,
                "locA": {"line": r.loc_a.line, "column": r.loc_a.column},
                "locB": {"line": r.loc_b.line, "column": r.loc_b.column},
                "array": r.array,
                "address": r.address,
                "config": r.config.to_json() if r.config is not None else None,
            }
        )
    doc = {
        "version": SCHEMA_VERSION,
        "program": program.file,
        "races": races,
        "stats": {"runs": sweep.runs, "traps": sweep.traps, "launchesRun": sweep.launches_run},
    }
    out.write(json.dumps(doc, indent=2) + "\n")
    return EXIT_RACY if races else EXIT_CLEAN


def cmd_corpus(args: argparse.Namespace, out) -> int:
    from hgrd.corpus import run_corpus, summary_table

    results = run_corpus(oracle=not args.no_oracle)
    out.write(summary_table(results))
    return EXIT_CLEAN if all(r.ok for r in results) else EXIT_RACY


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {"analyze": cmd_analyze, "oracle": cmd_oracle, "corpus": cmd_corpus}[args.command]
    try:
        return handler(args, sys.stdout)
    except HgrdError as exc:
        print(exc.render(), file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"hgrd: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
