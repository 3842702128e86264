"""The bundled MiniCU corpus and its expected-verdict manifests.

Each `programs/<name>.toml` names one `.mcu` source and freezes what the
analysis must report for it. See `docs/manifest.md` for the format.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - depends on the interpreter
    import tomli as tomllib

from hgrd.errors import ManifestError
from hgrd.kernel_constraints import Options
from hgrd.minicu import parse_file
from hgrd.oracle import DEFAULT_VALUES, Caps, Sweep, enumerate_verdict
from hgrd.prelim import ALL_KINDS
from hgrd.report import RaceReport, Settings, analyze_program

PROGRAMS = Path(__file__).parent / "programs"
PROVENANCES = ("figure-derived", "table-derived")
VARIANTS = ("faithful", "mutated", "analog")

# (kind, "line:col", "line:col", array)
RaceKey = tuple[str, str, str, str]


@dataclass(frozen=True)
class Expected:
    races: tuple[RaceKey, ...]
    without_host: int
    published: int | None = None

    @property
    def count(self) -> int:
        """Distinct racy access pairs."""
        return len({(a, b) for _, a, b, _ in self.races})


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    source: Path
    provenance: str
    variant: str
    expected: Expected
    caps: Caps
    order: int = 0
    figure: int | None = None
    figure_lines: tuple[int, int] | None = None
    # wider caps under which the oracle must show `probe_races`
    probe_caps: Caps | None = None
    probe_races: tuple[tuple[str, int, int, str], ...] = ()
    note: str = ""

    @property
    def racy(self) -> bool:
        return bool(self.expected.races)


def _caps(table: dict, where: str) -> Caps:
    try:
        return Caps(
            grid=tuple(table.get("grid", (2, 2, 1))),
            block=tuple(table.get("block", (4, 1, 1))),
            warp_sizes=tuple(table.get("warp_sizes", (2, 4))),
            values=tuple(table.get("values", DEFAULT_VALUES)),
        )
    except TypeError as exc:
        raise ManifestError(f"{where}: bad oracle caps: {exc}") from None


def _race_key(item: list, where: str) -> RaceKey:
    if len(item) != 4 or item[0] not in ALL_KINDS:
        raise ManifestError(f"{where}: race entries are [kind, 'line:col', 'line:col', array], got {item!r}")
    return (item[0], item[1], item[2], item[3])


def load_manifest(path: str | Path) -> CorpusEntry:
    path = Path(path)
    where = path.name
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ManifestError(f"{where}: {exc}") from None
    for key in ("name", "source", "provenance", "variant", "expected"):
        if key not in data:
            raise ManifestError(f"{where}: missing '{key}'")
    if data["provenance"] not in PROVENANCES:
        raise ManifestError(f"{where}: provenance must be one of {PROVENANCES}")
    if data["variant"] not in VARIANTS:
        raise ManifestError(f"{where}: variant must be one of {VARIANTS}")
    source = path.parent / data["source"]
    if not source.is_file():
        raise ManifestError(f"{where}: source {data['source']} not found")
    exp = data["expected"]
    expected = Expected(
        races=tuple(sorted(_race_key(r, where) for r in exp.get("races", []))),
        without_host=int(exp["without_host"]),
        published=exp.get("published"),
    )
    probe = data.get("probe")
    lines = data.get("figure_lines")
    return CorpusEntry(
        name=data["name"],
        source=source,
        provenance=data["provenance"],
        variant=data["variant"],
        expected=expected,
        caps=_caps(data.get("oracle", {}), where),
        order=int(data.get("order", 0)),
        figure=data.get("figure"),
        figure_lines=tuple(lines) if lines else None,
        probe_caps=_caps(probe, where) if probe else None,
        probe_races=tuple(tuple(r) for r in probe.get("races", [])) if probe else (),
        note=data.get("note", ""),
    )


def load_corpus(directory: str | Path = PROGRAMS) -> list[CorpusEntry]:
    entries = [load_manifest(p) for p in sorted(Path(directory).glob("*.toml"))]
    return sorted(entries, key=lambda e: (e.order, e.name))


def race_keys(report: RaceReport) -> set[RaceKey]:
    return {
        (r.kind, f"{r.loc_a.line}:{r.loc_a.column}", f"{r.loc_b.line}:{r.loc_b.column}", r.array)
        for r in report.races
    }


@dataclass
class EntryResult:
    entry: CorpusEntry
    with_host: RaceReport
    without_host: RaceReport
    sweep: Sweep | None = None
    probe: Sweep | None = None
    problems: list[str] = field(default_factory=list)

    @property
    def false_positives(self) -> set[RaceKey]:
        return race_keys(self.with_host) - set(self.entry.expected.races)

    @property
    def false_negatives(self) -> set[RaceKey]:
        return set(self.entry.expected.races) - race_keys(self.with_host)

    @property
    def ok(self) -> bool:
        return not self.problems


def _line_keys(report: RaceReport) -> set[tuple[str, int, int, str]]:
    return report.keys()


def check_entry(entry: CorpusEntry, settings: Settings | None = None, oracle: bool = True) -> EntryResult:
    settings = settings or Settings()
    program = parse_file(entry.source)
    on = analyze_program(program, Settings(_with_host(settings.options, True), settings.budget))
    off = analyze_program(program, Settings(_with_host(settings.options, False), settings.budget))
    res = EntryResult(entry, on, off)
    fp, fn = res.false_positives, res.false_negatives
    if fp:
        res.problems.append(f"unexpected races {sorted(fp)}")
    if fn:
        res.problems.append(f"missed races {sorted(fn)}")
    if len(off.racy_pairs()) != entry.expected.without_host:
        res.problems.append(f"{len(off.racy_pairs())} racy pairs without host analysis, expected {entry.expected.without_host}")
    if not race_keys(on) <= race_keys(off):
        res.problems.append("host analysis added races")
    if entry.figure_lines is not None:
        lines = tuple(entry.figure_lines)
        if entry.variant == "faithful" and lines not in off.line_pairs():
            res.problems.append(f"no race on lines {lines} without host analysis")
        if entry.variant == "mutated" and lines not in on.line_pairs():
            res.problems.append(f"mutation did not flip lines {lines}")
    if oracle:
        res.sweep = enumerate_verdict(program, entry.caps)
        unsound = set(res.sweep.races) - _line_keys(on)
        if unsound:
            res.problems.append(f"oracle races not reported statically {sorted(unsound)}")
        if entry.probe_caps is not None:
            res.probe = enumerate_verdict(program, entry.probe_caps)
            want = set(entry.probe_races)
            if not want <= set(res.probe.races):
                res.problems.append(f"probe did not observe {sorted(want - set(res.probe.races))}")
            if not set(res.probe.races) <= _line_keys(on):
                res.problems.append("probe races not reported statically")
    return res


def _with_host(opts: Options, on: bool) -> Options:
    return Options(opts.warp_size, opts.domain_bound, opts.max_grid, opts.max_block, on)


def run_corpus(settings: Settings | None = None, oracle: bool = True, directory: str | Path = PROGRAMS) -> list[EntryResult]:
    return [check_entry(e, settings, oracle) for e in load_corpus(directory)]


def summary_table(results: list[EntryResult]) -> str:
    """One row per entry: races with host analysis as `N [FN:FP]`, as in the published table."""
    head = f"{'program':28} {'variant':9} {'with host':>11} {'without':>8} {'oracle':>8}  status"
    rows = [head, "-" * len(head)]
    total = [0, 0, 0]
    for r in results:
        n = len(r.with_host.racy_pairs())
        fn = len({(a, b) for _, a, b, _ in r.false_negatives})
        fp = len({(a, b) for _, a, b, _ in r.false_positives})
        if r.entry.variant != "mutated":
            total[0] += n
            total[1] += fn
            total[2] += fp
        seen = "-" if r.sweep is None else str(len({(a, b) for _, a, b, _ in r.sweep.races}))
        cell = f"{n} [{fn}:{fp}]"
        status = "ok" if r.ok else "FAIL: " + "; ".join(r.problems)
        rows.append(f"{r.entry.name:28} {r.entry.variant:9} {cell:>11} {len(r.without_host.racy_pairs()):>8} {seen:>8}  {status}")
    rows.append("-" * len(head))
    rows.append(f"{'summary (faithful+analog)':38} {f'{total[0]} [{total[1]}:{total[2]}]':>11}")
    return "\n".join(rows) + "\n"


__all__ = [
    "CorpusEntry",
    "EntryResult",
    "Expected",
    "PROGRAMS",
    "check_entry",
    "load_corpus",
    "load_manifest",
    "race_keys",
    "run_corpus",
    "summary_table",
]
