from __future__ import annotations

import shutil

import pytest

from hgrd.corpus import PROGRAMS, check_entry, load_corpus, load_manifest, run_corpus, summary_table
from hgrd.errors import ManifestError

GOOD = """name = "toy"
source = "toy.mcu"
provenance = "table-derived"
variant = "analog"

[expected]
without_host = 1
races = [["InterBlock", "3:3", "3:3", "A"]]
"""
TOY = "__global__\nvoid k(int *A) {\n  A[0] = threadIdx.x;\n}\nint main() {\n  int *A;\n  cudaMalloc(&A, 1);\n  k<<<(2, 1, 1), (1, 1, 1)>>>(A);\n}\n"


@pytest.fixture
def toy(tmp_path):
    (tmp_path / "toy.mcu").write_text(TOY)
    path = tmp_path / "toy.toml"
    path.write_text(GOOD)
    return path


def test_load_good_manifest(toy):
    e = load_manifest(toy)
    assert e.name == "toy" and e.expected.count == 1 and e.caps.grid == (2, 2, 1)
    res = check_entry(e)
    assert res.ok, res.problems
    assert res.false_positives == set() == res.false_negatives


def test_wrong_expectation_is_flagged(toy):
    toy.write_text(GOOD.replace('"3:3", "3:3"', '"3:3", "3:9"'))
    res = check_entry(load_manifest(toy), oracle=False)
    assert not res.ok and res.false_negatives and res.false_positives


@pytest.mark.parametrize(
    "edit, message",
    [
        (lambda s: s.replace('name = "toy"\n', ""), "missing 'name'"),
        (lambda s: s.replace("table-derived", "folklore"), "provenance"),
        (lambda s: s.replace('"analog"', '"remix"'), "variant"),
        (lambda s: s.replace("toy.mcu", "gone.mcu"), "not found"),
        (lambda s: s.replace('"InterBlock"', '"Sideways"'), "race entries"),
        (lambda s: s + "[oracle\n", "toy.toml"),
    ],
)
def test_manifest_errors(toy, edit, message):
    toy.write_text(edit(GOOD))
    with pytest.raises(ManifestError, match=message):
        load_manifest(toy)


def test_bundled_corpus_shape():
    entries = load_corpus()
    assert len(entries) == len(list(PROGRAMS.glob("*.mcu"))) == 19
    assert [e.order for e in entries] == sorted(e.order for e in entries)
    by_variant = {}
    for e in entries:
        by_variant.setdefault(e.variant, []).append(e.name)
    assert len(by_variant["faithful"]) == len(by_variant["mutated"]) == 5
    assert all(e.figure_lines for e in entries if e.variant in ("faithful", "mutated"))
    assert sum(e.expected.count for e in entries if e.variant != "mutated") == 15


def test_custom_directory(toy, tmp_path):
    shutil.copy(toy, tmp_path / "copy.toml")
    results = run_corpus(oracle=False, directory=tmp_path)
    assert [r.entry.name for r in results] == ["toy", "toy"]
    table = summary_table(results)
    assert "summary (faithful+analog)" in table and table.count("ok") == 2
