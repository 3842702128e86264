from __future__ import annotations

import json

import pytest

from hgrd.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_analyze_clean_and_racy(corpus_dir, capsys):
    code, out, _ = run(capsys, "analyze", corpus_dir / "reduction.mcu")
    assert (code, out) == (0, "no races detected\n")
    code, out, _ = run(capsys, "analyze", corpus_dir / "reduction.mcu", "--no-host-analysis")
    assert code == 1 and "reduction.mcu:5" in out
    code, out, _ = run(capsys, "analyze", corpus_dir / "reduction_multiblock.mcu")
    assert code == 1 and out.startswith("INTER-BLOCK ")


def test_json_stable_and_timing_opt_in(corpus_dir, capsys):
    args = ("analyze", corpus_dir / "warpCommunicate.mcu", "--format", "json")
    first, second = run(capsys, *args)[1], run(capsys, *args)[1]
    assert first == second
    assert "wallTime" not in json.loads(first)["stats"]
    timed = json.loads(run(capsys, *args, "--timing")[1])
    assert timed["stats"]["wallTime"] >= 0


def test_options_reach_the_analysis(corpus_dir, capsys):
    # with a warp of one thread no two threads share a warp
    _, out, _ = run(capsys, "analyze", corpus_dir / "warpCommunicate.mcu", "--format", "json", "--warp-size", "1")
    assert "IntraWarp" not in {r["kind"] for r in json.loads(out)["races"]}
    _, out, _ = run(capsys, "analyze", corpus_dir / "warpCommunicate.mcu", "--format", "json", "--solver-budget", "1")
    assert {r["status"] for r in json.loads(out)["races"]} == {"undecided"}


def test_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.mcu"
    bad.write_text("__global__\nvoid k(int *A) {\n  A[0] = ;\n}\n")
    code, out, err = run(capsys, "analyze", bad)
    assert code == 2 and out == "" and "bad.mcu:3" in err
    code, _, err = run(capsys, "analyze", tmp_path / "missing.mcu")
    assert code == 2 and "missing.mcu" in err


def test_usage_errors(corpus_dir, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["analyze", str(corpus_dir / "rule110.mcu"), "--dump-cfg", "--dump-pairs"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit):
        main(["oracle", str(corpus_dir / "rule110.mcu"), "--max-grid", "2,2"])
    capsys.readouterr()


def test_dump_flags(corpus_dir, capsys):
    src = corpus_dir / "copyUppToLow.mcu"
    code, out, _ = run(capsys, "analyze", src, "--dump-cfg")
    assert code == 0 and out.startswith("digraph")
    _, out, _ = run(capsys, "analyze", src, "--dump-pairs")
    assert out.startswith("kernel copyUppLowKernel: 2 pairs kept, 0 filtered")
    _, out, _ = run(capsys, "analyze", src, "--dump-host-facts")
    assert "CopyUppLow.rows" in out
    code, out, _ = run(capsys, "analyze", src, "--dump-constraints")
    assert code == 0 and out.count("# ") == 6 and out.endswith("no races detected\n")


def test_oracle_subcommand(corpus_dir, capsys):
    code, out, _ = run(capsys, "oracle", corpus_dir / "conv1d.mcu", "--input-set", "0,2,4", "--warp-size", "2")
    doc = json.loads(out)
    assert code == 1 and doc["stats"]["runs"] == 27
    (race,) = {(r["kind"], r["locA"]["line"], r["locB"]["line"]) for r in doc["races"]} or {None}
    assert race is not None
    code, out, _ = run(capsys, "oracle", corpus_dir / "copyUppToLow.mcu", "--max-grid", "3,3,1", "--max-threads", "1")
    assert code == 0 and json.loads(out)["races"] == []


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0 and capsys.readouterr().out.startswith("hgrd ")
