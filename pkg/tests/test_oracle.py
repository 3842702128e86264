from __future__ import annotations

from hgrd.minicu import parse_file
from hgrd.oracle import Caps, ExecConfig, enumerate_verdict, input_sites, run_concrete
from hgrd.prelim import INTER_BLOCK, INTRA_BLOCK, INTRA_WARP


def launched(body: str, params: str = "int *A", alloc: str = "A", n: int = 8, grid=(1, 1, 1), block=(4, 1, 1)) -> str:
    args = ", ".join(p.split()[-1].lstrip("*") for p in params.split(","))
    decls = "".join(f"  int *{a};\n" for a in alloc.split(","))
    mallocs = "".join(f"  cudaMalloc(&{a}, {n});\n" for a in alloc.split(","))
    return (
        f"__global__\nvoid k({params}) {{\n{body}\n}}\n"
        f"int main() {{\n{decls}{mallocs}  k<<<({grid[0]}, {grid[1]}, {grid[2]}), ({block[0]}, {block[1]}, {block[2]})>>>({args});\n}}\n"
    )


def races(prog, **cfg):
    return {r.key for r in run_concrete(prog, ExecConfig(**cfg)).races}


def test_figure1_mutant_races_on_rectangles(corpus_dir):
    prog = parse_file(corpus_dir / "copyUppToLow_noassert.mcu")
    rows, cols = input_sites(prog)
    found = races(prog, inputs=((rows, 3), (cols, 2)), grid=(3, 3, 1), block=(1, 1, 1))
    assert (INTER_BLOCK, 7, 7, "A") in found
    # square inputs are clean, which is what the assertion enforces
    assert races(prog, inputs=((rows, 3), (cols, 3)), grid=(3, 3, 1), block=(1, 1, 1)) == set()


def test_figure1_assert_stops_the_host(corpus_dir):
    prog = parse_file(corpus_dir / "copyUppToLow.mcu")
    rows, cols = input_sites(prog)
    res = run_concrete(prog, ExecConfig(inputs=((rows, 3), (cols, 2)), grid=(3, 3, 1), block=(1, 1, 1)))
    assert res.races == set() and not any(l.ran for l in res.launches)


def test_barrier_orders_block(parse):
    body = "  A[threadIdx.x] = 1;\n  __syncthreads();\n  x = A[threadIdx.x + 1];"
    assert races(parse(launched(body)), warp_size=2) == set()
    racy = races(parse(launched(body.replace("__syncthreads();", "x = 0;"))), warp_size=2)
    assert racy == {(INTRA_WARP, 3, 5, "A"), (INTRA_BLOCK, 3, 5, "A")}


def test_syncwarp_orders_only_the_warp(parse):
    body = "  A[threadIdx.x] = 1;\n  __syncwarp();\n  x = A[threadIdx.x + 1];"
    assert races(parse(launched(body)), warp_size=2) == {(INTRA_BLOCK, 3, 5, "A")}
    assert races(parse(launched(body)), warp_size=4) == set()


def test_blocks_are_never_ordered(parse):
    body = "  A[threadIdx.x] = 1;\n  __syncthreads();\n  x = A[threadIdx.x + 1];"
    found = races(parse(launched(body, grid=(2, 1, 1))), warp_size=4)
    assert found == {(INTER_BLOCK, 3, 3, "A"), (INTER_BLOCK, 3, 5, "A")}


def test_warp_communicate_shows_intra_warp(corpus_dir):
    prog = parse_file(corpus_dir / "warpCommunicate.mcu")
    sweep = enumerate_verdict(prog, Caps(grid=(1, 1, 1), block=(4, 1, 1), warp_sizes=(2,), values=(1, 4)))
    assert INTRA_WARP in {k[0] for k in sweep.races}


LOCKED = """  g = blockIdx.x * blockDim.x + threadIdx.x;
  atomicCAS(mutex[{i}], 0, 1);
  __threadfence();
  c[0] = c[0] + 1;
  __threadfence();
  atomicExch(mutex[{i}], 0);"""


def test_shared_lock_orders_critical_sections(parse):
    src = launched(LOCKED.format(i="0"), params="int *c, int *mutex", alloc="c,mutex", grid=(2, 1, 1), block=(2, 1, 1))
    assert races(parse(src), warp_size=2) == set()


def test_per_thread_locks_race(parse):
    src = launched(LOCKED.format(i="g"), params="int *c, int *mutex", alloc="c,mutex", grid=(2, 1, 1), block=(2, 1, 1))
    found = races(parse(src), warp_size=2)
    assert {k[0] for k in found} == {INTER_BLOCK, INTRA_WARP}


def test_device_atomics_do_not_race_but_block_atomics_do(parse):
    dev = launched("  atomicAdd(A[0], 1);", grid=(2, 1, 1), block=(1, 1, 1))
    assert races(parse(dev)) == set()
    blk = launched("  atomicAdd_block(A[0], 1);", grid=(2, 1, 1), block=(2, 1, 1))
    assert races(parse(blk), warp_size=2) == {(INTER_BLOCK, 3, 3, "A")}


def test_trap_keeps_earlier_races(parse):
    body = "  A[0] = 1;\n  __syncthreads();\n  A[threadIdx.x + 8] = 2;"
    res = run_concrete(parse(launched(body, grid=(2, 1, 1))), ExecConfig())
    assert res.trap is not None
    assert (INTER_BLOCK, 3, 3, "A") in {r.key for r in res.races}


def test_launches_outside_caps_are_skipped(parse):
    res = run_concrete(parse(launched("  A[threadIdx.x] = 1;", block=(8, 1, 1))), ExecConfig(block=(4, 1, 1)))
    assert res.skipped == 1 and [l.ran for l in res.launches] == [False]


def test_sweep_and_config_json(corpus_dir):
    prog = parse_file(corpus_dir / "reduction.mcu")
    caps = Caps(values=(1, 2), warp_sizes=(2,))
    sweep = enumerate_verdict(prog, caps)
    assert sweep.runs == 2 ** len(input_sites(prog))
    assert sweep.races == {}
    cfg = ExecConfig(inputs=(("input@1:1", 3),), warp_size=2)
    assert cfg.to_json() == {"inputs": {"input@1:1": 3}, "warpSize": 2, "maxGrid": [2, 2, 1], "maxBlock": [4, 1, 1]}
