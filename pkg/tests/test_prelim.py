from __future__ import annotations

from hgrd.prelim import ALL_KINDS, INTER_BLOCK, INTRA_BLOCK, INTRA_WARP, LOAD, STORE, generate_access_pairs

MAIN = "int main() {\n}\n"


def kernel(body: str, params: str = "int *A") -> str:
    return f"__global__\nvoid k({params}) {{\n{body}\n}}\n" + MAIN


def test_figure1_accesses_and_pairs(corpus_dir, setup):
    s = setup((corpus_dir / "copyUppToLow.mcu").read_text())
    assert [(a.kind, a.loc.line) for a in s.accesses] == [(LOAD, 7), (STORE, 7)]
    # store/store self-pair and load/store; the load self-pair never races
    assert len(s.pairs) == 2
    assert all(p.kinds == frozenset(ALL_KINDS) for p in s.pairs)


def test_syncthreads_leaves_inter_block(setup):
    s = setup(kernel("  A[threadIdx.x] = 1;\n  __syncthreads();\n  x = A[threadIdx.x + 1];"))
    assert s.pair(3, 5).kinds == {INTER_BLOCK}


def test_syncwarp_leaves_inter_and_intra_block(setup):
    s = setup(kernel("  A[threadIdx.x] = 1;\n  __syncwarp();\n  x = A[threadIdx.x + 1];"))
    assert s.pair(3, 5).kinds == {INTER_BLOCK, INTRA_BLOCK}


def test_barrier_in_branch_does_not_separate(setup):
    s = setup(kernel("  A[threadIdx.x] = 1;\n  if (threadIdx.x < 2) {\n    __syncthreads();\n  }\n  x = A[0];"))
    assert s.pair(3, 7).kinds == frozenset(ALL_KINDS)


def test_loop_back_edge_defeats_barrier(setup):
    # the load of iteration i+1 can follow the store of iteration i without a barrier
    src = kernel("  for (i = 0; i < 4; i = i + 1) {\n    x = A[0];\n    __syncthreads();\n    A[threadIdx.x] = x;\n  }")
    s = setup(src)
    assert INTRA_BLOCK in s.pair(4, 6).kinds
    src2 = kernel(
        "  for (i = 0; i < 4; i = i + 1) {\n    x = A[0];\n    __syncthreads();\n    A[threadIdx.x] = x;\n    __syncthreads();\n  }"
    )
    assert setup(src2).pair(4, 6).kinds == {INTER_BLOCK}


def test_block_atomics_keep_only_inter_block(setup):
    s = setup(kernel("  atomicAdd_block(A[0], 1);\n  atomicAdd_block(A[0], 2);"))
    assert s.pairs and all(p.kinds == {INTER_BLOCK} for p in s.pairs)


def test_device_atomics_never_pair(setup):
    s = setup(kernel("  atomicAdd(A[0], 1);\n  atomicExch(A[0], 2);"))
    assert s.pairs == []
    assert s.accesses and s.dropped == 0  # dropped before the checks even start


def test_mixed_atomic_and_plain_access_pairs(setup):
    s = setup(kernel("  atomicAdd(A[0], 1);\n  x = A[0];"))
    assert s.pair(3, 4).kinds == frozenset(ALL_KINDS)


def test_loads_only_and_distinct_arrays(setup):
    s = setup(kernel("  x = A[0];\n  y = A[1];\n  B[0] = 1;", params="int *A, int *B"))
    assert [(p.first.array, p.first.loc.line) for p in s.pairs] == [("B", 5)]


def test_pair_generation_order_and_self_pairs(setup):
    s = setup(kernel("  A[0] = 1;\n  A[1] = 2;"))
    pairs = generate_access_pairs(s.accesses)
    assert [(p.first.loc.line, p.second.loc.line) for p in pairs] == [(3, 3), (3, 4), (4, 4)]
    assert pairs[0].is_self_pair and not pairs[1].is_self_pair


def test_intra_warp_removed_by_either_barrier(setup):
    for barrier in ("__syncthreads();", "__syncwarp();"):
        s = setup(kernel(f"  A[threadIdx.x] = 1;\n  {barrier}\n  x = A[0];"))
        assert INTRA_WARP not in s.pair(3, 5).kinds
