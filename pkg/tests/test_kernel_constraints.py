from __future__ import annotations

import pytest

from hgrd.kernel_constraints import Options, pair_system, used_domains
from hgrd.prelim import ALL_KINDS, INTER_BLOCK, INTRA_BLOCK, INTRA_WARP
from hgrd.solver import solve, verify_model
from hgrd.solver.terms import Poly, rel

V = Poly.var


def _solve(pair, kind, ctx):
    system = pair_system(pair, kind, ctx)
    return system, solve(system, used_domains(system, ctx))


def _fig1_index(n: int):
    i = V("blockDim.x") * V(f"blockIdx.x#{n}") + V(f"threadIdx.x#{n}")
    j = V("blockDim.y") * V(f"blockIdx.y#{n}") + V(f"threadIdx.y#{n}")
    return i, j


def test_figure1_symbolic_addresses(corpus_dir, setup):
    s = setup((corpus_dir / "copyUppToLow.mcu").read_text())
    ctx = s.ctx()
    load, store = s.accesses
    i, j = _fig1_index(1)
    assert ctx.site(load, 1).address == i * V("p:cols") + j
    assert ctx.site(store, 1).address == j * V("p:cols") + i
    guards = {str(g) for g in ctx.site(store, 1).guards}
    assert guards == {str(rel(">", j, i)), str(rel("<", j, V("p:rows")))}


def test_figure1_host_facts_refute_every_kind(corpus_dir, setup):
    s = setup((corpus_dir / "copyUppToLow.mcu").read_text())
    with_host, without = s.ctx(), s.ctx(host_analysis=False)
    pair = s.pair(7, 7)
    racy_kinds = []
    for kind in ALL_KINDS:
        assert _solve(pair, kind, with_host)[1].is_unsat
        system, res = _solve(pair, kind, without)
        if res.is_sat:
            assert verify_model(system, res.model)
            racy_kinds.append(kind)
    assert INTER_BLOCK in racy_kinds


def test_constant_addresses(setup):
    s = setup("__global__\nvoid k(int *A) {\n  A[0] = 1;\n  A[1] = 2;\n}\nint main() {\n}\n")
    ctx = s.ctx()
    first, second = s.accesses
    assert ctx.site(first, 1).address == Poly.const(0)
    assert ctx.site(first, 1).guards == ()
    for kind in ALL_KINDS:
        assert _solve(s.pair(3, 4), kind, ctx)[1].is_unsat
        assert _solve(s.pair(3, 3), kind, ctx)[1].is_sat


def test_kind_relations(setup):
    s = setup("__global__\nvoid k(int *A) {\n  A[0] = 1;\n}\nint main() {\n}\n")
    ctx = s.ctx(warp_size=4)
    warp = {str(c) for c in ctx.kind_constraints(INTRA_WARP)}
    block = {str(c) for c in ctx.kind_constraints(INTRA_BLOCK)}
    assert str(rel("==", V("wp#1"), V("wp#2"))) in warp
    assert str(rel("!=", V("wp#1"), V("wp#2"))) in block
    assert str(rel("==", V("blockIdx.x#1"), V("blockIdx.x#2"))) in warp & block
    (inter,) = ctx.kind_constraints(INTER_BLOCK)
    assert inter.op == "!="
    with pytest.raises(ValueError):
        ctx.kind_constraints("Elsewhere")


def test_identity_defines_linear_and_warp_ids(setup):
    s = setup("__global__\nvoid k(int *A) {\n  A[threadIdx.x] = 1;\n}\nint main() {\n}\n")
    ctx = s.ctx(warp_size=4)
    system, res = _solve(s.pair(3, 3), INTRA_WARP, ctx)
    assert res.is_sat
    m = res.model
    for n in (1, 2):
        lin = m[f"threadIdx.x#{n}"] + m[f"threadIdx.y#{n}"] * m["blockDim.x"] + m[f"threadIdx.z#{n}"] * m["blockDim.x"] * m["blockDim.y"]
        assert m[f"id#{n}"] == lin and m[f"wp#{n}"] == lin // 4
    # distinct threads of one warp write distinct cells: the only way to collide
    # is through threadIdx.y or .z, which leaves threadIdx.x equal
    assert m["threadIdx.x#1"] == m["threadIdx.x#2"]


def test_reduce_final_needs_host_facts(corpus_dir, setup):
    src = (corpus_dir / "reduction.mcu").read_text()
    s = setup(src, kernel="reduceFinal")
    pair = next(p for p in s.pairs if INTER_BLOCK in p.kinds)
    assert _solve(pair, INTER_BLOCK, s.ctx())[1].is_unsat
    assert _solve(pair, INTER_BLOCK, s.ctx(host_analysis=False))[1].is_sat


def test_domains_follow_options(setup):
    s = setup("__global__\nvoid k(int *A, int n) {\n  A[n] = 1;\n}\nint main() {\n}\n")
    ctx = s.ctx(domain_bound=8, max_grid=3, max_block=5)
    assert ctx.domains["p:n"] == (-8, 7)
    assert ctx.domains["gridDim.y"] == (1, 3)
    assert ctx.domains["blockDim.z"] == (1, 5)
    system = pair_system(s.pair(3, 3), INTER_BLOCK, ctx)
    assert set(used_domains(system, ctx)) >= {"p:n", "gridDim.x", "blockIdx.x#1"}


def test_early_return_guards_later_accesses(setup):
    s = setup("__global__\nvoid k(int *A) {\n  if (threadIdx.x < 2) {\n    return;\n  }\n  A[threadIdx.x - 2] = 1;\n}\nint main() {\n}\n")
    ctx = s.ctx()
    (store,) = s.accesses
    site = ctx.site(store, 1)
    # only threads that skipped the return reach the store
    system = [*site.guards, rel("<", V("threadIdx.x#1"), 2)]
    assert solve(system, {"threadIdx.x#1": (0, 63)}).is_unsat


def test_options_defaults():
    o = Options()
    assert (o.warp_size, o.domain_bound, o.host_analysis) == (32, 1024, True)
