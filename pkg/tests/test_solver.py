from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st
from oracles import random_system

from hgrd.errors import MalformedConstraint
from hgrd.solver import Budget, backend_name, solve, verify_model
from hgrd.solver import _pysearch
from hgrd.solver.flat import flatten
from hgrd.solver.presolve import presolve
from hgrd.solver.terms import Poly, rel, to_norm

x, y, a = Poly.var("x"), Poly.var("y"), Poly.var("a")


def test_forced_single_point():
    cs = [rel("==", x, y), rel("<", x, 1), rel(">=", x, 0), rel(">=", y, 0)]
    r = solve(cs, {"x": (0, 63), "y": (0, 63)})
    assert r.is_sat and r.model == {"x": 0, "y": 0}


def test_contradiction():
    assert solve([rel("!=", a, a)], {"a": (0, 3)}).is_unsat


def test_figure1_system_scaled():
    # i1*cols + j1 == j2*cols + i2 style aliasing with and without rows == cols
    r, c = Poly.var("rows"), Poly.var("cols")
    i1, j1, i2, j2 = (Poly.var(n) for n in ("i1", "j1", "i2", "j2"))
    base = [
        rel("==", j1 * c + i1, i2 * c + j2),
        rel(">", j1, i1), rel("<", j1, r), rel(">", j2, i2), rel("<", j2, r),
        rel("<", i1, r), rel("<", i2, r),
        rel("!=", i1 * 8 + j1, i2 * 8 + j2),
    ]
    dom = {n: (0, 7) for n in ("rows", "cols", "i1", "j1", "i2", "j2")}
    assert solve(base, dom).is_sat
    assert solve(base + [rel("==", r, c)], dom).is_unsat


def test_division_and_modulo_follow_c():
    assert solve([rel("==", x.cdiv(4), -1)], {"x": (-8, -1)}).model["x"] in range(-7, -3)
    r = solve([rel("==", x.cmod(3), -2)], {"x": (-10, 10)})
    assert r.is_sat and r.model["x"] % 3 == 1 and r.model["x"] < 0


def test_verify_model_negative_case():
    cs = [rel("<", x, 3)]
    assert verify_model(cs, {"x": 2})
    assert not verify_model(cs, {"x": 3})
    assert not verify_model(cs, {})


def test_malformed_inputs():
    with pytest.raises(MalformedConstraint):
        solve([rel("<", x, 3)], {})
    with pytest.raises(MalformedConstraint):
        solve([rel("<", x, 3)], {"x": (4, 1)})


def test_budget_exhaustion_is_unknown():
    # pigeonhole-flavoured, hopeless for a tiny node budget
    vs = [Poly.var(f"v{i}") for i in range(7)]
    cs = [rel("!=", p, q) for i, p in enumerate(vs) for q in vs[i + 1:]]
    cs.append(rel("!=", vs[0] * vs[1], vs[2] * vs[3] + 1))
    r = solve(cs, {f"v{i}": (0, 5) for i in range(7)}, Budget(max_nodes=3, time_limit=5))
    assert r.status in ("unknown", "unsat")
    assert r.status == "unknown"


def test_random_systems_match_enumeration():
    for seed in range(200):
        rs = random_system(seed)
        r = solve(rs.constraints(), rs.domains)
        assert r.status == ("sat" if rs.satisfiable() else "unsat"), seed
        if r.is_sat:
            assert verify_model(rs.constraints(), r.model)
            assert rs.holds(r.model)


def _search_both(cs, dom):
    norms = [to_norm(c) for c in cs]
    if any(n is False for n in norms):
        return None
    pre = presolve([n for n in norms if n is not True], dict(dom))
    if pre.unsat:
        return None
    fs = flatten(pre.norms, pre.bounds)
    lo, hi = list(fs.lo), list(fs.hi)
    if not _pysearch.propagate(fs, lo, hi):
        return None
    fs.lo, fs.hi = lo, hi
    return fs


def test_native_and_python_kernels_agree():
    if backend_name() != "native":
        pytest.skip("compiled kernel not built")
    from hgrd.solver import _search

    for seed in range(120):
        rs = random_system(seed)
        fs = _search_both(rs.constraints(), rs.domains)
        if fs is None:
            continue
        c1, _, _ = _search.search(fs, 100_000, 10.0)
        c2, _, _ = _pysearch.search(fs, 100_000, 10.0)
        assert c1 == c2, seed


def test_force_python_gives_same_status():
    for seed in range(60):
        rs = random_system(seed)
        assert solve(rs.constraints(), rs.domains).status == solve(rs.constraints(), rs.domains, force_python=True).status


@settings(max_examples=60, deadline=None)
@given(
    st.integers(-20, 20), st.integers(1, 6), st.integers(-10, 10),
    st.sampled_from(["==", "!=", "<", "<=", ">", ">="]),
)
def test_linear_atoms_against_enumeration(k, c, rhs, op):
    cs = [rel(op, x * k + x.cdiv(c), rhs)]
    dom = {"x": (-15, 15)}
    expect = any(cs[0].holds({"x": v}) for v in range(-15, 16))
    r = solve(cs, dom)
    assert r.is_sat == expect
    if r.is_sat:
        assert verify_model(cs, r.model)
