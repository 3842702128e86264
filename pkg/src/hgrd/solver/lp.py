"""Linear relaxation of a `FlatSystem`, used only to refute.

Products get McCormick envelopes and truncating divisions get their
remainder band, so every integer solution of the flat system is a point of
the relaxation. An infeasible relaxation therefore proves unsatisfiability;
a feasible one proves nothing.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linprog

from hgrd.solver.flat import DIV, LIN_EQ, LIN_LE, LIN_NE, MUL, FlatSystem


def relaxation_infeasible(fs: FlatSystem, lo: list[int] | None = None, hi: list[int] | None = None) -> bool:
    lo = fs.lo if lo is None else lo
    hi = fs.hi if hi is None else hi
    n = fs.n_vars
    if n == 0:
        return False
    ub_rows: list[dict[int, float]] = []
    ub_rhs: list[float] = []
    eq_rows: list[dict[int, float]] = []
    eq_rhs: list[float] = []

    def le(coefs: dict[int, float], rhs: float) -> None:
        ub_rows.append(coefs)
        ub_rhs.append(rhs)

    for c in range(fs.n_cons):
        row = fs.constraint(c)
        code = row[0]
        if code == LIN_NE:
            continue
        if code in (LIN_EQ, LIN_LE):
            coefs: dict[int, float] = {}
            for j in range(row[1]):
                v, a = row[3 + 2 * j], row[4 + 2 * j]
                coefs[v] = coefs.get(v, 0) + a
            if code == LIN_EQ:
                eq_rows.append(coefs)
                eq_rhs.append(-row[2])
            else:
                le(coefs, -row[2])
        elif code == MUL:
            _, z, x, y = row
            xl, xh, yl, yh = lo[x], hi[x], lo[y], hi[y]
            # z >= xl*y + yl*x - xl*yl  and  z >= xh*y + yh*x - xh*yh
            for a, b in ((xl, yl), (xh, yh)):
                co = _merge((x, b), (y, a), (z, -1))
                le(co, a * b)
            # z <= xh*y + yl*x - xh*yl  and  z <= xl*y + yh*x - xl*yh
            for a, b in ((xh, yl), (xl, yh)):
                co = _merge((x, -b), (y, -a), (z, 1))
                le(co, -a * b)
        elif code == DIV:
            _, z, x, cc = row
            low, high = -(cc - 1), cc - 1
            if lo[x] >= 0:
                low = 0
            if hi[x] <= 0:
                high = 0
            le({x: 1, z: -cc}, high)
            le({x: -1, z: cc}, -low)
        # MOD rows are covered by their linked DIV and linear rows
    if not ub_rows and not eq_rows:
        return False
    a_ub = _dense(ub_rows, n) if ub_rows else None
    a_eq = _dense(eq_rows, n) if eq_rows else None
    res = linprog(
        np.zeros(n),
        A_ub=a_ub,
        b_ub=np.array(ub_rhs, dtype=float) if ub_rows else None,
        A_eq=a_eq,
        b_eq=np.array(eq_rhs, dtype=float) if eq_rows else None,
        bounds=list(zip(lo, hi)),
        method="highs",
    )
    return res.status == 2


def _merge(*pairs: tuple[int, int]) -> dict[int, float]:
    # x and y coincide for squares, so coefficients are summed
    out: dict[int, float] = {}
    for v, a in pairs:
        out[v] = out.get(v, 0.0) + a
    return out


def _dense(rows: list[dict[int, float]], n: int) -> np.ndarray:
    m = np.zeros((len(rows), n))
    for i, r in enumerate(rows):
        for v, a in r.items():
            m[i, v] += a
    return m
