"""Equivalence-preserving rewrites applied before search.

Three rewrites run to a fixpoint:

* single-variable constraints are folded into that variable's bounds, and
  variables with a single remaining value are replaced by it;
* linear equalities `x = y1 + ... + k` with a unit coefficient on `x`
  eliminate `x` (its domain becomes two constraints on the rest);
* a radix split turns `m*Q + R == 0` into `Q == 0 and R == 0` once `m >= 1`
  and `|R| < m` are proven for every solution of the current system.

The radix split is what lets row-major addresses such as `j*cols + i`
be compared without enumerating `cols`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from hgrd.solver import _pysearch
from hgrd.solver.flat import flatten
from hgrd.solver.lp import relaxation_infeasible
from hgrd.solver.terms import EQ, LE, Interval, Norm, Poly, Var, normalize

MAX_REFUTES = 48
REFUTE_NODES = 400


@dataclass
class Presolved:
    norms: list[Norm]
    bounds: dict[str, Interval]
    # (variable, replacement) in elimination order
    elim: list[tuple[str, Poly]] = field(default_factory=list)
    unsat: bool = False
    refutes: int = 0


class _Unsat(Exception):
    pass


def refute(norms: list[Norm], bounds: dict[str, Interval], nodes: int = REFUTE_NODES) -> bool:
    """True only if `norms` is proven unsatisfiable within `bounds`."""
    fs = flatten(norms, bounds)
    lo, hi = list(fs.lo), list(fs.hi)
    if any(a > b for a, b in zip(lo, hi)) or not _pysearch.propagate(fs, lo, hi, 50_000):
        return True
    if relaxation_infeasible(fs, lo, hi):
        return True
    fs.lo, fs.hi = lo, hi
    status, _, _ = _pysearch.search(fs, nodes, 1.0)
    return status == _pysearch.UNSAT


class _Presolver:
    def __init__(self, norms: list[Norm], bounds: dict[str, Interval]) -> None:
        self.work = list(norms)
        self.bounds = dict(bounds)
        self.elim: list[tuple[str, Poly]] = []
        self.refutes = 0

    # -- helpers ---------------------------------------------------------

    def add(self, out: list[Norm], n: Norm | bool) -> None:
        if n is False:
            raise _Unsat
        if n is not True:
            out.append(n)

    def tighten(self, x: str, lo: int, hi: int) -> None:
        olo, ohi = self.bounds[x]
        lo, hi = max(lo, olo), min(hi, ohi)
        if lo > hi:
            raise _Unsat
        self.bounds[x] = (lo, hi)

    def substitute(self, x: str, rest: Poly) -> None:
        lo, hi = self.bounds[x]
        mapping = {x: rest}
        out: list[Norm] = []
        for n in self.work:
            self.add(out, normalize(n.poly.subst(mapping), n.kind) if x in n.poly.variables() else n)
        self.add(out, normalize(Poly.const(lo) - rest, LE))
        self.add(out, normalize(rest - hi, LE))
        self.work = out
        self.elim.append((x, rest))

    # -- rewrites --------------------------------------------------------

    def absorb(self) -> bool:
        changed = False
        out: list[Norm] = []
        for n in self.work:
            single = _single_var(n.poly)
            if single is None:
                out.append(n)
                continue
            x, a, k = single
            lo, hi = self.bounds[x]
            if n.kind == EQ:
                if (-k) % a:
                    raise _Unsat
                self.tighten(x, -k // a, -k // a)
            elif n.kind == LE:
                if a > 0:
                    self.tighten(x, lo, (-k) // a)
                else:
                    self.tighten(x, -(k // a), hi)
            elif (-k) % a == 0 and lo <= -k // a <= hi:
                v = -k // a
                if v == lo:
                    self.tighten(x, lo + 1, hi)
                elif v == hi:
                    self.tighten(x, lo, hi - 1)
                else:
                    out.append(n)
                    continue
            changed = True
        self.work = out
        for x in sorted(_vars(self.work)):
            lo, hi = self.bounds[x]
            if lo == hi:
                self.substitute(x, Poly.const(lo))
                changed = True
        return changed

    def eliminate_linear(self) -> bool:
        for n in self.work:
            if n.kind != EQ:
                continue
            cand = _linear_pivot(n.poly)
            if cand is not None:
                x, rest = cand
                self.substitute(x, rest)
                return True
        return False

    def propagated_bounds(self) -> dict[str, Interval]:
        fs = flatten(self.work, self.bounds)
        lo, hi = list(fs.lo), list(fs.hi)
        if not _pysearch.propagate(fs, lo, hi, 50_000):
            raise _Unsat
        for i in range(fs.n_base):
            self.bounds[fs.names[i]] = (lo[i], hi[i])
        return self.bounds

    def radix_split(self) -> bool:
        bounds = self.propagated_bounds()
        for idx, n in enumerate(self.work):
            if n.kind != EQ or len(n.poly.nonconst_terms()) < 2:
                continue
            for m, q, r in _radix_candidates(n.poly):
                if not self.proves_radix(m, r, bounds):
                    continue
                out = self.work[:idx] + self.work[idx + 1 :]
                self.add(out, normalize(q, EQ))
                self.add(out, normalize(r, EQ))
                self.work = out
                return True
        return False

    def proves_radix(self, m: Poly, r: Poly, bounds: dict[str, Interval]) -> bool:
        mlo, _ = m.interval(bounds)
        if mlo < 1:
            return False
        if r.is_zero:
            return True
        rlo, rhi = r.interval(bounds)
        if rhi < mlo and rlo > -mlo:
            return True
        for probe in (m - r, r + m):  # r >= m, then r <= -m
            if self.refutes >= MAX_REFUTES:
                return False
            self.refutes += 1
            extra = normalize(probe, LE)
            if extra is False:
                continue
            system = self.work + ([extra] if extra is not True else [])
            if not refute(system, bounds):
                return False
        return True

    def run(self) -> Presolved:
        try:
            while True:
                while self.absorb() or self.eliminate_linear():
                    pass
                if not self.radix_split():
                    break
            self.propagated_bounds()
        except _Unsat:
            return Presolved([], self.bounds, self.elim, True, self.refutes)
        return Presolved(self.work, self.bounds, self.elim, False, self.refutes)


def presolve(norms: list[Norm], bounds: dict[str, Interval]) -> Presolved:
    return _Presolver(norms, bounds).run()


def _vars(norms: list[Norm]) -> set[str]:
    out: set[str] = set()
    for n in norms:
        out |= n.poly.variables()
    return out


def _single_var(p: Poly) -> tuple[str, int, int] | None:
    """`a*x + k` with x a plain variable, as (x, a, k)."""
    terms = p.nonconst_terms()
    if len(terms) != 1:
        return None
    m, a = terms[0]
    if len(m) == 1 and m[0][1] == 1 and isinstance(m[0][0], Var):
        return m[0][0].name, a, p.const_value
    return None


def _linear_pivot(p: Poly) -> tuple[str, Poly] | None:
    terms = p.nonconst_terms()
    names = []
    for m, a in terms:
        if len(m) != 1 or m[0][1] != 1 or not isinstance(m[0][0], Var):
            return None
        names.append((m[0][0].name, a))
    units = sorted((x for x, a in names if abs(a) == 1), reverse=True)
    if not units:
        return None
    x = units[0]
    a = dict(names)[x]
    # a*x + rest == 0  =>  x == -rest / a
    rest = p - Poly.var(x).scale(a)
    return x, rest.scale(-a)


def _radix_candidates(p: Poly):
    """Yield (m, Q, R) with p == m*Q + R."""
    terms = p.nonconst_terms()
    atoms = {}
    for mono, _ in terms:
        for atom, _pw in mono:
            atoms.setdefault(atom.key, atom)
    for key in sorted(atoms):
        atom = atoms[key]
        qd: dict = {}
        rd: dict = {}
        for mono, c in p.terms:
            new = _divide_mono(mono, key)
            if new is None:
                rd[mono] = c
            else:
                qd[new] = c
        yield Poly.atom(atom), Poly.from_dict(qd), Poly.from_dict(rd)
    coefs = sorted({abs(c) for _, c in terms if abs(c) > 1})
    for g in coefs:
        qd, rd = {}, {}
        for mono, c in p.terms:
            if mono != () and c % g == 0:
                qd[mono] = c // g
            else:
                rd[mono] = c
        if qd and rd:
            yield Poly.const(g), Poly.from_dict(qd), Poly.from_dict(rd)


def _divide_mono(mono, key: str):
    out = []
    found = False
    for atom, pw in mono:
        if atom.key == key:
            found = True
            if pw > 1:
                out.append((atom, pw - 1))
        else:
            out.append((atom, pw))
    return tuple(out) if found else None
