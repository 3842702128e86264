"""Flattening of normalized polynomial constraints into primitive constraints.

Primitive constraints over integer variables (base variables first, then
auxiliaries introduced for monomials and division atoms):

* ``LIN_EQ / LIN_LE / LIN_NE``: ``sum(a_i * x_i) + k  (== | <= | !=)  0``
* ``MUL``: ``z = x * y``
* ``DIV``: ``z = x / c`` (C truncation, ``c > 0``)
* ``MOD``: ``z = x % c`` (C remainder, ``c > 0``)

Everything is packed into flat integer lists so the compiled search kernel
and the Python fallback read the same layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from hgrd.solver.terms import EQ, LE, NE, Atom, DivAtom, Interval, Monomial, Norm, Poly, Var, atom_interval

LIN_EQ, LIN_LE, LIN_NE, MUL, DIV, MOD = 0, 1, 2, 3, 4, 5
_KIND_CODE = {EQ: LIN_EQ, LE: LIN_LE, NE: LIN_NE}


@dataclass
class FlatSystem:
    names: list[str]
    lo: list[int]
    hi: list[int]
    n_base: int
    # constraint i occupies data[start[i]:start[i + 1]]
    start: list[int] = field(default_factory=lambda: [0])
    data: list[int] = field(default_factory=list)
    # variable v is watched by constraints watch[wstart[v]:wstart[v + 1]]
    wstart: list[int] = field(default_factory=list)
    watch: list[int] = field(default_factory=list)

    @property
    def n_vars(self) -> int:
        return len(self.names)

    @property
    def n_cons(self) -> int:
        return len(self.start) - 1

    def constraint(self, i: int) -> list[int]:
        return self.data[self.start[i] : self.start[i + 1]]

    def magnitude(self) -> int:
        """Largest absolute value any intermediate linear sum can reach."""
        worst = max((max(abs(a), abs(b)) for a, b in zip(self.lo, self.hi)), default=0)
        for i in range(self.n_cons):
            c = self.constraint(i)
            if c[0] <= LIN_NE:
                n = c[1]
                total = abs(c[2])
                for j in range(n):
                    v, a = c[3 + 2 * j], c[4 + 2 * j]
                    total += abs(a) * max(abs(self.lo[v]), abs(self.hi[v]))
                worst = max(worst, total)
            elif c[0] == MUL:
                _, z, x, y = c
                worst = max(worst, max(abs(self.lo[x]), abs(self.hi[x])) * max(abs(self.lo[y]), abs(self.hi[y])))
        return worst


class Flattener:
    def __init__(self, bounds: dict[str, Interval], base_order: list[str]) -> None:
        self.bounds = bounds
        self.names: list[str] = []
        self.lo: list[int] = []
        self.hi: list[int] = []
        self.index: dict[str, int] = {}
        self.cons: list[list[int]] = []
        for name in base_order:
            self._new(name, *bounds[name])
        self.n_base = len(self.names)

    def _new(self, name: str, lo: int, hi: int) -> int:
        self.index[name] = len(self.names)
        self.names.append(name)
        self.lo.append(lo)
        self.hi.append(hi)
        return self.index[name]

    def atom_var(self, atom: Atom) -> int:
        if isinstance(atom, Var):
            return self.index[atom.name]
        key = "@" + atom.key
        if key in self.index:
            return self.index[key]
        lo, hi = atom_interval(atom, self.bounds)
        x = self.poly_var(atom.arg)
        if isinstance(atom, DivAtom):
            z = self._new(key, lo, hi)
            self.cons.append([DIV, z, x, atom.c])
        else:
            q = self.atom_var(DivAtom(atom.arg, atom.c))
            z = self._new(key, lo, hi)
            self.cons.append([MOD, z, x, atom.c])
            # x == c*q + z ties the remainder to the quotient
            self.cons.append([LIN_EQ, 3, 0, x, 1, q, -atom.c, z, -1])
        return z

    def mono_var(self, mono: Monomial) -> int:
        factors: list[Atom] = []
        for atom, p in mono:
            factors.extend([atom] * p)
        cur = self.atom_var(factors[0])
        prefix: Monomial = ((factors[0], 1),)
        for f in factors[1:]:
            prefix = _extend(prefix, f)
            key = "*" + "*".join(f"{a.key}^{p}" for a, p in prefix)
            if key in self.index:
                cur = self.index[key]
                continue
            y = self.atom_var(f)
            lo, hi = Poly(((prefix, 1),)).interval(self.bounds)
            z = self._new(key, lo, hi)
            self.cons.append([MUL, z, cur, y])
            cur = z
        return cur

    def linear_terms(self, p: Poly) -> tuple[list[tuple[int, int]], int]:
        terms: dict[int, int] = {}
        for m, c in p.nonconst_terms():
            v = self.mono_var(m)
            terms[v] = terms.get(v, 0) + c
        return [(v, a) for v, a in terms.items() if a], p.const_value

    def poly_var(self, p: Poly) -> int:
        name = p.linear_var()
        if name is not None:
            return self.index[name]
        key = "=" + str(p)
        if key in self.index:
            return self.index[key]
        terms, k = self.linear_terms(p)
        lo, hi = p.interval(self.bounds)
        u = self._new(key, lo, hi)
        self.add_linear(LIN_EQ, [(u, -1), *terms], k)
        return u

    def add_linear(self, code: int, terms: list[tuple[int, int]], k: int) -> None:
        row = [code, len(terms), k]
        for v, a in terms:
            row.extend((v, a))
        self.cons.append(row)

    def add_norm(self, n: Norm) -> None:
        terms, k = self.linear_terms(n.poly)
        self.add_linear(_KIND_CODE[n.kind], terms, k)

    def finish(self) -> FlatSystem:
        fs = FlatSystem(list(self.names), list(self.lo), list(self.hi), self.n_base)
        watchers: list[list[int]] = [[] for _ in self.names]
        for i, row in enumerate(self.cons):
            fs.data.extend(row)
            fs.start.append(len(fs.data))
            for v in _row_vars(row):
                if not watchers[v] or watchers[v][-1] != i:
                    watchers[v].append(i)
        for w in watchers:
            fs.wstart.append(len(fs.watch))
            fs.watch.extend(w)
        fs.wstart.append(len(fs.watch))
        return fs


def _extend(prefix: Monomial, atom: Atom) -> Monomial:
    out = list(prefix)
    for i, (a, p) in enumerate(out):
        if a.key == atom.key:
            out[i] = (a, p + 1)
            return tuple(out)
    out.append((atom, 1))
    return tuple(out)


def _row_vars(row: list[int]) -> list[int]:
    code = row[0]
    if code <= LIN_NE:
        return [row[3 + 2 * j] for j in range(row[1])]
    if code == MUL:
        return [row[1], row[2], row[3]]
    return [row[1], row[2]]


def flatten(norms: list[Norm], bounds: dict[str, Interval]) -> FlatSystem:
    """Flatten; base variables are the variables of `norms`, in sorted order."""
    base: set[str] = set()
    for n in norms:
        base |= n.poly.variables()
    f = Flattener(bounds, sorted(base))
    for n in norms:
        f.add_norm(n)
    return f.finish()
