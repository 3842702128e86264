"""Canonical integer polynomial terms with C-style constant division.

A `Poly` is a sum of monomials with integer coefficients. A monomial is a
product of atoms raised to positive powers. Atoms are solver variables or
truncating division / remainder of a polynomial by a positive constant,
matching C semantics (`/` rounds toward zero, `%` takes the dividend's sign).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gcd
from typing import Iterable, Mapping, Union

Interval = tuple[int, int]


def tdiv(a: int, c: int) -> int:
    """Division rounding toward zero."""
    q = abs(a) // abs(c)
    return q if (a >= 0) == (c > 0) else -q


def tmod(a: int, c: int) -> int:
    return a - c * tdiv(a, c)


@dataclass(frozen=True)
class Var:
    name: str

    @property
    def key(self) -> str:
        return self.name

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class DivAtom:
    arg: Poly
    c: int

    @property
    def key(self) -> str:
        return f"({self.arg})/{self.c}"

    def __str__(self) -> str:
        return self.key


@dataclass(frozen=True)
class ModAtom:
    arg: Poly
    c: int

    @property
    def key(self) -> str:
        return f"({self.arg})%{self.c}"

    def __str__(self) -> str:
        return self.key


Atom = Union[Var, DivAtom, ModAtom]
Monomial = tuple[tuple[Atom, int], ...]


def _mono_key(m: Monomial) -> tuple[tuple[str, int], ...]:
    return tuple((a.key, p) for a, p in m)


def _mono_mul(a: Monomial, b: Monomial) -> Monomial:
    powers: dict[str, list] = {}
    for atom, p in (*a, *b):
        if atom.key in powers:
            powers[atom.key][1] += p
        else:
            powers[atom.key] = [atom, p]
    return tuple(sorted(((at, p) for at, p in powers.values()), key=lambda t: t[0].key))


def _mono_str(m: Monomial) -> str:
    parts = []
    for atom, p in m:
        s = atom.key if isinstance(atom, Var) else f"[{atom.key}]"
        parts.append(s if p == 1 else f"{s}^{p}")
    return "*".join(parts)


@dataclass(frozen=True)
class Poly:
    """Immutable polynomial; `terms` is sorted by monomial key, no zero coefficients."""

    terms: tuple[tuple[Monomial, int], ...] = ()
    _hash: int = field(default=0, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_hash", hash(tuple((_mono_key(m), c) for m, c in self.terms)))

    def __hash__(self) -> int:
        return self._hash

    # -- construction ----------------------------------------------------

    @staticmethod
    def from_dict(d: Mapping[Monomial, int]) -> Poly:
        items = [(m, c) for m, c in d.items() if c != 0]
        items.sort(key=lambda t: _mono_key(t[0]))
        return Poly(tuple(items))

    @staticmethod
    def const(c: int) -> Poly:
        if c == 0:
            return Poly()
        unit: Monomial = ()
        return Poly(((unit, c),))

    @staticmethod
    def var(name: str) -> Poly:
        return Poly.atom(Var(name))

    @staticmethod
    def atom(a: Atom) -> Poly:
        mono: Monomial = ((a, 1),)
        return Poly(((mono, 1),))

    def as_dict(self) -> dict[Monomial, int]:
        return dict(self.terms)

    # -- arithmetic ------------------------------------------------------

    def __add__(self, other: Poly | int) -> Poly:
        other = _lift(other)
        d = self.as_dict()
        for m, c in other.terms:
            d[m] = d.get(m, 0) + c
        return Poly.from_dict(d)

    __radd__ = __add__

    def __neg__(self) -> Poly:
        return Poly(tuple((m, -c) for m, c in self.terms))

    def __sub__(self, other: Poly | int) -> Poly:
        return self + (-_lift(other))

    def __rsub__(self, other: Poly | int) -> Poly:
        return _lift(other) - self

    def __mul__(self, other: Poly | int) -> Poly:
        other = _lift(other)
        d: dict[Monomial, int] = {}
        for m1, c1 in self.terms:
            for m2, c2 in other.terms:
                m = _mono_mul(m1, m2)
                d[m] = d.get(m, 0) + c1 * c2
        return Poly.from_dict(d)

    __rmul__ = __mul__

    def scale(self, k: int) -> Poly:
        if k == 0:
            return Poly()
        return Poly(tuple((m, c * k) for m, c in self.terms))

    def exact_div(self, k: int) -> Poly:
        assert all(c % k == 0 for _, c in self.terms)
        return Poly(tuple((m, c // k) for m, c in self.terms))

    def cdiv(self, c: int) -> Poly:
        """C division by a positive constant."""
        if c <= 0:
            raise ValueError("divisor must be positive")
        if c == 1:
            return self
        if self.is_const:
            return Poly.const(tdiv(self.const_value, c))
        if all(k % c == 0 for _, k in self.terms):
            return self.exact_div(c)
        return Poly.atom(DivAtom(self, c))

    def cmod(self, c: int) -> Poly:
        """C remainder by a positive constant."""
        if c <= 0:
            raise ValueError("modulus must be positive")
        if c == 1:
            return Poly()
        if self.is_const:
            return Poly.const(tmod(self.const_value, c))
        if all(k % c == 0 for _, k in self.terms):
            return Poly()
        return Poly.atom(ModAtom(self, c))

    # -- inspection ------------------------------------------------------

    @property
    def is_const(self) -> bool:
        return not self.terms or (len(self.terms) == 1 and self.terms[0][0] == ())

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def const_value(self) -> int:
        for m, c in self.terms:
            if m == ():
                return c
        return 0

    def nonconst_terms(self) -> list[tuple[Monomial, int]]:
        return [(m, c) for m, c in self.terms if m != ()]

    def variables(self) -> set[str]:
        out: set[str] = set()
        for m, _ in self.terms:
            for atom, _p in m:
                _atom_vars(atom, out)
        return out

    def degree(self) -> int:
        return max((sum(p for _, p in m) for m, _ in self.terms), default=0)

    def linear_var(self) -> str | None:
        """Name of the variable if this polynomial is exactly a single variable."""
        if len(self.terms) == 1:
            m, c = self.terms[0]
            if c == 1 and len(m) == 1 and m[0][1] == 1 and isinstance(m[0][0], Var):
                return m[0][0].name
        return None

    # -- evaluation ------------------------------------------------------

    def evaluate(self, model: Mapping[str, int]) -> int:
        total = 0
        for m, c in self.terms:
            v = c
            for atom, p in m:
                v *= _atom_value(atom, model) ** p
            total += v
        return total

    def subst(self, mapping: Mapping[str, Poly]) -> Poly:
        if not mapping or not (self.variables() & mapping.keys()):
            return self
        out = Poly()
        for m, c in self.terms:
            term = Poly.const(c)
            for atom, p in m:
                a = _atom_subst(atom, mapping)
                for _ in range(p):
                    term = term * a
            out = out + term
        return out

    def interval(self, bounds: Mapping[str, Interval]) -> Interval:
        lo = hi = 0
        for m, c in self.terms:
            ilo, ihi = c, c
            for atom, p in m:
                alo, ahi = atom_interval(atom, bounds)
                plo, phi = _ipow(alo, ahi, p)
                ilo, ihi = _imul(ilo, ihi, plo, phi)
            lo += ilo
            hi += ihi
        return lo, hi

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts: list[str] = []
        for m, c in self.terms:
            if m == ():
                body = str(abs(c))
            elif abs(c) == 1:
                body = _mono_str(m)
            else:
                body = f"{abs(c)}*{_mono_str(m)}"
            sign = "-" if c < 0 else "+"
            parts.append(("-" if c < 0 else "") + body if not parts else f" {sign} {body}")
        return "".join(parts)


def _lift(x: Poly | int) -> Poly:
    return x if isinstance(x, Poly) else Poly.const(int(x))


def _atom_vars(atom: Atom, out: set[str]) -> None:
    if isinstance(atom, Var):
        out.add(atom.name)
    else:
        out.update(atom.arg.variables())


def _atom_value(atom: Atom, model: Mapping[str, int]) -> int:
    if isinstance(atom, Var):
        return model[atom.name]
    v = atom.arg.evaluate(model)
    return tdiv(v, atom.c) if isinstance(atom, DivAtom) else tmod(v, atom.c)


def _atom_subst(atom: Atom, mapping: Mapping[str, Poly]) -> Poly:
    if isinstance(atom, Var):
        return mapping.get(atom.name) or Poly.atom(atom)
    arg = atom.arg.subst(mapping)
    return arg.cdiv(atom.c) if isinstance(atom, DivAtom) else arg.cmod(atom.c)


def _imul(a: int, b: int, c: int, d: int) -> Interval:
    ps = (a * c, a * d, b * c, b * d)
    return min(ps), max(ps)


def _ipow(lo: int, hi: int, p: int) -> Interval:
    if p == 1:
        return lo, hi
    a, b = lo**p, hi**p
    if p % 2 == 0 and lo <= 0 <= hi:
        return 0, max(a, b)
    return min(a, b), max(a, b)


def div_interval(lo: int, hi: int, c: int) -> Interval:
    return tdiv(lo, c), tdiv(hi, c)


def mod_interval(lo: int, hi: int, c: int) -> Interval:
    if lo >= 0:
        if hi - lo < c and tmod(lo, c) <= tmod(hi, c):
            return tmod(lo, c), tmod(hi, c)
        return 0, min(c - 1, hi)
    if hi <= 0:
        if hi - lo < c and tmod(lo, c) <= tmod(hi, c):
            return tmod(lo, c), tmod(hi, c)
        return max(-(c - 1), lo), 0
    return max(-(c - 1), lo), min(c - 1, hi)


def atom_interval(atom: Atom, bounds: Mapping[str, Interval]) -> Interval:
    if isinstance(atom, Var):
        return bounds[atom.name]
    lo, hi = atom.arg.interval(bounds)
    if isinstance(atom, DivAtom):
        return div_interval(lo, hi, atom.c)
    return mod_interval(lo, hi, atom.c)


# -- constraints -----------------------------------------------------------

RELATIONS = ("==", "!=", "<", "<=", ">", ">=")


@dataclass(frozen=True)
class Constraint:
    op: str
    lhs: Poly
    rhs: Poly

    def __post_init__(self) -> None:
        if self.op not in RELATIONS:
            raise ValueError(f"unknown relation {self.op!r}")

    def variables(self) -> set[str]:
        return self.lhs.variables() | self.rhs.variables()

    def holds(self, model: Mapping[str, int]) -> bool:
        a = self.lhs.evaluate(model)
        b = self.rhs.evaluate(model)
        return {
            "==": a == b,
            "!=": a != b,
            "<": a < b,
            "<=": a <= b,
            ">": a > b,
            ">=": a >= b,
        }[self.op]

    def subst(self, mapping: Mapping[str, Poly]) -> Constraint:
        return Constraint(self.op, self.lhs.subst(mapping), self.rhs.subst(mapping))

    def negated(self) -> Constraint:
        neg = {"==": "!=", "!=": "==", "<": ">=", "<=": ">", ">": "<=", ">=": "<"}
        return Constraint(neg[self.op], self.lhs, self.rhs)

    def __str__(self) -> str:
        return f"({self.op} {self.lhs} {self.rhs})"


def rel(op: str, lhs: Poly | int, rhs: Poly | int) -> Constraint:
    return Constraint(op, _lift(lhs), _lift(rhs))


# -- normal form -----------------------------------------------------------

EQ, LE, NE = "EQ", "LE", "NE"


@dataclass(frozen=True)
class Norm:
    """`poly kind 0` with kind in {EQ, LE, NE}, gcd-reduced and sign-canonical."""

    poly: Poly
    kind: str

    def __str__(self) -> str:
        sym = {EQ: "==", LE: "<=", NE: "!="}[self.kind]
        return f"{self.poly} {sym} 0"


def to_norm(c: Constraint) -> Norm | bool:
    d = c.lhs - c.rhs
    if c.op == "==":
        return normalize(d, EQ)
    if c.op == "!=":
        return normalize(d, NE)
    if c.op == "<=":
        return normalize(d, LE)
    if c.op == "<":
        return normalize(d + 1, LE)
    if c.op == ">=":
        return normalize(-d, LE)
    return normalize(1 - d, LE)  # lhs > rhs  <=>  rhs - lhs + 1 <= 0


def normalize(p: Poly, kind: str) -> Norm | bool:
    """Reduce `p kind 0`; returns True/False when the constraint is constant."""
    if p.is_const:
        k = p.const_value
        return {EQ: k == 0, LE: k <= 0, NE: k != 0}[kind]
    terms = p.nonconst_terms()
    g = 0
    for _, c in terms:
        g = gcd(g, c)
    k = p.const_value
    if kind == LE:
        body = Poly.from_dict(dict(terms)).exact_div(g)
        return Norm(body + (-((-k) // g)), LE)
    if k % g != 0:
        return kind == NE
    q = p.exact_div(g)
    if q.nonconst_terms()[0][1] < 0:
        q = -q
    return Norm(q, kind)


def norm_holds(n: Norm, model: Mapping[str, int]) -> bool:
    v = n.poly.evaluate(model)
    return {EQ: v == 0, LE: v <= 0, NE: v != 0}[n.kind]


def all_variables(constraints: Iterable[Constraint]) -> set[str]:
    out: set[str] = set()
    for c in constraints:
        out |= c.variables()
    return out
