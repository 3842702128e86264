"""Constraint systems for one access pair, one race kind and one launch.

Two dynamic instances (1 and 2) of the pair's accesses are modeled. Each
instance owns its `threadIdx`/`blockIdx` variables; kernel parameters and
launch dimensions are shared. Solver variable names:

* `threadIdx.x#1`, `blockIdx.y#2`       per-instance builtins
* `blockDim.x`, `gridDim.z`              launch dimensions (shared)
* `p:name`                               scalar kernel parameter (shared)
* `h:<host id>`                          host unknown (see `hgrd.host`)
* `id#n`, `wp#n`                         linear thread id and warp id
* `name@L:C#n`                           value read, phi or iterator in the kernel

Locals are inlined. Values loaded from memory, atomic results and values
merged at joins become fresh bounded variables (an over-approximation).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

from hgrd.errors import UnsupportedKernelExpr
from hgrd.host import ET, BinaryET, Bounds, Constant, HostFacts, LaunchFacts, Unknown
from hgrd.minicu.ast import (
    AXES,
    COMPARISONS,
    ArrayLoad,
    ArrayStore,
    Assert,
    Assign,
    AtomicOp,
    Binary,
    Builtin,
    Expr,
    For,
    If,
    Input,
    IntLit,
    KernelDecl,
    Return,
    SourceLoc,
    Stmt,
    VarRef,
    assigned_vars,
)
from hgrd.prelim import INTER_BLOCK, INTRA_BLOCK, INTRA_WARP, Access, AccessPair
from hgrd.solver.terms import Constraint, Interval, Poly, rel

NEGATE = {"==": "!=", "!=": "==", "<": ">=", "<=": ">", ">": "<=", ">=": "<"}


@dataclass(frozen=True)
class Options:
    warp_size: int = 32
    domain_bound: int = 1024
    max_grid: int = 64
    max_block: int = 64
    host_analysis: bool = True


@dataclass(frozen=True)
class Site:
    """Symbolic view of one access in one instance."""

    address: Poly
    guards: tuple[Constraint, ...]


# -- per-instance symbolic walk ---------------------------------------------


@dataclass
class _Frame:
    env: dict[str, Poly]
    guards: list[Constraint]

    def copy(self) -> _Frame:
        return _Frame(dict(self.env), list(self.guards))


class KernelWalk:
    """Walks a kernel body once for instance `n`, recording every access site."""

    def __init__(self, kernel: KernelDecl, n: int, opts: Options, domains: dict[str, Interval]) -> None:
        self.kernel = kernel
        self.n = n
        self.opts = opts
        self.domains = domains
        self.scalars = {p.name for p in kernel.params if not p.is_array}
        self.sites: dict[tuple, Site] = {}
        self._fresh_count: dict[str, int] = {}

    # variables ----------------------------------------------------------

    def fresh(self, base: str, lo: int | None = None, hi: int | None = None) -> Poly:
        b = self.opts.domain_bound
        name = f"{base}#{self.n}"
        k = self._fresh_count.get(name, 0)
        self._fresh_count[name] = k + 1
        if k:
            name = f"{base}.{k}#{self.n}"
        self.domains[name] = (-b if lo is None else lo, b - 1 if hi is None else hi)
        return Poly.var(name)

    def builtin(self, e: Builtin) -> Poly:
        if e.name in ("threadIdx", "blockIdx"):
            return Poly.var(f"{e.name}.{e.axis}#{self.n}")
        return Poly.var(f"{e.name}.{e.axis}")

    # expressions --------------------------------------------------------

    def value(self, e: Expr, fr: _Frame) -> Poly:
        if isinstance(e, IntLit):
            return Poly.const(e.value)
        if isinstance(e, VarRef):
            if e.name in fr.env:
                return fr.env[e.name]
            if e.name in self.scalars:
                return Poly.var(f"p:{e.name}")
            # declared without a value
            return self.fresh(f"{e.name}@{e.loc.line}:{e.loc.column}")
        if isinstance(e, Builtin):
            return self.builtin(e)
        if isinstance(e, ArrayLoad):
            return self.fresh(f"{e.array}@{e.loc.line}:{e.loc.column}")
        if isinstance(e, Binary):
            if e.op in COMPARISONS or e.op in ("&&", "||"):
                return self.fresh(f"cmp@{e.loc.line}:{e.loc.column}", 0, 1)
            a = self.value(e.left, fr)
            b = self.value(e.right, fr)
            if e.op == "+":
                return a + b
            if e.op == "-":
                return a - b
            if e.op == "*":
                return a * b
            if not b.is_const or b.const_value == 0:
                return self.fresh(f"div@{e.loc.line}:{e.loc.column}")
            c = b.const_value
            if e.op == "/":
                q = a.cdiv(abs(c))
                return q if c > 0 else -q
            return a.cmod(abs(c))
        if isinstance(e, Input):
            raise UnsupportedKernelExpr("__input() is host-only", e.loc)
        raise UnsupportedKernelExpr(f"unsupported kernel expression {type(e).__name__}", getattr(e, "loc", None))

    def facts(self, e: Expr, fr: _Frame, positive: bool = True) -> list[Constraint]:
        """Constraints implied by `e` being true (or false); disjunctions are dropped."""
        if isinstance(e, Binary) and e.op in COMPARISONS:
            op = e.op if positive else NEGATE[e.op]
            return [rel(op, self.value(e.left, fr), self.value(e.right, fr))]
        if isinstance(e, Binary) and e.op in ("&&", "||"):
            if (e.op == "&&") == positive:
                return self.facts(e.left, fr, positive) + self.facts(e.right, fr, positive)
            return []
        v = self.value(e, fr)
        return [rel("!=" if positive else "==", v, 0)]

    # statements ---------------------------------------------------------

    def record_loads(self, e: Expr, fr: _Frame) -> None:
        stack = [e]
        while stack:
            x = stack.pop()
            if isinstance(x, ArrayLoad):
                self.sites[("load", id(x))] = Site(self.value(x.index, fr), tuple(fr.guards))
                stack.append(x.index)
            elif isinstance(x, Binary):
                stack.extend((x.left, x.right))

    def run(self) -> KernelWalk:
        self.block(self.kernel.body, _Frame({}, []))
        return self

    def block(self, body: tuple[Stmt, ...], fr: _Frame) -> _Frame | None:
        """Walk a statement list; None when every path has returned."""
        cur: _Frame | None = fr
        for stmt in body:
            if cur is None:
                break
            cur = self.stmt(stmt, cur)
        return cur

    def stmt(self, stmt: Stmt, fr: _Frame) -> _Frame | None:
        if isinstance(stmt, Assign):
            if stmt.value is None:
                fr.env[stmt.target] = self.fresh(f"{stmt.target}@{stmt.loc.line}:{stmt.loc.column}")
            else:
                self.record_loads(stmt.value, fr)
                fr.env[stmt.target] = self.value(stmt.value, fr)
        elif isinstance(stmt, ArrayStore):
            self.record_loads(stmt.value, fr)
            self.record_loads(stmt.index, fr)
            self.sites[("stmt", stmt.sid)] = Site(self.value(stmt.index, fr), tuple(fr.guards))
        elif isinstance(stmt, AtomicOp):
            self.record_loads(stmt.index, fr)
            for op in stmt.operands:
                self.record_loads(op, fr)
            self.sites[("stmt", stmt.sid)] = Site(self.value(stmt.index, fr), tuple(fr.guards))
            if stmt.target is not None:
                fr.env[stmt.target] = self.fresh(f"{stmt.target}@{stmt.loc.line}:{stmt.loc.column}")
        elif isinstance(stmt, If):
            return self.branch(stmt, fr)
        elif isinstance(stmt, For):
            return self.loop(stmt, fr)
        elif isinstance(stmt, Return):
            return None
        elif isinstance(stmt, Assert):
            self.record_loads(stmt.cond, fr)
        return fr

    def branch(self, stmt: If, fr: _Frame) -> _Frame | None:
        self.record_loads(stmt.cond, fr)
        then_fr = fr.copy()
        then_fr.guards += self.facts(stmt.cond, fr, True)
        else_fr = fr.copy()
        else_fr.guards += self.facts(stmt.cond, fr, False)
        outs = [self.block(stmt.then, then_fr)]
        outs.append(self.block(stmt.orelse, else_fr) if stmt.orelse is not None else else_fr)
        live = [o for o in outs if o is not None]
        if not live:
            return None
        if len(live) == 1:
            # the other side returned: its guard negation holds from here on
            return live[0]
        merged = _Frame(dict(fr.env), list(fr.guards))
        for name in sorted(set(live[0].env) | set(live[1].env)):
            a, b = live[0].env.get(name), live[1].env.get(name)
            if a is not None and a == b:
                merged.env[name] = a
            else:
                merged.env[name] = self.fresh(f"{name}@J{stmt.loc.line}:{stmt.loc.column}")
        return merged

    def loop(self, stmt: For, fr: _Frame) -> _Frame:
        tag = f"{stmt.loc.line}:{stmt.loc.column}"
        self.record_loads(stmt.init, fr)
        init = self.value(stmt.init, fr)
        body_fr = fr.copy()
        for name in sorted(assigned_vars(stmt.body) - {stmt.var}):
            body_fr.env[name] = self.fresh(f"{name}@L{tag}")
        step = _const_step(stmt)
        if step:
            t = self.fresh(f"{stmt.var}.t@L{tag}", 0, self.opts.domain_bound)
            body_fr.env[stmt.var] = init + t.scale(step)
        else:
            body_fr.env[stmt.var] = self.fresh(f"{stmt.var}@L{tag}")
        self.record_loads(stmt.cond, body_fr)
        body_fr.guards += self.facts(stmt.cond, body_fr, True)
        end = self.block(stmt.body, body_fr)
        if end is not None:
            self.record_loads(stmt.step, end)
        after = fr.copy()
        for name in sorted(assigned_vars(stmt.body) | {stmt.var}):
            after.env[name] = self.fresh(f"{name}@A{tag}")
        return after


def _const_step(stmt: For) -> int:
    s = stmt.step
    if isinstance(s, Binary) and isinstance(s.left, VarRef) and s.left.name == stmt.var and isinstance(s.right, IntLit):
        if s.op == "+":
            return s.right.value
        if s.op == "-":
            return -s.right.value
    return 0


def site_key(access: Access) -> tuple:
    if access.expr is not None:
        return ("load", id(access.expr))
    return ("stmt", access.stmt.sid)


# -- host facts --------------------------------------------------------------


class _HostEncoder:
    def __init__(self, ctx: SolverContext) -> None:
        self.ctx = ctx

    def poly(self, et: ET) -> Poly:
        if isinstance(et, Constant):
            return Poly.const(et.value)
        if isinstance(et, Unknown):
            return self.ctx.host_var(et.id)
        if isinstance(et, Bounds):
            return self.ctx.host_var(et.iterator)
        if et.op in COMPARISONS or et.op in ("&&", "||"):
            return self.ctx.fresh_var("h:cmp", 0, 1)
        a, b = self.poly(et.left), self.poly(et.right)
        if et.op == "+":
            return a + b
        if et.op == "-":
            return a - b
        if et.op == "*":
            return a * b
        if not b.is_const or b.const_value == 0:
            return self.ctx.fresh_var("h:div")
        c = b.const_value
        if et.op == "/":
            q = a.cdiv(abs(c))
            return q if c > 0 else -q
        return a.cmod(abs(c))

    def facts(self, et: ET, positive: bool = True) -> list[Constraint]:
        if isinstance(et, BinaryET) and et.op in COMPARISONS:
            op = et.op if positive else NEGATE[et.op]
            return [rel(op, self.poly(et.left), self.poly(et.right))]
        if isinstance(et, BinaryET) and et.op in ("&&", "||"):
            if (et.op == "&&") == positive:
                return self.facts(et.left, positive) + self.facts(et.right, positive)
            return []
        return [rel("!=" if positive else "==", self.poly(et), 0)]


# -- the context ---------------------------------------------------------------


@dataclass
class SolverContext:
    """Shared variables and cached instance walks for one launch of one kernel."""

    kernel: KernelDecl
    launch: LaunchFacts | None
    facts: HostFacts | None
    opts: Options = field(default_factory=Options)
    domains: dict[str, Interval] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self._walks: dict[int, KernelWalk] = {}
        self._host: list[Constraint] | None = None
        self._fresh = 0
        for d in AXES:
            self.domains[f"gridDim.{d}"] = (1, self.opts.max_grid)
            self.domains[f"blockDim.{d}"] = (1, self.opts.max_block)
        b = self.opts.domain_bound
        for p in self.kernel.params:
            if not p.is_array:
                self.domains[f"p:{p.name}"] = (-b, b - 1)

    @property
    def warp_size(self) -> int:
        return self.opts.warp_size

    def host_var(self, uid: str) -> Poly:
        name = f"h:{uid}"
        b = self.opts.domain_bound
        self.domains.setdefault(name, (-b, b - 1))
        return Poly.var(name)

    def fresh_var(self, base: str, lo: int | None = None, hi: int | None = None) -> Poly:
        b = self.opts.domain_bound
        self._fresh += 1
        name = f"{base}.{self._fresh}"
        self.domains[name] = (-b if lo is None else lo, b - 1 if hi is None else hi)
        return Poly.var(name)

    def walk(self, n: int) -> KernelWalk:
        if n not in self._walks:
            self._walks[n] = KernelWalk(self.kernel, n, self.opts, self.domains).run()
        return self._walks[n]

    def site(self, access: Access, n: int) -> Site:
        site = self.walk(n).sites.get(site_key(access))
        if site is None:  # unreachable statement: no instance exists
            return Site(Poly.const(0), (rel("==", 0, 1),))
        return site

    # identities ---------------------------------------------------------

    def thread_vars(self, n: int) -> dict[str, Poly]:
        g, t = self.opts.max_grid, self.opts.max_block
        out = {}
        for d in AXES:
            self.domains[f"threadIdx.{d}#{n}"] = (0, t - 1)
            self.domains[f"blockIdx.{d}#{n}"] = (0, g - 1)
            out[f"threadIdx.{d}"] = Poly.var(f"threadIdx.{d}#{n}")
            out[f"blockIdx.{d}"] = Poly.var(f"blockIdx.{d}#{n}")
        hi = t * t * t
        self.domains[f"id#{n}"] = (0, hi - 1)
        self.domains[f"wp#{n}"] = (0, (hi - 1) // self.warp_size)
        out["id"] = Poly.var(f"id#{n}")
        out["wp"] = Poly.var(f"wp#{n}")
        return out

    def identity(self, n: int) -> list[Constraint]:
        """Grid membership plus the definitions of id and wp for instance n."""
        v = self.thread_vars(n)
        bdx, bdy, bdz = (Poly.var(f"blockDim.{d}") for d in AXES)
        out: list[Constraint] = []
        for d in AXES:
            out.append(rel(">=", v[f"blockIdx.{d}"], 0))
            out.append(rel("<", v[f"blockIdx.{d}"], Poly.var(f"gridDim.{d}")))
            out.append(rel(">=", v[f"threadIdx.{d}"], 0))
            out.append(rel("<", v[f"threadIdx.{d}"], Poly.var(f"blockDim.{d}")))
        linear = v["threadIdx.x"] + v["threadIdx.y"] * bdx + v["threadIdx.z"] * bdx * bdy
        out.append(rel("==", v["id"], linear))
        out.append(rel(">=", v["id"], 0))
        out.append(rel("<", v["id"], bdx * bdy * bdz))
        out.append(rel("==", v["wp"], v["id"].cdiv(self.warp_size)))
        return out

    def block_linear(self, n: int) -> Poly:
        gdx, gdy = Poly.var("gridDim.x"), Poly.var("gridDim.y")
        bx, by, bz = (Poly.var(f"blockIdx.{d}#{n}") for d in AXES)
        return bx + by * gdx + bz * gdx * gdy

    def kind_constraints(self, kind: str) -> list[Constraint]:
        if kind == INTER_BLOCK:
            return [rel("!=", self.block_linear(1), self.block_linear(2))]
        same_block = [rel("==", Poly.var(f"blockIdx.{d}#1"), Poly.var(f"blockIdx.{d}#2")) for d in AXES]
        id1, id2 = Poly.var("id#1"), Poly.var("id#2")
        wp1, wp2 = Poly.var("wp#1"), Poly.var("wp#2")
        if kind == INTRA_BLOCK:
            return same_block + [rel("!=", id1, id2), rel("!=", wp1, wp2)]
        if kind == INTRA_WARP:
            return same_block + [rel("!=", id1, id2), rel("==", wp1, wp2)]
        raise ValueError(kind)

    # host ---------------------------------------------------------------

    def host_constraints(self) -> list[Constraint]:
        if self._host is None:
            self._host = emit_host_constraints(self.facts, self.launch, self) if self.opts.host_analysis else []
        return self._host


def emit_host_constraints(facts: HostFacts | None, launch: LaunchFacts | None, ctx: SolverContext) -> list[Constraint]:
    """Constraints for the five classes of host facts at one launch site."""
    if facts is None or launch is None:
        return []
    enc = _HostEncoder(ctx)
    out: list[Constraint] = []
    # (1) asserts on the path to the launch
    for a in launch.asserts:
        out += enc.facts(a)
    # (2) launch dimensions
    for d, g, b in zip(AXES, launch.grid, launch.block):
        out.append(rel("==", Poly.var(f"gridDim.{d}"), enc.poly(g)))
        out.append(rel("==", Poly.var(f"blockDim.{d}"), enc.poly(b)))
    # (3) arguments share one solver variable per host origin
    for p, et in zip(ctx.kernel.params, launch.args):
        if p.is_array:
            continue
        pv = Poly.var(f"p:{p.name}")
        out.append(rel("==", pv, enc.poly(et)))
        # (5) anything computed from an allocation size is positive
        if not isinstance(et, Bounds) and et.origins & launch.alloc_vars:
            out.append(rel(">=", pv, 1))
    # (4) loop iterators reachable from the launch
    for it in launch.iterators:
        k = ctx.host_var(it.id)
        if it.direction > 0:
            out.append(rel(">=", k, enc.poly(it.init)))
        elif it.direction < 0:
            out.append(rel("<=", k, enc.poly(it.init)))
        for op, bound in it.conds:
            out.append(rel(op, k, enc.poly(bound)))
    return out


def symbolic_address(access: Access, instance: int, ctx: SolverContext) -> tuple[Poly, list[Constraint]]:
    site = ctx.site(access, instance)
    return site.address, list(site.guards)


def emit_identity_constraints(pair: AccessPair, kind: str, ctx: SolverContext) -> list[Constraint]:
    """Address equality plus the thread-identity relation for `kind`."""
    a1, _ = symbolic_address(pair.first, 1, ctx)
    a2, _ = symbolic_address(pair.second, 2, ctx)
    return [rel("==", a1, a2), *ctx.identity(1), *ctx.identity(2), *ctx.kind_constraints(kind)]


def pair_system(pair: AccessPair, kind: str, ctx: SolverContext) -> list[Constraint]:
    """The full system whose satisfiability means `pair` may race as `kind`."""
    _, g1 = symbolic_address(pair.first, 1, ctx)
    _, g2 = symbolic_address(pair.second, 2, ctx)
    return [*ctx.host_constraints(), *g1, *g2, *emit_identity_constraints(pair, kind, ctx)]


def used_domains(constraints: list[Constraint], ctx: SolverContext) -> dict[str, Interval]:
    names: set[str] = set()
    for c in constraints:
        names |= c.variables()
    return {n: ctx.domains[n] for n in sorted(names)}


def iter_sites(ctx: SolverContext, accesses: list[Access], n: int = 1) -> Iterator[tuple[Access, Site]]:
    for a in accesses:
        yield a, ctx.site(a, n)


def describe(site: Site, loc: SourceLoc) -> str:
    guards = " && ".join(str(g) for g in site.guards) or "true"
    return f"{loc.line}:{loc.column} addr {site.address} when {guards}"

