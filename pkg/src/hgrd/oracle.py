"""Concrete interpreter used as an independent race oracle.

The host program runs for real on bound inputs. Each launch runs every
thread of the grid under a deterministic round-robin scheduler; a thread
runs until it blocks at a barrier or on a lock. Races are detected with
vector clocks: two accesses to the same element race when at least one
writes, they come from different threads, and no happens-before edge
orders them. Edges come from

* `__syncthreads` (whole block) and `__syncwarp` (whole warp);
* release/acquire: a fence followed by `atomicExch` publishes the clock as
  of the fence on the lock cell; a blocking `atomicCAS` statement that
  takes the lock picks those clocks up at the next fence.

Two atomics never race when their scopes cover both threads. Memory starts
zeroed; `cudaMallocPitch` rounds the row width up to a multiple of 4.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator

from hgrd.minicu.ast import (
    AXES,
    Alloc,
    ArrayLoad,
    ArrayStore,
    Assert,
    Assign,
    AtomicOp,
    Barrier,
    Binary,
    Builtin,
    Call,
    Expr,
    Fence,
    For,
    FunctionDecl,
    If,
    Input,
    IntLit,
    KernelDecl,
    Launch,
    Program,
    Return,
    SourceLoc,
    Stmt,
    VarRef,
    assigned_vars,
    stmt_exprs,
    walk_expr,
    walk_stmts,
)
from hgrd.prelim import INTER_BLOCK, INTRA_BLOCK, INTRA_WARP, SCOPES
from hgrd.solver.terms import tdiv, tmod

DEFAULT_VALUES = (0, 1, 2, 3, 127)
STEP_CAP = 20_000
HOST_LOOP_CAP = 1_000


class OracleTrap(Exception):
    """The concrete run cannot continue (out of bounds, deadlock, runaway loop)."""

    def __init__(self, reason: str, loc: SourceLoc | None = None) -> None:
        self.reason = reason
        self.loc = loc
        super().__init__(f"{loc}: {reason}" if loc else reason)


@dataclass(frozen=True)
class ExecConfig:
    """One concrete run. `grid`/`block` cap the launch shapes the host may request."""

    inputs: tuple[tuple[str, int], ...] = ()
    warp_size: int = 32
    grid: tuple[int, int, int] = (2, 2, 1)
    block: tuple[int, int, int] = (4, 1, 1)
    max_threads: int = 64

    def input_map(self) -> dict[str, int]:
        return dict(self.inputs)

    def to_json(self) -> dict:
        return {
            "inputs": {k: v for k, v in self.inputs},
            "warpSize": self.warp_size,
            "maxGrid": list(self.grid),
            "maxBlock": list(self.block),
        }


@dataclass(frozen=True, order=True)
class ObservedRace:
    loc_a: SourceLoc
    loc_b: SourceLoc
    kind: str
    array: str
    address: int = field(compare=False)
    config: ExecConfig | None = field(default=None, compare=False)

    @property
    def key(self) -> tuple[str, int, int, str]:
        return (self.kind, self.loc_a.line, self.loc_b.line, self.array)


@dataclass
class LaunchRecord:
    """What a launch actually received, plus the host values its ETs refer to."""

    loc: SourceLoc
    kernel: str
    grid: tuple[int, int, int]
    block: tuple[int, int, int]
    args: tuple[int | None, ...]  # None for array arguments
    binding: dict[str, int]
    ran: bool


@dataclass
class RunResult:
    races: set[ObservedRace] = field(default_factory=set)
    launches: list[LaunchRecord] = field(default_factory=list)
    trap: str | None = None
    skipped: int = 0


# -- memory ----------------------------------------------------------------


class _Array:
    def __init__(self, name: str, size: int) -> None:
        self.name = name
        self.cells = [0] * max(size, 0)

    def check(self, idx: int, loc: SourceLoc) -> None:
        if not 0 <= idx < len(self.cells):
            raise OracleTrap(f"index {idx} out of bounds for '{self.name}' of size {len(self.cells)}", loc)


@dataclass
class _Rec:
    thread: int
    epoch: int
    write: bool
    loc: SourceLoc
    scope: str | None


@dataclass
class _Release:
    clock: list[int]
    scope: str
    block: int


def _narrower(a: str, b: str) -> str:
    return "Block" if "Block" in (a, b) else "Device"


# -- kernel execution ---------------------------------------------------------


class _Thread:
    def __init__(self, index: int, n: int, block: tuple[int, int, int], tid: tuple[int, int, int], blin: int, lin: int, warp: int) -> None:
        self.index = index
        self.block = block
        self.tid = tid
        self.blin = blin
        self.lin = lin
        self.warp = warp
        self.vc = [0] * n
        self.vc[index] = 1
        self.env: dict[str, int] = {}
        self.fence: tuple[list[int], str] | None = None
        self.pending: tuple[list[_Release], str] | None = None
        self.waiting: str | None = None  # barrier kind while blocked
        self.done = False
        self.steps = 0
        self.spins = 0
        self.gen: Iterator[str] | None = None

    def tick(self) -> None:
        self.vc[self.index] += 1


class _Kernel:
    def __init__(self, kernel: KernelDecl, args: dict[str, int | _Array], grid, block, warp_size: int, config: ExecConfig) -> None:
        self.kernel = kernel
        self.args = args
        self.grid = grid
        self.block = block
        self.ws = warp_size
        self.config = config
        self.history: dict[tuple[int, int], list[_Rec]] = {}
        self.releases: dict[tuple[int, int], list[_Release]] = {}
        self.races: dict[tuple, ObservedRace] = {}
        per_block = block[0] * block[1] * block[2]
        total = per_block * grid[0] * grid[1] * grid[2]
        self.threads: list[_Thread] = []
        for bz, by, bx in itertools.product(range(grid[2]), range(grid[1]), range(grid[0])):
            blin = bx + by * grid[0] + bz * grid[0] * grid[1]
            for tz, ty, tx in itertools.product(range(block[2]), range(block[1]), range(block[0])):
                lin = tx + ty * block[0] + tz * block[0] * block[1]
                t = _Thread(blin * per_block + lin, total, (bx, by, bz), (tx, ty, tz), blin, lin, lin // warp_size)
                self.threads.append(t)

    # expressions

    def eval(self, e: Expr, th: _Thread) -> int:
        if isinstance(e, IntLit):
            return e.value
        if isinstance(e, VarRef):
            if e.name in th.env:
                return th.env[e.name]
            v = self.args.get(e.name, 0)
            return v if isinstance(v, int) else 0
        if isinstance(e, Builtin):
            i = AXES.index(e.axis)
            return {"threadIdx": th.tid, "blockIdx": th.block, "blockDim": self.block, "gridDim": self.grid}[e.name][i]
        if isinstance(e, ArrayLoad):
            idx = self.eval(e.index, th)
            arr = self.array(e.array)
            arr.check(idx, e.loc)
            self.access(arr, e.array, idx, th, False, e.loc, None)
            return arr.cells[idx]
        if isinstance(e, Binary):
            return _binary(e.op, lambda: self.eval(e.left, th), lambda: self.eval(e.right, th))
        raise OracleTrap(f"cannot evaluate {type(e).__name__} in a kernel", getattr(e, "loc", None))

    def array(self, name: str) -> _Array:
        arr = self.args[name]
        assert isinstance(arr, _Array)
        return arr

    # race detection

    def access(self, arr: _Array, name: str, idx: int, th: _Thread, write: bool, loc: SourceLoc, scope: str | None) -> None:
        key = (id(arr), idx)
        recs = self.history.setdefault(key, [])
        for r in recs:
            if r.thread == th.index or not (r.write or write):
                continue
            other = self.threads[r.thread]
            if r.scope is not None and scope is not None:
                if "Block" not in (r.scope, scope) or other.blin == th.blin:
                    continue
            if th.vc[r.thread] >= r.epoch:
                continue
            kind = _classify(other, th)
            a, b = sorted((r.loc, loc))
            rk = (kind, a, b, name)
            if rk not in self.races:
                self.races[rk] = ObservedRace(a, b, kind, name, idx, self.config)
        recs.append(_Rec(th.index, th.vc[th.index], write, loc, scope))

    # statements

    def run_body(self, body: tuple[Stmt, ...], th: _Thread) -> Iterator[str]:
        """Generator; yields 'barrier' or 'spin'. Returns True when the thread returned."""
        for stmt in body:
            th.steps += 1
            if th.steps > STEP_CAP:
                raise OracleTrap("step limit exceeded", stmt.loc)
            if isinstance(stmt, Assign):
                th.env[stmt.target] = 0 if stmt.value is None else self.eval(stmt.value, th)
            elif isinstance(stmt, ArrayStore):
                v = self.eval(stmt.value, th)
                idx = self.eval(stmt.index, th)
                arr = self.array(stmt.array)
                arr.check(idx, stmt.loc)
                self.access(arr, stmt.array, idx, th, True, stmt.loc, None)
                arr.cells[idx] = v
            elif isinstance(stmt, If):
                taken = stmt.then if self.eval(stmt.cond, th) else (stmt.orelse or ())
                if (yield from self.run_body(taken, th)):
                    return True
            elif isinstance(stmt, For):
                th.env[stmt.var] = self.eval(stmt.init, th)
                while self.eval(stmt.cond, th):
                    if (yield from self.run_body(stmt.body, th)):
                        return True
                    th.env[stmt.var] = self.eval(stmt.step, th)
                    th.steps += 1
                    if th.steps > STEP_CAP:
                        raise OracleTrap("step limit exceeded", stmt.loc)
            elif isinstance(stmt, Barrier):
                th.waiting = stmt.kind
                yield "barrier"
            elif isinstance(stmt, Fence):
                self.fence(stmt, th)
            elif isinstance(stmt, AtomicOp):
                yield from self.atomic(stmt, th)
            elif isinstance(stmt, Return):
                return True
        return False

    def fence(self, stmt: Fence, th: _Thread) -> None:
        scope = SCOPES[stmt.scope]
        if th.pending is not None:
            rels, cas_scope = th.pending
            eff = _narrower(cas_scope, scope)
            for r in rels:
                if _narrower(eff, r.scope) == "Device" or r.block == th.blin:
                    th.vc = [max(a, b) for a, b in zip(th.vc, r.clock)]
            th.pending = None
        th.fence = (list(th.vc), scope)
        th.tick()

    def atomic(self, stmt: AtomicOp, th: _Thread) -> Iterator[str]:
        idx = self.eval(stmt.index, th)
        ops = [self.eval(o, th) for o in stmt.operands]
        arr = self.array(stmt.array)
        arr.check(idx, stmt.loc)
        scope = SCOPES[stmt.scope]
        key = (id(arr), idx)
        if stmt.op == "CAS" and stmt.target is None:
            # statement form: spin until the compare succeeds
            while arr.cells[idx] != ops[0]:
                th.spins += 1
                if th.spins > STEP_CAP:
                    raise OracleTrap("spin limit exceeded", stmt.loc)
                yield "spin"
            self.access(arr, stmt.array, idx, th, True, stmt.array_loc, scope)
            arr.cells[idx] = ops[1]
            th.pending = (list(self.releases.get(key, [])), scope)
            return
        self.access(arr, stmt.array, idx, th, True, stmt.array_loc, scope)
        old = arr.cells[idx]
        if stmt.op == "CAS":
            if old == ops[0]:
                arr.cells[idx] = ops[1]
        elif stmt.op == "Exch":
            arr.cells[idx] = ops[0]
            if th.fence is not None:
                clock, fscope = th.fence
                self.releases.setdefault(key, []).append(_Release(clock, _narrower(fscope, scope), th.blin))
        else:
            arr.cells[idx] = old + ops[0]
        if stmt.target is not None:
            th.env[stmt.target] = old

    # scheduling

    def run(self) -> None:
        for th in self.threads:
            th.gen = self.run_body(self.kernel.body, th)
        live = list(self.threads)
        while live:
            progressed = False
            for th in live:
                if th.waiting is not None:
                    continue
                before = th.steps
                try:
                    next(th.gen)  # type: ignore[arg-type]
                except StopIteration:
                    th.done = True
                progressed |= th.done or th.waiting is not None or th.steps != before
            live = [t for t in live if not t.done]
            progressed |= self._release_barriers(live)
            if live and not progressed:
                raise OracleTrap("deadlock: no thread can make progress")

    def _release_barriers(self, live: list[_Thread]) -> bool:
        released = False
        groups: dict[tuple, list[_Thread]] = {}
        for t in live:
            groups.setdefault(("b", t.blin), []).append(t)
            groups.setdefault(("w", t.blin, t.warp), []).append(t)
        for key, members in groups.items():
            kind = "syncthreads" if key[0] == "b" else "syncwarp"
            if members and all(t.waiting == kind for t in members):
                joined = [max(c) for c in zip(*(t.vc for t in members))]
                for t in members:
                    t.vc = list(joined)
                    t.tick()
                    t.waiting = None
                released = True
        return released


def _classify(a: _Thread, b: _Thread) -> str:
    if a.blin != b.blin:
        return INTER_BLOCK
    if a.warp != b.warp:
        return INTRA_BLOCK
    return INTRA_WARP


def _binary(op: str, left, right) -> int:
    a = left()
    if op == "&&":
        return int(bool(a) and bool(right()))
    if op == "||":
        return int(bool(a) or bool(right()))
    b = right()
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        return tdiv(a, b)
    if op == "%":
        return tmod(a, b)
    return int({"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b, "==": a == b, "!=": a != b}[op])


# -- host execution -------------------------------------------------------------


class _Return(Exception):
    pass


class _AssertFailed(Exception):
    pass


class _Host:
    def __init__(self, program: Program, config: ExecConfig) -> None:
        self.program = program
        self.config = config
        self.inputs = config.input_map()
        self.binding: dict[str, int] = {}
        self.result = RunResult()
        self.counts = {f.name: _assignment_counts(f) for f in program.host_functions}

    def run(self) -> RunResult:
        try:
            self.call(self.program.entry_function, {})
        except _AssertFailed as exc:
            self.result.trap = f"assertion failed at {exc}"
        except OracleTrap as exc:
            self.result.trap = str(exc)
        return self.result

    def call(self, func: FunctionDecl, env: dict[str, int | _Array]) -> None:
        for p in func.params:
            if p.name not in env:
                env[p.name] = _Array(p.name, 0) if p.is_array else 0
                if not p.is_array:
                    self.binding[f"{func.name}.{p.name}"] = 0
        try:
            self.body(func.body, func, env)
        except _Return:
            pass

    def eval(self, e: Expr, func: FunctionDecl, env, target: str | None = None) -> int:
        if isinstance(e, Input):
            site = f"input@{e.loc.line}:{e.loc.column}"
            v = self.inputs.get(site, 0)
            self.binding[site] = v
            if target is not None and self.counts[func.name].get(target, 0) == 1:
                self.binding[f"{func.name}.{target}"] = v
            return v
        if isinstance(e, IntLit):
            return e.value
        if isinstance(e, VarRef):
            v = env[e.name]
            if isinstance(v, _Array):
                raise OracleTrap(f"array '{e.name}' used as a value", e.loc)
            return v
        if isinstance(e, Binary):
            return _binary(e.op, lambda: self.eval(e.left, func, env), lambda: self.eval(e.right, func, env))
        raise OracleTrap(f"cannot evaluate {type(e).__name__} in host code", getattr(e, "loc", None))

    def snapshot(self, func: FunctionDecl, env, suffix: str, names) -> None:
        for name in names:
            v = env.get(name)
            if isinstance(v, int):
                self.binding[f"{func.name}.{name}{suffix}"] = v

    def body(self, stmts: tuple[Stmt, ...], func: FunctionDecl, env) -> None:
        for stmt in stmts:
            self.stmt(stmt, func, env)

    def stmt(self, stmt: Stmt, func: FunctionDecl, env) -> None:
        if isinstance(stmt, Assign):
            if stmt.value is None:
                if stmt.target not in env:
                    is_array = stmt.decl is not None and stmt.decl.endswith("*")
                    env[stmt.target] = _Array(stmt.target, 0) if is_array else 0
                    if not is_array:
                        self.binding[f"{func.name}.{stmt.target}"] = 0
            else:
                env[stmt.target] = self.eval(stmt.value, func, env, stmt.target)
        elif isinstance(stmt, Assert):
            if not self.eval(stmt.cond, func, env):
                raise _AssertFailed(str(stmt.loc))
        elif isinstance(stmt, Alloc):
            self.alloc(stmt, func, env)
        elif isinstance(stmt, Launch):
            self.launch(stmt, func, env)
        elif isinstance(stmt, Call):
            callee = self.program.function(stmt.func)
            inner: dict[str, int | _Array] = {}
            for p, a in zip(callee.params, stmt.args):
                if p.is_array:
                    assert isinstance(a, VarRef)
                    inner[p.name] = env[a.name]
                else:
                    inner[p.name] = self.eval(a, func, env)
            self.call(callee, inner)
        elif isinstance(stmt, If):
            taken = stmt.then if self.eval(stmt.cond, func, env) else (stmt.orelse or ())
            self.body(taken, func, env)
            self.snapshot(func, env, f"@J{stmt.loc.line}", list(env))
        elif isinstance(stmt, For):
            self.loop(stmt, func, env)
        elif isinstance(stmt, Return):
            raise _Return
        else:
            raise OracleTrap(f"{type(stmt).__name__} in host code", stmt.loc)

    def loop(self, stmt: For, func: FunctionDecl, env) -> None:
        line = stmt.loc.line
        carried = sorted(assigned_vars(stmt.body) - {stmt.var})
        env[stmt.var] = self.eval(stmt.init, func, env, stmt.var)
        n = 0
        while True:
            self.snapshot(func, env, f"@L{line}", carried)
            self.snapshot(func, env, f"@L{line}", [stmt.var])
            if not self.eval(stmt.cond, func, env):
                break
            n += 1
            if n > HOST_LOOP_CAP:
                raise OracleTrap("host loop limit exceeded", stmt.loc)
            self.body(stmt.body, func, env)
            env[stmt.var] = self.eval(stmt.step, func, env)
        self.snapshot(func, env, f"@A{line}", [*carried, stmt.var])

    def alloc(self, stmt: Alloc, func: FunctionDecl, env) -> None:
        sizes = [self.eval(a, func, env) for a in stmt.args]
        if stmt.kind == "malloc":
            env[stmt.array] = _Array(stmt.array, sizes[0])
            return
        width, height = sizes
        pitch = (width + 3) // 4 * 4 if width > 0 else 0
        env[stmt.array] = _Array(stmt.array, pitch * max(height, 0))
        env[stmt.pitch] = pitch
        if self.counts[func.name].get(stmt.pitch, 0) == 1:
            self.binding[f"{func.name}.{stmt.pitch}"] = pitch
        self.binding[f"pitch@{stmt.loc.line}:{stmt.loc.column}"] = pitch

    def launch(self, stmt: Launch, func: FunctionDecl, env) -> None:
        kernel = self.program.kernel(stmt.kernel)
        grid = tuple(self.eval(e, func, env) for e in stmt.grid)
        block = tuple(self.eval(e, func, env) for e in stmt.block)
        args: dict[str, int | _Array] = {}
        shown: list[int | None] = []
        for p, a in zip(kernel.params, stmt.args):
            if p.is_array:
                assert isinstance(a, VarRef)
                args[p.name] = env[a.name]
                shown.append(None)
            else:
                args[p.name] = self.eval(a, func, env)
                shown.append(args[p.name])  # type: ignore[arg-type]
        cfg = self.config
        fits = all(1 <= g <= c for g, c in zip(grid, cfg.grid)) and all(1 <= b <= c for b, c in zip(block, cfg.block))
        nthreads = grid[0] * grid[1] * grid[2] * block[0] * block[1] * block[2]
        ran = fits and nthreads <= cfg.max_threads
        self.result.launches.append(
            LaunchRecord(stmt.loc, kernel.name, grid, block, tuple(shown), dict(self.binding), ran)  # type: ignore[arg-type]
        )
        if not ran:
            self.result.skipped += 1
            return
        k = _Kernel(kernel, args, grid, block, cfg.warp_size, cfg)
        try:
            k.run()
        finally:
            self.result.races |= set(k.races.values())


def _assignment_counts(func: FunctionDecl) -> dict[str, int]:
    counts: dict[str, int] = {}
    for stmt in walk_stmts(func.body):
        names: list[str] = []
        if isinstance(stmt, Assign) and stmt.value is not None:
            names.append(stmt.target)
        elif isinstance(stmt, For):
            names.append(stmt.var)
        elif isinstance(stmt, Alloc) and stmt.pitch is not None:
            names.append(stmt.pitch)
        for n in names:
            counts[n] = counts.get(n, 0) + 1
    return counts


# -- public API ---------------------------------------------------------------


def run_concrete(program: Program, config: ExecConfig) -> RunResult:
    return _Host(program, config).run()


def input_sites(program: Program) -> list[str]:
    """Ids of every `__input()` call in host code, in source order."""
    sites: list[tuple[int, int]] = []
    for func in program.host_functions:
        for stmt in walk_stmts(func.body):
            for e in stmt_exprs(stmt):
                for x in walk_expr(e):
                    if isinstance(x, Input):
                        sites.append((x.loc.line, x.loc.column))
    return [f"input@{line}:{col}" for line, col in sorted(set(sites))]


@dataclass(frozen=True)
class Caps:
    grid: tuple[int, int, int] = (2, 2, 1)
    block: tuple[int, int, int] = (4, 1, 1)
    warp_sizes: tuple[int, ...] = (2, 4)
    values: tuple[int, ...] = DEFAULT_VALUES
    max_threads: int = 64


def configurations(program: Program, caps: Caps) -> Iterator[ExecConfig]:
    sites = input_sites(program)
    for ws in caps.warp_sizes:
        for values in itertools.product(caps.values, repeat=len(sites)):
            yield ExecConfig(tuple(zip(sites, values)), ws, caps.grid, caps.block, caps.max_threads)


@dataclass
class Sweep:
    races: dict[tuple[str, int, int, str], ObservedRace] = field(default_factory=dict)
    runs: int = 0
    traps: int = 0
    launches_run: int = 0

    def verdicts(self) -> dict[tuple[int, int], str]:
        out: dict[tuple[int, int], str] = {}
        for kind, a, b, _arr in self.races:
            out[(a, b)] = "racy"
        return out


def enumerate_verdict(program: Program, caps: Caps | None = None) -> Sweep:
    """Union of `run_concrete` over every configuration within `caps`."""
    caps = caps or Caps()
    sweep = Sweep()
    for config in configurations(program, caps):
        res = run_concrete(program, config)
        sweep.runs += 1
        sweep.traps += res.trap is not None
        sweep.launches_run += sum(1 for l in res.launches if l.ran)
        for r in sorted(res.races):
            sweep.races.setdefault(r.key, r)
    return sweep
