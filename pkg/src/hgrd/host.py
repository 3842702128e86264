"""Host-code semantics: expression trees and the five classes of host facts.

The host entry function is walked once, in program order, descending into
called host functions. Every launch site records expression trees (ETs) for
its grid and block dimensions and for its arguments, together with the
asserts seen on the path to it, the allocation-size variables known at that
point, and the loop iterators it depends on.

Host variables are identified by `function.name`. Values that the walk
cannot pin down become `Unknown` leaves whose ids the concrete interpreter
reproduces, so an ET can be evaluated against a real execution:

* `f.x`            user input stored by the only assignment to `x`
* `input@L:C`      any other `__input()` call
* `f.p`            pitch out-variable of `cudaMallocPitch` (or `pitch@L:C`)
* `f.k@L<n>`       value of loop iterator `k` inside the loop at line n
* `f.x@L<n>`       value of `x` at the head of an iteration (loop-carried)
* `f.x@A<n>`       value of `x` after the loop at line n
* `f.x@J<n>`       value of `x` after the `if` at line n when branches differ
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Union

from hgrd.errors import UnsupportedHostConstruct
from hgrd.minicu.ast import (
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
    Launch,
    Program,
    Return,
    SourceLoc,
    Stmt,
    VarRef,
    assigned_vars,
    walk_stmts,
)
from hgrd.solver.terms import tdiv, tmod

# -- expression trees ----------------------------------------------------


def _origins() -> frozenset[str]:
    return field(default=frozenset(), compare=False)


@dataclass(frozen=True)
class Constant:
    value: int
    origins: frozenset[str] = _origins()

    def __str__(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class Unknown:
    id: str
    origins: frozenset[str] = _origins()
    is_array: bool = False

    def __str__(self) -> str:
        return f"Unknown({self.id})"


@dataclass(frozen=True)
class BinaryET:
    op: str
    left: ET
    right: ET
    origins: frozenset[str] = _origins()

    def __str__(self) -> str:
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class Bounds:
    """Value of a loop iterator; only ever the root of an ET."""

    iterator: str
    min: ET | None
    max: ET | None
    max_op: str = "<"
    origins: frozenset[str] = _origins()

    def __str__(self) -> str:
        lo = "-inf" if self.min is None else str(self.min)
        hi = "+inf" if self.max is None else str(self.max)
        close = ")" if self.max_op == "<" else "]"
        return f"Bounds({self.iterator}: [{lo}, {hi}{close})"


ET = Union[Constant, Unknown, BinaryET, Bounds]


def with_origin(et: ET, origin: str) -> ET:
    return replace(et, origins=et.origins | {origin})


def et_leaves(et: ET) -> Iterator[ET]:
    if isinstance(et, BinaryET):
        yield from et_leaves(et.left)
        yield from et_leaves(et.right)
    elif isinstance(et, Bounds):
        yield Unknown(et.iterator)
    else:
        yield et


def unknown_ids(et: ET) -> set[str]:
    return {leaf.id for leaf in et_leaves(et) if isinstance(leaf, Unknown)}


_CMP = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
}


def evaluate_et(et: ET, binding: dict[str, int]) -> int:
    """Concrete value of an ET; Bounds evaluate to the iterator's value."""
    if isinstance(et, Constant):
        return et.value
    if isinstance(et, Unknown):
        return binding[et.id]
    if isinstance(et, Bounds):
        return binding[et.iterator]
    a = evaluate_et(et.left, binding)
    if et.op == "&&":
        return int(bool(a) and bool(evaluate_et(et.right, binding)))
    if et.op == "||":
        return int(bool(a) or bool(evaluate_et(et.right, binding)))
    b = evaluate_et(et.right, binding)
    if et.op == "+":
        return a + b
    if et.op == "-":
        return a - b
    if et.op == "*":
        return a * b
    if et.op == "/":
        return tdiv(a, b)
    if et.op == "%":
        return tmod(a, b)
    return int(_CMP[et.op](a, b))


# -- facts ---------------------------------------------------------------


@dataclass(frozen=True)
class IteratorFact:
    """What the loop header guarantees about iterator `id` inside the body."""

    id: str
    init: ET
    direction: int  # +1 increasing step, -1 decreasing, 0 unknown
    conds: tuple[tuple[str, ET], ...]  # each `k op ET` holds in the body
    loc: SourceLoc


@dataclass(frozen=True)
class LaunchFacts:
    kernel: str
    function: str
    stmt: Launch
    grid: tuple[ET, ET, ET]
    block: tuple[ET, ET, ET]
    args: tuple[ET, ...]
    asserts: tuple[ET, ...]
    alloc_vars: frozenset[str]
    iterators: tuple[IteratorFact, ...]

    @property
    def loc(self) -> SourceLoc:
        return self.stmt.loc


@dataclass
class HostFacts:
    asserts: list[ET] = field(default_factory=list)
    launches: list[LaunchFacts] = field(default_factory=list)
    alloc_vars: set[str] = field(default_factory=set)
    input_sites: dict[str, SourceLoc] = field(default_factory=dict)
    iterators: dict[str, IteratorFact] = field(default_factory=dict)

    def dump(self) -> str:
        lines = ["asserts:"]
        lines += [f"  {a}" for a in self.asserts] or ["  (none)"]
        lines.append("allocVars: " + (", ".join(sorted(self.alloc_vars)) or "(none)"))
        for lf in self.launches:
            lines.append(f"launch {lf.kernel} at {lf.loc} in {lf.function}:")
            lines.append("  grid:  " + ", ".join(str(e) for e in lf.grid))
            lines.append("  block: " + ", ".join(str(e) for e in lf.block))
            for i, a in enumerate(lf.args):
                origins = ", ".join(sorted(a.origins))
                lines.append(f"  arg{i}: {a}   origins {{{origins}}}")
            for a in lf.asserts:
                lines.append(f"  assert: {a}")
        return "\n".join(lines) + "\n"


# -- the walk ------------------------------------------------------------


@dataclass
class _State:
    env: dict[str, ET]
    asserts: list[ET]
    alloc_vars: set[str]
    iterators: dict[str, IteratorFact]

    def copy(self) -> _State:
        return _State(dict(self.env), list(self.asserts), set(self.alloc_vars), dict(self.iterators))


class HostEnv:
    """Symbolic state of one host function activation."""

    def __init__(self, analyzer: _HostWalker, func: FunctionDecl, state: _State) -> None:
        self.analyzer = analyzer
        self.func = func
        self.state = state
        self.assign_counts = _assignment_counts(func)

    def var_id(self, name: str) -> str:
        return f"{self.func.name}.{name}"

    def lookup(self, name: str, loc: SourceLoc) -> ET:
        if name not in self.state.env:
            raise UnsupportedHostConstruct(f"'{name}' is read before it is assigned", loc)
        return with_origin(self.state.env[name], self.var_id(name))

    def input_id(self, target: str | None, loc: SourceLoc) -> str:
        if target is not None and self.assign_counts.get(target, 0) == 1:
            uid = self.var_id(target)
        else:
            uid = f"input@{loc.line}:{loc.column}"
        self.analyzer.facts.input_sites[uid] = loc
        return uid


def create_et(expr: Expr, env: HostEnv, target: str | None = None) -> ET:
    """ET for a host expression; `target` names the variable being assigned."""
    if isinstance(expr, IntLit):
        return Constant(expr.value)
    if isinstance(expr, Input):
        uid = env.input_id(target, expr.loc)
        return Unknown(uid, frozenset({uid}))
    if isinstance(expr, VarRef):
        return env.lookup(expr.name, expr.loc)
    if isinstance(expr, Binary):
        left = _operand(create_et(expr.left, env))
        right = _operand(create_et(expr.right, env))
        return BinaryET(expr.op, left, right, left.origins | right.origins)
    if isinstance(expr, (Builtin, ArrayLoad)):
        raise UnsupportedHostConstruct("device-only expression in host code", expr.loc)
    raise UnsupportedHostConstruct(f"unsupported host expression {type(expr).__name__}", expr.loc)


def _operand(et: ET) -> ET:
    # Bounds stay at the root; inside arithmetic the iterator is a plain unknown
    if isinstance(et, Bounds):
        return Unknown(et.iterator, et.origins | {et.iterator})
    return et


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


class _HostWalker:
    def __init__(self, program: Program) -> None:
        self.program = program
        self.facts = HostFacts()

    def run(self) -> HostFacts:
        entry = self.program.entry_function
        self.call(entry, {}, _State({}, [], set(), {}))
        return self.facts

    def call(self, func: FunctionDecl, bindings: dict[str, ET], state: _State) -> _State:
        """Walk a function body; the callee's assertions and allocations flow back."""
        inner = _State(dict(bindings), state.asserts, state.alloc_vars, state.iterators)
        env = HostEnv(self, func, inner)
        for p in func.params:
            if p.name not in inner.env:
                inner.env[p.name] = Unknown(env.var_id(p.name), is_array=p.is_array)
        self.block(func.body, env)
        out = state.copy()
        out.asserts = list(env.state.asserts)
        out.alloc_vars = set(env.state.alloc_vars)
        return out

    def block(self, body: tuple[Stmt, ...], env: HostEnv) -> bool:
        """Walk statements; returns False when every path has returned."""
        for stmt in body:
            if not self.stmt(stmt, env):
                return False
        return True

    def stmt(self, stmt: Stmt, env: HostEnv) -> bool:
        st = env.state
        if isinstance(stmt, Assign):
            if stmt.value is None:
                if stmt.target not in st.env:
                    is_array = stmt.decl is not None and stmt.decl.endswith("*")
                    st.env[stmt.target] = Unknown(env.var_id(stmt.target), is_array=is_array)
            else:
                st.env[stmt.target] = create_et(stmt.value, env, stmt.target)
        elif isinstance(stmt, Assert):
            cond = create_et(stmt.cond, env)
            st.asserts.append(cond)
            self.facts.asserts.append(cond)
        elif isinstance(stmt, Alloc):
            self.alloc(stmt, env)
        elif isinstance(stmt, Launch):
            self.launch(stmt, env)
        elif isinstance(stmt, Call):
            callee = self.program.function(stmt.func)
            bindings: dict[str, ET] = {}
            for p, a in zip(callee.params, stmt.args):
                et = _operand(create_et(a, env))
                bindings[p.name] = et
            after = self.call(callee, bindings, st)
            st.asserts = after.asserts
            st.alloc_vars = after.alloc_vars
        elif isinstance(stmt, If):
            return self.branch(stmt, env)
        elif isinstance(stmt, For):
            self.loop(stmt, env)
        elif isinstance(stmt, Return):
            return False
        elif isinstance(stmt, (ArrayStore, AtomicOp, Barrier, Fence)):
            raise UnsupportedHostConstruct(f"{type(stmt).__name__} is not allowed in host code", stmt.loc)
        return True

    def alloc(self, stmt: Alloc, env: HostEnv) -> None:
        st = env.state
        st.env.setdefault(stmt.array, Unknown(env.var_id(stmt.array), is_array=True))
        sizes = stmt.args
        for a in sizes:
            et = create_et(a, env)
            st.alloc_vars |= et.origins
        if stmt.pitch is not None:
            if env.assign_counts.get(stmt.pitch, 0) == 1:
                uid = env.var_id(stmt.pitch)
            else:
                uid = f"pitch@{stmt.loc.line}:{stmt.loc.column}"
            st.env[stmt.pitch] = Unknown(uid, frozenset({uid}))
            st.alloc_vars |= {uid, env.var_id(stmt.pitch)}
        self.facts.alloc_vars |= st.alloc_vars

    def launch(self, stmt: Launch, env: HostEnv) -> None:
        st = env.state
        kernel = self.program.kernel(stmt.kernel)
        grid = tuple(_operand(create_et(e, env)) for e in stmt.grid)
        block = tuple(_operand(create_et(e, env)) for e in stmt.block)
        args = tuple(create_et(e, env) for e in stmt.args)
        used: set[str] = set()
        for et in (*grid, *block, *args, *st.asserts):
            used |= unknown_ids(et)
        iters = tuple(st.iterators[i] for i in sorted(used) if i in st.iterators)
        self.facts.launches.append(
            LaunchFacts(
                kernel.name,
                env.func.name,
                stmt,
                grid,  # type: ignore[arg-type]
                block,  # type: ignore[arg-type]
                args,
                tuple(st.asserts),
                frozenset(st.alloc_vars),
                iters,
            )
        )

    def branch(self, stmt: If, env: HostEnv) -> bool:
        base = env.state
        # non-assert conditions are not facts; both sides are walked
        create_et(stmt.cond, env)
        outs: list[_State] = []
        for body in (stmt.then, stmt.orelse or ()):
            env.state = base.copy()
            if self.block(body, env):
                outs.append(env.state)
        if not outs:
            env.state = base
            return False
        merged = base.copy()
        # only allocations made on every surviving path still size something
        merged.alloc_vars = set.intersection(*(o.alloc_vars for o in outs))
        names = set().union(*(o.env.keys() for o in outs))
        for name in sorted(names):
            values = [o.env.get(name) for o in outs]
            if all(v is not None and v == values[0] and v.origins == values[0].origins for v in values):
                merged.env[name] = values[0]  # type: ignore[assignment]
            elif name in base.env or all(v is not None for v in values):
                uid = f"{env.var_id(name)}@J{stmt.loc.line}"
                merged.env[name] = Unknown(uid, frozenset({uid}))
        env.state = merged
        return True

    def loop(self, stmt: For, env: HostEnv) -> None:
        base = env.state
        init = create_et(stmt.init, env, stmt.var)
        line = stmt.loc.line
        carried = sorted(assigned_vars(stmt.body) - {stmt.var})
        body_state = base.copy()
        for name in carried:
            uid = f"{env.var_id(name)}@L{line}"
            body_state.env[name] = Unknown(uid, frozenset({uid}))
        iter_id = f"{env.var_id(stmt.var)}@L{line}"
        env.state = body_state
        conds = tuple(self._iterator_conds(stmt, env, iter_id))
        fact = IteratorFact(iter_id, _operand(init), _direction(stmt), conds, stmt.loc)
        body_state.iterators[iter_id] = fact
        self.facts.iterators[iter_id] = fact
        lo = fact.init if fact.direction > 0 else None
        hi, hi_op = None, "<"
        for op, bound in conds:
            if op in ("<", "<="):
                hi, hi_op = bound, op
                break
        body_state.env[stmt.var] = Bounds(iter_id, lo, hi, hi_op, frozenset({iter_id}))
        self.block(stmt.body, env)
        after = base.copy()
        # asserts inside the body do not survive the loop (it may run zero times)
        after.asserts = list(base.asserts)
        after.alloc_vars = set(base.alloc_vars)
        for name in [*carried, stmt.var]:
            uid = f"{env.var_id(name)}@A{line}"
            after.env[name] = Unknown(uid, frozenset({uid}))
        env.state = after

    def _iterator_conds(self, stmt: For, env: HostEnv, iter_id: str) -> Iterator[tuple[str, ET]]:
        flip = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "==": "==", "!=": "!="}
        for conj in _conjuncts(stmt.cond):
            if not isinstance(conj, Binary) or conj.op not in flip:
                continue
            if isinstance(conj.left, VarRef) and conj.left.name == stmt.var and stmt.var not in _names(conj.right):
                yield conj.op, _operand(create_et(conj.right, env))
            elif isinstance(conj.right, VarRef) and conj.right.name == stmt.var and stmt.var not in _names(conj.left):
                yield flip[conj.op], _operand(create_et(conj.left, env))


def _conjuncts(e: Expr) -> Iterator[Expr]:
    if isinstance(e, Binary) and e.op == "&&":
        yield from _conjuncts(e.left)
        yield from _conjuncts(e.right)
    else:
        yield e


def _names(e: Expr) -> set[str]:
    if isinstance(e, VarRef):
        return {e.name}
    if isinstance(e, Binary):
        return _names(e.left) | _names(e.right)
    return set()


def _direction(stmt: For) -> int:
    s = stmt.step
    if isinstance(s, Binary) and isinstance(s.left, VarRef) and s.left.name == stmt.var and isinstance(s.right, IntLit):
        if s.op == "+":
            return (s.right.value > 0) - (s.right.value < 0)
        if s.op == "-":
            return (s.right.value < 0) - (s.right.value > 0)
    return 0


def analyze_host(program: Program) -> HostFacts:
    return _HostWalker(program).run()
