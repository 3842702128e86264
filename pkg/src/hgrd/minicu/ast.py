"""MiniCU syntax tree.

Nodes are frozen dataclasses. Source locations and statement ids are
excluded from equality, so two trees compare equal exactly when they have
the same shape, operators, names and literal values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Union

ARRAY_TYPES = ("float*", "int*", "lock*")
SCALAR_TYPES = ("int", "float")
BUILTINS = ("threadIdx", "blockIdx", "blockDim", "gridDim")
AXES = ("x", "y", "z")
COMPARISONS = ("<", "<=", ">", ">=", "==", "!=")
ARITH = ("+", "-", "*", "/", "%")
LOGICAL = ("&&", "||")
BINARY_OPS = ARITH + COMPARISONS + LOGICAL


@dataclass(frozen=True, order=True)
class SourceLoc:
    file: str
    line: int
    column: int

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.column}"


NOLOC = SourceLoc("<none>", 1, 1)


def _loc() -> SourceLoc:
    return field(default=NOLOC, compare=False, kw_only=True, repr=False)


def _sid() -> int:
    return field(default=-1, compare=False, kw_only=True, repr=False)


# -- expressions ---------------------------------------------------------


@dataclass(frozen=True)
class IntLit:
    value: int
    loc: SourceLoc = _loc()


@dataclass(frozen=True)
class VarRef:
    name: str
    loc: SourceLoc = _loc()


@dataclass(frozen=True)
class Builtin:
    name: str  # threadIdx | blockIdx | blockDim | gridDim
    axis: str  # x | y | z
    loc: SourceLoc = _loc()


@dataclass(frozen=True)
class Binary:
    op: str
    left: Expr
    right: Expr
    loc: SourceLoc = _loc()


@dataclass(frozen=True)
class ArrayLoad:
    array: str
    index: Expr
    loc: SourceLoc = _loc()


@dataclass(frozen=True)
class Input:
    loc: SourceLoc = _loc()


Expr = Union[IntLit, VarRef, Builtin, Binary, ArrayLoad, Input]


# -- statements ----------------------------------------------------------


@dataclass(frozen=True)
class Assign:
    """`x = e;`, `int x = e;` or a bare declaration `int x;` (value None)."""

    target: str
    value: Expr | None
    decl: str | None = None
    loc: SourceLoc = _loc()
    sid: int = _sid()


@dataclass(frozen=True)
class ArrayStore:
    array: str
    index: Expr
    value: Expr
    loc: SourceLoc = _loc()
    sid: int = _sid()


@dataclass(frozen=True)
class If:
    cond: Expr
    then: tuple[Stmt, ...]
    orelse: tuple[Stmt, ...] | None = None
    loc: SourceLoc = _loc()
    sid: int = _sid()


@dataclass(frozen=True)
class For:
    """`for (var = init; cond; var = step) body`.

    `x++` and `x += e` are stored in the `step` field as `x + 1` and `x + e`.
    """

    var: str
    init: Expr
    cond: Expr
    step: Expr
    body: tuple[Stmt, ...]
    decl: bool = False
    loc: SourceLoc = _loc()
    sid: int = _sid()


@dataclass(frozen=True)
class Barrier:
    kind: str  # syncthreads | syncwarp
    loc: SourceLoc = _loc()
    sid: int = _sid()


@dataclass(frozen=True)
class Fence:
    scope: str  # block | device
    loc: SourceLoc = _loc()
    sid: int = _sid()


@dataclass(frozen=True)
class AtomicOp:
    """Scoped atomic on `array[index]`.

    As a statement, `atomicCAS(a[i], cmp, val);` spins until it succeeds
    (the acquire idiom). With a `target` the old value is returned and the
    call never blocks.
    """

    op: str  # CAS | Exch | Add
    scope: str  # block | device
    array: str
    index: Expr
    operands: tuple[Expr, ...]
    target: str | None = None
    decl: str | None = None
    loc: SourceLoc = _loc()
    array_loc: SourceLoc = _loc()
    sid: int = _sid()


@dataclass(frozen=True)
class Assert:
    cond: Expr
    loc: SourceLoc = _loc()
    sid: int = _sid()


@dataclass(frozen=True)
class Alloc:
    """`cudaMalloc(&A, size)` or `cudaMallocPitch(&A, &pitch, width, rows)`."""

    kind: str  # malloc | mallocPitch
    array: str
    args: tuple[Expr, ...]
    pitch: str | None = None
    loc: SourceLoc = _loc()
    sid: int = _sid()


@dataclass(frozen=True)
class Launch:
    kernel: str
    grid: tuple[Expr, Expr, Expr]
    block: tuple[Expr, Expr, Expr]
    args: tuple[Expr, ...]
    loc: SourceLoc = _loc()
    sid: int = _sid()


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple[Expr, ...]
    loc: SourceLoc = _loc()
    sid: int = _sid()


@dataclass(frozen=True)
class Return:
    loc: SourceLoc = _loc()
    sid: int = _sid()


Stmt = Union[
    Assign, ArrayStore, If, For, Barrier, Fence, AtomicOp, Assert, Alloc, Launch, Call, Return
]


# -- declarations --------------------------------------------------------


@dataclass(frozen=True)
class Param:
    name: str
    type: str
    loc: SourceLoc = _loc()

    @property
    def is_array(self) -> bool:
        return self.type in ARRAY_TYPES


@dataclass(frozen=True)
class KernelDecl:
    name: str
    params: tuple[Param, ...]
    body: tuple[Stmt, ...]
    loc: SourceLoc = _loc()

    def param(self, name: str) -> Param | None:
        for p in self.params:
            if p.name == name:
                return p
        return None

    @property
    def array_params(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.params if p.is_array)


@dataclass(frozen=True)
class FunctionDecl:
    name: str
    params: tuple[Param, ...]
    body: tuple[Stmt, ...]
    ret: str = "void"
    loc: SourceLoc = _loc()


@dataclass(frozen=True)
class Program:
    file: str
    host_functions: tuple[FunctionDecl, ...]
    kernels: tuple[KernelDecl, ...]
    entry: str = "main"
    source: str = field(default="", compare=False, repr=False)

    def kernel(self, name: str) -> KernelDecl:
        for k in self.kernels:
            if k.name == name:
                return k
        raise KeyError(name)

    def function(self, name: str) -> FunctionDecl:
        for f in self.host_functions:
            if f.name == name:
                return f
        raise KeyError(name)

    @property
    def entry_function(self) -> FunctionDecl:
        return self.function(self.entry)


# -- traversal helpers ---------------------------------------------------


def child_blocks(stmt: Stmt) -> Iterator[tuple[Stmt, ...]]:
    if isinstance(stmt, If):
        yield stmt.then
        if stmt.orelse is not None:
            yield stmt.orelse
    elif isinstance(stmt, For):
        yield stmt.body


def walk_stmts(body: tuple[Stmt, ...]) -> Iterator[Stmt]:
    """Pre-order walk over statements, nested bodies included."""
    for stmt in body:
        yield stmt
        for block in child_blocks(stmt):
            yield from walk_stmts(block)


def stmt_exprs(stmt: Stmt) -> tuple[Expr, ...]:
    """Expressions directly owned by a statement, in evaluation order."""
    if isinstance(stmt, Assign):
        return () if stmt.value is None else (stmt.value,)
    if isinstance(stmt, ArrayStore):
        return (stmt.value, stmt.index)
    if isinstance(stmt, If):
        return (stmt.cond,)
    if isinstance(stmt, For):
        return (stmt.init, stmt.cond, stmt.step)
    if isinstance(stmt, AtomicOp):
        return (stmt.index, *stmt.operands)
    if isinstance(stmt, Assert):
        return (stmt.cond,)
    if isinstance(stmt, Alloc):
        return stmt.args
    if isinstance(stmt, Launch):
        return (*stmt.grid, *stmt.block, *stmt.args)
    if isinstance(stmt, Call):
        return stmt.args
    return ()


def walk_expr(expr: Expr) -> Iterator[Expr]:
    """Post-order walk: operands are yielded before the node that uses them."""
    if isinstance(expr, Binary):
        yield from walk_expr(expr.left)
        yield from walk_expr(expr.right)
    elif isinstance(expr, ArrayLoad):
        yield from walk_expr(expr.index)
    yield expr


def expr_vars(expr: Expr) -> set[str]:
    return {e.name for e in walk_expr(expr) if isinstance(e, VarRef)}


def assigned_vars(body: tuple[Stmt, ...]) -> set[str]:
    """Scalar variables written anywhere in `body`."""
    out: set[str] = set()
    for stmt in walk_stmts(body):
        if isinstance(stmt, Assign):
            out.add(stmt.target)
        elif isinstance(stmt, For):
            out.add(stmt.var)
        elif isinstance(stmt, AtomicOp) and stmt.target is not None:
            out.add(stmt.target)
        elif isinstance(stmt, Alloc) and stmt.pitch is not None:
            out.add(stmt.pitch)
    return out


def definitely_returns(body: tuple[Stmt, ...]) -> bool:
    if not body:
        return False
    last = body[-1]
    if isinstance(last, Return):
        return True
    if isinstance(last, If) and last.orelse is not None:
        return definitely_returns(last.then) and definitely_returns(last.orelse)
    return False
