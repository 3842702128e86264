"""Symbol resolution and static checks run after parsing."""

from __future__ import annotations

from dataclasses import dataclass

from hgrd.errors import SemanticError, UnboundIdentifier
from hgrd.minicu.ast import (
    Alloc,
    ArrayLoad,
    ArrayStore,
    Assert,
    Assign,
    AtomicOp,
    Barrier,
    Builtin,
    Call,
    Expr,
    Fence,
    For,
    FunctionDecl,
    If,
    Input,
    KernelDecl,
    Launch,
    Param,
    Program,
    Return,
    SourceLoc,
    Stmt,
    VarRef,
    definitely_returns,
    walk_expr,
    walk_stmts,
)


class Scope:
    """Block-structured symbol table mapping names to types."""

    def __init__(self) -> None:
        self.frames: list[dict[str, str]] = [{}]

    def push(self) -> None:
        self.frames.append({})

    def pop(self) -> None:
        self.frames.pop()

    def lookup(self, name: str) -> str | None:
        for frame in reversed(self.frames):
            if name in frame:
                return frame[name]
        return None

    def declare(self, name: str, typ: str, loc: SourceLoc) -> None:
        if name in self.frames[-1]:
            raise SemanticError(f"'{name}' is already declared in this scope", loc)
        self.frames[-1][name] = typ


@dataclass
class _Ctx:
    program: Program
    in_kernel: bool
    scope: Scope


def resolve(program: Program) -> Program:
    names: dict[str, SourceLoc] = {}
    for decl in (*program.kernels, *program.host_functions):
        if decl.name in names:
            raise SemanticError(f"duplicate definition of '{decl.name}'", decl.loc)
        names[decl.name] = decl.loc
    entries = [f for f in program.host_functions if f.name == program.entry]
    if len(entries) != 1:
        raise SemanticError(f"program must define exactly one '{program.entry}' function")
    for kernel in program.kernels:
        _check_function(program, kernel, in_kernel=True)
    for func in program.host_functions:
        _check_function(program, func, in_kernel=False)
    _check_call_graph(program)
    return program


def _check_function(program: Program, decl: KernelDecl | FunctionDecl, in_kernel: bool) -> None:
    scope = Scope()
    for p in decl.params:
        scope.declare(p.name, p.type, p.loc)
    ctx = _Ctx(program, in_kernel, scope)
    scope.push()
    _check_block(ctx, decl.body)


def _check_block(ctx: _Ctx, body: tuple[Stmt, ...]) -> None:
    for i, stmt in enumerate(body):
        _check_stmt(ctx, stmt)
        if i + 1 < len(body) and definitely_returns(body[: i + 1]):
            raise SemanticError("unreachable statement after return", body[i + 1].loc)


def _check_nested(ctx: _Ctx, body: tuple[Stmt, ...]) -> None:
    ctx.scope.push()
    _check_block(ctx, body)
    ctx.scope.pop()


def _check_stmt(ctx: _Ctx, stmt: Stmt) -> None:
    scope = ctx.scope
    if isinstance(stmt, Assign):
        if stmt.value is not None:
            _check_scalar_expr(ctx, stmt.value)
        if stmt.decl is not None:
            scope.declare(stmt.target, stmt.decl, stmt.loc)
        else:
            _bind_scalar_target(ctx, stmt.target, stmt.loc)
    elif isinstance(stmt, ArrayStore):
        _check_array(ctx, stmt.array, stmt.loc)
        _check_scalar_expr(ctx, stmt.index)
        _check_scalar_expr(ctx, stmt.value)
    elif isinstance(stmt, If):
        _check_scalar_expr(ctx, stmt.cond)
        _check_nested(ctx, stmt.then)
        if stmt.orelse is not None:
            _check_nested(ctx, stmt.orelse)
    elif isinstance(stmt, For):
        _check_scalar_expr(ctx, stmt.init)
        scope.push()
        if stmt.decl:
            scope.declare(stmt.var, "int", stmt.loc)
        else:
            _bind_scalar_target(ctx, stmt.var, stmt.loc)
        _check_scalar_expr(ctx, stmt.cond)
        _check_scalar_expr(ctx, stmt.step)
        _check_nested(ctx, stmt.body)
        scope.pop()
    elif isinstance(stmt, (Barrier, Fence)):
        pass
    elif isinstance(stmt, AtomicOp):
        _check_array(ctx, stmt.array, stmt.array_loc)
        _check_scalar_expr(ctx, stmt.index)
        for e in stmt.operands:
            _check_scalar_expr(ctx, e)
        if stmt.target is not None:
            if stmt.decl is not None:
                scope.declare(stmt.target, stmt.decl, stmt.loc)
            else:
                _bind_scalar_target(ctx, stmt.target, stmt.loc)
    elif isinstance(stmt, Assert):
        _check_scalar_expr(ctx, stmt.cond)
    elif isinstance(stmt, Alloc):
        _check_array(ctx, stmt.array, stmt.loc)
        for e in stmt.args:
            _check_scalar_expr(ctx, e)
        if stmt.pitch is not None:
            _bind_scalar_target(ctx, stmt.pitch, stmt.loc)
    elif isinstance(stmt, Launch):
        _check_launch(ctx, stmt)
    elif isinstance(stmt, Call):
        _check_call(ctx, stmt)
    elif isinstance(stmt, Return):
        pass
    else:  # pragma: no cover - exhaustive over Stmt
        raise TypeError(stmt)


def _bind_scalar_target(ctx: _Ctx, name: str, loc: SourceLoc) -> None:
    typ = ctx.scope.lookup(name)
    if typ is None:
        # first assignment declares the variable, as in `i = blockIdx.x * ...;`
        ctx.scope.declare(name, "int", loc)
    elif typ.endswith("*"):
        raise SemanticError(f"cannot assign to array '{name}'", loc)


def _check_array(ctx: _Ctx, name: str, loc: SourceLoc) -> None:
    typ = ctx.scope.lookup(name)
    if typ is None:
        raise UnboundIdentifier(name, loc)
    if not typ.endswith("*"):
        raise SemanticError(f"'{name}' is not an array", loc)


def _check_scalar_expr(ctx: _Ctx, expr: Expr) -> None:
    for e in walk_expr(expr):
        if isinstance(e, VarRef):
            typ = ctx.scope.lookup(e.name)
            if typ is None:
                raise UnboundIdentifier(e.name, e.loc)
            if typ.endswith("*"):
                raise SemanticError(f"array '{e.name}' used as a scalar", e.loc)
        elif isinstance(e, ArrayLoad):
            if not ctx.in_kernel:
                raise SemanticError("host code cannot read device arrays", e.loc)
            _check_array(ctx, e.array, e.loc)
        elif isinstance(e, Builtin):
            if not ctx.in_kernel:
                raise SemanticError(f"'{e.name}' is only available in kernels", e.loc)
        elif isinstance(e, Input):
            if ctx.in_kernel:
                raise SemanticError("__input() is only available in host code", e.loc)


def _check_args(ctx: _Ctx, callee: str, params: tuple[Param, ...], args: tuple[Expr, ...], loc: SourceLoc) -> None:
    if len(params) != len(args):
        raise SemanticError(
            f"'{callee}' expects {len(params)} argument(s), got {len(args)}", loc
        )
    for p, a in zip(params, args):
        if p.is_array:
            if not isinstance(a, VarRef):
                raise SemanticError(f"argument for array parameter '{p.name}' must be an array name", loc)
            _check_array(ctx, a.name, a.loc)
        else:
            _check_scalar_expr(ctx, a)


def _check_launch(ctx: _Ctx, stmt: Launch) -> None:
    try:
        kernel = ctx.program.kernel(stmt.kernel)
    except KeyError:
        raise UnboundIdentifier(stmt.kernel, stmt.loc) from None
    for e in (*stmt.grid, *stmt.block):
        _check_scalar_expr(ctx, e)
    _check_args(ctx, stmt.kernel, kernel.params, stmt.args, stmt.loc)


def _check_call(ctx: _Ctx, stmt: Call) -> None:
    try:
        func = ctx.program.function(stmt.func)
    except KeyError:
        if any(k.name == stmt.func for k in ctx.program.kernels):
            raise SemanticError(f"kernel '{stmt.func}' must be launched with <<<...>>>", stmt.loc) from None
        raise UnboundIdentifier(stmt.func, stmt.loc) from None
    _check_args(ctx, stmt.func, func.params, stmt.args, stmt.loc)


def _check_call_graph(program: Program) -> None:
    graph = {
        f.name: [s for s in walk_stmts(f.body) if isinstance(s, Call)] for f in program.host_functions
    }
    state: dict[str, int] = {}

    def visit(name: str) -> None:
        state[name] = 1
        for call in graph[name]:
            if state.get(call.func) == 1:
                raise SemanticError(f"recursive call to '{call.func}' is not supported", call.loc)
            if call.func not in state:
                visit(call.func)
        state[name] = 2

    for name in graph:
        if name not in state:
            visit(name)
