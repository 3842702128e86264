"""Canonical MiniCU pretty-printer.

Binary expressions are fully parenthesized, so the output re-parses to a
structurally identical tree regardless of operator precedence.
"""

from __future__ import annotations

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
    KernelDecl,
    Launch,
    Param,
    Program,
    Return,
    Stmt,
    VarRef,
)

_ATOMIC_NAMES = {
    ("CAS", "device"): "atomicCAS",
    ("Exch", "device"): "atomicExch",
    ("Add", "device"): "atomicAdd",
    ("CAS", "block"): "atomicCAS_block",
    ("Exch", "block"): "atomicExch_block",
    ("Add", "block"): "atomicAdd_block",
}


def format_expr(e: Expr) -> str:
    if isinstance(e, IntLit):
        return str(e.value)
    if isinstance(e, VarRef):
        return e.name
    if isinstance(e, Builtin):
        return f"{e.name}.{e.axis}"
    if isinstance(e, Binary):
        return f"({format_expr(e.left)} {e.op} {format_expr(e.right)})"
    if isinstance(e, ArrayLoad):
        return f"{e.array}[{format_expr(e.index)}]"
    if isinstance(e, Input):
        return "__input()"
    raise TypeError(e)


def _decl_prefix(decl: str | None) -> str:
    if decl is None:
        return ""
    if decl.endswith("*"):
        return f"{decl[:-1]} *"
    return f"{decl} "


def _param(p: Param) -> str:
    return f"{_decl_prefix(p.type)}{p.name}"


def _stmts(body: tuple[Stmt, ...], indent: int) -> list[str]:
    out: list[str] = []
    for s in body:
        out.extend(_stmt(s, indent))
    return out


def _stmt(s: Stmt, indent: int) -> list[str]:
    pad = "  " * indent
    if isinstance(s, Assign):
        if s.value is None:
            return [f"{pad}{_decl_prefix(s.decl)}{s.target};"]
        return [f"{pad}{_decl_prefix(s.decl)}{s.target} = {format_expr(s.value)};"]
    if isinstance(s, ArrayStore):
        return [f"{pad}{s.array}[{format_expr(s.index)}] = {format_expr(s.value)};"]
    if isinstance(s, If):
        lines = [f"{pad}if ({format_expr(s.cond)}) {{", *_stmts(s.then, indent + 1)]
        if s.orelse is not None:
            lines.append(f"{pad}}} else {{")
            lines.extend(_stmts(s.orelse, indent + 1))
        lines.append(f"{pad}}}")
        return lines
    if isinstance(s, For):
        decl = "int " if s.decl else ""
        head = (
            f"{pad}for ({decl}{s.var} = {format_expr(s.init)}; {format_expr(s.cond)}; "
            f"{s.var} = {format_expr(s.step)}) {{"
        )
        return [head, *_stmts(s.body, indent + 1), f"{pad}}}"]
    if isinstance(s, Barrier):
        return [f"{pad}__{s.kind}();"]
    if isinstance(s, Fence):
        name = "__threadfence" if s.scope == "device" else "__threadfence_block"
        return [f"{pad}{name}();"]
    if isinstance(s, AtomicOp):
        args = ", ".join([f"{s.array}[{format_expr(s.index)}]", *map(format_expr, s.operands)])
        call = f"{_ATOMIC_NAMES[(s.op, s.scope)]}({args});"
        if s.target is None:
            return [f"{pad}{call}"]
        return [f"{pad}{_decl_prefix(s.decl)}{s.target} = {call}"]
    if isinstance(s, Assert):
        return [f"{pad}assert({format_expr(s.cond)});"]
    if isinstance(s, Alloc):
        if s.kind == "malloc":
            return [f"{pad}cudaMalloc(&{s.array}, {format_expr(s.args[0])});"]
        sizes = ", ".join(map(format_expr, s.args))
        return [f"{pad}cudaMallocPitch(&{s.array}, &{s.pitch}, {sizes});"]
    if isinstance(s, Launch):
        grid = ", ".join(map(format_expr, s.grid))
        block = ", ".join(map(format_expr, s.block))
        args = ", ".join(map(format_expr, s.args))
        return [f"{pad}{s.kernel}<<<({grid}), ({block})>>>({args});"]
    if isinstance(s, Call):
        return [f"{pad}{s.func}({', '.join(map(format_expr, s.args))});"]
    if isinstance(s, Return):
        return [f"{pad}return;"]
    raise TypeError(s)


def format_kernel(k: KernelDecl) -> str:
    params = ", ".join(map(_param, k.params))
    return "\n".join([f"__global__ void {k.name}({params}) {{", *_stmts(k.body, 1), "}"])


def format_function(f: FunctionDecl) -> str:
    params = ", ".join(map(_param, f.params))
    return "\n".join([f"{f.ret} {f.name}({params}) {{", *_stmts(f.body, 1), "}"])


def format_program(p: Program) -> str:
    parts = [format_kernel(k) for k in p.kernels]
    parts += [format_function(f) for f in p.host_functions]
    return "\n\n".join(parts) + "\n"
