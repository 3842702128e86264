"""Global-memory accesses, access pairs and the preliminary race checks.

A pair keeps the race kinds that barriers and atomic scopes cannot rule
out. Only the surviving kinds reach constraint generation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

from hgrd.cfg import CFG, DomInfo, Item, StmtRef, path_avoiding
from hgrd.minicu.ast import (
    ArrayLoad,
    ArrayStore,
    Assign,
    AtomicOp,
    Barrier,
    Expr,
    For,
    If,
    KernelDecl,
    SourceLoc,
    Stmt,
    child_blocks,
    walk_expr,
)

INTER_BLOCK, INTRA_BLOCK, INTRA_WARP = "InterBlock", "IntraBlock", "IntraWarp"
ALL_KINDS = (INTER_BLOCK, INTRA_BLOCK, INTRA_WARP)
KIND_ORDER = {k: i for i, k in enumerate(ALL_KINDS)}

LOAD, STORE = "Load", "Store"
ATOMIC_KINDS = {"CAS": "AtomicCAS", "Exch": "AtomicExch", "Add": "AtomicAdd"}
SCOPES = {"block": "Block", "device": "Device"}
SCOPE_RANK = {"Block": 0, "Device": 1}


@dataclass(frozen=True)
class Access:
    id: int
    kind: str
    array: str
    index: Expr
    scope: str | None
    loc: SourceLoc
    stmt: Stmt
    ref: StmtRef
    # the load expression for loads; None otherwise
    expr: ArrayLoad | None = None

    @property
    def is_atomic(self) -> bool:
        return self.scope is not None

    @property
    def writes(self) -> bool:
        return self.kind != LOAD

    def __str__(self) -> str:
        scope = f"/{self.scope}" if self.scope else ""
        return f"#{self.id} {self.kind}{scope} {self.array} @ {self.loc.line}:{self.loc.column}"


@dataclass(frozen=True)
class AccessPair:
    first: Access
    second: Access
    kinds: frozenset[str] = frozenset(ALL_KINDS)

    @property
    def is_self_pair(self) -> bool:
        return self.first.id == self.second.id

    def with_kinds(self, kinds: frozenset[str]) -> AccessPair:
        return AccessPair(self.first, self.second, kinds)

    def __str__(self) -> str:
        kinds = ", ".join(sorted(self.kinds, key=KIND_ORDER.get)) or "-"
        return f"{self.first} <-> {self.second}: {{{kinds}}}"


def scope_at_least(scope: str | None, required: str) -> bool:
    return scope is not None and SCOPE_RANK[scope] >= SCOPE_RANK[required]


def _loads(expr: Expr) -> Iterator[ArrayLoad]:
    for e in walk_expr(expr):
        if isinstance(e, ArrayLoad):
            yield e


def _stmt_parts(stmt: Stmt) -> Iterator[tuple[str, Expr]]:
    """(cfg role, expression) in evaluation order."""
    if isinstance(stmt, Assign):
        if stmt.value is not None:
            yield "stmt", stmt.value
    elif isinstance(stmt, ArrayStore):
        yield "stmt", stmt.value
        yield "stmt", stmt.index
    elif isinstance(stmt, If):
        yield "branch", stmt.cond
    elif isinstance(stmt, For):
        yield "init", stmt.init
        yield "cond", stmt.cond
    elif isinstance(stmt, AtomicOp):
        yield "stmt", stmt.index
        for op in stmt.operands:
            yield "stmt", op


def collect_accesses(kernel: KernelDecl, cfg: CFG) -> list[Access]:
    """Every static global-memory access of `kernel`, in program order."""
    arrays = set(kernel.array_params)
    out: list[Access] = []

    def add(kind: str, array: str, index: Expr, scope: str | None, loc: SourceLoc, stmt: Stmt, role: str, expr=None) -> None:
        if array in arrays:
            out.append(Access(len(out), kind, array, index, scope, loc, stmt, cfg.ref(stmt, role), expr))

    def visit(body: tuple[Stmt, ...]) -> None:
        for stmt in body:
            for role, e in _stmt_parts(stmt):
                for load in _loads(e):
                    add(LOAD, load.array, load.index, None, load.loc, stmt, role, load)
            if isinstance(stmt, ArrayStore):
                add(STORE, stmt.array, stmt.index, None, stmt.loc, stmt, "stmt")
            elif isinstance(stmt, AtomicOp):
                add(ATOMIC_KINDS[stmt.op], stmt.array, stmt.index, SCOPES[stmt.scope], stmt.array_loc, stmt, "stmt")
            for block in child_blocks(stmt):
                visit(block)
            if isinstance(stmt, For):
                # the step runs after the body
                for load in _loads(stmt.step):
                    add(LOAD, load.array, load.index, None, load.loc, stmt, "step", load)

    visit(kernel.body)
    return out


def generate_access_pairs(accesses: list[Access]) -> list[AccessPair]:
    """Same-array pairs, self-pairs included; load/load and device/device atomic pairs dropped."""
    pairs: list[AccessPair] = []
    for i, a in enumerate(accesses):
        for b in accesses[i:]:
            if a.array != b.array:
                continue
            if not a.writes and not b.writes:
                continue
            if a.is_atomic and b.is_atomic and a.scope == "Device" and b.scope == "Device":
                continue
            pairs.append(AccessPair(a, b))
    return pairs


def _is_barrier(kinds: tuple[str, ...]):
    def blocked(item: Item) -> bool:
        return isinstance(item.stmt, Barrier) and item.stmt.kind in kinds

    return blocked


def barrier_separates(pair: AccessPair, cfg: CFG, dom: DomInfo, kinds: tuple[str, ...]) -> bool:
    """Is every execution of the pair split by one of the given barriers?

    A barrier must post-dominate the first access and dominate the second.
    When the first access can be reached again from the second (a loop),
    every such path must also cross a barrier.
    """
    a, b = pair.first.ref, pair.second.ref
    if pair.is_self_pair:
        return False
    found = False
    for ref, item in cfg.items():
        if isinstance(item.stmt, Barrier) and item.stmt.kind in kinds:
            if dom.postdominates(ref, a) and dom.dominates(ref, b):
                found = True
                break
    if not found:
        return False
    return not path_avoiding(cfg, b, a, _is_barrier(kinds))


def preliminary_check(pair: AccessPair, cfg: CFG, dom: DomInfo) -> frozenset[str]:
    kinds = set(ALL_KINDS)
    first, second = pair.first, pair.second
    if first.is_atomic and second.is_atomic:
        if first.scope == "Device" and second.scope == "Device":
            return frozenset()
        kinds -= {INTRA_BLOCK, INTRA_WARP}
    if barrier_separates(pair, cfg, dom, ("syncthreads",)):
        kinds -= {INTRA_BLOCK, INTRA_WARP}
    elif barrier_separates(pair, cfg, dom, ("syncthreads", "syncwarp")):
        kinds -= {INTRA_WARP}
    return frozenset(kinds)


def surviving_pairs(kernel: KernelDecl, cfg: CFG, dom: DomInfo) -> tuple[list[Access], list[AccessPair], int]:
    """(accesses, pairs with non-empty kinds, number of pairs filtered out)."""
    accesses = collect_accesses(kernel, cfg)
    out: list[AccessPair] = []
    dropped = 0
    for pair in generate_access_pairs(accesses):
        kinds = preliminary_check(pair, cfg, dom)
        if kinds:
            out.append(pair.with_kinds(kinds))
        else:
            dropped += 1
    return accesses, out, dropped
