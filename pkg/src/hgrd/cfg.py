"""Per-kernel control-flow graphs with dominator and post-dominator trees."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator

from hgrd.minicu.ast import For, If, KernelDecl, Return, Stmt


@dataclass(frozen=True)
class Item:
    """One CFG position.

    Most statements occupy a single item with role "stmt". Structured
    statements are split: an If contributes its "branch" (condition
    evaluation); a For contributes "init" (preheader), "cond" (header) and
    "step" (end of body).
    """

    stmt: Stmt
    role: str = "stmt"


@dataclass(frozen=True, order=True)
class StmtRef:
    block: int
    index: int


@dataclass
class BasicBlock:
    id: int
    items: list[Item] = field(default_factory=list)
    succs: list[int] = field(default_factory=list)
    preds: list[int] = field(default_factory=list)


@dataclass
class CFG:
    blocks: list[BasicBlock]
    entry: int
    exit: int
    name: str = ""

    def __post_init__(self) -> None:
        self._refs: dict[tuple[int, str], StmtRef] = {}
        for b in self.blocks:
            for i, item in enumerate(b.items):
                self._refs[(item.stmt.sid, item.role)] = StmtRef(b.id, i)

    def ref(self, stmt: Stmt, role: str = "stmt") -> StmtRef:
        return self._refs[(stmt.sid, role)]

    def has_ref(self, stmt: Stmt, role: str = "stmt") -> bool:
        return (stmt.sid, role) in self._refs

    def item(self, ref: StmtRef) -> Item:
        return self.blocks[ref.block].items[ref.index]

    def items(self) -> Iterator[tuple[StmtRef, Item]]:
        for b in self.blocks:
            for i, item in enumerate(b.items):
                yield StmtRef(b.id, i), item

    def to_dot(self) -> str:
        lines = [f'digraph "{self.name or "cfg"}" {{', "  node [shape=box];"]
        for b in self.blocks:
            label = [f"B{b.id}" + (" (entry)" if b.id == self.entry else "") + (" (exit)" if b.id == self.exit else "")]
            for item in b.items:
                s = item.stmt
                label.append(f"{type(s).__name__}:{item.role} @{s.loc.line}:{s.loc.column}")
            text = "\\l".join(label) + "\\l"
            lines.append(f'  B{b.id} [label="{text}"];')
        for b in self.blocks:
            for s in b.succs:
                lines.append(f"  B{b.id} -> B{s};")
        lines.append("}")
        return "\n".join(lines) + "\n"


class _Builder:
    EXIT = -1

    def __init__(self) -> None:
        self.blocks: list[BasicBlock] = []

    def new(self) -> int:
        self.blocks.append(BasicBlock(len(self.blocks)))
        return len(self.blocks) - 1

    def link(self, a: int, b: int) -> None:
        self.blocks[a].succs.append(b)

    def add(self, b: int, stmt: Stmt, role: str = "stmt") -> None:
        self.blocks[b].items.append(Item(stmt, role))

    def body(self, stmts: tuple[Stmt, ...], cur: int) -> int | None:
        """Lay out `stmts` starting in block `cur`; return the fall-through block."""
        cur_opt: int | None = cur
        for stmt in stmts:
            if cur_opt is None:  # unreachable; the resolver rejects this
                break
            cur_opt = self.stmt(stmt, cur_opt)
        return cur_opt

    def stmt(self, stmt: Stmt, cur: int) -> int | None:
        if isinstance(stmt, If):
            self.add(cur, stmt, "branch")
            then_b = self.new()
            self.link(cur, then_b)
            ends = [self.body(stmt.then, then_b)]
            if stmt.orelse is not None:
                else_b = self.new()
                self.link(cur, else_b)
                ends.append(self.body(stmt.orelse, else_b))
            else:
                ends.append(cur)
            live = [e for e in ends if e is not None]
            if not live:
                return None
            join = self.new()
            for e in live:
                self.link(e, join)
            return join
        if isinstance(stmt, For):
            self.add(cur, stmt, "init")
            header = self.new()
            self.link(cur, header)
            self.add(header, stmt, "cond")
            body_b = self.new()
            self.link(header, body_b)
            end = self.body(stmt.body, body_b)
            if end is not None:
                self.add(end, stmt, "step")
                self.link(end, header)
            after = self.new()
            self.link(header, after)
            return after
        self.add(cur, stmt)
        if isinstance(stmt, Return):
            self.link(cur, self.EXIT)
            return None
        return cur


def build_cfg(kernel: KernelDecl) -> CFG:
    """Build the CFG of a kernel body.

    A trailing empty join block doubles as the synthetic exit, so a
    straight-line kernel yields two blocks and a single `if` yields three.
    """
    b = _Builder()
    entry = b.new()
    last = b.body(kernel.body, entry)
    if last is not None and last != entry and not b.blocks[last].items:
        exit_id = last
    else:
        exit_id = b.new()
        if last is not None:
            b.link(last, exit_id)
    for blk in b.blocks:
        blk.succs = [exit_id if s == _Builder.EXIT else s for s in blk.succs]
    for blk in b.blocks:
        for s in blk.succs:
            b.blocks[s].preds.append(blk.id)
    return CFG(b.blocks, entry, exit_id, kernel.name)


def reverse_postorder(entry: int, succs: Callable[[int], list[int]]) -> list[int]:
    seen: set[int] = set()
    post: list[int] = []
    stack: list[tuple[int, Iterator[int]]] = [(entry, iter(succs(entry)))]
    seen.add(entry)
    while stack:
        node, it = stack[-1]
        for nxt in it:
            if nxt not in seen:
                seen.add(nxt)
                stack.append((nxt, iter(succs(nxt))))
                break
        else:
            stack.pop()
            post.append(node)
    post.reverse()
    return post


def immediate_dominators(
    entry: int, succs: Callable[[int], list[int]], preds: Callable[[int], list[int]]
) -> dict[int, int]:
    """Iterative dataflow over reverse post-order (Cooper, Harvey and Kennedy)."""
    order = reverse_postorder(entry, succs)
    index = {b: i for i, b in enumerate(order)}
    idom: dict[int, int] = {entry: entry}

    def intersect(a: int, b: int) -> int:
        while a != b:
            while index[a] > index[b]:
                a = idom[a]
            while index[b] > index[a]:
                b = idom[b]
        return a

    changed = True
    while changed:
        changed = False
        for node in order[1:]:
            new: int | None = None
            for p in preds(node):
                if p in idom:
                    new = p if new is None else intersect(p, new)
            if new is not None and idom.get(node) != new:
                idom[node] = new
                changed = True
    del idom[entry]
    return idom


@dataclass
class DomInfo:
    cfg: CFG
    idom: dict[int, int]
    ipdom: dict[int, int]

    def block_dominates(self, a: int, b: int) -> bool:
        return _chain_contains(self.idom, b, a)

    def block_postdominates(self, a: int, b: int) -> bool:
        return _chain_contains(self.ipdom, b, a)

    def dominates(self, a: StmtRef, b: StmtRef) -> bool:
        if a.block == b.block:
            return a.index <= b.index
        return self.block_dominates(a.block, b.block)

    def postdominates(self, a: StmtRef, b: StmtRef) -> bool:
        if a.block == b.block:
            return a.index >= b.index
        return self.block_postdominates(a.block, b.block)


def _chain_contains(tree: dict[int, int], start: int, target: int) -> bool:
    node = start
    while True:
        if node == target:
            return True
        parent = tree.get(node)
        if parent is None:
            return False
        node = parent


def compute_dominance(cfg: CFG) -> DomInfo:
    blocks = cfg.blocks
    idom = immediate_dominators(cfg.entry, lambda b: blocks[b].succs, lambda b: blocks[b].preds)
    ipdom = immediate_dominators(cfg.exit, lambda b: blocks[b].preds, lambda b: blocks[b].succs)
    return DomInfo(cfg, idom, ipdom)


def dominates(dom: DomInfo, a: StmtRef, b: StmtRef) -> bool:
    return dom.dominates(a, b)


def postdominates(dom: DomInfo, a: StmtRef, b: StmtRef) -> bool:
    return dom.postdominates(a, b)


def path_avoiding(cfg: CFG, src: StmtRef, dst: StmtRef, blocked: Callable[[Item], bool]) -> bool:
    """Is there a non-empty path from `src` to `dst` that crosses no blocked item?

    The endpoints themselves are never tested against `blocked`.
    """
    items = cfg.blocks[src.block].items
    for i in range(src.index + 1, len(items)):
        if StmtRef(src.block, i) == dst:
            return True
        if blocked(items[i]):
            return False
    stack = list(cfg.blocks[src.block].succs)
    seen: set[int] = set()
    while stack:
        b = stack.pop()
        if b in seen:
            continue
        seen.add(b)
        for i, item in enumerate(cfg.blocks[b].items):
            if StmtRef(b, i) == dst:
                return True
            if blocked(item):
                break
        else:
            stack.extend(cfg.blocks[b].succs)
    return False
