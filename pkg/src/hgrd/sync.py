"""Scoped acquire/release recognition and the guard check for racy pairs.

An acquire is a blocking `atomicCAS` statement followed by a fence, both
dominating the data access. A release is a fence followed by `atomicExch`,
both post-dominating it. The scope of either is the narrower scope of its
two parts, and only parts at least as wide as the required scope count.
"""

from __future__ import annotations

from dataclasses import dataclass

from hgrd.cfg import CFG, DomInfo, StmtRef
from hgrd.kernel_constraints import SolverContext, pair_system, used_domains
from hgrd.minicu.ast import AtomicOp, Fence
from hgrd.prelim import INTER_BLOCK, SCOPES, Access, AccessPair, scope_at_least
from hgrd.solver import Budget, SolveResult, solve
from hgrd.solver.terms import rel

ACQUIRE, RELEASE, LOCK = "Acquire", "Release", "Lock"
GUARDED, RACY, UNDECIDED = "Guarded", "Racy", "Undecided"
NO_SYNC, ADDRESS_MISMATCH, INSUFFICIENT_SCOPE = "NoSync", "AddressMismatchPossible", "InsufficientScope"


@dataclass(frozen=True)
class SyncAccess:
    role: str
    atomic: Access
    fence: StmtRef
    scope: str

    @property
    def lock_array(self) -> str:
        return self.atomic.array


@dataclass(frozen=True)
class GuardVerdict:
    status: str
    reason: str | None = None
    model: dict[str, int] | None = None

    @property
    def is_racy(self) -> bool:
        return self.status != GUARDED


def required_scope(kind: str) -> str:
    return "Device" if kind == INTER_BLOCK else "Block"


def _narrower(a: str, b: str) -> str:
    return a if not scope_at_least(a, b) else b


def _nearest(cands: list[StmtRef], dom: DomInfo, forward: bool) -> StmtRef | None:
    """The candidate closest to the access: every other one (post)dominates it."""
    rel_ = dom.postdominates if forward else dom.dominates
    for c in cands:
        if all(rel_(o, c) for o in cands):
            return c
    return None


class SyncFinder:
    """Acquire/release lookup for the accesses of one kernel."""

    def __init__(self, cfg: CFG, dom: DomInfo, accesses: list[Access]) -> None:
        self.cfg = cfg
        self.dom = dom
        self.by_stmt = {a.stmt.sid: a for a in accesses if a.is_atomic}
        self.fences = [(ref, item.stmt) for ref, item in cfg.items() if isinstance(item.stmt, Fence)]
        self.atomics = [
            (ref, self.by_stmt[item.stmt.sid])
            for ref, item in cfg.items()
            if isinstance(item.stmt, AtomicOp) and item.stmt.sid in self.by_stmt
        ]

    def _fence(self, at: StmtRef, scope: str, forward: bool) -> tuple[StmtRef, str] | None:
        test = self.dom.postdominates if forward else self.dom.dominates
        cands = [ref for ref, f in self.fences if scope_at_least(SCOPES[f.scope], scope) and ref != at and test(ref, at)]
        ref = _nearest(cands, self.dom, forward)
        if ref is None:
            return None
        return ref, SCOPES[self.cfg.item(ref).stmt.scope]

    def _atomic(self, at: StmtRef, kind: str, scope: str, forward: bool) -> Access | None:
        test = self.dom.postdominates if forward else self.dom.dominates
        cands = {}
        for ref, acc in self.atomics:
            if acc.kind != kind or not scope_at_least(acc.scope, scope) or ref == at:
                continue
            # an acquire must block until it takes the lock
            if kind == "AtomicCAS" and acc.stmt.target is not None:
                continue
            if test(ref, at):
                cands[ref] = acc
        ref = _nearest(list(cands), self.dom, forward)
        return None if ref is None else cands[ref]

    def get_acquire(self, access: Access, scope: str) -> SyncAccess | None:
        fence = self._fence(access.ref, scope, forward=False)
        if fence is None:
            return None
        cas = self._atomic(fence[0], "AtomicCAS", scope, forward=False)
        if cas is None:
            return None
        return SyncAccess(ACQUIRE, cas, fence[0], _narrower(cas.scope, fence[1]))

    def get_release(self, access: Access, scope: str) -> SyncAccess | None:
        fence = self._fence(access.ref, scope, forward=True)
        if fence is None:
            return None
        exch = self._atomic(fence[0], "AtomicExch", scope, forward=True)
        if exch is None:
            return None
        return SyncAccess(RELEASE, exch, fence[0], _narrower(exch.scope, fence[1]))

    def syn(self, access: Access, scope: str, ctx: SolverContext) -> SyncAccess | None:
        acq = self.get_acquire(access, scope)
        rel_ = self.get_release(access, scope)
        if acq is not None and rel_ is not None and _match(acq, rel_, ctx):
            return SyncAccess(LOCK, acq.atomic, acq.fence, _narrower(acq.scope, rel_.scope))
        if access.writes and rel_ is not None:
            return rel_
        if not access.writes and acq is not None:
            return acq
        return None


def _match(acq: SyncAccess, release: SyncAccess, ctx: SolverContext) -> bool:
    if acq.lock_array != release.lock_array:
        return False
    return ctx.site(acq.atomic, 1).address == ctx.site(release.atomic, 1).address


def _compatible(pair: AccessPair, s1: SyncAccess, s2: SyncAccess) -> bool:
    """Two writers need a lock each; a writer/reader pair may also hand off."""
    a, b = pair.first, pair.second
    if a.writes and b.writes:
        return s1.role == LOCK and s2.role == LOCK
    return True


def check_guarded(
    pair: AccessPair,
    kind: str,
    ctx: SolverContext,
    finder: SyncFinder,
    budget: Budget | None = None,
    base: SolveResult | None = None,
) -> GuardVerdict:
    """Decide whether acquire/release keeps a satisfiable pair from racing."""
    scope = required_scope(kind)
    s1 = finder.syn(pair.first, scope, ctx)
    s2 = finder.syn(pair.second, scope, ctx)
    witness = base.model if base is not None else None
    if s1 is None or s2 is None or not _compatible(pair, s1, s2):
        if scope == "Device" and (s1 is None or s2 is None):
            w1 = s1 or finder.syn(pair.first, "Block", ctx)
            w2 = s2 or finder.syn(pair.second, "Block", ctx)
            if w1 is not None and w2 is not None and _compatible(pair, w1, w2):
                return GuardVerdict(RACY, INSUFFICIENT_SCOPE, witness)
        return GuardVerdict(RACY, NO_SYNC, witness)
    assert scope_at_least(s1.scope, scope) and scope_at_least(s2.scope, scope)
    if s1.lock_array != s2.lock_array:
        return GuardVerdict(RACY, ADDRESS_MISMATCH, witness)
    site1 = ctx.site(s1.atomic, 1)
    site2 = ctx.site(s2.atomic, 2)
    system = [*pair_system(pair, kind, ctx), *site1.guards, *site2.guards, rel("!=", site1.address, site2.address)]
    result = solve(system, used_domains(system, ctx), budget)
    if result.is_sat:
        return GuardVerdict(RACY, ADDRESS_MISMATCH, result.model)
    if result.is_unsat:
        return GuardVerdict(GUARDED)
    return GuardVerdict(UNDECIDED, None, witness)
