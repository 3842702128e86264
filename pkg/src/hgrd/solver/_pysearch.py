"""Pure-Python propagation and depth-first search over a `FlatSystem`.

This module mirrors `_search.pyx` line for line; the compiled kernel is
preferred when it is available and the bounds fit in 64-bit integers.
"""

from __future__ import annotations

import time
from math import isqrt

SAT, UNSAT, UNKNOWN = 1, 0, -1
LIN_EQ, LIN_LE, LIN_NE, MUL, DIV, MOD = 0, 1, 2, 3, 4, 5
ENUM_LIMIT = 8
_NO_INFO = None
_EMPTY = (1, 0)


def _tdiv(a: int, c: int) -> int:
    q = abs(a) // c
    return q if a >= 0 else -q


def _tmod(a: int, c: int) -> int:
    return a - c * _tdiv(a, c)


def _ceil_sqrt(n: int) -> int:
    r = isqrt(n)
    return r if r * r == n else r + 1


def _quot_bounds(zl: int, zh: int, yl: int, yh: int):
    """Bounds on x with x*y = z, z in [zl, zh], y in [yl, yh]."""
    if zl <= 0 <= zh and yl <= 0 <= yh:
        return _NO_INFO
    lo = hi = None
    for a, b in ((yl, min(yh, -1)), (max(yl, 1), yh)):
        if a > b:
            continue
        for zz in (zl, zh):
            for yy in (a, b):
                fl = zz // yy
                ce = -((-zz) // yy)
                lo = ce if lo is None or ce < lo else lo
                hi = fl if hi is None or fl > hi else hi
    if lo is None:
        return _EMPTY
    # the hull of corner quotients can be narrower than [ceil, floor] of
    # single corners; the union of per-corner ranges is taken above
    return lo, hi


class _Prop:
    __slots__ = ("data", "start", "wstart", "watch", "lo", "hi", "queue", "inq", "steps")

    def __init__(self, fs, lo: list[int], hi: list[int]) -> None:
        self.data = fs.data
        self.start = fs.start
        self.wstart = fs.wstart
        self.watch = fs.watch
        self.lo = lo
        self.hi = hi
        self.queue: list[int] = []
        self.inq = [False] * fs.n_cons
        self.steps = 0

    def touch(self, v: int) -> None:
        watch = self.watch
        inq = self.inq
        for k in range(self.wstart[v], self.wstart[v + 1]):
            c = watch[k]
            if not inq[c]:
                inq[c] = True
                self.queue.append(c)

    def set_lo(self, v: int, val: int) -> bool:
        if val > self.lo[v]:
            if val > self.hi[v]:
                return False
            self.lo[v] = val
            self.touch(v)
        return True

    def set_hi(self, v: int, val: int) -> bool:
        if val < self.hi[v]:
            if val < self.lo[v]:
                return False
            self.hi[v] = val
            self.touch(v)
        return True

    def run(self, max_steps: int) -> bool:
        queue = self.queue
        inq = self.inq
        head = 0
        while head < len(queue):
            c = queue[head]
            head += 1
            inq[c] = False
            self.steps += 1
            if self.steps > max_steps:
                break
            if not self.revise(c):
                return False
            if head > 4096:
                del queue[:head]
                head = 0
        return True

    def revise(self, c: int) -> bool:
        d = self.data
        s = self.start[c]
        code = d[s]
        lo = self.lo
        hi = self.hi
        if code <= LIN_NE:
            n = d[s + 1]
            k = d[s + 2]
            if code == LIN_NE:
                free = -1
                free_a = 0
                total = k
                for j in range(n):
                    v = d[s + 3 + 2 * j]
                    a = d[s + 4 + 2 * j]
                    if lo[v] == hi[v]:
                        total += a * lo[v]
                    elif free >= 0:
                        return True
                    else:
                        free = v
                        free_a = a
                if free < 0:
                    return total != 0
                if total % free_a == 0:
                    val = -total // free_a
                    if val == lo[free]:
                        return self.set_lo(free, val + 1)
                    if val == hi[free]:
                        return self.set_hi(free, val - 1)
                return True
            smin = smax = k
            for j in range(n):
                v = d[s + 3 + 2 * j]
                a = d[s + 4 + 2 * j]
                if a > 0:
                    smin += a * lo[v]
                    smax += a * hi[v]
                else:
                    smin += a * hi[v]
                    smax += a * lo[v]
            if smin > 0:
                return False
            if code == LIN_EQ and smax < 0:
                return False
            for j in range(n):
                v = d[s + 3 + 2 * j]
                a = d[s + 4 + 2 * j]
                if a > 0:
                    upper = -(smin - a * lo[v])
                    if not self.set_hi(v, upper // a):
                        return False
                    if code == LIN_EQ:
                        lower = -(smax - a * hi[v])
                        if not self.set_lo(v, -((-lower) // a)):
                            return False
                else:
                    upper = -(smin - a * hi[v])
                    if not self.set_lo(v, -((-upper) // a)):
                        return False
                    if code == LIN_EQ:
                        lower = -(smax - a * lo[v])
                        if not self.set_hi(v, lower // a):
                            return False
            return True
        if code == MUL:
            z, x, y = d[s + 1], d[s + 2], d[s + 3]
            if x == y:
                xl, xh = lo[x], hi[x]
                if xl >= 0:
                    pl, ph = xl * xl, xh * xh
                elif xh <= 0:
                    pl, ph = xh * xh, xl * xl
                else:
                    pl, ph = 0, max(xl * xl, xh * xh)
                if not (self.set_lo(z, pl) and self.set_hi(z, ph)):
                    return False
                r = isqrt(hi[z])
                if not (self.set_lo(x, -r) and self.set_hi(x, r)):
                    return False
                if lo[z] > 0:
                    r = _ceil_sqrt(lo[z])
                    if lo[x] > -r and not self.set_lo(x, r):
                        return False
                    if hi[x] < r and not self.set_hi(x, -r):
                        return False
                return True
            xl, xh, yl, yh = lo[x], hi[x], lo[y], hi[y]
            p1, p2, p3, p4 = xl * yl, xl * yh, xh * yl, xh * yh
            if not (self.set_lo(z, min(p1, p2, p3, p4)) and self.set_hi(z, max(p1, p2, p3, p4))):
                return False
            q = _quot_bounds(lo[z], hi[z], lo[y], hi[y])
            if q is not None and not (self.set_lo(x, q[0]) and self.set_hi(x, q[1])):
                return False
            q = _quot_bounds(lo[z], hi[z], lo[x], hi[x])
            if q is not None and not (self.set_lo(y, q[0]) and self.set_hi(y, q[1])):
                return False
            return True
        if code == DIV:
            z, x, cc = d[s + 1], d[s + 2], d[s + 3]
            if not (self.set_lo(z, _tdiv(lo[x], cc)) and self.set_hi(z, _tdiv(hi[x], cc))):
                return False
            zl, zh = lo[z], hi[z]
            xl = zl * cc if zl > 0 else (-(cc - 1) if zl == 0 else zl * cc - (cc - 1))
            xh = zh * cc + cc - 1 if zh > 0 else (cc - 1 if zh == 0 else zh * cc)
            return self.set_lo(x, xl) and self.set_hi(x, xh)
        # MOD
        z, x, cc = d[s + 1], d[s + 2], d[s + 3]
        xl, xh = lo[x], hi[x]
        if xl >= 0 or xh <= 0:
            if xh - xl < cc and _tmod(xl, cc) <= _tmod(xh, cc):
                ml, mh = _tmod(xl, cc), _tmod(xh, cc)
            elif xl >= 0:
                ml, mh = 0, min(cc - 1, xh)
            else:
                ml, mh = max(-(cc - 1), xl), 0
        else:
            ml, mh = max(-(cc - 1), xl), min(cc - 1, xh)
        if not (self.set_lo(z, ml) and self.set_hi(z, mh)):
            return False
        if lo[z] > 0 and not self.set_lo(x, 1):
            return False
        if hi[z] < 0 and not self.set_hi(x, -1):
            return False
        return True


def propagate(fs, lo: list[int], hi: list[int], max_steps: int = 200_000) -> bool:
    """Propagate every constraint to a fixpoint (or the step cap) in place."""
    p = _Prop(fs, lo, hi)
    for c in range(fs.n_cons):
        p.inq[c] = True
        p.queue.append(c)
    return p.run(max_steps)


def check_assignment(fs, val: list[int]) -> bool:
    d = fs.data
    for c in range(fs.n_cons):
        s = fs.start[c]
        code = d[s]
        if code <= LIN_NE:
            total = d[s + 2]
            for j in range(d[s + 1]):
                total += d[s + 4 + 2 * j] * val[d[s + 3 + 2 * j]]
            ok = total == 0 if code == LIN_EQ else (total <= 0 if code == LIN_LE else total != 0)
        elif code == MUL:
            ok = val[d[s + 1]] == val[d[s + 2]] * val[d[s + 3]]
        elif code == DIV:
            ok = val[d[s + 1]] == _tdiv(val[d[s + 2]], d[s + 3])
        else:
            ok = val[d[s + 1]] == _tmod(val[d[s + 2]], d[s + 3])
        if not ok:
            return False
    return True


def _select(lo: list[int], hi: list[int], n_base: int, n_vars: int) -> int:
    best = -1
    best_size = 0
    for v in range(n_base):
        size = hi[v] - lo[v]
        if size > 0 and (best < 0 or size < best_size):
            best, best_size = v, size
    if best >= 0:
        return best
    for v in range(n_base, n_vars):
        size = hi[v] - lo[v]
        if size > 0 and (best < 0 or size < best_size):
            best, best_size = v, size
    return best


def search(fs, max_nodes: int, time_limit: float, max_steps: int = 20_000):
    """Complete DFS; returns (status, values, nodes)."""
    deadline = time.monotonic() + time_limit
    lo = list(fs.lo)
    hi = list(fs.hi)
    if any(a > b for a, b in zip(lo, hi)):
        return UNSAT, None, 0
    if not propagate(fs, lo, hi, max_steps * 10):
        return UNSAT, None, 0
    stack: list[tuple[list[int], list[int], int]] = [(lo, hi, -1)]
    nodes = 0
    while stack:
        lo, hi, v_changed = stack.pop()
        if v_changed >= 0:
            nodes += 1
            if nodes > max_nodes or ((nodes & 63) == 0 and time.monotonic() > deadline):
                return UNKNOWN, None, nodes
            p = _Prop(fs, lo, hi)
            p.touch(v_changed)
            if not p.run(max_steps):
                continue
        v = _select(lo, hi, fs.n_base, fs.n_vars)
        if v < 0:
            if check_assignment(fs, lo):
                return SAT, lo, nodes
            continue
        a, b = lo[v], hi[v]
        if b - a + 1 <= ENUM_LIMIT:
            children = [(x, x) for x in range(a, b + 1)]
        else:
            mid = a + (b - a) // 2
            children = [(a, mid), (mid + 1, b)]
        for ca, cb in reversed(children):
            lo2 = list(lo)
            hi2 = list(hi)
            lo2[v] = ca
            hi2[v] = cb
            stack.append((lo2, hi2, v))
    return UNSAT, None, nodes
