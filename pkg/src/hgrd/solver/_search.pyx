# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled propagation and DFS; same algorithm and layout as `_pysearch`.

All arithmetic is on 64-bit integers. The caller only selects this kernel
when every bound is below 2**31 and the largest linear sum stays below
2**62, so no intermediate value can overflow.
"""

from libc.math cimport sqrt
from libc.stdlib cimport free, malloc, realloc
from libc.string cimport memcpy

import time

ctypedef long long i64

cdef int SAT = 1
cdef int UNSAT = 0
cdef int UNKNOWN = -1
cdef int LIN_EQ = 0
cdef int LIN_LE = 1
cdef int LIN_NE = 2
cdef int MUL = 3
cdef int DIV = 4
cdef int ENUM_LIMIT = 8


cdef inline i64 fdiv(i64 a, i64 b) nogil:
    cdef i64 q = a / b
    if (a % b != 0) and ((a < 0) != (b < 0)):
        q -= 1
    return q


cdef inline i64 cdiv_(i64 a, i64 b) nogil:
    return -fdiv(-a, b)


cdef inline i64 tdiv(i64 a, i64 c) nogil:
    return a / c


cdef inline i64 tmod(i64 a, i64 c) nogil:
    return a % c


cdef inline i64 isqrt(i64 n) nogil:
    cdef i64 r = <i64> sqrt(<double> n)
    while r * r > n:
        r -= 1
    while (r + 1) * (r + 1) <= n:
        r += 1
    return r


cdef inline i64 imin(i64 a, i64 b) nogil:
    return a if a < b else b


cdef inline i64 imax(i64 a, i64 b) nogil:
    return a if a > b else b


cdef struct Sys:
    int n_vars
    int n_cons
    int n_base
    i64 *data
    int *start
    int *wstart
    int *watch


cdef struct Prop:
    i64 *lo
    i64 *hi
    int *queue
    char *inq
    int head
    int tail
    int qcap
    long steps


cdef void touch(Sys *s, Prop *p, int v) nogil:
    cdef int k, c
    for k in range(s.wstart[v], s.wstart[v + 1]):
        c = s.watch[k]
        if not p.inq[c]:
            p.inq[c] = 1
            p.queue[p.tail] = c
            p.tail = (p.tail + 1) % p.qcap


cdef inline bint set_lo(Sys *s, Prop *p, int v, i64 val) nogil:
    if val > p.lo[v]:
        if val > p.hi[v]:
            return False
        p.lo[v] = val
        touch(s, p, v)
    return True


cdef inline bint set_hi(Sys *s, Prop *p, int v, i64 val) nogil:
    if val < p.hi[v]:
        if val < p.lo[v]:
            return False
        p.hi[v] = val
        touch(s, p, v)
    return True


cdef int quot_bounds(i64 zl, i64 zh, i64 yl, i64 yh, i64 *qlo, i64 *qhi) nogil:
    """0 = no information, 1 = bounds written, 2 = empty."""
    cdef i64 a, b, zz, yy, fl, ce
    cdef int found = 0, side, iz, iy
    if zl <= 0 <= zh and yl <= 0 <= yh:
        return 0
    for side in range(2):
        if side == 0:
            a = yl
            b = imin(yh, -1)
        else:
            a = imax(yl, 1)
            b = yh
        if a > b:
            continue
        for iz in range(2):
            zz = zl if iz == 0 else zh
            for iy in range(2):
                yy = a if iy == 0 else b
                fl = fdiv(zz, yy)
                ce = cdiv_(zz, yy)
                if not found or ce < qlo[0]:
                    qlo[0] = ce
                if not found or fl > qhi[0]:
                    qhi[0] = fl
                found = 1
    return 1 if found else 2


cdef bint revise(Sys *s, Prop *p, int c) nogil:
    cdef i64 *d = s.data
    cdef int st = s.start[c]
    cdef i64 code = d[st]
    cdef i64 *lo = p.lo
    cdef i64 *hi = p.hi
    cdef int n, j, v, free_v, z, x, y, r
    cdef i64 k, a, free_a, total, smin, smax, upper, lower, val
    cdef i64 xl, xh, yl, yh, pl, ph, p1, p2, p3, p4, cc, zl, zh, ml, mh, qlo = 0, qhi = 0, rr
    if code <= LIN_NE:
        n = <int> d[st + 1]
        k = d[st + 2]
        if code == LIN_NE:
            free_v = -1
            free_a = 0
            total = k
            for j in range(n):
                v = <int> d[st + 3 + 2 * j]
                a = d[st + 4 + 2 * j]
                if lo[v] == hi[v]:
                    total += a * lo[v]
                elif free_v >= 0:
                    return True
                else:
                    free_v = v
                    free_a = a
            if free_v < 0:
                return total != 0
            if total % free_a == 0:
                val = -total / free_a
                if val == lo[free_v]:
                    return set_lo(s, p, free_v, val + 1)
                if val == hi[free_v]:
                    return set_hi(s, p, free_v, val - 1)
            return True
        smin = k
        smax = k
        for j in range(n):
            v = <int> d[st + 3 + 2 * j]
            a = d[st + 4 + 2 * j]
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
            v = <int> d[st + 3 + 2 * j]
            a = d[st + 4 + 2 * j]
            if a > 0:
                upper = -(smin - a * lo[v])
                if not set_hi(s, p, v, fdiv(upper, a)):
                    return False
                if code == LIN_EQ:
                    lower = -(smax - a * hi[v])
                    if not set_lo(s, p, v, cdiv_(lower, a)):
                        return False
            else:
                upper = -(smin - a * hi[v])
                if not set_lo(s, p, v, cdiv_(upper, a)):
                    return False
                if code == LIN_EQ:
                    lower = -(smax - a * lo[v])
                    if not set_hi(s, p, v, fdiv(lower, a)):
                        return False
        return True
    if code == MUL:
        z = <int> d[st + 1]
        x = <int> d[st + 2]
        y = <int> d[st + 3]
        if x == y:
            xl = lo[x]
            xh = hi[x]
            if xl >= 0:
                pl = xl * xl
                ph = xh * xh
            elif xh <= 0:
                pl = xh * xh
                ph = xl * xl
            else:
                pl = 0
                ph = imax(xl * xl, xh * xh)
            if not (set_lo(s, p, z, pl) and set_hi(s, p, z, ph)):
                return False
            rr = isqrt(hi[z])
            if not (set_lo(s, p, x, -rr) and set_hi(s, p, x, rr)):
                return False
            if lo[z] > 0:
                rr = isqrt(lo[z])
                if rr * rr != lo[z]:
                    rr += 1
                if lo[x] > -rr and not set_lo(s, p, x, rr):
                    return False
                if hi[x] < rr and not set_hi(s, p, x, -rr):
                    return False
            return True
        xl = lo[x]
        xh = hi[x]
        yl = lo[y]
        yh = hi[y]
        p1 = xl * yl
        p2 = xl * yh
        p3 = xh * yl
        p4 = xh * yh
        if not (set_lo(s, p, z, imin(imin(p1, p2), imin(p3, p4)))
                and set_hi(s, p, z, imax(imax(p1, p2), imax(p3, p4)))):
            return False
        r = quot_bounds(lo[z], hi[z], lo[y], hi[y], &qlo, &qhi)
        if r == 2:
            return False
        if r == 1 and not (set_lo(s, p, x, qlo) and set_hi(s, p, x, qhi)):
            return False
        r = quot_bounds(lo[z], hi[z], lo[x], hi[x], &qlo, &qhi)
        if r == 2:
            return False
        if r == 1 and not (set_lo(s, p, y, qlo) and set_hi(s, p, y, qhi)):
            return False
        return True
    z = <int> d[st + 1]
    x = <int> d[st + 2]
    cc = d[st + 3]
    if code == DIV:
        if not (set_lo(s, p, z, tdiv(lo[x], cc)) and set_hi(s, p, z, tdiv(hi[x], cc))):
            return False
        zl = lo[z]
        zh = hi[z]
        if zl > 0:
            xl = zl * cc
        elif zl == 0:
            xl = -(cc - 1)
        else:
            xl = zl * cc - (cc - 1)
        if zh > 0:
            xh = zh * cc + cc - 1
        elif zh == 0:
            xh = cc - 1
        else:
            xh = zh * cc
        return set_lo(s, p, x, xl) and set_hi(s, p, x, xh)
    xl = lo[x]
    xh = hi[x]
    if xl >= 0 or xh <= 0:
        if xh - xl < cc and tmod(xl, cc) <= tmod(xh, cc):
            ml = tmod(xl, cc)
            mh = tmod(xh, cc)
        elif xl >= 0:
            ml = 0
            mh = imin(cc - 1, xh)
        else:
            ml = imax(-(cc - 1), xl)
            mh = 0
    else:
        ml = imax(-(cc - 1), xl)
        mh = imin(cc - 1, xh)
    if not (set_lo(s, p, z, ml) and set_hi(s, p, z, mh)):
        return False
    if lo[z] > 0 and not set_lo(s, p, x, 1):
        return False
    if hi[z] < 0 and not set_hi(s, p, x, -1):
        return False
    return True


cdef bint run(Sys *s, Prop *p, long max_steps) nogil:
    cdef int c
    while p.head != p.tail:
        c = p.queue[p.head]
        p.head = (p.head + 1) % p.qcap
        p.inq[c] = 0
        p.steps += 1
        if p.steps > max_steps:
            break
        if not revise(s, p, c):
            return False
    return True


cdef void reset(Sys *s, Prop *p, i64 *lo, i64 *hi) nogil:
    cdef int c
    p.lo = lo
    p.hi = hi
    p.head = 0
    p.tail = 0
    p.steps = 0
    for c in range(s.n_cons):
        p.inq[c] = 0


cdef bint check_assignment(Sys *s, i64 *val) nogil:
    cdef i64 *d = s.data
    cdef int c, st, j
    cdef i64 code, total
    cdef bint ok
    for c in range(s.n_cons):
        st = s.start[c]
        code = d[st]
        if code <= LIN_NE:
            total = d[st + 2]
            for j in range(<int> d[st + 1]):
                total += d[st + 4 + 2 * j] * val[d[st + 3 + 2 * j]]
            if code == LIN_EQ:
                ok = total == 0
            elif code == LIN_LE:
                ok = total <= 0
            else:
                ok = total != 0
        elif code == MUL:
            ok = val[d[st + 1]] == val[d[st + 2]] * val[d[st + 3]]
        elif code == DIV:
            ok = val[d[st + 1]] == tdiv(val[d[st + 2]], d[st + 3])
        else:
            ok = val[d[st + 1]] == tmod(val[d[st + 2]], d[st + 3])
        if not ok:
            return False
    return True


cdef int select_var(Sys *s, i64 *lo, i64 *hi) nogil:
    cdef int v, best = -1
    cdef i64 size, best_size = 0
    for v in range(s.n_base):
        size = hi[v] - lo[v]
        if size > 0 and (best < 0 or size < best_size):
            best = v
            best_size = size
    if best >= 0:
        return best
    for v in range(s.n_base, s.n_vars):
        size = hi[v] - lo[v]
        if size > 0 and (best < 0 or size < best_size):
            best = v
            best_size = size
    return best


cdef class _Buffers:
    """Owns the C copies of a FlatSystem."""

    cdef Sys sys
    cdef Prop prop

    def __cinit__(self, fs):
        cdef int i
        self.sys.n_vars = fs.n_vars
        self.sys.n_cons = fs.n_cons
        self.sys.n_base = fs.n_base
        self.sys.data = <i64 *> malloc(max(1, len(fs.data)) * sizeof(i64))
        self.sys.start = <int *> malloc(len(fs.start) * sizeof(int))
        self.sys.wstart = <int *> malloc(len(fs.wstart) * sizeof(int))
        self.sys.watch = <int *> malloc(max(1, len(fs.watch)) * sizeof(int))
        self.prop.qcap = fs.n_cons + 1
        self.prop.queue = <int *> malloc(self.prop.qcap * sizeof(int))
        self.prop.inq = <char *> malloc(max(1, fs.n_cons) * sizeof(char))
        for i in range(len(fs.data)):
            self.sys.data[i] = fs.data[i]
        for i in range(len(fs.start)):
            self.sys.start[i] = fs.start[i]
        for i in range(len(fs.wstart)):
            self.sys.wstart[i] = fs.wstart[i]
        for i in range(len(fs.watch)):
            self.sys.watch[i] = fs.watch[i]

    def __dealloc__(self):
        free(self.sys.data)
        free(self.sys.start)
        free(self.sys.wstart)
        free(self.sys.watch)
        free(self.prop.queue)
        free(self.prop.inq)


def propagate(fs, lo, hi, long max_steps=200000):
    """In-place propagation of Python lists `lo`/`hi`; False on conflict."""
    cdef _Buffers b = _Buffers(fs)
    cdef int n = fs.n_vars, i, c
    cdef i64 *clo = <i64 *> malloc(max(1, n) * sizeof(i64))
    cdef i64 *chi = <i64 *> malloc(max(1, n) * sizeof(i64))
    cdef bint ok
    try:
        for i in range(n):
            clo[i] = lo[i]
            chi[i] = hi[i]
        reset(&b.sys, &b.prop, clo, chi)
        for c in range(b.sys.n_cons):
            b.prop.inq[c] = 1
            b.prop.queue[b.prop.tail] = c
            b.prop.tail += 1
        ok = run(&b.sys, &b.prop, max_steps)
        for i in range(n):
            lo[i] = clo[i]
            hi[i] = chi[i]
        return ok
    finally:
        free(clo)
        free(chi)


def search(fs, long max_nodes, double time_limit, long max_steps=20000):
    """Complete DFS; returns (status, values, nodes) like `_pysearch.search`."""
    cdef _Buffers b = _Buffers(fs)
    cdef Sys *s = &b.sys
    cdef Prop *p = &b.prop
    cdef int n = fs.n_vars, i, v, c, top = 0, cap = 64, depth_need, slot
    cdef size_t frame = (2 * max(1, n)) * sizeof(i64)
    cdef i64 a, bb, mid, x, nchild
    cdef long nodes = 0
    cdef i64 *stack
    cdef int *changed
    cdef i64 *lo
    cdef i64 *hi
    cdef i64 *frame_lo
    deadline = time.monotonic() + time_limit
    stack = <i64 *> malloc(cap * frame)
    changed = <int *> malloc(cap * sizeof(int))
    try:
        lo = stack
        hi = stack + n
        for i in range(n):
            lo[i] = fs.lo[i]
            hi[i] = fs.hi[i]
            if lo[i] > hi[i]:
                return UNSAT, None, 0
        reset(s, p, lo, hi)
        for c in range(s.n_cons):
            p.inq[c] = 1
            p.queue[p.tail] = c
            p.tail += 1
        if not run(s, p, max_steps * 10):
            return UNSAT, None, 0
        changed[0] = -1
        top = 1
        while top > 0:
            top -= 1
            lo = stack + top * 2 * n
            hi = lo + n
            if changed[top] >= 0:
                nodes += 1
                if nodes > max_nodes:
                    return UNKNOWN, None, nodes
                if (nodes & 63) == 0 and time.monotonic() > deadline:
                    return UNKNOWN, None, nodes
                reset(s, p, lo, hi)
                touch(s, p, changed[top])
                if not run(s, p, max_steps):
                    continue
            v = select_var(s, lo, hi)
            if v < 0:
                if check_assignment(s, lo):
                    return SAT, [lo[i] for i in range(n)], nodes
                continue
            a = lo[v]
            bb = hi[v]
            nchild = bb - a + 1 if bb - a + 1 <= ENUM_LIMIT else 2
            depth_need = top + <int> nchild + 1
            if depth_need > cap:
                while cap < depth_need:
                    cap *= 2
                stack = <i64 *> realloc_or_fail(stack, cap * frame)
                changed = <int *> realloc_or_fail(changed, cap * sizeof(int))
                lo = stack + top * 2 * n
                hi = lo + n
            # child i lands at slot top + nchild - 1 - i so the lowest range
            # pops first; slot `top` holds the parent and is written last
            for i in range(<int> nchild):
                if nchild == 2 and bb - a + 1 > ENUM_LIMIT:
                    mid = a + (bb - a) / 2
                    x = a if i == 0 else mid + 1
                else:
                    x = a + i
                slot = top + <int> nchild - 1 - i
                frame_lo = stack + slot * 2 * n
                if slot != top:
                    memcpy(frame_lo, lo, frame)
                if nchild == 2 and bb - a + 1 > ENUM_LIMIT:
                    frame_lo[v] = x
                    frame_lo[n + v] = mid if i == 0 else bb
                else:
                    frame_lo[v] = x
                    frame_lo[n + v] = x
                changed[slot] = v
            top += <int> nchild
        return UNSAT, None, nodes
    finally:
        free(stack)
        free(changed)


cdef void *realloc_or_fail(void *ptr, size_t size) except NULL:
    cdef void *out = realloc(ptr, size)
    if out == NULL:
        raise MemoryError()
    return out
