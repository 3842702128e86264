from __future__ import annotations

from hgrd.kernel_constraints import pair_system, used_domains
from hgrd.prelim import INTER_BLOCK, INTRA_BLOCK
from hgrd.solver import solve
from hgrd.sync import (
    ACQUIRE,
    ADDRESS_MISMATCH,
    GUARDED,
    INSUFFICIENT_SCOPE,
    LOCK,
    NO_SYNC,
    RACY,
    RELEASE,
    check_guarded,
    required_scope,
)

LOCKED = """__global__
void k(int *c, int *mutex, int n) {{
  g = blockIdx.x * blockDim.x + threadIdx.x;
  {cas}(mutex[{i}], 0, 1);
  {fence}();
  c[0] = c[0] + 1;
  {fence}();
  {exch}(mutex[{i}], 0);
}}
int main() {{
}}
"""


def locked(scope: str = "", index: str = "0") -> str:
    fence = "__threadfence_block" if scope else "__threadfence"
    return LOCKED.format(cas="atomicCAS" + scope, exch="atomicExch" + scope, fence=fence, i=index)


def verdict(s, line_a, line_b, kind):
    ctx = s.ctx()
    pair = s.pair(line_a, line_b)
    system = pair_system(pair, kind, ctx)
    base = solve(system, used_domains(system, ctx))
    assert base.is_sat
    return check_guarded(pair, kind, ctx, s.finder, None, base)


def test_required_scope():
    assert required_scope(INTER_BLOCK) == "Device"
    assert required_scope(INTRA_BLOCK) == "Block"


def test_lock_is_found_around_both_accesses(setup):
    s = setup(locked())
    load, store = (a for a in s.accesses if a.array == "c")
    acq = s.finder.get_acquire(store, "Device")
    rel_ = s.finder.get_release(store, "Device")
    assert acq.role == ACQUIRE and acq.atomic.kind == "AtomicCAS" and acq.atomic.loc.line == 4
    assert rel_.role == RELEASE and rel_.atomic.kind == "AtomicExch" and rel_.atomic.loc.line == 8
    assert s.finder.syn(load, "Device", s.ctx()).role == LOCK


def test_device_lock_guards_every_kind(setup):
    s = setup(locked())
    for kind in (INTER_BLOCK, INTRA_BLOCK):
        assert verdict(s, 6, 6, kind).status == GUARDED
        assert verdict(s, 6, 6, kind).is_racy is False


def test_block_lock_is_too_narrow_across_blocks(setup):
    s = setup(locked("_block"))
    v = verdict(s, 6, 6, INTER_BLOCK)
    assert (v.status, v.reason) == (RACY, INSUFFICIENT_SCOPE)
    assert verdict(s, 6, 6, INTRA_BLOCK).status == GUARDED


def test_per_thread_locks_do_not_exclude(setup):
    s = setup(locked(index="g"))
    v = verdict(s, 6, 6, INTER_BLOCK)
    assert (v.status, v.reason) == (RACY, ADDRESS_MISMATCH)
    # the witness is a model where the two lock cells differ
    assert v.model["blockIdx.x#1"] != v.model["blockIdx.x#2"] or v.model["threadIdx.x#1"] != v.model["threadIdx.x#2"]


def test_unprotected_pair(setup):
    s = setup("__global__\nvoid k(int *c) {\n  c[0] = c[0] + 1;\n}\nint main() {\n}\n")
    v = verdict(s, 3, 3, INTER_BLOCK)
    assert (v.status, v.reason) == (RACY, NO_SYNC)


def test_fence_without_atomic_is_no_sync(setup):
    s = setup("__global__\nvoid k(int *c) {\n  __threadfence();\n  c[0] = 1;\n  __threadfence();\n}\nint main() {\n}\n")
    assert verdict(s, 4, 4, INTER_BLOCK).reason == NO_SYNC


def test_expression_cas_is_not_an_acquire(setup):
    src = locked().replace("  atomicCAS(mutex[0], 0, 1);", "  old = atomicCAS(mutex[0], 0, 1);")
    s = setup(src)
    store = next(a for a in s.accesses if a.array == "c" and a.writes)
    assert s.finder.get_acquire(store, "Device") is None
    assert verdict(s, 6, 6, INTER_BLOCK).status == RACY


def test_release_acquire_hand_off(setup):
    src = """__global__
void k(int *data, int *flag) {
  if (blockIdx.x == 0) {
    data[0] = 1;
    __threadfence();
    atomicExch(flag[0], 1);
  } else {
    atomicCAS(flag[0], 1, 1);
    __threadfence();
    x = data[0];
  }
}
int main() {
}
"""
    s = setup(src)
    v = verdict(s, 4, 10, INTER_BLOCK)
    assert v.status == GUARDED
    # two writers need a lock each; a bare release is not enough
    assert verdict(s, 4, 4, INTER_BLOCK).status == RACY
