from __future__ import annotations

import pytest

from hgrd.errors import NonConstantDivisor, ParseError, SemanticError, UnboundIdentifier
from hgrd.minicu import format_program, list_launch_sites, parse_file, parse_translation_unit
from hgrd.minicu.ast import (
    Alloc,
    ArrayLoad,
    ArrayStore,
    Assert,
    AtomicOp,
    Barrier,
    Binary,
    Builtin,
    Fence,
    For,
    If,
    Input,
    IntLit,
    Launch,
    walk_expr,
    walk_stmts,
    stmt_exprs,
)
from hgrd.prelim import collect_accesses
from hgrd.cfg import build_cfg

EMPTY = """
__global__ void k() {}
int main() { k<<<(1, 1, 1), (1, 1, 1)>>>(); }
"""


def test_figure1_shape(corpus_dir):
    prog = parse_file(corpus_dir / "copyUppToLow.mcu")
    assert [k.name for k in prog.kernels] == ["copyUppLowKernel"]
    kernel = prog.kernels[0]
    assert [p.name for p in kernel.params] == ["A", "rows", "cols"]
    assert kernel.array_params == ("A",) or list(kernel.array_params) == ["A"]
    host = prog.function("CopyUppLow")
    kinds = {type(s) for s in walk_stmts(host.body)}
    assert Assert in kinds and Launch in kinds
    store = kernel.body[-1].then[0]
    assert isinstance(store, ArrayStore) and store.loc.line == 7


def test_empty_kernel_has_no_accesses(parse):
    prog = parse(EMPTY)
    k = prog.kernel("k")
    assert k.body == ()
    assert collect_accesses(k, build_cfg(k)) == []


def test_variable_divisor_rejected(parse):
    src = "__global__ void k(int *A, int y) { A[0] = 4 / y; }\nint main() {}\n"
    with pytest.raises(NonConstantDivisor):
        parse(src)
    with pytest.raises(NonConstantDivisor):
        parse(src.replace("4 / y", "4 % y"))


def test_constant_divisor_accepted(parse):
    prog = parse("__global__ void k(int *A, int y) { A[0] = y / 4 + y % 3; }\nint main() {}\n")
    ops = {e.op for e in walk_expr(prog.kernels[0].body[0].value) if isinstance(e, Binary)}
    assert ops == {"+", "/", "%"}


@pytest.mark.parametrize(
    "src, exc",
    [
        ("__global__ void k(int *A) { A[0] = z; }\nint main() {}\n", UnboundIdentifier),
        ("__global__ void k(int *A) { A[0] = 1 }\nint main() {}\n", ParseError),
        ("int main() { nope<<<(1,1,1),(1,1,1)>>>(); }\n", UnboundIdentifier),
        ("__global__ void k(int *A) { assert(1); }\nint main() {}\n", (ParseError, SemanticError)),
        ("__global__ void k(int *A) { A[0] = __input(); }\nint main() {}\n", SemanticError),
        ("__global__ void k(int *A) { return; A[0] = 1; }\nint main() {}\n", SemanticError),
        ("__global__ void k(int *A) {}\n", SemanticError),
    ],
)
def test_frontend_errors(parse, src, exc):
    with pytest.raises(exc):
        parse(src)


def test_error_carries_location(parse):
    with pytest.raises(UnboundIdentifier) as info:
        parse("__global__ void k(int *A) {\n  A[0] = zz;\n}\nint main() {}\n", "e.mcu")
    assert info.value.loc.line == 2
    assert "e.mcu:2" in info.value.render()


def test_intrinsics_and_scopes(parse):
    src = """
__global__ void k(int *A, int *L) {
  atomicCAS(L[0], 0, 1);
  __threadfence();
  old = atomicCAS_block(L[1], 0, 1);
  __threadfence_block();
  atomicAdd(A[0], 1);
  atomicExch_block(L[0], 0);
  __syncthreads();
  __syncwarp();
}
int main() {}
"""
    body = parse(src).kernels[0].body
    atomics = [s for s in body if isinstance(s, AtomicOp)]
    assert [(a.op, a.scope) for a in atomics] == [("CAS", "device"), ("CAS", "block"), ("Add", "device"), ("Exch", "block")]
    assert atomics[1].target == "old"
    assert [f.scope for f in body if isinstance(f, Fence)] == ["device", "block"]
    assert [b.kind for b in body if isinstance(b, Barrier)] == ["syncthreads", "syncwarp"]


def test_builtins_and_input(corpus_dir):
    prog = parse_file(corpus_dir / "toneMapping.mcu")
    exprs = [x for s in walk_stmts(prog.kernels[0].body) for e in stmt_exprs(s) for x in walk_expr(e)]
    assert {(b.name, b.axis) for b in exprs if isinstance(b, Builtin)} == {
        ("blockIdx", "x"), ("blockIdx", "y"), ("blockDim", "x"), ("blockDim", "y"), ("threadIdx", "x"), ("threadIdx", "y")
    }
    main = prog.entry_function
    inputs = [x for s in walk_stmts(main.body) for e in stmt_exprs(s) for x in walk_expr(e) if isinstance(x, Input)]
    assert len(inputs) == 2


def test_pitch_alloc(corpus_dir):
    prog = parse_file(corpus_dir / "pitchLinear.mcu")
    allocs = [s for s in walk_stmts(prog.entry_function.body) if isinstance(s, Alloc)]
    assert [(a.kind, a.array, a.pitch) for a in allocs] == [("mallocPitch", "matrix", "hRowSize"), ("malloc", "tex", None)]


def test_launch_sites(corpus_dir, parse):
    prog = parse_file(corpus_dir / "reduction.mcu")
    sites = list_launch_sites(prog)
    assert [(f.name, k.name) for f, _, k in sites] == [("reduction", "blockReduce"), ("reduction", "reduceFinal")]
    assert list_launch_sites(parse("int main() { x = 1; }\n")) == []
    lud = parse_file(corpus_dir / "luDecomposition.mcu")
    assert len(list_launch_sites(lud)) == 1


def _shape(node):
    """Structure without locations or statement ids."""
    if isinstance(node, tuple):
        return tuple(_shape(n) for n in node)
    if hasattr(node, "__dataclass_fields__"):
        fields = {
            k: _shape(getattr(node, k))
            for k in node.__dataclass_fields__
            if k not in ("loc", "sid", "array_loc")
        }
        return (type(node).__name__, tuple(sorted(fields.items())))
    return node


def test_round_trip_whole_corpus(corpus_dir):
    for path in sorted(corpus_dir.glob("*.mcu")):
        prog = parse_file(path)
        again = parse_translation_unit(format_program(prog), path.name)
        assert _shape(again.kernels) == _shape(prog.kernels), path.name
        assert _shape(again.host_functions) == _shape(prog.host_functions), path.name


def test_locations_inside_source(corpus_dir):
    for path in sorted(corpus_dir.glob("*.mcu")):
        text = path.read_text().splitlines()
        prog = parse_file(path)
        for func in (*prog.kernels, *prog.host_functions):
            for s in walk_stmts(func.body):
                assert 1 <= s.loc.line <= len(text)
                assert 1 <= s.loc.column <= len(text[s.loc.line - 1])
                for e in stmt_exprs(s):
                    for x in walk_expr(e):
                        assert 1 <= x.loc.line <= len(text)


def test_launch_count_matches_chevrons(corpus_dir):
    for path in sorted(corpus_dir.glob("*.mcu")):
        assert len(list_launch_sites(parse_file(path))) == path.read_text().count("<<<")


def test_for_and_if_structure(corpus_dir):
    prog = parse_file(corpus_dir / "reduction.mcu")
    k = prog.kernel("blockReduce")
    ifs = [s for s in walk_stmts(k.body) if isinstance(s, If)]
    loops = [s for s in walk_stmts(k.body) if isinstance(s, For)]
    assert len(ifs) == 1 and len(loops) == 1
    assert loops[0].var == "k" and isinstance(loops[0].init, IntLit)
    loads = [x for x in walk_expr(loops[0].body[0].value) if isinstance(x, ArrayLoad)]
    assert [l.array for l in loads] == ["in"]
