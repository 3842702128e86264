"""Independent reference implementations used by the property tests.

Nothing here calls into the code under test for the answer: solver systems
are evaluated by brute force over numpy grids from their own expression
trees, and dominance is decided by enumerating simple CFG paths.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

import numpy as np

from hgrd.cfg import CFG, build_cfg
from hgrd.minicu import parse_translation_unit
from hgrd.solver.terms import Poly, rel

# -- solver systems -------------------------------------------------------

OPS = ("==", "!=", "<", "<=", ">", ">=")


# an expression is ("var", name) | ("const", c) | (op, lhs, rhs) | ("div"|"mod", e, c)
def random_expr(r: random.Random, names: list[str], depth: int = 0):
    k = r.random()
    if depth > 2 or k < 0.3:
        return ("var", r.choice(names))
    if k < 0.4:
        return ("const", r.randint(-5, 5))
    op = r.choice("+-*/%")
    a = random_expr(r, names, depth + 1)
    if op in "/%":
        return ("div" if op == "/" else "mod", a, r.randint(1, 5))
    return (op, a, random_expr(r, names, depth + 1))


def to_poly(e) -> Poly:
    tag = e[0]
    if tag == "var":
        return Poly.var(e[1])
    if tag == "const":
        return Poly.const(e[1])
    if tag == "div":
        return to_poly(e[1]).cdiv(e[2])
    if tag == "mod":
        return to_poly(e[1]).cmod(e[2])
    a, b = to_poly(e[1]), to_poly(e[2])
    return a + b if tag == "+" else a - b if tag == "-" else a * b


def _trunc_div(a: np.ndarray, c: int) -> np.ndarray:
    q = np.abs(a) // c
    return np.where(a < 0, -q, q)


def evaluate(e, env: dict[str, np.ndarray]) -> np.ndarray:
    tag = e[0]
    if tag == "var":
        return env[e[1]]
    if tag == "const":
        return np.int64(e[1])
    if tag == "div":
        return _trunc_div(evaluate(e[1], env), e[2])
    if tag == "mod":
        a = evaluate(e[1], env)
        return a - e[2] * _trunc_div(a, e[2])
    a, b = evaluate(e[1], env), evaluate(e[2], env)
    return a + b if tag == "+" else a - b if tag == "-" else a * b


def _compare(op: str, a, b):
    return {"==": a == b, "!=": a != b, "<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[op]


@dataclass
class RandomSystem:
    atoms: list[tuple[str, tuple, tuple]]
    domains: dict[str, tuple[int, int]]

    def constraints(self):
        return [rel(op, to_poly(a), to_poly(b)) for op, a, b in self.atoms]

    def mask(self) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        names = sorted(self.domains)
        axes = [np.arange(lo, hi + 1, dtype=np.int64) for lo, hi in (self.domains[n] for n in names)]
        grids = np.meshgrid(*axes, indexing="ij")
        env = dict(zip(names, grids))
        ok = np.ones(grids[0].shape, dtype=bool)
        for op, a, b in self.atoms:
            ok &= np.broadcast_to(_compare(op, evaluate(a, env), evaluate(b, env)), ok.shape)
        return ok, env

    def satisfiable(self) -> bool:
        return bool(self.mask()[0].any())

    def holds(self, model: dict[str, int]) -> bool:
        # variables absent from every atom may be left out of the model
        env = {n: np.int64(model.get(n, lo)) for n, (lo, _) in self.domains.items()}
        return all(bool(_compare(op, evaluate(a, env), evaluate(b, env))) for op, a, b in self.atoms)


def random_system(seed: int, max_vars: int = 4, max_size: int = 32) -> RandomSystem:
    r = random.Random(seed)
    names = [f"v{i}" for i in range(r.randint(1, max_vars))]
    domains = {}
    for n in names:
        lo = r.randint(-16, 8)
        domains[n] = (lo, lo + r.randint(0, max_size - 1))
    atoms = [(r.choice(OPS), random_expr(r, names), random_expr(r, names)) for _ in range(r.randint(1, 6))]
    return RandomSystem(atoms, domains)


# -- random structured kernels ------------------------------------------------


def random_kernel_source(seed: int, max_depth: int = 3) -> str:
    """A kernel body of nested if/else, for, barriers and returns."""
    r = random.Random(seed)
    counter = [0]

    def simple() -> str:
        counter[0] += 1
        return r.choice([f"x = x + {counter[0]};", "__syncthreads();", f"A[threadIdx.x] = {counter[0]};"])

    # a return only ever ends a then-branch or a loop body, so the code after
    # the enclosing statement stays reachable
    def block(depth: int, indent: str, may_return: bool = False) -> list[str]:
        out: list[str] = []
        for _ in range(r.randint(1, 3)):
            k = r.random()
            if depth < max_depth and k < 0.3:
                out.append(f"{indent}if (threadIdx.x < {r.randint(0, 9)}) {{")
                out += block(depth + 1, indent + "  ", True)
                if r.random() < 0.5:
                    out.append(f"{indent}}} else {{")
                    out += block(depth + 1, indent + "  ")
                out.append(f"{indent}}}")
            elif depth < max_depth and k < 0.5:
                v = f"i{depth}"
                out.append(f"{indent}for ({v} = 0; {v} < {r.randint(1, 4)}; {v} = {v} + 1) {{")
                out += block(depth + 1, indent + "  ", True)
                out.append(f"{indent}}}")
            else:
                out.append(indent + simple())
        if may_return and r.random() < 0.15:
            out.append(indent + "return;")
        return out

    body = "\n".join(block(0, "  "))
    return f"__global__\nvoid k(int *A) {{\n  x = 0;\n{body}\n}}\nint main() {{\n}}\n"


def random_cfgs(count: int, max_blocks: int = 12):
    """The first `count` CFGs of random kernels that have at most `max_blocks` blocks."""
    seed = 0
    while count:
        kernel = parse_translation_unit(random_kernel_source(seed)).kernels[0]
        seed += 1
        cfg: CFG = build_cfg(kernel)
        if len(cfg.blocks) <= max_blocks:
            count -= 1
            yield cfg


def simple_paths(succs: dict[int, list[int]], src: int, dst: int):
    """Every simple path from src to dst as a tuple of nodes."""
    stack = [(src, (src,))]
    while stack:
        node, path = stack.pop()
        if node == dst:
            yield path
            continue
        for s in succs[node]:
            if s not in path:
                stack.append((s, path + (s,)))


def dominance_by_paths(succs: dict[int, list[int]], entry: int, exit_: int):
    """(dom, pdom) as sets of (a, b) pairs over reachable nodes."""
    nodes = sorted(succs)
    to_node = {b: [tuple(p) for p in simple_paths(succs, entry, b)] for b in nodes}
    from_node = {b: [tuple(p) for p in simple_paths(succs, b, exit_)] for b in nodes}
    dom, pdom = set(), set()
    for b in nodes:
        for a in nodes:
            if to_node[b] and all(a in p for p in to_node[b]):
                dom.add((a, b))
            if from_node[b] and all(a in p for p in from_node[b]):
                pdom.add((a, b))
    return dom, pdom
