"""Monte Carlo engine: walks, loop erasure, Wilson sampling, conditioned
branch tuples, winding counters, and the exhaustive small-lattice oracles.

Paths are numpy arrays of vertex indices.  Every sampler takes an explicit
``numpy.random.Generator``; numba kernels are seeded from it, so a fixed
generator state reproduces runs exactly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .lattice import AnnularLattice, LatticeError, Zipper
from .seeds import kernel_seed


class SamplingError(RuntimeError):
    """Raised when rejection sampling exhausts its attempt budget."""


# ---------------------------------------------------------------------------
# Elementary walks


def random_walk(lattice: AnnularLattice, start: int, rng: np.random.Generator) -> np.ndarray:
    """Nearest-neighbour walk from ``start``, stopped on the outer boundary.

    Reflection at the inner boundary is implicit: steps are uniform over the
    neighbours that exist, and hole-adjacent vertices simply have fewer.
    """
    if lattice.is_outer[start]:
        return np.array([start], dtype=np.int64)
    return _kernels.walk_path(
        lattice.nbr, lattice.deg, lattice.is_outer, start, kernel_seed(rng)
    )


def loop_erase(path):
    """Chronological loop erasure of a path of hashable vertices."""
    if len(path) == 0:
        raise ValueError("cannot loop-erase an empty path")
    out = []
    pos = {}
    for v in path:
        key = int(v) if np.isscalar(v) or isinstance(v, np.integer) else tuple(v)
        if key in pos:
            for w in out[pos[key] + 1 :]:
                del pos[w]
            del out[pos[key] + 1 :]
        else:
            pos[key] = len(out)
            out.append(key)
    if isinstance(path, np.ndarray):
        return np.array(out, dtype=path.dtype)
    return type(path)(out)


# ---------------------------------------------------------------------------
# Spanning trees


@dataclass
class Arborescence:
    """Spanning tree of the wired graph, oriented toward the root.

    parent[v] is the next vertex toward the root; outer vertices (which are
    all identified with the root) have parent[v] == v.
    """

    lattice: AnnularLattice
    parent: np.ndarray

    def __post_init__(self):
        self.validate()

    def validate(self):
        lat = self.lattice
        n = lat.n_vertices
        if len(self.parent) != n:
            raise ValueError("parent map has wrong length")
        for v in range(n):
            p = self.parent[v]
            if lat.is_outer[v]:
                if p != v:
                    raise ValueError("outer vertices must map to themselves")
            elif p not in lat.nbr[v]:
                raise ValueError(f"parent of {v} is not a neighbour")
        # every vertex reaches the root without cycling
        state = np.zeros(n, dtype=np.int8)  # 0 unseen, 1 on stack, 2 done
        for v in range(n):
            chain = []
            u = v
            while state[u] == 0 and not lat.is_outer[u]:
                state[u] = 1
                chain.append(u)
                u = self.parent[u]
                if state[u] == 1:
                    raise ValueError("cycle in parent map")
            for w in chain:
                state[w] = 2

    def branch(self, x: int) -> np.ndarray:
        """Root-directed path from x up to and including its outer exit vertex."""
        out = [x]
        u = x
        while not self.lattice.is_outer[u]:
            u = int(self.parent[u])
            out.append(u)
        return np.array(out, dtype=np.int64)


def wilson_ust(lattice: AnnularLattice, rng: np.random.Generator, order=None) -> Arborescence:
    """Uniform spanning tree of the wired graph via Wilson's algorithm."""
    if order is None:
        order = lattice.free_vertices
    order = np.asarray(order, dtype=np.int64)
    parent = _kernels.wilson_tree(
        lattice.nbr, lattice.deg, lattice.is_outer, order, kernel_seed(rng)
    )
    return Arborescence(lattice, parent)


# ---------------------------------------------------------------------------
# Conditioned branch tuples


@dataclass
class BranchTuple:
    """Pairwise-disjoint root-directed branches from marked inner vertices."""

    lattice: AnnularLattice
    branches: list

    @property
    def exits(self) -> np.ndarray:
        return np.array([b[-1] for b in self.branches], dtype=np.int64)

    def validate(self):
        seen = set()
        for b in self.branches:
            interior = b[:-1]
            if len(set(interior.tolist())) != len(interior):
                raise ValueError("branch is not simple")
            if seen.intersection(interior.tolist()):
                raise ValueError("branches share a non-root vertex")
            seen.update(interior.tolist())


def _check_marked(lattice, xs):
    xs = np.asarray(xs, dtype=np.int64)
    if len(set(xs.tolist())) != len(xs):
        raise ValueError("marked vertices must be distinct")
    if not lattice.is_inner[xs].all():
        raise ValueError("marked vertices must lie on the inner boundary")
    if len(xs) > 1 and not _is_ccw(lattice.angles(xs)):
        raise ValueError("marked vertices must be in counterclockwise order")
    return xs


def _is_ccw(angles) -> bool:
    """True if the cyclic sequence of angles is strictly counterclockwise."""
    a = np.mod(np.asarray(angles, dtype=float), 2 * np.pi)
    k = int(np.argmin(a))
    a = np.concatenate([a[k:], a[:k]])
    return bool(np.all(np.diff(a) > 0))


def sample_conditioned_branches(
    lattice: AnnularLattice,
    xs,
    rng: np.random.Generator,
    max_attempts: int = 10_000_000,
) -> tuple[BranchTuple, int]:
    """Draw one branch tuple from the conditional law given disjointness.

    Sequential loop-erased walks from the marked vertices, restarted from
    scratch whenever a walk touches an earlier branch before the outer
    boundary; by the Wilson-ordering argument the accepted tuple has exactly
    the law of the tree branches conditioned on pairwise disjointness.
    """
    xs = _check_marked(lattice, xs)
    flat, offsets, attempts = _kernels.conditioned_branches(
        lattice.nbr, lattice.deg, lattice.is_outer, xs, max_attempts, kernel_seed(rng)
    )
    if offsets[-1] < 0:
        raise SamplingError(f"no acceptance in {attempts} attempts")
    branches = [flat[offsets[j] : offsets[j + 1]] for j in range(len(xs))]
    return BranchTuple(lattice, branches), attempts


def crossing_number(zipper: Zipper, lattice: AnnularLattice, path) -> int:
    """Algebraic number of signed zipper crossings along a vertex-index path."""
    path = np.asarray(path, dtype=np.int64)
    return int(_kernels.path_crossing_number(zipper.sign_table, lattice.nbr, path))


def winding_cf_mc(
    lattice: AnnularLattice,
    zipper: Zipper,
    beta: float,
    xs,
    rng: np.random.Generator,
    samples: int,
    vs=None,
    max_attempts: int = 10_000_000,
):
    """Monte Carlo characteristic function of the total winding.

    Averages exp(i beta sum_j K(gamma_j)) over ``samples`` accepted branch
    tuples, optionally keeping only tuples whose exit set equals ``vs``.
    Returns (estimate, (stderr_real, stderr_imag), accepted, attempts).
    """
    xs = _check_marked(lattice, xs)
    target = None if vs is None else frozenset(int(v) for v in vs)
    vals = np.empty(samples, dtype=np.complex128)
    kept = 0
    attempts_total = 0
    while kept < samples:
        tup, att = sample_conditioned_branches(lattice, xs, rng, max_attempts)
        attempts_total += att
        if target is not None and frozenset(tup.exits.tolist()) != target:
            continue
        k = sum(crossing_number(zipper, lattice, b) for b in tup.branches)
        vals[kept] = np.exp(1j * beta * k)
        kept += 1
    if kept == 0:
        raise SamplingError("no sample matched the requested exits")
    est = vals.mean()
    se = (vals.real.std(ddof=1) / math.sqrt(kept), vals.imag.std(ddof=1) / math.sqrt(kept))
    return est, se, kept, attempts_total


# ---------------------------------------------------------------------------
# Exhaustive oracle: all spanning trees of the wired multigraph

MAX_ENUM_VERTICES = 16


def _wired_edges(lattice: AnnularLattice):
    """Edges of the wired multigraph as (u, v) with v == -1 meaning the root.

    Each edge carries its physical endpoint pair so branches re-read from an
    enumerated tree know which outer vertex they exit through.
    """
    edges = []
    free = lattice.free_vertices
    fset = set(free.tolist())
    for u in free:
        for w in lattice.nbr[u]:
            if w < 0:
                continue
            if lattice.is_outer[w]:
                edges.append((int(u), -1, int(u), int(w)))
            elif u < w:
                edges.append((int(u), int(w), int(u), int(w)))
    return edges, free, fset


def tree_count(lattice: AnnularLattice) -> int:
    """Number of spanning trees of the wired multigraph (matrix-tree)."""
    free = lattice.free_vertices
    pos = {int(v): i for i, v in enumerate(free)}
    n = len(free)
    L = np.zeros((n, n))
    for u in free:
        i = pos[int(u)]
        for w in lattice.nbr[u]:
            if w < 0:
                continue
            L[i, i] += 1
            if int(w) in pos:
                L[i, pos[int(w)]] -= 1
    sign, logdet = np.linalg.slogdet(L)
    return int(round(sign * math.exp(logdet)))


def enumerate_spanning_trees(lattice: AnnularLattice):
    """List every spanning tree of the wired multigraph.

    Returns (trees, count) where each tree is a dict v -> (parent, exit):
    parent is the next vertex toward the root (-1 for the root itself) and
    exit is the physical outer vertex used when parent == -1.  The list
    length is cross-checked against the matrix-tree determinant.
    """
    free = lattice.free_vertices
    if len(free) > MAX_ENUM_VERTICES:
        raise LatticeError(
            f"enumeration capped at {MAX_ENUM_VERTICES} non-root vertices, got {len(free)}"
        )
    edges, _, _ = _wired_edges(lattice)
    nodes = [-1] + [int(v) for v in free]
    trees = []

    # Contraction-deletion: each spanning tree is produced exactly once.
    def recurse(active_edges, labels, chosen):
        live = {labels[v] for v in nodes}
        if len(live) == 1:
            trees.append(list(chosen))
            return
        # pick a pivot edge whose endpoints are in different components
        for k, e in enumerate(active_edges):
            u, v = labels[e[0]], labels[e[1]]
            if u != v:
                pivot = k
                break
        e = active_edges[pivot]
        rest = active_edges[pivot + 1 :]
        lu, lv = labels[e[0]], labels[e[1]]
        # include the pivot: contract its endpoints
        merged = {v: (lu if labels[v] == lv else labels[v]) for v in nodes}
        chosen.append(e)
        recurse([f for f in rest if merged[f[0]] != merged[f[1]]]
                + [f for f in active_edges[:pivot] if merged[f[0]] != merged[f[1]]],
                merged, chosen)
        chosen.pop()
        # exclude the pivot: only valid if the rest still connects lu and lv
        remaining = active_edges[:pivot] + rest
        if _still_connected(remaining, labels, lu, lv, nodes):
            recurse(remaining, labels, chosen)

    labels0 = {v: v for v in nodes}
    recurse(edges, labels0, [])

    expected = tree_count(lattice)
    if len(trees) != expected:
        raise AssertionError(
            f"enumerated {len(trees)} trees but matrix-tree gives {expected}"
        )

    out = []
    for chosen in trees:
        out.append(_orient(lattice, chosen))
    return out, expected


def _still_connected(edge_list, labels, a, b, nodes):
    adj = {}
    for e in edge_list:
        u, v = labels[e[0]], labels[e[1]]
        if u != v:
            adj.setdefault(u, set()).add(v)
            adj.setdefault(v, set()).add(u)
    seen = {a}
    stack = [a]
    while stack:
        u = stack.pop()
        if u == b:
            return True
        for w in adj.get(u, ()):
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return b in seen


def _orient(lattice, chosen):
    """Orient a chosen edge set toward the root; return v -> (parent, exit)."""
    adj = {}
    for (u, v, pu, pv) in chosen:
        adj.setdefault(u, []).append((v, pu, pv))
        adj.setdefault(v, []).append((u, pu, pv))
    parent = {}
    stack = [-1]
    seen = {-1}
    while stack:
        u = stack.pop()
        for (w, pu, pv) in adj.get(u, ()):
            if w in seen:
                continue
            seen.add(w)
            if u == -1:
                parent[w] = (-1, pv)  # pv is the physical outer exit vertex
            else:
                parent[w] = (u, -1)
            stack.append(w)
    return parent


def _tree_branch(lattice, tree, x):
    """Vertex-index branch from x to its outer exit in an enumerated tree."""
    out = [int(x)]
    u = int(x)
    while True:
        p, ex = tree[u]
        if p == -1:
            out.append(ex)
            return np.array(out, dtype=np.int64)
        out.append(p)
        u = p


def brute_force_winding_cf(
    lattice: AnnularLattice, zipper: Zipper, beta: float, xs, vs, trees=None
) -> complex:
    """Conditional E[exp(i beta sum K)] by full spanning-tree enumeration.

    ``vs`` restricts to tuples exiting through exactly that outer vertex set
    (the cyclically matched event); trees may be passed in to amortize the
    enumeration across beta values.
    """
    xs = _check_marked(lattice, xs)
    vs = np.asarray(vs, dtype=np.int64)
    if not lattice.is_outer[vs].all():
        raise ValueError("exit vertices must lie on the outer boundary")
    if len(vs) != len(xs):
        raise ValueError("need as many exits as marked vertices")
    if trees is None:
        trees, _ = enumerate_spanning_trees(lattice)
    vset = frozenset(vs.tolist())
    num = 0.0 + 0.0j
    den = 0
    for tree in trees:
        branches = [_tree_branch(lattice, tree, x) for x in xs]
        if not _disjoint(branches):
            continue
        exits = frozenset(int(b[-1]) for b in branches)
        if exits != vset:
            continue
        k = sum(crossing_number(zipper, lattice, b) for b in branches)
        num += np.exp(1j * beta * k)
        den += 1
    if den == 0:
        raise ValueError("conditioning event has zero enumerated mass")
    return num / den


def brute_force_event_probability(lattice: AnnularLattice, xs, vs=None, trees=None) -> float:
    """P of the disjointness event (optionally with prescribed exits) by enumeration."""
    xs = _check_marked(lattice, xs)
    if trees is None:
        trees, _ = enumerate_spanning_trees(lattice)
    vset = None if vs is None else frozenset(int(v) for v in vs)
    hits = 0
    for tree in trees:
        branches = [_tree_branch(lattice, tree, x) for x in xs]
        if not _disjoint(branches):
            continue
        if vset is not None and frozenset(int(b[-1]) for b in branches) != vset:
            continue
        hits += 1
    return hits / len(trees)


def _disjoint(branches) -> bool:
    """Pairwise disjoint away from the root (physical exits may coincide)."""
    seen = set()
    for b in branches:
        interior = b[:-1].tolist()
        if seen.intersection(interior):
            return False
        seen.update(interior)
    return True
