"""Doubly connected square-lattice domains with a wired outer and free inner boundary.

Vertices are integer points of Z^2 identified by an integer index into
``AnnularLattice.coords``.  The outer boundary is destined to be wired to a
single root; the inner boundary stays free, so random walks reflect there
simply because those vertices have fewer neighbours.  A ``Zipper`` is a
simple dual-lattice path from the hole to the outside; signed crossings of
its edges are what every winding statistic in this package counts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

# Neighbour direction order used everywhere: +x, -x, +y, -y.
DIRS = np.array([(1, 0), (-1, 0), (0, 1), (0, -1)], dtype=np.int64)


class LatticeError(ValueError):
    """Raised for geometrically invalid domains or zippers."""


@dataclass
class AnnularLattice:
    """A finite doubly connected subgraph of Z^2.

    coords[i] is the (x, y) position of vertex i.  nbr[i, d] is the index of
    the neighbour of i in direction DIRS[d], or -1 if that point is outside
    the domain.  ``is_outer`` marks vertices adjacent to the unbounded
    complement (these get wired to the root), ``is_inner`` marks vertices
    adjacent to the hole.  ``mesh`` is the scale delta of one lattice step.
    """

    coords: np.ndarray
    nbr: np.ndarray
    deg: np.ndarray
    is_outer: np.ndarray
    is_inner: np.ndarray
    mesh: float
    hole: frozenset = field(repr=False)
    index: dict = field(repr=False)

    # -- basic queries -------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.coords)

    @property
    def outer_boundary(self) -> np.ndarray:
        return np.flatnonzero(self.is_outer)

    @property
    def inner_boundary(self) -> np.ndarray:
        return np.flatnonzero(self.is_inner)

    @property
    def free_vertices(self) -> np.ndarray:
        """Vertices that are not absorbed, i.e. everything off the outer boundary."""
        return np.flatnonzero(~self.is_outer)

    def vertex_index(self, xy) -> int:
        try:
            return self.index[tuple(int(c) for c in xy)]
        except KeyError:
            raise LatticeError(f"{tuple(xy)} is not a vertex of this lattice") from None

    def neighbors(self, i: int) -> np.ndarray:
        row = self.nbr[i]
        return row[row >= 0]

    def adjacent(self, i: int, j: int) -> bool:
        return j in self.nbr[i]

    def angles(self, idx) -> np.ndarray:
        xy = self.coords[np.asarray(idx)]
        return np.arctan2(xy[..., 1], xy[..., 0])

    # -- serialization -------------------------------------------------

    def to_json(self, zipper: "Zipper | None" = None) -> str:
        doc = {
            "mesh": self.mesh,
            "vertices": self.coords.tolist(),
            "outer_boundary": self.outer_boundary.tolist(),
            "inner_boundary": self.inner_boundary.tolist(),
        }
        if zipper is not None:
            doc["zipper_edges"] = [
                [list(a), list(b)] for a, b in zipper.crossed_edges
            ]
        return json.dumps(doc)


def _build_from_points(points, in_hole, mesh) -> AnnularLattice:
    """Assemble an AnnularLattice from a vertex set and a hole predicate."""
    coords = np.array(sorted(points), dtype=np.int64)
    index = {tuple(p): i for i, p in enumerate(coords)}
    n = len(coords)
    nbr = np.full((n, 4), -1, dtype=np.int64)
    is_outer = np.zeros(n, dtype=bool)
    is_inner = np.zeros(n, dtype=bool)
    hole_cells = set()
    for i, (x, y) in enumerate(coords):
        for d, (dx, dy) in enumerate(DIRS):
            p = (int(x + dx), int(y + dy))
            j = index.get(p)
            if j is not None:
                nbr[i, d] = j
            elif in_hole(p):
                is_inner[i] = True
                hole_cells.add(p)
            else:
                is_outer[i] = True
    deg = (nbr >= 0).sum(axis=1).astype(np.int64)

    if not is_outer.any() or not is_inner.any():
        raise LatticeError("domain must have both an outer and an inner boundary")
    if np.any(is_outer & is_inner):
        raise LatticeError("outer and inner boundaries overlap; domain too thin")
    if deg.min() < 1 or deg.max() > 4:
        raise LatticeError("vertex degrees outside 1..4")

    _check_connected(coords, index, nbr)
    _check_hole_connected(hole_cells, in_hole)

    return AnnularLattice(
        coords=coords,
        nbr=nbr,
        deg=deg,
        is_outer=is_outer,
        is_inner=is_inner,
        mesh=mesh,
        hole=frozenset(hole_cells),
        index=index,
    )


def _check_connected(coords, index, nbr):
    n = len(coords)
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        i = stack.pop()
        for j in nbr[i]:
            if j >= 0 and not seen[j]:
                seen[j] = True
                stack.append(j)
    if not seen.all():
        raise LatticeError("domain is disconnected")


def _check_hole_connected(hole_cells, in_hole):
    """Flood-fill the removed region; a doubly connected domain has one hole.

    ``hole_cells`` is the shell of removed points seen from the domain; the
    fill explores the whole removed region (finite, enclosed by the domain)
    and every shell cell must belong to the same component.
    """
    if not hole_cells:
        raise LatticeError("domain is simply connected (no hole)")
    start = next(iter(hole_cells))
    seen = {start}
    stack = [start]
    while stack:
        x, y = stack.pop()
        for dx, dy in DIRS:
            p = (int(x + dx), int(y + dy))
            if p not in seen and in_hole(p):
                seen.add(p)
                stack.append(p)
    if not hole_cells <= seen:
        raise LatticeError("hole is disconnected; domain is not an annulus")


def build_annulus(outer_radius: float, inner_radius: float = 0.0, mesh: float | None = None) -> AnnularLattice:
    """Discretized circular annulus: vertices v with inner_radius < |v| <= outer_radius.

    ``inner_radius = 0`` removes only the origin, the smallest possible hole.
    The default mesh maps the outer radius to the unit circle.
    """
    if outer_radius < inner_radius + 2:
        raise LatticeError("need outer_radius >= inner_radius + 2")
    r2_in = inner_radius * inner_radius
    r2_out = outer_radius * outer_radius

    def inside(p):
        q = p[0] * p[0] + p[1] * p[1]
        return r2_in < q <= r2_out

    rmax = int(math.floor(outer_radius))
    points = [
        (x, y)
        for x in range(-rmax, rmax + 1)
        for y in range(-rmax, rmax + 1)
        if inside((x, y))
    ]

    def in_hole(p):
        return p[0] * p[0] + p[1] * p[1] <= r2_in

    return _build_from_points(points, in_hole, mesh or 1.0 / outer_radius)


def build_square_annulus(outer_half: int, hole_half: int = 0, mesh: float | None = None) -> AnnularLattice:
    """Square block [-outer_half, outer_half]^2 minus the centred block of half-width hole_half.

    ``build_square_annulus(2, 0)`` is the 5x5-minus-center oracle lattice.
    """
    if outer_half < hole_half + 2:
        raise LatticeError("need outer_half >= hole_half + 2")
    points = [
        (x, y)
        for x in range(-outer_half, outer_half + 1)
        for y in range(-outer_half, outer_half + 1)
        if max(abs(x), abs(y)) > hole_half
    ]

    def in_hole(p):
        return max(abs(p[0]), abs(p[1])) <= hole_half

    return _build_from_points(points, in_hole, mesh or 1.0 / outer_half)


# ---------------------------------------------------------------------------
# Zipper


@dataclass
class Zipper:
    """Ordered dual path from the hole to the outside, with crossing signs.

    ``crossed_edges`` lists the undirected lattice edges the dual path
    crosses, as coordinate pairs, in dual-path order.  ``sign_table[i, d]``
    is the sign (+1/-1/0) picked up by traversing the directed edge from
    vertex i in direction DIRS[d].  The positive traversal of each crossed
    edge is the dual-path direction rotated clockwise by 90 degrees; for the
    default ray along the positive x-axis that makes (x, 1) -> (x, 0) the +1
    direction, the convention used by every winding count in this package.
    """

    crossed_edges: list
    sign_table: np.ndarray
    edge_signs: dict = field(repr=False)

    def crossing_sign(self, lattice: AnnularLattice, a, b) -> int:
        """Sign of the step a -> b (vertex indices or coordinate pairs)."""
        pa = tuple(lattice.coords[a]) if np.isscalar(a) else tuple(int(c) for c in a)
        pb = tuple(lattice.coords[b]) if np.isscalar(b) else tuple(int(c) for c in b)
        if abs(pa[0] - pb[0]) + abs(pa[1] - pb[1]) != 1:
            raise LatticeError(f"{pa} and {pb} are not adjacent")
        return self.edge_signs.get((pa, pb), 0)


# Rotation by -90 degrees of each dual step direction gives the +1 primal direction.
_POSITIVE_PRIMAL = {(1, 0): (0, -1), (-1, 0): (0, 1), (0, 1): (1, 0), (0, -1): (-1, 0)}


def zipper_from_dual_path(lattice: AnnularLattice, faces) -> Zipper:
    """Build a zipper from a simple dual path, given as a list of faces.

    A face (i, j) is the unit square with corners (i, j) and (i+1, j+1).
    Consecutive faces must be adjacent; the edge they share is the crossed
    primal edge.  Both endpoints of every crossed edge must lie in the domain.
    """
    faces = [tuple(int(c) for c in f) for f in faces]
    if len(set(faces)) != len(faces):
        raise LatticeError("dual path must be simple")
    crossed = []
    edge_signs = {}
    sign_table = np.zeros((lattice.n_vertices, 4), dtype=np.int8)
    for (i0, j0), (i1, j1) in zip(faces, faces[1:]):
        step = (i1 - i0, j1 - j0)
        if step not in _POSITIVE_PRIMAL:
            raise LatticeError("dual path steps must be unit moves")
        if step == (1, 0):
            a, b = (i1, j0), (i1, j0 + 1)  # vertical primal edge
        elif step == (-1, 0):
            a, b = (i0, j0), (i0, j0 + 1)
        elif step == (0, 1):
            a, b = (i0, j1), (i0 + 1, j1)  # horizontal primal edge
        else:
            a, b = (i0, j0), (i0 + 1, j0)
        if a not in lattice.index or b not in lattice.index:
            raise LatticeError(f"crossed edge {a}-{b} leaves the domain")
        if (a, b) in edge_signs:
            raise LatticeError("dual path crosses an edge twice")
        pos = _POSITIVE_PRIMAL[step]
        u, v = (a, b) if (b[0] - a[0], b[1] - a[1]) == pos else (b, a)
        edge_signs[(u, v)] = 1
        edge_signs[(v, u)] = -1
        crossed.append((a, b))
        iu, iv = lattice.index[u], lattice.index[v]
        du = int(np.where((DIRS == (v[0] - u[0], v[1] - u[1])).all(axis=1))[0][0])
        dv = du ^ 1
        sign_table[iu, du] = 1
        sign_table[iv, dv] = -1
    if not crossed:
        raise LatticeError("dual path crosses no edges")
    return Zipper(crossed_edges=crossed, sign_table=sign_table, edge_signs=edge_signs)


def build_zipper(lattice: AnnularLattice) -> Zipper:
    """Default zipper: the dual ray along the positive x-axis at height 1/2.

    Crosses every vertical edge {(x,0)-(x,1)} with x >= 1 inside the domain;
    the traversal (x,1) -> (x,0) counts +1.
    """
    xs = sorted(
        x
        for (x, y) in lattice.index
        if y == 0 and x >= 1 and (x, 1) in lattice.index
    )
    if not xs:
        raise LatticeError("domain has no room for the default zipper")
    # Dual faces (x, 0) for x from the hole out past the boundary.
    faces = [(x, 0) for x in range(xs[0] - 1, xs[-1] + 1)]
    return zipper_from_dual_path(lattice, faces)


def build_bent_zipper(lattice: AnnularLattice, height: int | None = None) -> Zipper:
    """An independently routed zipper: up from the hole, then out to +x.

    The dual path climbs the column just right of x = 0 from the hole to row
    ``height`` (default: the first row above the hole) and then runs out to
    the boundary.  Used by tests to check gauge independence.
    """
    ys = sorted(
        y
        for (x, y) in lattice.index
        if x == 0 and y >= 1 and (1, y) in lattice.index
    )
    if not ys:
        raise LatticeError("domain too small for the bent zipper")
    if height is None:
        height = ys[0]
    if height < ys[0] or height >= ys[-1]:
        raise LatticeError("bent-zipper height must lie between hole and boundary")
    up = [(0, y) for y in range(ys[0] - 1, height + 1)]
    xs = sorted(
        x
        for (x, y) in lattice.index
        if y == height and x >= 1 and (x, height + 1) in lattice.index
    )
    out = [(x, height) for x in range(1, xs[-1] + 1)]
    return zipper_from_dual_path(lattice, up + out)


def crossing_sign(zipper: Zipper, lattice: AnnularLattice, a, b) -> int:
    """Signed zipper crossing of the directed step a -> b; 0 off the zipper."""
    return zipper.crossing_sign(lattice, a, b)


def ccw_order(lattice: AnnularLattice, vertices, anchor: float = 1e-9) -> np.ndarray:
    """Sort vertex indices counterclockwise starting just after the default cut.

    The key is (angle - anchor) mod 2pi, so vertices exactly on the positive
    x-axis (which sit below the default zipper ray at height 1/2) come last.
    This is the canonical labelling under which the even-branch-count
    determinant identities hold with positive sign.
    """
    idx = np.asarray(vertices, dtype=np.int64)
    key = np.mod(lattice.angles(idx) - anchor, 2 * np.pi)
    return idx[np.argsort(key)]
