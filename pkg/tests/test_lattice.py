import json
import math

import numpy as np
import pytest

from ustwind.lattice import (
    LatticeError,
    build_annulus,
    build_bent_zipper,
    build_square_annulus,
    build_zipper,
    ccw_order,
    crossing_sign,
    zipper_from_dual_path,
)


def test_square_annulus_counts(oracle):
    lat, _ = oracle
    assert lat.n_vertices == 24
    assert len(lat.outer_boundary) == 16
    assert len(lat.inner_boundary) == 4


def test_single_point_hole():
    lat = build_annulus(2, 0)
    for x in range(-2, 3):
        for y in range(-2, 3):
            inside = 0 < x * x + y * y <= 4
            assert ((x, y) in lat.index) == inside
    inner = {tuple(lat.coords[i]) for i in lat.inner_boundary}
    assert inner == {(1, 0), (-1, 0), (0, 1), (0, -1)}


def test_vertex_count_against_enumeration():
    # independent brute-force enumeration over the bounding box
    lat = build_annulus(40, 4)
    count = sum(
        1
        for x in range(-41, 42)
        for y in range(-41, 42)
        if 16 < x * x + y * y <= 1600
    )
    assert lat.n_vertices == count


def test_degree_and_boundary_invariants():
    lat = build_annulus(12, 3)
    assert lat.deg.min() >= 1 and lat.deg.max() <= 4
    assert not np.any(lat.is_outer & lat.is_inner)
    # reflection is the reduced degree at the hole
    assert np.all(lat.deg[lat.inner_boundary] < 4)
    interior = ~(lat.is_outer | lat.is_inner)
    assert np.all(lat.deg[interior] == 4)


def test_invalid_domains_rejected():
    with pytest.raises(LatticeError):
        build_annulus(3, 2)  # too thin
    with pytest.raises(LatticeError):
        build_square_annulus(2, 1)


def test_default_zipper_matches_convention(oracle):
    lat, zipper = oracle
    assert zipper.crossed_edges == [((1, 0), (1, 1)), ((2, 0), (2, 1))]
    assert crossing_sign(zipper, lat, (1, 1), (1, 0)) == 1
    assert crossing_sign(zipper, lat, (1, 0), (1, 1)) == -1
    assert crossing_sign(zipper, lat, (0, 1), (1, 1)) == 0


def test_crossing_sign_antisymmetry(oracle):
    lat, zipper = oracle
    for i in range(lat.n_vertices):
        for j in lat.neighbors(i):
            assert zipper.crossing_sign(lat, i, int(j)) == -zipper.crossing_sign(
                lat, int(j), i
            )


def test_crossing_sign_requires_adjacency(oracle):
    lat, zipper = oracle
    with pytest.raises(LatticeError):
        crossing_sign(zipper, lat, (1, 1), (2, 2))


def _circuit(lat, radius, turns=1, reverse=False):
    pts = []
    r = radius
    for y in range(-r, r):
        pts.append((r, y))
    for x in range(r, -r, -1):
        pts.append((x, r))
    for y in range(r, -r, -1):
        pts.append((-r, y))
    for x in range(-r, r + 1):
        pts.append((x, -r))
    loop = pts[:-1] * turns + [pts[0]]
    if reverse:
        loop = loop[::-1]
    return [lat.vertex_index(p) for p in loop]


@pytest.mark.parametrize("zipper_builder", [build_zipper, build_bent_zipper])
def test_closed_loop_winding(zipper_builder):
    # the sum of crossing signs along a closed loop is its winding number
    # (positive sense = the zipper's stated crossing convention)
    lat = build_annulus(12, 3)
    zipper = zipper_builder(lat)

    def total(path):
        return sum(
            zipper.crossing_sign(lat, int(a), int(b)) for a, b in zip(path, path[1:])
        )

    ccw1 = _circuit(lat, 8)
    assert abs(total(ccw1)) == 1
    assert total(_circuit(lat, 8, turns=2)) == 2 * total(ccw1)
    assert total(_circuit(lat, 8, reverse=True)) == -total(ccw1)
    # contractible square away from the hole
    sq = [(6, 6), (7, 6), (7, 7), (6, 7), (6, 6)]
    assert total([lat.vertex_index(p) for p in sq]) == 0


def test_zipper_from_dual_path_validation():
    lat = build_square_annulus(3, 0)
    with pytest.raises(LatticeError):
        zipper_from_dual_path(lat, [(0, 0), (0, 0)])  # not simple
    with pytest.raises(LatticeError):
        zipper_from_dual_path(lat, [(0, 0), (2, 0)])  # not unit steps


def test_ccw_order_anchoring(oracle):
    lat, _ = oracle
    idx = ccw_order(lat, lat.inner_boundary)
    coords = [tuple(lat.coords[i]) for i in idx]
    # the vertex on the positive x-axis sits below the cut, hence last
    assert coords == [(0, 1), (-1, 0), (0, -1), (1, 0)]


def test_json_serialization(oracle):
    lat, zipper = oracle
    doc = json.loads(lat.to_json(zipper))
    assert len(doc["vertices"]) == 24
    assert len(doc["outer_boundary"]) == 16
    assert len(doc["zipper_edges"]) == 2
    assert doc["mesh"] == lat.mesh


def test_mesh_default():
    lat = build_annulus(40, 4)
    assert lat.mesh == pytest.approx(1 / 40)
