import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from conftest import rng_for
from ustwind import harmonic, wilson
from ustwind.lattice import build_annulus, build_square_annulus, build_zipper, ccw_order


# ---------------------------------------------------------------------------
# random_walk


def test_walk_from_outer_is_trivial(oracle):
    lat, _ = oracle
    v = int(lat.outer_boundary[0])
    path = wilson.random_walk(lat, v, rng_for(1))
    assert path.tolist() == [v]


def test_walk_stops_exactly_at_outer(oracle):
    lat, _ = oracle
    rng = rng_for(2)
    for _ in range(50):
        path = wilson.random_walk(lat, int(lat.inner_boundary[0]), rng)
        assert lat.is_outer[path[-1]]
        assert not lat.is_outer[path[:-1]].any()
        steps = set(zip(path[:-1].tolist(), path[1:].tolist()))
        assert all(b in lat.nbr[a] for a, b in steps)


def test_walk_hitting_distribution_matches_kernel(oracle):
    # harmonic-measure oracle: empirical exit frequencies vs hitting_kernel
    lat, zipper = oracle
    x = int(lat.inner_boundary[0])
    rng = rng_for(3)
    n = 200_000
    counts = np.zeros(lat.n_vertices)
    for _ in range(n):
        counts[wilson.random_walk(lat, x, rng)[-1]] += 1
    for v in lat.outer_boundary:
        p = harmonic.hitting_kernel(lat, zipper, 0.0, int(v))[x].real
        se = math.sqrt(max(p * (1 - p), 1e-12) / n)
        assert abs(counts[v] / n - p) < 3.5 * se + 1e-9


# ---------------------------------------------------------------------------
# loop_erase


def test_loop_erase_mechanical():
    path = [(0, 0), (1, 0), (1, 1), (1, 0), (2, 0)]
    assert wilson.loop_erase(path) == [(0, 0), (1, 0), (2, 0)]


def test_loop_erase_simple_path_unchanged():
    path = [(0, 0), (0, 1), (1, 1)]
    assert wilson.loop_erase(path) == path


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 6), min_size=1, max_size=60))
def test_loop_erase_properties(steps):
    # random walk on a 7-cycle: erasure is simple, keeps endpoints, idempotent
    path = [0]
    for s in steps:
        path.append((path[-1] + (1 if s % 2 else -1)) % 7)
    erased = wilson.loop_erase(path)
    assert erased[0] == path[0] and erased[-1] == path[-1]
    assert len(set(erased)) == len(erased)
    assert wilson.loop_erase(erased) == erased


# ---------------------------------------------------------------------------
# wilson_ust


def test_ust_invariants_and_determinism(oracle):
    lat, _ = oracle
    arb = wilson.wilson_ust(lat, rng_for(4))
    arb.validate()
    again = wilson.wilson_ust(lat, rng_for(4))
    assert np.array_equal(arb.parent, again.parent)


def test_ust_uniformity_light(oracle, oracle_trees):
    lat, _ = oracle
    keys = {
        tuple(
            t[int(v)][0] if t[int(v)][0] != -1 else -1 - t[int(v)][1]
            for v in lat.free_vertices
        ): i
        for i, t in enumerate(oracle_trees)
    }
    rng = rng_for(5)
    n = 30_000
    freqs = np.zeros(len(oracle_trees))
    for _ in range(n):
        arb = wilson.wilson_ust(lat, rng)
        key = tuple(
            int(arb.parent[v])
            if not lat.is_outer[arb.parent[v]]
            else -1 - int(arb.parent[v])
            for v in lat.free_vertices
        )
        freqs[keys[key]] += 1
    assert stats.chisquare(freqs).pvalue > 0.001


def test_lerw_wilson_consistency(oracle):
    # the tree branch from x under any vertex order has the law of a LERW
    lat, _ = oracle
    x = int(lat.inner_boundary[0])
    rng = rng_for(6)
    n = 60_000
    order = lat.free_vertices[::-1]  # deliberately not starting at x

    def freqs(sampler):
        out = {}
        for _ in range(n):
            key = tuple(sampler())
            out[key] = out.get(key, 0) + 1
        return out

    f_tree = freqs(lambda: wilson.wilson_ust(lat, rng, order=order).branch(x))
    f_lerw = freqs(lambda: wilson.loop_erase(wilson.random_walk(lat, x, rng)))
    support = set(f_tree) | set(f_lerw)
    tv = 0.5 * sum(abs(f_tree.get(k, 0) - f_lerw.get(k, 0)) / n for k in support)
    assert tv < 0.02


# ---------------------------------------------------------------------------
# conditioned branches


def test_single_branch_always_accepted(oracle):
    lat, _ = oracle
    rng = rng_for(7)
    for _ in range(20):
        _, attempts = wilson.sample_conditioned_branches(
            lat, [int(lat.inner_boundary[0])], rng
        )
        assert attempts == 1


def test_accepted_tuples_disjoint_and_ccw(oracle, oracle_marks):
    lat, _ = oracle
    xs, _ = oracle_marks[2]
    rng = rng_for(8)
    for _ in range(300):
        tup, _ = wilson.sample_conditioned_branches(lat, xs, rng)
        tup.validate()
        exits = tup.exits
        if len(set(exits.tolist())) == len(exits):
            # planarity: exit order is a ccw rotation of the start order
            angles = lat.angles(exits)
            rot = np.mod(angles - angles[0], 2 * np.pi)
            assert np.all(np.diff(rot) > 0)


def test_acceptance_rate_matches_exact_event_probability(oracle, oracle_marks):
    # sum of the prescribed-exit probabilities over exit pairs vs MC rate
    lat, zipper = oracle
    xs, _ = oracle_marks[2]
    outer = [
        v
        for v in ccw_order(lat, lat.outer_boundary)
        if any(not lat.is_outer[w] for w in lat.neighbors(v))
    ]
    total = 0.0
    for i in range(len(outer)):
        for j in range(i + 1, len(outer)):
            total += harmonic.event_probability_exact(
                lat, zipper, xs, [outer[i], outer[j]]
            )
    rng = rng_for(9)
    n = 30_000
    acc = 0
    attempts = 0
    while acc < n:
        _, att = wilson.sample_conditioned_branches(lat, xs, rng)
        acc += 1
        attempts += att
    rate = acc / attempts
    se = math.sqrt(total * (1 - total) / attempts)
    assert abs(rate - total) < 3 * se


def test_parity_identity_on_samples(oracle, oracle_marks):
    # on every accepted two-branch tuple the total crossing count has the
    # parity of the cyclic shift matching starts to exits
    lat, zipper = oracle
    xs, _ = oracle_marks[2]
    anchored = lambda vv: [int(v) for v in ccw_order(lat, vv)]
    rng = rng_for(10)
    for _ in range(400):
        tup, _ = wilson.sample_conditioned_branches(lat, xs, rng)
        exits = tup.exits
        if len(set(exits.tolist())) < 2:
            continue
        vs_c = anchored(exits)
        k = vs_c.index(int(exits[0]))
        total = sum(wilson.crossing_number(zipper, lat, b) for b in tup.branches)
        assert (total - k) % 2 == 0


# ---------------------------------------------------------------------------
# crossing numbers and the MC characteristic function


def test_crossing_number_basics(oracle):
    lat, zipper = oracle
    path = [lat.vertex_index(p) for p in [(0, 1), (-1, 1), (-2, 1)]]
    assert wilson.crossing_number(zipper, lat, path) == 0
    loop = [
        lat.vertex_index(p)
        for p in [(1, 1), (1, 0), (1, -1), (-1 + 0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1)]
    ]
    k = wilson.crossing_number(zipper, lat, loop)
    assert k == 1  # one positive pass (1,1)->(1,0) through the cut
    assert wilson.crossing_number(zipper, lat, loop[::-1]) == -k


def test_winding_cf_mc_degenerate_beta(oracle, oracle_marks):
    lat, zipper = oracle
    xs, _ = oracle_marks[2]
    est, se, kept, _ = wilson.winding_cf_mc(lat, zipper, 0.0, xs, rng_for(11), 200)
    assert est == 1.0 + 0.0j
    assert se == (0.0, 0.0)
    assert kept == 200


def test_winding_cf_mc_matches_exact(oracle, oracle_marks):
    lat, zipper = oracle
    xs, vs = oracle_marks[2]
    beta = math.pi / 3
    est, se, kept, _ = wilson.winding_cf_mc(
        lat, zipper, beta, xs, rng_for(12), 4000, vs=vs
    )
    assert abs(est) <= 1.0 + 1e-12
    exact = harmonic.winding_cf_exact(lat, zipper, beta, xs, vs)
    assert abs(est.real - exact.real) < 3 * se[0] + 1e-12
    assert abs(est.imag - exact.imag) < 3 * se[1] + 1e-12


def test_acceptance_rate_stable_under_refinement():
    # fixed aspect ratio, finer mesh: the rate must not collapse
    rates = []
    for outer, inner in ((15, 3), (30, 6)):
        lat = build_annulus(outer, inner)
        inner_ccw = ccw_order(lat, lat.inner_boundary)
        xs = [int(inner_ccw[0]), int(inner_ccw[len(inner_ccw) // 2])]
        rng = rng_for(13)
        acc, attempts = 0, 0
        while acc < 600:
            _, att = wilson.sample_conditioned_branches(lat, xs, rng)
            acc += 1
            attempts += att
        rates.append(acc / attempts)
    assert rates[1] > 0.5 * rates[0]


# ---------------------------------------------------------------------------
# enumeration oracle


def test_enumeration_cross_checks(oracle, oracle_trees):
    lat, _ = oracle
    assert len(oracle_trees) == wilson.tree_count(lat) == 9600
    free = set(lat.free_vertices.tolist())
    for tree in oracle_trees[:500]:
        assert set(tree) == free
        for v, (p, ex) in tree.items():
            if p == -1:
                assert lat.is_outer[ex] and ex in lat.nbr[v]
            else:
                assert p in lat.nbr[v]


def test_enumeration_cap():
    lat = build_annulus(6, 0)  # plenty of free vertices
    with pytest.raises(Exception):
        wilson.enumerate_spanning_trees(lat)


def test_brute_force_cf_trivial_beta(oracle, oracle_trees, oracle_marks):
    lat, zipper = oracle
    xs, vs = oracle_marks[2]
    val = wilson.brute_force_winding_cf(lat, zipper, 0.0, xs, vs, trees=oracle_trees)
    assert val == pytest.approx(1.0)


def test_brute_force_zero_mass_event_rejected(oracle, oracle_trees):
    lat, zipper = oracle
    inner = ccw_order(lat, lat.inner_boundary)
    corners = [v for v in lat.outer_boundary if all(lat.is_outer[w] for w in lat.neighbors(int(v)))]
    with pytest.raises(ValueError):
        wilson.brute_force_winding_cf(
            lat, zipper, 0.3, [inner[0]], [int(corners[0])], trees=oracle_trees
        )
