"""The acceptance suite: eleven numbered criteria with pinned seeds.

Each criterion function returns a CriterionResult and prints nothing; the
runner emits one pass/fail line per criterion.  Expensive simulations that
several criteria share (the long Dyson runs, the oracle-lattice tree list)
are cached on the AcceptanceContext.  Seeds are pinned here and do not
depend on CLI flags, so the suite is a fixed regression battery.

Suites: ``exact`` (determinant/series identities: 1, 2, 6, 11), ``mc``
(lattice Monte Carlo: 3, 4, 5, 7), ``sde`` (stochastic processes: 8, 9,
10), and ``all``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import harmonic, sde, wilson
from .continuum import (
    MarkedAnnulus,
    annulus_det_series,
    fit_power_law,
    hitting_gof_test,
)
from .lattice import build_annulus, build_square_annulus, build_zipper, ccw_order
from .loopsoup import LoopSoupSampler, campbell_cf_mc
from .seeds import stream_generator

MASTER_SEED = 20250801


@dataclass
class CriterionResult:
    cid: int
    title: str
    passed: bool
    observed: dict
    tolerance: str
    seconds: float

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        obs = ", ".join(f"{k}={_fmt(v)}" for k, v in self.observed.items())
        return f"[{tag}] criterion {self.cid:2d}: {self.title} | {obs} | tol: {self.tolerance} | {self.seconds:.1f}s"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


class AcceptanceContext:
    """Caches shared between criteria (oracle trees, long Dyson runs)."""

    def __init__(self):
        self._cache = {}

    def oracle(self):
        if "oracle" not in self._cache:
            lat = build_square_annulus(2, 0)
            zip0 = build_zipper(lat)
            trees, count = wilson.enumerate_spanning_trees(lat)
            self._cache["oracle"] = (lat, zip0, trees, count)
        return self._cache["oracle"]

    def dyson_run(self, n, t_end=50.0, paths=10_000, kappa=2.0):
        key = ("dyson", n, t_end, paths, kappa)
        if key not in self._cache:
            rng = stream_generator(MASTER_SEED, 800 + n)
            theta0 = np.array([_coe(n, rng) for _ in range(paths)])
            theta1 = sde.dbm_ensemble(theta0, kappa, 2.0, t_end, 1e-3, rng)
            self._cache[key] = (theta0, theta1)
        return self._cache[key]


def _coe(n, rng):
    from .continuum import coe_sample

    return coe_sample(n, rng)


def _oracle_marks(lat, n):
    """Canonical ccw marked tuples on the 5x5-minus-center oracle lattice."""
    inner = ccw_order(lat, lat.inner_boundary)
    outer = [
        v
        for v in ccw_order(lat, lat.outer_boundary)
        if any(not lat.is_outer[w] for w in lat.neighbors(v))
    ]  # exits actually reachable (corners are not)
    if n == 1:
        return [inner[0]], [outer[3]]
    if n == 2:
        return [inner[1], inner[3]], [outer[1], outer[7]]
    if n == 3:
        return [inner[0], inner[1], inner[2]], [outer[1], outer[4], outer[7]]
    raise ValueError(n)


BETA_SET = (0.0, 0.7, math.pi / 3, math.pi)


def criterion_1(ctx) -> CriterionResult:
    t0 = time.time()
    lat, zip0, trees, _ = ctx.oracle()
    worst = 0.0
    for n in (1, 3):
        xs, vs = _oracle_marks(lat, n)
        for beta in BETA_SET:
            bf = wilson.brute_force_winding_cf(lat, zip0, beta, xs, vs, trees=trees)
            ex = harmonic.winding_cf_exact(lat, zip0, beta, xs, vs)
            worst = max(worst, abs(bf - ex))
        p_bf = wilson.brute_force_event_probability(lat, xs, vs=vs, trees=trees)
        p_ex = harmonic.event_probability_exact(lat, zip0, xs, vs)
        worst = max(worst, abs(p_bf - p_ex))
    return CriterionResult(
        1,
        "exact winding identity, odd branch counts",
        worst <= 1e-8,
        {"max_abs_diff": worst},
        "<= 1e-8",
        time.time() - t0,
    )


def criterion_2(ctx) -> CriterionResult:
    t0 = time.time()
    lat, zip0, trees, _ = ctx.oracle()
    xs, vs = _oracle_marks(lat, 2)
    worst = 0.0
    for beta in BETA_SET:
        bf = wilson.brute_force_winding_cf(lat, zip0, beta, xs, vs, trees=trees)
        ex = harmonic.winding_cf_exact(lat, zip0, beta, xs, vs)
        worst = max(worst, abs(bf - ex))
    p_bf = wilson.brute_force_event_probability(lat, xs, vs=vs, trees=trees)
    p_ex = harmonic.event_probability_exact(lat, zip0, xs, vs)
    worst = max(worst, abs(p_bf - p_ex))
    return CriterionResult(
        2,
        "exact winding identity and partition function, two branches",
        worst <= 1e-8,
        {"max_abs_diff": worst},
        "<= 1e-8",
        time.time() - t0,
    )


def criterion_3(ctx) -> CriterionResult:
    t0 = time.time()
    lat, zip0, trees, count = ctx.oracle()
    assert count == wilson.tree_count(lat)
    key_of = lambda tree: tuple(
        tree[int(v)][0] if tree[int(v)][0] != -1 else -1 - tree[int(v)][1]
        for v in lat.free_vertices
    )
    index = {key_of(t): i for i, t in enumerate(trees)}
    rng = stream_generator(MASTER_SEED, 3)
    samples = 100_000
    freqs = np.zeros(count)
    free = lat.free_vertices
    for _ in range(samples):
        arb = wilson.wilson_ust(lat, rng)
        key = tuple(
            int(arb.parent[v]) if not lat.is_outer[arb.parent[v]] else -1 - int(arb.parent[v])
            for v in free
        )
        freqs[index[key]] += 1
    res = stats.chisquare(freqs)
    return CriterionResult(
        3,
        "Wilson sampler uniform over enumerated trees",
        res.pvalue > 0.001 and count == 9600,
        {"trees": count, "chi2_pvalue": float(res.pvalue)},
        "p > 0.001; count = matrix-tree",
        time.time() - t0,
    )


def criterion_4(ctx) -> CriterionResult:
    t0 = time.time()
    lat = build_square_annulus(5, 0)
    zip0 = build_zipper(lat)
    sampler = LoopSoupSampler(lat, zip0)
    rng = stream_generator(MASTER_SEED, 4)
    windings, _, _ = sampler.sample_batch(10_000, rng)
    beta = math.pi / 2
    est, se = campbell_cf_mc(windings, beta)
    target = harmonic.loop_mass_ratio(lat, zip0, beta, 0.0)
    dev_re = abs(est.real - target.real) / se[0]
    dev_im = abs(est.imag - target.imag) / se[1]
    ok = dev_re <= 3.0 and dev_im <= 3.0
    return CriterionResult(
        4,
        "Poisson soup winding moment matches determinant ratio",
        ok,
        {"estimate": est.real, "target": target.real, "dev_re_se": dev_re, "dev_im_se": dev_im},
        "within 3 standard errors",
        time.time() - t0,
    )


def criterion_5(ctx) -> CriterionResult:
    t0 = time.time()
    lat = build_annulus(60, 0)
    inner = ccw_order(lat, lat.inner_boundary)
    xs = [inner[0], inner[2]]
    rng = stream_generator(MASTER_SEED, 5)
    draws = 5000
    angles = np.empty((draws, 2))
    for k in range(draws):
        tup, _ = wilson.sample_conditioned_branches(lat, xs, rng)
        angles[k] = lat.angles(tup.exits)
    res = hitting_gof_test(angles, 2)
    return CriterionResult(
        5,
        "hitting-angle gaps follow the circular-orthogonal law",
        res.statistic < 0.03,
        {"ks": res.statistic, "critical_1pct": res.critical_value, "samples": draws},
        "KS < 0.03",
        time.time() - t0,
    )


def criterion_6(ctx) -> CriterionResult:
    t0 = time.time()
    rs = (1e-2, 1e-3, 1e-4)
    e_odd = fit_power_law(rs, [annulus_det_series(_marks(3, r), 0.0) for r in rs])
    e_even = fit_power_law(rs, [annulus_det_series(_marks(2, r), 0.5) for r in rs])
    ok = abs(e_odd - 2.0) <= 0.02 and abs(e_even - 1.0) <= 0.02
    return CriterionResult(
        6,
        "determinant-series decay exponents (n^2-1)/4 and n^2/4",
        ok,
        {"exponent_n3": e_odd, "exponent_n2_shifted": e_even},
        "2.00 +- 0.02 and 1.00 +- 0.02",
        time.time() - t0,
    )


def _marks(n, r):
    inner = tuple(2 * math.pi * j / n + 0.3 for j in range(n))
    outer = tuple(2 * math.pi * j / n + 1.1 for j in range(n))
    return MarkedAnnulus(r, inner, outer)


def criterion_7(ctx) -> CriterionResult:
    t0 = time.time()
    inner = 8
    rhos, vals = [], []
    for outer in (32, 64, 128):
        lat = build_annulus(outer, inner)
        zipper = build_zipper(lat)
        rhos.append(outer / inner)
        vals.append(harmonic.log_loop_mass_difference(lat, zipper, 0.0, math.pi))
    A = np.vstack([np.log(rhos), np.ones(len(rhos))]).T
    slope = float(np.linalg.lstsq(A, np.array(vals), rcond=None)[0][0])
    ok = abs(slope - 0.25) <= 0.05 * 0.25
    return CriterionResult(
        7,
        "noncontractible loop-mass slope vs log modulus",
        ok,
        {"slope": slope, "values": [round(v, 6) for v in vals]},
        "0.25 within 5% (see ledger: pre-asymptotic at these moduli)",
        time.time() - t0,
    )


def criterion_8(ctx) -> CriterionResult:
    t0 = time.time()
    kappa = 2.0
    rng = stream_generator(MASTER_SEED, 8)
    theta0 = np.array([_coe(3, rng) for _ in range(10_000)])
    theta1 = sde.dbm_ensemble(theta0, kappa, 2.0, 1.0, 1e-3, rng)
    var_sigma = float((theta1 - theta0).sum(axis=1).var(ddof=1))
    dev_sigma = abs(var_sigma - kappa * 3 * 1.0) / (kappa * 3 * 1.0)
    devs = {}
    for n in (2, 3, 4):
        th0, th1 = ctx.dyson_run(n)
        v = (th1 - th0).var(axis=0, ddof=1) / 50.0
        devs[n] = float(np.max(np.abs(v - kappa / n) / (kappa / n)))
    ok = dev_sigma <= 0.02 and all(d <= 0.05 for d in devs.values())
    return CriterionResult(
        8,
        "Dyson variance identities Var[Sigma]=kappa n t and Var[Theta_i]/t -> kappa/n",
        ok,
        {"sum_var_rel_dev": dev_sigma, **{f"per_angle_rel_dev_n{n}": d for n, d in devs.items()}},
        "2% (sum, t=1) and 5% (per angle, t=50)",
        time.time() - t0,
    )


def criterion_9(ctx) -> CriterionResult:
    t0 = time.time()
    kappa, t_end = 2.0, 50.0
    th0, th1 = ctx.dyson_run(3)
    norm = (th1 - th0) / math.sqrt(kappa * t_end / 3)
    cov = np.cov(norm.T)
    cov_dev = float(np.max(np.abs(cov - 1.0)))
    var2 = float((ctx.dyson_run(2)[1] - ctx.dyson_run(2)[0]).var(axis=0, ddof=1).mean())
    var4 = float((ctx.dyson_run(4)[1] - ctx.dyson_run(4)[0]).var(axis=0, ddof=1).mean())
    ratio = var2 / var4
    ok = cov_dev <= 0.07 and abs(ratio - 2.0) <= 0.10 * 2.0
    return CriterionResult(
        9,
        "winding covariance all-ones and kappa/n^2 variance scaling",
        ok,
        {"max_cov_dev": cov_dev, "var_ratio_n2_n4": ratio},
        "7% (covariance), 10% (ratio)",
        time.time() - t0,
    )


def criterion_10(ctx) -> CriterionResult:
    t0 = time.time()
    rng = stream_generator(MASTER_SEED, 10)
    res = sde.gff_martingale_check(
        2.0, 2, 0.3 + 0.0j, -0.35 + 0.1j, 0.3, 1e-3, 10_000, rng
    )
    drift_se = abs(res.mean_drift) / res.se_drift
    ok = drift_se <= 3.0 and res.qv_rel_mismatch <= 0.05
    return CriterionResult(
        10,
        "flow-line field drift-free and Hadamard quadratic variation",
        ok,
        {
            "drift_over_se": drift_se,
            "qv_rel_mismatch": res.qv_rel_mismatch,
            "stopped_fraction": res.stopped_fraction,
        },
        "|drift| < 3 se; QV within 5%",
        time.time() - t0,
    )


def criterion_11(ctx) -> CriterionResult:
    t0 = time.time()
    rs = (1e-2, 1e-3)

    def exponent(n, base):
        vals = [
            abs(annulus_det_series(_marks(n, r), base + 0.3))
            / abs(annulus_det_series(_marks(n, r), base))
            for r in rs
        ]
        return fit_power_law(rs, vals)

    e1, e3 = exponent(1, 0.0), exponent(3, 0.0)
    e2, e4 = exponent(2, 0.5), exponent(4, 0.5)
    ok = abs(e1 - e3) <= 0.02 and abs(e2) <= 0.02 and abs(e4) <= 0.02
    return CriterionResult(
        11,
        "parity of the determinant-factor decay exponent",
        ok,
        {"n1": e1, "n3": e3, "n2": e2, "n4": e4},
        "odd pair within 0.02 of each other; even within 0.02 of 0 "
        "(see ledger: pre-asymptotic at the pinned radii)",
        time.time() - t0,
    )


CRITERIA = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
    9: criterion_9,
    10: criterion_10,
    11: criterion_11,
}

SUITES = {
    "exact": (1, 2, 6, 11),
    "mc": (3, 4, 5, 7),
    "sde": (8, 9, 10),
    "all": tuple(range(1, 12)),
}


def run_suite(name: str, echo=print):
    """Run a suite; returns the list of CriterionResult, printing one line each."""
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    ctx = AcceptanceContext()
    results = []
    for cid in SUITES[name]:
        res = CRITERIA[cid](ctx)
        results.append(res)
        if echo:
            echo(res.line())
    return results
