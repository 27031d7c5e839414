import math

import numpy as np
import pytest
from scipy import integrate, stats

from conftest import rng_for
from ustwind.continuum import (
    MarkedAnnulus,
    SleConstants,
    annulus_det_series,
    circular_beta_sample,
    coe_density,
    coe_gaps,
    coe_normalization,
    coe_pair_gap_cdf,
    coe_sample,
    disc_green,
    fit_power_law,
    frak_h,
    hitting_gof_test,
    huniv_beta,
    ks_critical_value,
    strip_poisson_kernel,
)

TWO_PI = 2 * math.pi


def _marks(n, r):
    inner = tuple(TWO_PI * j / n + 0.3 for j in range(n))
    outer = tuple(TWO_PI * j / n + 1.1 for j in range(n))
    return MarkedAnnulus(r, inner, outer)


# ---------------------------------------------------------------------------
# strip kernels


def test_strip_kernel_values():
    r = 0.05
    L = abs(math.log(r))
    assert strip_poisson_kernel(r, 1.3, 1.3) == pytest.approx(1 / (2 * L))
    assert strip_poisson_kernel(r, 0.2, 1.9) == pytest.approx(
        strip_poisson_kernel(r, 1.9, 0.2)
    )
    # r = e^{-pi}: the sech argument is pi (2 pi)/(2 pi) = pi
    r = math.exp(-math.pi)
    assert strip_poisson_kernel(r, 0.0, TWO_PI) == pytest.approx(
        1 / (2 * math.pi * math.cosh(math.pi))
    )


def test_strip_kernel_rejects_bad_r():
    with pytest.raises(ValueError):
        strip_poisson_kernel(1.5, 0, 0)


def test_huniv_positive_at_beta_zero():
    val, tail = huniv_beta(0.05, 0.0, 0.4, 0.3, 1.7, 6, tail_tol=1e-6)
    assert val.imag == pytest.approx(0.0, abs=1e-15)
    assert val.real > 0


def test_huniv_conjugation():
    a, _ = huniv_beta(0.05, 0.8, 0.4, 0.3, 1.7, 6, tail_tol=1e-6)
    b, _ = huniv_beta(0.05, -0.8, 0.4, 0.3, 1.7, 6, tail_tol=1e-6)
    assert a == pytest.approx(b.conjugate())


def test_huniv_tail_bound_is_certified():
    # analytic bound vs the directly computed extra terms
    lo, tail = huniv_beta(0.05, 0.6, 0.4, 0.3, 1.7, 5, tail_tol=1.0)
    hi, _ = huniv_beta(0.05, 0.6, 0.4, 0.3, 1.7, 12, tail_tol=1.0)
    assert abs(hi - lo) <= tail
    with pytest.raises(ValueError):
        huniv_beta(0.05, 0.6, 0.4, 0.3, 1.7, 5, tail_tol=tail / 10)


# ---------------------------------------------------------------------------
# the sech series


def test_series_single_point_limit():
    val = annulus_det_series(_marks(1, 1e-4), 0.0)
    assert val.real == pytest.approx(1 / TWO_PI, rel=1e-3)
    assert val.imag == pytest.approx(0.0, abs=1e-12)


def test_series_window_shift_invariance():
    m = _marks(2, 1e-3)
    a = annulus_det_series(m, 0.25)
    b = annulus_det_series(m, 1.25)
    assert abs(a) == pytest.approx(abs(b))


def test_series_window_too_small():
    with pytest.raises(ValueError):
        annulus_det_series(_marks(3, 1e-2), 0.0, k_range=range(-1, 2))


def test_series_decay_exponents():
    rs = (1e-2, 1e-3)
    e3 = fit_power_law(rs, [annulus_det_series(_marks(3, r), 0.0) for r in rs])
    e2 = fit_power_law(rs, [annulus_det_series(_marks(2, r), 0.5) for r in rs])
    assert e3 == pytest.approx(2.0, abs=0.05)
    assert e2 == pytest.approx(1.0, abs=0.05)


def test_marked_annulus_validation():
    with pytest.raises(ValueError):
        MarkedAnnulus(1.5, (0.0,), (1.0,))
    with pytest.raises(ValueError):
        MarkedAnnulus(0.1, (0.0, 0.1), (1.0,))
    with pytest.raises(ValueError):
        MarkedAnnulus(0.1, (0.5, 0.1, 0.2), (1.0, 2.0, 3.0))


# ---------------------------------------------------------------------------
# circular orthogonal ensemble


def test_coe_density_single_point():
    assert coe_density([1.3]) == pytest.approx(1 / TWO_PI)


def test_coe_density_rotation_invariance():
    t = np.array([0.2, 1.5, 4.0])
    assert coe_density(t + 0.77) == pytest.approx(coe_density(t))


def test_coe_normalization_n2():
    z, err = coe_normalization(2)
    assert z == pytest.approx(16 * math.pi, rel=1e-8)
    assert coe_density([0.0, math.pi]) == pytest.approx(2 / (16 * math.pi))


def test_coe_density_integrates_to_one():
    # over the ccw sector, via the gap parametrization (n = 3)
    val, _ = integrate.dblquad(
        lambda s2, s1: TWO_PI * coe_density([0.0, s1, s1 + s2]),
        0,
        TWO_PI,
        0,
        lambda s1: TWO_PI - s1,
    )
    assert val == pytest.approx(1.0, rel=1e-6)


def test_coe_sample_uniform_for_single_point():
    rng = rng_for(40)
    vals = np.array([coe_sample(1, rng)[0] for _ in range(10_000)])
    stat = stats.kstest(vals, "uniform", args=(0, TWO_PI)).statistic
    assert stat < 0.02


def test_coe_pair_gap_statistics():
    rng = rng_for(41)
    gaps = np.array(
        [np.mod(np.diff(coe_sample(2, rng))[0], TWO_PI) for _ in range(10_000)]
    )
    assert gaps.mean() == pytest.approx(math.pi, abs=0.05)
    # KS against the quadrature CDF (analytic check: (1 - cos(s/2))/2)
    grid = np.linspace(0, TWO_PI, 101)
    assert np.allclose(coe_pair_gap_cdf(grid), (1 - np.cos(grid / 2)) / 2, atol=1e-6)
    stat = stats.ks_1samp(gaps, coe_pair_gap_cdf).statistic
    assert stat < 0.02


def test_coe_sample_is_ccw_and_bounded():
    rng = rng_for(42)
    for n in (2, 4):
        t = coe_sample(n, rng)
        assert np.all(np.diff(t) > 0)
        assert t[-1] - t[0] < TWO_PI
    with pytest.raises(ValueError):
        coe_sample(9, rng)


def test_circular_beta_sample_gap_law():
    # beta = 2 pair gaps follow sin^2(s/2) (quadrature CDF)
    rng = rng_for(43)
    gaps = np.array(
        [np.mod(np.diff(circular_beta_sample(2, 2.0, rng))[0], TWO_PI) for _ in range(6000)]
    )
    s = np.linspace(0, TWO_PI, 2001)
    dens = np.sin(s / 2) ** 2
    cdf = integrate.cumulative_trapezoid(dens, s, initial=0.0)
    cdf /= cdf[-1]
    stat = stats.ks_1samp(gaps, lambda x: np.interp(x, s, cdf)).statistic
    assert stat < ks_critical_value(len(gaps))


# ---------------------------------------------------------------------------
# disc potential theory


def test_disc_green_values():
    assert disc_green(0.0, 0.3 + 0.1j) == pytest.approx(-math.log(abs(0.3 + 0.1j)))
    assert disc_green(0.2 + 0.4j, -0.1j) == pytest.approx(disc_green(-0.1j, 0.2 + 0.4j))
    assert disc_green(0.2, 0.999999) == pytest.approx(0.0, abs=1e-5)
    with pytest.raises(ValueError):
        disc_green(0.3, 0.3)


def test_frak_h_at_origin():
    thetas = [0.4, 2.0, -1.2]
    kappa = 2.0
    wrapped = [(t + math.pi) % TWO_PI - math.pi for t in thetas]
    assert frak_h(thetas, kappa, 0.0) == pytest.approx(-sum(wrapped) / math.sqrt(kappa))


def test_frak_h_single_point_on_radius():
    # on the radius toward e^{i theta} the Moebius ratio is e^{i theta} times
    # a positive real, checked against direct complex arithmetic
    theta = 0.9
    kappa = 3.0
    w = 0.55 * np.exp(1j * theta)
    e = np.exp(1j * theta)
    ratio = (e - w) / (1 - np.conj(w) * e)
    assert ratio / e == pytest.approx(abs(ratio))
    assert frak_h([theta], kappa, w) == pytest.approx(
        -np.angle(ratio) / math.sqrt(kappa)
    )


def test_frak_h_continuity_and_harmonicity():
    thetas = [0.3, 2.4]
    kappa = 2.0
    f = lambda z: frak_h(thetas, kappa, z)
    base = 0.22 + 0.18j
    assert abs(f(base) - f(base + 1e-6)) < 1e-4
    for h in (1e-2, 5e-3):
        lap = (
            f(base + h) + f(base - h) + f(base + 1j * h) + f(base - 1j * h) - 4 * f(base)
        ) / h**2
        assert abs(lap) < 1e-4  # five-point Laplacian vanishes to O(h^2)
    with pytest.raises(ValueError):
        frak_h(thetas, kappa, np.exp(1j * thetas[0]))


def test_sle_constants():
    c = SleConstants(2.0)
    assert c.chi == pytest.approx(2 / math.sqrt(2) - math.sqrt(2) / 2)
    assert c.lam == pytest.approx(math.pi / math.sqrt(2))
    assert SleConstants(3.9).chi > 0


# ---------------------------------------------------------------------------
# goodness of fit


def test_gof_self_consistency():
    rng = rng_for(44)
    samples = np.array([coe_sample(2, rng) for _ in range(4000)])
    res = hitting_gof_test(samples, 2)
    assert res.passed


def test_gof_has_power():
    rng = rng_for(45)
    uni = np.sort(rng.uniform(0, TWO_PI, size=(4000, 2)), axis=1)
    assert not hitting_gof_test(uni, 2).passed


def test_gof_three_point_self_consistency():
    rng = rng_for(46)
    samples = np.array([coe_sample(3, rng) for _ in range(1500)])
    res = hitting_gof_test(samples, 3, rng=rng_for(47))
    assert res.mode.startswith("two-sample")
    assert res.passed


def test_gof_input_validation():
    with pytest.raises(ValueError):
        hitting_gof_test(np.zeros((100, 2)), 2)  # too few samples
    with pytest.raises(ValueError):
        hitting_gof_test(np.zeros((600, 3)), 2)  # wrong width
