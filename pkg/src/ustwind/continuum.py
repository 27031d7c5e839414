"""Closed-form continuum quantities on the annulus, disc, and strip.

Everything here is deterministic special-function work: the mixed
Neumann/Dirichlet Poisson kernel of a strip (a sech), the sech-series
expansion of the gauged hitting-kernel determinant on an annulus, the
circular-orthogonal-ensemble density/sampler for boundary hitting points,
the Dirichlet Green's function of the disc, and the multi-point boundary
harmonic function driving the flow-line coupling.  The lone statistical
helper is a Kolmogorov-Smirnov test of hitting-angle gaps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np
from scipy import integrate, stats

TWO_PI = 2 * math.pi


@dataclass(frozen=True)
class MarkedAnnulus:
    """Annulus r < |z| < 1 with marked boundary angles, counterclockwise."""

    r: float
    inner_args: tuple
    outer_args: tuple

    def __post_init__(self):
        if not 0 < self.r < 1:
            raise ValueError("need 0 < r < 1")
        for args in (self.inner_args, self.outer_args):
            if len(args) != len(self.inner_args):
                raise ValueError("need equally many inner and outer marks")
            if len(args) > 1 and not _is_ccw_angles(args):
                raise ValueError("marked angles must be strictly ccw")

    @property
    def n(self) -> int:
        return len(self.inner_args)

    @property
    def phase_constant(self) -> float:
        """sum of inner marked args minus outer marked args, principal branch."""
        wrap = lambda a: (a + math.pi) % TWO_PI - math.pi
        return sum(wrap(a) for a in self.inner_args) - sum(
            wrap(a) for a in self.outer_args
        )


def _is_ccw_angles(angles) -> bool:
    a = np.mod(np.asarray(angles, dtype=float), TWO_PI)
    a = np.concatenate([a[np.argmin(a) :], a[: np.argmin(a)]])
    return bool(np.all(np.diff(a) > 0))


@dataclass(frozen=True)
class SleConstants:
    kappa: float

    @property
    def chi(self) -> float:
        return 2 / math.sqrt(self.kappa) - math.sqrt(self.kappa) / 2

    @property
    def lam(self) -> float:
        return math.pi / math.sqrt(self.kappa)


# ---------------------------------------------------------------------------
# Strip kernels


def strip_poisson_kernel(r: float, x1: float, x2: float) -> float:
    """Boundary Poisson kernel of the strip of height |log r|.

    Neumann on the bottom edge (where x1 lives), Dirichlet on the top (x2),
    normalized to integrate to 1 over the Dirichlet edge:
    1/(2|log r|) * sech(pi (x2-x1) / (2 |log r|)).
    """
    if not 0 < r < 1:
        raise ValueError("need 0 < r < 1")
    L = abs(math.log(r))
    return 1.0 / (2 * L) / math.cosh(math.pi * (x2 - x1) / (2 * L))


def _strip_nd_kernel(L: float, x: float, y: float, xi: float) -> float:
    """Mixed-boundary Poisson kernel at interior point x+iy, 0 <= y < L.

    Reflecting the strip through its Neumann edge doubles it into a height-2L
    Dirichlet strip; the kernel is the sum of the doubled-strip kernels at
    the point and its mirror image.
    """
    h = 2 * L

    def top_kernel(yy):
        th = math.pi * (yy + L) / h
        return (
            math.sin(th)
            / (math.cosh(math.pi * (x - xi) / h) + math.cos(th))
            / (2 * h)
        )

    return top_kernel(y) + top_kernel(-y)


def huniv_beta(
    r: float,
    beta: float,
    arg_x: float,
    radius_x: float,
    arg_w: float,
    m_truncation: int,
    tail_tol: float = 1e-12,
):
    """Gauged continuum hitting kernel as a universal-cover sum.

    Sums exp(i m beta) times the strip kernel between the lift of the
    interior point (radius_x, arg_x) and the m-th copy of the outer boundary
    point at arg_w; copy m sits 2 pi m further along the covering strip.
    Returns (value, tail_bound) and raises if the certified sech tail of the
    truncation exceeds tail_tol.
    """
    if m_truncation < 1:
        raise ValueError("need m_truncation >= 1")
    if not r < radius_x <= 1:
        raise ValueError("point must lie inside the annulus")
    L = abs(math.log(r))
    x = -arg_x
    y = math.log(radius_x / r)
    total = 0.0 + 0.0j
    for m in range(-m_truncation, m_truncation + 1):
        xi = -arg_w + TWO_PI * m
        total += np.exp(1j * m * beta) * _strip_nd_kernel(L, x, y, xi)
    tail = _huniv_tail_bound(L, m_truncation)
    if tail > tail_tol:
        raise ValueError(f"truncation tail {tail:.2e} above {tail_tol:.1e}")
    return complex(total), tail


def _huniv_tail_bound(L: float, m_trunc: int) -> float:
    """Certified bound on the omitted |m| > m_trunc copies.

    The doubled-strip kernel at horizontal distance u obeys
    kernel <= (2/L) exp(-pi u / (2L)) once pi u/(2L) >= ln 4; copy m sits at
    distance at least 2 pi (|m| - 1) from the base point, so the tail is a
    geometric series with ratio exp(-pi^2/L) per unit of m.
    """
    q = math.exp(-math.pi**2 / L)
    u_min = TWO_PI * m_trunc  # distance of the first omitted copy, m_trunc+1
    if math.pi * u_min / (2 * L) < math.log(4.0):
        return math.inf
    lead = (2.0 / L) * math.exp(-math.pi * u_min / (2 * L))
    return 2.0 * lead / (1.0 - q)


# ---------------------------------------------------------------------------
# The sech series for the annulus determinant


def annulus_det_series(marked: MarkedAnnulus, beta: float, k_range=None) -> complex:
    """Continuum determinant of gauged hitting kernels on the marked annulus.

    (2 pi)^{-n} sum over integer tuples k_1 < ... < k_n of
    det(e^{i (beta - k_i) arg x_j}) * det(e^{-i (beta - k_i) arg v_j})
    * prod_i sech(|log r| (beta - k_i)).

    ``beta`` is the total-winding parameter: the lattice gauge angle beta_cr
    corresponds to beta = beta_cr / (2 pi).  The summation window defaults to
    a band around the nearest integers to beta wide enough that the boundary
    terms are negligible; a window whose edge still matters raises.
    """
    n = marked.n
    L = abs(math.log(marked.r))
    if k_range is None:
        half = max(n + 4, math.ceil(10.0 / L) + n)
        center = round(beta)
        k_range = range(center - half, center + half + 1)
    ks = np.array(sorted(k_range))
    if len(ks) < n:
        raise ValueError("window smaller than the number of marked points")
    xs = np.asarray(marked.inner_args, dtype=float)
    vs = np.asarray(marked.outer_args, dtype=float)

    def tuple_term(tup):
        freq = beta - ks[list(tup)]
        dx = np.linalg.det(np.exp(1j * np.outer(freq, xs)))
        dv = np.linalg.det(np.exp(-1j * np.outer(freq, vs)))
        sech = np.prod(1.0 / np.cosh(L * freq))
        return dx * dv * sech

    total = 0.0 + 0.0j
    edge = 0.0
    for tup in combinations(range(len(ks)), n):
        term = tuple_term(tup)
        total += term
        if 0 in tup or len(ks) - 1 in tup:
            edge += abs(term)
    if edge > 1e-3 * max(abs(total), 1e-300):
        raise ValueError("summation window too small: boundary terms matter")
    return complex(total / TWO_PI**n)


def fit_power_law(rs, values):
    """Least-squares slope of log|value| against log r."""
    rs = np.asarray(rs, dtype=float)
    vals = np.abs(np.asarray(values))
    A = np.vstack([np.log(rs), np.ones_like(rs)]).T
    slope, _ = np.linalg.lstsq(A, np.log(vals), rcond=None)[0]
    return float(slope)


# ---------------------------------------------------------------------------
# Circular Orthogonal Ensemble


def _vandermonde_abs(thetas) -> float:
    z = np.exp(1j * np.asarray(thetas, dtype=float))
    n = len(z)
    out = 1.0
    for j in range(n):
        for k in range(j + 1, n):
            out *= abs(z[j] - z[k])
    return out


@lru_cache(maxsize=None)
def coe_normalization(n: int) -> tuple:
    """(Z_n, error_estimate): the ccw-sector normalization of the COE density.

    Quadrature over gap coordinates for n <= 4, Monte Carlo beyond (with a
    fixed internal seed so results are reproducible).
    """
    if n == 1:
        return TWO_PI, 0.0
    if n <= 4:
        # theta_1 integrates to 2 pi; remaining gaps s_i > 0 sum below 2 pi
        def integrand(*gaps):
            thetas = np.concatenate([[0.0], np.cumsum(gaps)])
            return _vandermonde_abs(thetas)

        if n == 2:
            val, err = integrate.quad(integrand, 0, TWO_PI)
        elif n == 3:
            val, err = integrate.dblquad(
                lambda s2, s1: integrand(s1, s2), 0, TWO_PI, 0, lambda s1: TWO_PI - s1
            )
        else:
            val, err = integrate.tplquad(
                lambda s3, s2, s1: integrand(s1, s2, s3),
                0,
                TWO_PI,
                0,
                lambda s1: TWO_PI - s1,
                0,
                lambda s1, s2: TWO_PI - s1 - s2,
            )
        return TWO_PI * val, TWO_PI * err
    rng = np.random.Generator(np.random.PCG64(20240517))
    m = 200_000
    theta = rng.uniform(0, TWO_PI, size=(m, n))
    vals = np.array([_vandermonde_abs(t) for t in theta])
    # uniform tuples land in the ccw sector with probability 1/(n-1)!
    z = TWO_PI**n * vals.mean() / math.factorial(n - 1)
    err = TWO_PI**n * vals.std(ddof=1) / math.sqrt(m) / math.factorial(n - 1)
    return z, err


def coe_density(thetas) -> float:
    """COE eigenvalue density at the given angles; zero off the ccw sector."""
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    n = len(thetas)
    if n == 1:
        return 1.0 / TWO_PI
    if not _is_ccw_angles(thetas):
        return 0.0
    z, _ = coe_normalization(n)
    return _vandermonde_abs(thetas) / z


def circular_beta_sample(n: int, beta_ens: float, rng) -> np.ndarray:
    """Circular beta-ensemble draw by rejection from the uniform torus.

    The density is proportional to the product of chord lengths to the power
    beta_ens, bounded by 2^(beta_ens n(n-1)/2), which is the envelope.  The
    labelled density charges the n ccw representatives of an unordered
    configuration equally, so the accepted tuple is returned as a uniformly
    random cyclic rotation of its sorted lift.
    """
    if n > 8:
        raise ValueError("rejection sampling is impractical beyond n = 8")
    if n == 1:
        return np.array([rng.uniform(0, TWO_PI)])
    bound = 2.0 ** (beta_ens * n * (n - 1) / 2)
    while True:
        theta = rng.uniform(0, TWO_PI, size=n)
        if rng.uniform() * bound <= _vandermonde_abs(theta) ** beta_ens:
            theta = np.sort(theta)
            k = rng.integers(n)
            return np.concatenate([theta[k:], theta[:k] + TWO_PI])


def coe_sample(n: int, rng) -> np.ndarray:
    """Exact COE (beta = 1) draw; see circular_beta_sample."""
    return circular_beta_sample(n, 1.0, rng)


def coe_gaps(thetas) -> np.ndarray:
    """All n circular gaps of an angle tuple, in ccw order."""
    t = np.sort(np.mod(np.asarray(thetas, dtype=float), TWO_PI))
    return np.diff(np.concatenate([t, [t[0] + TWO_PI]]))


@lru_cache(maxsize=None)
def _pair_gap_cdf_table(npts: int = 4097):
    """Quadrature CDF of the single gap of a COE pair on (0, 2 pi)."""
    s = np.linspace(0.0, TWO_PI, npts)
    dens = np.array([TWO_PI * coe_density(np.array([0.0, v])) for v in s])
    cdf = integrate.cumulative_trapezoid(dens, s, initial=0.0)
    cdf /= cdf[-1]
    return s, cdf


def coe_pair_gap_cdf(s) -> np.ndarray:
    """CDF of the ccw gap from the first to the second point of a COE pair."""
    grid, cdf = _pair_gap_cdf_table()
    return np.interp(np.asarray(s, dtype=float), grid, cdf)


# ---------------------------------------------------------------------------
# Disc potential theory


def disc_green(z: complex, w: complex) -> float:
    """Dirichlet Green's function of the unit disc, -log|(z-w)/(1-conj(z)w)|."""
    z = complex(z)
    w = complex(w)
    if abs(z) >= 1 or abs(w) >= 1:
        raise ValueError("arguments must lie in the open disc")
    if z == w:
        raise ValueError("Green's function diverges on the diagonal")
    return -math.log(abs((z - w) / (1 - z.conjugate() * w)))


def frak_h(thetas, kappa: float, w: complex) -> float:
    """Boundary harmonic function -(1/sqrt(kappa)) sum arg Moebius factors.

    Each term is arg((e^{i theta_j} - w)/(1 - conj(w) e^{i theta_j})) with
    the principal branch in [-pi, pi); the ratio is unimodular for w in the
    disc, and its branch cut can be kept outside the disc, so the sum is a
    single-valued harmonic function there.
    """
    w = complex(w)
    if abs(w) >= 1:
        raise ValueError("w must lie in the open disc")
    total = 0.0
    for theta in np.atleast_1d(np.asarray(thetas, dtype=float)):
        e = np.exp(1j * theta)
        if abs(e - w) < 1e-12:
            raise ValueError("w coincides with a marked boundary point")
        a = np.angle((e - w) / (1 - np.conj(w) * e))
        # principal branch [-pi, pi)
        a = (a + math.pi) % TWO_PI - math.pi
        total += a
    return -total / math.sqrt(kappa)


# ---------------------------------------------------------------------------
# Goodness of fit


@dataclass
class GofResult:
    statistic: float
    critical_value: float
    passed: bool
    n_samples: int
    mode: str


def ks_critical_value(n: int, m: int | None = None, alpha: float = 0.01) -> float:
    """Asymptotic Kolmogorov-Smirnov critical value at level alpha."""
    c = math.sqrt(-0.5 * math.log(alpha / 2))
    if m is None:
        return c / math.sqrt(n)
    return c * math.sqrt((n + m) / (n * m))


def hitting_gof_test(angle_samples, n: int, reference: str = "COE", rng=None,
                     reference_size: int = 20_000, alpha: float = 0.01) -> GofResult:
    """KS test of hitting-angle gap statistics against the COE gap law.

    ``angle_samples`` is an array of angle tuples (one row per conditioned
    draw).  Rotation invariance is used by reducing to gaps: for n = 2 the
    ccw gap from the first to the second angle, tested one-sample against
    the quadrature CDF; for n >= 3 all circular gaps pooled, tested
    two-sample against gaps of a COE reference ensemble.
    """
    if reference != "COE":
        raise ValueError("only the COE reference is implemented")
    samples = np.asarray(angle_samples, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != n:
        raise ValueError("angle_samples must be (draws, n)")
    if samples.shape[0] < 500:
        raise ValueError("need at least 500 samples")
    if n == 2:
        gaps = np.mod(samples[:, 1] - samples[:, 0], TWO_PI)
        stat = _ks_one_sample(gaps, coe_pair_gap_cdf)
        crit = ks_critical_value(len(gaps), alpha=alpha)
        mode = "one-sample vs quadrature CDF"
    else:
        rng = rng or np.random.Generator(np.random.PCG64(7))
        draws = max(500, reference_size // n)
        ref = np.concatenate([coe_gaps(coe_sample(n, rng)) for _ in range(draws)])
        obs = np.concatenate([coe_gaps(row) for row in samples])
        stat = float(stats.ks_2samp(obs, ref).statistic)
        # gaps within a tuple are exchangeable but dependent: count tuples
        crit = ks_critical_value(samples.shape[0], draws, alpha=alpha)
        mode = "two-sample vs COE ensemble"
    return GofResult(stat, crit, stat < crit, samples.shape[0], mode)


def _ks_one_sample(values, cdf) -> float:
    x = np.sort(np.asarray(values, dtype=float))
    c = cdf(x)
    n = len(x)
    up = np.arange(1, n + 1) / n - c
    dn = c - np.arange(0, n) / n
    return float(max(up.max(), dn.max()))
