"""Exact complex-gauged harmonic analysis on annular lattices.

The walk transition matrix Q acts on the non-absorbed vertices (everything
off the outer boundary) with entries phase(u->w)/deg(u), where the phase is
exp(i * beta * crossing_sign) of the zipper.  On top of the linear solves
this module builds the three exact quantities the winding identities need:

* gauged hitting kernels h_beta(., v) and their determinants,
* determinant ratios det(I - Q_b2)/det(I - Q_b1), which by the rooted-loop
  expansion of -log det(I - Q) equal exp of the difference in gauged loop
  masses (only noncontractible loops contribute, since contractible loops
  carry the same weight at every gauge angle),
* the ungauged Green's function.

The parity dispatch in ``winding_cf_exact`` combines them into the exact
conditional characteristic function of the total branch winding.
"""

from __future__ import annotations

import cmath
import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .lattice import AnnularLattice, Zipper
from .wilson import _check_marked, _is_ccw

DEFAULT_TOL = 1e-10


class SolverError(RuntimeError):
    """Raised when a linear solve misses the configured residual."""


def _real_gauge(beta: float) -> bool:
    """Phases are real exactly when beta is a multiple of pi."""
    return abs(math.remainder(beta, math.pi)) < 1e-14


def transition_matrix(lattice: AnnularLattice, zipper: Zipper, beta: float):
    """Q over free vertices, plus the boundary coupling B into outer vertices.

    Returns (Q, B, free, free_index): Q is (nf, nf), B is (nf, n_outer) with
    columns indexed by position in ``lattice.outer_boundary``.
    """
    free = lattice.free_vertices
    nf = len(free)
    free_index = np.full(lattice.n_vertices, -1, dtype=np.int64)
    free_index[free] = np.arange(nf)
    outer = lattice.outer_boundary
    outer_index = np.full(lattice.n_vertices, -1, dtype=np.int64)
    outer_index[outer] = np.arange(len(outer))

    real = _real_gauge(beta)
    dtype = np.float64 if real else np.complex128
    qi, qj, qv = [], [], []
    bi, bj, bv = [], [], []
    for u in free:
        fu = free_index[u]
        inv_deg = 1.0 / lattice.deg[u]
        for d in range(4):
            w = lattice.nbr[u, d]
            if w < 0:
                continue
            s = zipper.sign_table[u, d]
            if real:
                amp = inv_deg * ((-1.0) ** (s * round(beta / math.pi)) if s else 1.0)
            else:
                amp = inv_deg * cmath.exp(1j * beta * s)
            if lattice.is_outer[w]:
                bi.append(fu)
                bj.append(outer_index[w])
                bv.append(amp)
            else:
                qi.append(fu)
                qj.append(free_index[w])
                qv.append(amp)
    Q = sp.csc_matrix((np.array(qv, dtype=dtype), (qi, qj)), shape=(nf, nf))
    B = sp.csc_matrix((np.array(bv, dtype=dtype), (bi, bj)), shape=(nf, len(outer)))
    return Q, B, free, free_index


def _solve_system(lattice, zipper, beta, targets, tol=DEFAULT_TOL):
    """Solve the gauged harmonicity system for each target outer vertex.

    Returns an (n_vertices, len(targets)) array of kernel values with the
    boundary data filled in.
    """
    Q, B, free, free_index = transition_matrix(lattice, zipper, beta)
    outer = lattice.outer_boundary
    outer_pos = {int(v): k for k, v in enumerate(outer)}
    A = (sp.identity(Q.shape[0], dtype=Q.dtype, format="csc") - Q).tocsc()
    lu = spla.splu(A)
    out = np.zeros((lattice.n_vertices, len(targets)), dtype=np.complex128)
    for c, v in enumerate(targets):
        k = outer_pos.get(int(v))
        if k is None:
            raise ValueError(f"target {v} is not an outer-boundary vertex")
        b = np.asarray(B[:, k].todense()).ravel()
        h = lu.solve(b)
        resid = np.max(np.abs(A @ h - b))
        if resid > tol:
            raise SolverError(f"solver residual {resid:.3e} above {tol:.1e}")
        out[free, c] = h
        out[v, c] = 1.0
    return out


def hitting_kernel(
    lattice: AnnularLattice,
    zipper: Zipper,
    beta: float,
    target: int,
    tol: float = DEFAULT_TOL,
) -> np.ndarray:
    """Gauged hitting kernel h_beta(., target) as a value per vertex.

    Solves h(u) = (1/deg u) sum_w phase(u->w) h(w) off the outer boundary,
    with boundary data 1 at the target and 0 at the other outer vertices.
    At beta = 0 this is the plain harmonic measure of the target.
    """
    return _solve_system(lattice, zipper, beta, [target], tol)[:, 0]


def fomin_determinant(
    lattice: AnnularLattice,
    zipper: Zipper,
    beta: float,
    xs,
    vs,
    tol: float = DEFAULT_TOL,
) -> complex:
    """det(h_beta(x_i, v_j)) over marked inner starts and outer targets."""
    xs = _check_marked(lattice, xs)
    vs = _check_targets(lattice, vs)
    if len(xs) != len(vs):
        raise ValueError("need equally many starts and targets")
    cols = _solve_system(lattice, zipper, beta, vs, tol)
    M = cols[xs, :]
    return complex(np.linalg.det(M))


def _check_targets(lattice, vs):
    vs = np.asarray(vs, dtype=np.int64)
    if len(set(vs.tolist())) != len(vs):
        raise ValueError("target vertices must be distinct")
    if not lattice.is_outer[vs].all():
        raise ValueError("targets must lie on the outer boundary")
    if len(vs) > 1 and not _is_ccw(lattice.angles(vs)):
        raise ValueError("targets must be in counterclockwise order")
    return vs


# ---------------------------------------------------------------------------
# Determinants of I - Q and loop-mass ratios


def _permutation_parity(perm) -> int:
    """+1/-1 parity of a permutation given as an index array."""
    perm = np.asarray(perm)
    seen = np.zeros(len(perm), dtype=bool)
    parity = 1
    for i in range(len(perm)):
        if seen[i]:
            continue
        j = i
        clen = 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            clen += 1
        if clen % 2 == 0:
            parity = -parity
    return parity


def _logdet_i_minus_q(lattice, zipper, beta):
    """(log |det(I-Q_beta)|, arg det(I-Q_beta)) from a sparse LU factorization."""
    Q, _, _, _ = transition_matrix(lattice, zipper, beta)
    A = (sp.identity(Q.shape[0], dtype=Q.dtype, format="csc") - Q).tocsc()
    lu = spla.splu(A, permc_spec="COLAMD")
    diag = lu.U.diagonal()
    if np.any(diag == 0):
        raise SolverError("singular I - Q; lattice is broken")
    logmag = float(np.sum(np.log(np.abs(diag))))
    arg = float(np.sum(np.angle(diag)))
    sign = _permutation_parity(lu.perm_r) * _permutation_parity(lu.perm_c)
    if sign < 0:
        arg += math.pi
    return logmag, arg


def loop_mass_ratio(
    lattice: AnnularLattice, zipper: Zipper, beta1: float, beta2: float
) -> complex:
    """det(I - Q_beta2) / det(I - Q_beta1).

    By the rooted-loop expansion this equals exp of the gauged loop-mass
    difference between the two angles, and only loops winding around the
    hole contribute to it.  Computed in log-magnitude + argument form so
    nothing overflows and no logarithm branch is ever chosen.
    """
    m2, a2 = _logdet_i_minus_q(lattice, zipper, beta2)
    m1, a1 = _logdet_i_minus_q(lattice, zipper, beta1)
    return cmath.exp(complex(m2 - m1, a2 - a1))


def log_loop_mass_difference(
    lattice: AnnularLattice, zipper: Zipper, beta1: float, beta2: float
) -> float:
    """Real part of the gauged loop-mass difference between beta1 and beta2.

    For beta1 = 0, beta2 = pi both determinants are real positive and this
    is exactly twice the mass of odd-winding loops.
    """
    m2, _ = _logdet_i_minus_q(lattice, zipper, beta2)
    m1, _ = _logdet_i_minus_q(lattice, zipper, beta1)
    return m2 - m1


# ---------------------------------------------------------------------------
# The exact winding characteristic function


def winding_cf_exact(
    lattice: AnnularLattice,
    zipper: Zipper,
    beta: float,
    xs,
    vs,
    tol: float = DEFAULT_TOL,
) -> complex:
    """Exact E[exp(i beta sum_j K(gamma_j))] on the prescribed-exits event.

    Parity dispatch: for an odd number of branches the event probability is
    a single determinant and the characteristic function is
    ratio(0 -> beta) * det(h_beta)/det(h_0); for an even number the shifted
    gauge pi enters and the formula becomes
    ratio(pi -> beta+pi) * det(h_{beta+pi})/det(h_pi).
    ``beta`` is the per-crossing angle (one full counterclockwise turn
    contributes exp(i*beta) once, i.e. total-winding parameter beta/(2*pi)).
    """
    xs = np.asarray(xs, dtype=np.int64)
    n = len(xs)
    if n % 2 == 1:
        ratio = loop_mass_ratio(lattice, zipper, 0.0, beta)
        d1 = fomin_determinant(lattice, zipper, beta, xs, vs, tol)
        d0 = fomin_determinant(lattice, zipper, 0.0, xs, vs, tol)
        return ratio * d1 / d0
    ratio = loop_mass_ratio(lattice, zipper, math.pi, beta + math.pi)
    d1 = fomin_determinant(lattice, zipper, beta + math.pi, xs, vs, tol)
    d0 = fomin_determinant(lattice, zipper, math.pi, xs, vs, tol)
    return ratio * d1 / d0


def event_probability_exact(
    lattice: AnnularLattice,
    zipper: Zipper,
    xs,
    vs,
    tol: float = DEFAULT_TOL,
) -> float:
    """Exact probability of the prescribed-exits disjointness event.

    Odd branch count: det(h_0), whose sign is immune to cyclic relabelling.
    Even: ratio(0 -> pi) * |det(h_pi)|.  The even determinant flips sign
    under a cyclic rotation of either marked tuple; it is positive when both
    tuples are labelled counterclockwise starting just after the cut, and
    taking the modulus realizes that canonical alignment for any rotation.
    """
    xs = np.asarray(xs, dtype=np.int64)
    if len(xs) % 2 == 1:
        p = fomin_determinant(lattice, zipper, 0.0, xs, vs, tol)
    else:
        d = fomin_determinant(lattice, zipper, math.pi, xs, vs, tol)
        p = loop_mass_ratio(lattice, zipper, 0.0, math.pi) * abs(d)
    if abs(p.imag) > 1e-9 * max(1.0, abs(p.real)):
        raise SolverError(f"event probability came out non-real: {p}")
    return float(p.real)


# ---------------------------------------------------------------------------
# Green's function


def green_nd(lattice: AnnularLattice, z: int, w: int, tol: float = DEFAULT_TOL) -> float:
    """Expected visits to w by the walk from z before outer absorption."""
    if lattice.is_outer[z] or lattice.is_outer[w]:
        raise ValueError("Green's function arguments must be off the outer boundary")
    zipper_free = _zero_zipper(lattice)
    Q, _, free, free_index = transition_matrix(lattice, zipper_free, 0.0)
    A = (sp.identity(Q.shape[0], dtype=Q.dtype, format="csc") - Q).tocsc()
    e = np.zeros(Q.shape[0])
    e[free_index[w]] = 1.0
    g = spla.splu(A).solve(e)
    resid = np.max(np.abs(A @ g - e))
    if resid > tol:
        raise SolverError(f"solver residual {resid:.3e} above {tol:.1e}")
    return float(g[free_index[z]])


class _ZeroZipper:
    """Stand-in zipper with no crossings, for ungauged computations."""

    def __init__(self, n):
        self.sign_table = np.zeros((n, 4), dtype=np.int8)


def _zero_zipper(lattice):
    return _ZeroZipper(lattice.n_vertices)
