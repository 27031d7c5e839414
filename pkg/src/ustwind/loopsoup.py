"""Random-walk loop soup with a reflecting hole and absorbing outer boundary.

The soup is a Poisson process over rooted loops: the cell (z, m) of loops of
length m rooted at z carries intensity (Q^m)_zz / m, with Q the ungauged
walk matrix on non-absorbed vertices.  Sampling truncates the length at a
point where a certified geometric tail bound (from a submultiplicative norm
estimate on the cached powers) drops below a configured epsilon, then draws
Poisson counts per cell and fills each loop in as a walk bridge.

Loop windings are zipper crossing sums; their exponential moments are what
the determinant ratios of :mod:`ustwind.harmonic` predict, which is the
cross-check the acceptance suite runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .harmonic import transition_matrix
from .lattice import AnnularLattice, Zipper
from .seeds import kernel_seed

MAX_SOUP_FREE_VERTICES = 400


class TruncationError(RuntimeError):
    """Raised when the requested truncation cannot certify its tail."""


@dataclass
class RootedLoop:
    """Closed walk (first vertex == last) avoiding the outer boundary."""

    vertices: np.ndarray
    winding: int
    mesh: float

    @property
    def length(self) -> int:
        return len(self.vertices) - 1

    @property
    def lifetime(self) -> float:
        return 0.5 * self.mesh**2 * self.length


@dataclass
class LoopSoup:
    loops: list
    truncation_length: int
    tail_bound: float

    @property
    def total_winding(self) -> int:
        return sum(l.winding for l in self.loops)

    def winding_counts(self) -> dict:
        out = {}
        for l in self.loops:
            out[l.winding] = out.get(l.winding, 0) + 1
        return out


@dataclass
class ReturnWeights:
    """(Q^m)_zz table with its certified truncation tail."""

    free: np.ndarray
    weights: np.ndarray  # (n_free, max_len + 1); column m holds (Q^m)_zz
    tail_bound: float

    def __getitem__(self, key):
        v, m = key
        pos = np.searchsorted(self.free, v)
        if pos >= len(self.free) or self.free[pos] != v:
            raise KeyError(f"vertex {v} is absorbed or unknown")
        return float(self.weights[pos, m])


class LoopSoupSampler:
    """Cached-power sampler for the truncated loop soup on one lattice."""

    def __init__(self, lattice: AnnularLattice, zipper: Zipper, max_len: int | None = None,
                 tail_eps: float = 1e-6):
        nf = len(lattice.free_vertices)
        if nf > MAX_SOUP_FREE_VERTICES:
            raise TruncationError(
                f"soup sampling caches dense matrix powers; {nf} free vertices "
                f"exceeds the {MAX_SOUP_FREE_VERTICES} cap"
            )
        self.lattice = lattice
        self.zipper = zipper
        Q, _, free, free_index = transition_matrix(lattice, zipper, 0.0)
        self.q = np.asarray(Q.todense(), dtype=np.float64)
        self.free = free
        self.free_index = free_index
        powers = [np.eye(nf), self.q.copy()]
        target = max_len if max_len is not None else 10_000
        tail = math.inf
        m = 1
        while m < target:
            powers.append(powers[-1] @ self.q)
            m += 1
            if max_len is None and m >= 16 and m % 8 == 0:
                tail = self._tail_bound(powers, m)
                if tail < tail_eps:
                    break
        self.powers = np.ascontiguousarray(np.stack(powers))
        self.max_len = m
        self.tail_bound = self._tail_bound(powers, m)
        if self.tail_bound > tail_eps:
            raise TruncationError(
                f"tail bound {self.tail_bound:.2e} above eps={tail_eps:.1e} "
                f"at truncation {m}; raise max_len"
            )
        lengths = np.arange(self.max_len + 1)
        diag = self.powers.diagonal(axis1=1, axis2=2)  # (max_len+1, nf)
        with np.errstate(divide="ignore"):
            cell = diag / np.where(lengths > 0, lengths, 1)[:, None]
        cell[:2] = 0.0  # no loops of length 0 or 1
        self.cell_intensity = cell  # (max_len+1, nf)
        self.total_intensity = float(cell.sum())

    def _tail_bound(self, powers, m):
        """sum_{k>m} tr(Q^k)/k <= N/(m+1) * sum_{k>m} ||Q^m||^floor(k/m)."""
        alpha = float(np.abs(powers[m]).sum(axis=1).max())
        if alpha >= 1.0:
            return math.inf
        n = powers[0].shape[0]
        return n / (m + 1) * m * alpha / (1.0 - alpha)

    def return_weights(self) -> ReturnWeights:
        return ReturnWeights(
            free=self.free,
            weights=self.powers.diagonal(axis1=1, axis2=2).T.copy(),
            tail_bound=self.tail_bound,
        )

    # -- sampling -----------------------------------------------------

    def _draw_cells(self, rng, n_soups):
        counts = rng.poisson(self.total_intensity, size=n_soups)
        total = int(counts.sum())
        probs = self.cell_intensity.ravel() / self.cell_intensity.sum()
        flat_cells = rng.choice(len(probs), size=total, p=probs)
        lengths = flat_cells // self.cell_intensity.shape[1]
        roots = self.free[flat_cells % self.cell_intensity.shape[1]]
        return counts, roots.astype(np.int64), lengths.astype(np.int64)

    def sample_batch(self, n_soups: int, rng, keep_loops: bool = False):
        """Draw n_soups independent soups.

        Returns (windings_by_soup, counts, soups) where windings_by_soup is a
        list of integer arrays (one entry per loop) and soups is a list of
        LoopSoup objects when keep_loops else None.
        """
        counts, roots, lengths = self._draw_cells(rng, n_soups)
        wind, flat, offsets = _kernels.sample_soup_loops(
            self.lattice.nbr,
            self.lattice.deg,
            self.q,
            self.powers,
            self.free_index,
            roots,
            lengths,
            self.zipper.sign_table,
            kernel_seed(rng),
        )
        bounds = np.concatenate([[0], np.cumsum(counts)])
        windings = [wind[bounds[s] : bounds[s + 1]] for s in range(n_soups)]
        soups = None
        if keep_loops:
            soups = []
            for s in range(n_soups):
                loops = [
                    RootedLoop(
                        vertices=flat[offsets[i] : offsets[i + 1]],
                        winding=int(wind[i]),
                        mesh=self.lattice.mesh,
                    )
                    for i in range(bounds[s], bounds[s + 1])
                ]
                soups.append(LoopSoup(loops, self.max_len, self.tail_bound))
        return windings, counts, soups


def diagonal_return_weights(lattice: AnnularLattice, max_len: int, zipper: Zipper | None = None) -> ReturnWeights:
    """(Q^m)_zz for every non-absorbed z and 2 <= m <= max_len."""
    if max_len < 2:
        raise ValueError("max_len must be at least 2")
    zipper = zipper or _trivial_zipper(lattice)
    sampler = LoopSoupSampler(lattice, zipper, max_len=max_len, tail_eps=math.inf)
    return sampler.return_weights()


def _trivial_zipper(lattice):
    class _Z:
        sign_table = np.zeros((lattice.n_vertices, 4), dtype=np.int8)

    return _Z()


def sample_loop_soup(lattice: AnnularLattice, rng, zipper: Zipper, max_len: int | None = None,
                     tail_eps: float = 1e-6) -> LoopSoup:
    """One truncated loop soup (see LoopSoupSampler for batch sampling)."""
    sampler = LoopSoupSampler(lattice, zipper, max_len=max_len, tail_eps=tail_eps)
    _, _, soups = sampler.sample_batch(1, rng, keep_loops=True)
    return soups[0]


def campbell_cf_mc(soups, beta: float):
    """Monte Carlo E[exp(i beta * total soup winding)] with standard errors.

    ``soups`` may be LoopSoup objects or plain arrays of per-loop windings.
    Compare against harmonic.loop_mass_ratio(beta, 0), the exact exponential
    of the gauged noncontractible loop-mass difference.
    """
    if len(soups) < 100:
        raise ValueError("need at least 100 soups")
    totals = np.array(
        [s.total_winding if isinstance(s, LoopSoup) else int(np.sum(s)) for s in soups],
        dtype=np.float64,
    )
    vals = np.exp(1j * beta * totals)
    n = len(vals)
    est = vals.mean()
    se = (vals.real.std(ddof=1) / math.sqrt(n), vals.imag.std(ddof=1) / math.sqrt(n))
    return complex(est), se
