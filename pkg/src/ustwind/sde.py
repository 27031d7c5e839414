"""Stochastic process engine: circular Dyson dynamics, radial Loewner flow,
force-point drivers, winding experiments, and the flow-line martingale check.

All integrators are Euler-Maruyama with gap-adaptive substepping: the local
step never exceeds (min gap)^2 / (8 b) so the cotangent repulsion cannot
overshoot, and is further capped at (min gap)^2 / (64 kappa) so a single
noise increment cannot swap neighbouring angles.  Ensembles are vectorized
over paths; every sampler takes an explicit numpy Generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .continuum import coe_sample, disc_green

TWO_PI = 2 * math.pi
GAP_FLOOR = 1e-9


class IntegratorError(RuntimeError):
    """Raised when a gap collapses or an angle lift jumps; a failed run."""


# ---------------------------------------------------------------------------
# Circular Dyson dynamics


@dataclass
class DysonPath:
    """One trajectory of n circle angles on a uniform time grid (lifted)."""

    times: np.ndarray
    thetas: np.ndarray  # (len(times), n)
    kappa: float
    drift_coefficient: float

    def check_order(self):
        d = np.diff(self.thetas, axis=1)
        if self.thetas.shape[1] > 1 and (
            (d <= 0).any() or ((self.thetas[:, -1] - self.thetas[:, 0]) >= TWO_PI).any()
        ):
            raise IntegratorError("counterclockwise order lost along the path")


def _lift_ccw(thetas0) -> np.ndarray:
    """Continuous representative theta_1 < ... < theta_n < theta_1 + 2 pi."""
    t = np.mod(np.asarray(thetas0, dtype=float), TWO_PI)
    out = t.copy()
    for i in range(1, len(t)):
        while out[i] <= out[i - 1]:
            out[i] += TWO_PI
    if len(t) > 1 and out[-1] - out[0] >= TWO_PI:
        raise ValueError("initial angles are not strictly counterclockwise")
    return out


_NOISE_BLOCK = 6_000_000  # pregenerated normals per kernel call


def _run_dbm(theta, kappa, b, t_end, dt, rng, record=None):
    """Drive the block kernel over the whole horizon; theta updated in place."""
    P, n = theta.shape
    steps = int(round(t_end / dt))
    block = max(1, _NOISE_BLOCK // max(P * n, 1))
    done = 0
    rec = record if record is not None else np.empty((0, n))
    while done < steps:
        nb = min(block, steps - done)
        noise = rng.standard_normal((P, nb, n))
        seeds = rng.integers(0, 2**32 - 1, size=P).astype(np.uint32)
        status = _kernels.dbm_block(theta, kappa, b, dt, noise, seeds, rec, done)
        if status == 1:
            raise IntegratorError("gap collapsed below 1e-9")
        if status == 2:
            raise IntegratorError("angles crossed; decrease dt")
        done += nb
    return theta


def simulate_dbm(n, kappa, b, thetas0, t_end, dt, rng) -> DysonPath:
    """Circle angles with sqrt(kappa) noise and cotangent repulsion b.

    b = 2 is the driver of n simultaneously grown radial SLE curves; the
    diffusion with coefficient b leaves the circular ensemble with chord
    exponent 4 b / kappa invariant.
    """
    _check_dt(dt)
    theta = _lift_ccw(thetas0)[None, :].copy()
    if theta.shape[1] != n:
        raise ValueError("thetas0 length must be n")
    steps = int(round(t_end / dt))
    times = np.linspace(0.0, steps * dt, steps + 1)
    record = np.empty((steps + 1, n))
    record[0] = theta[0]
    _run_dbm(theta, kappa, b, t_end, dt, rng, record)
    path = DysonPath(times, record, kappa, b)
    path.check_order()
    return path


def dbm_ensemble(theta0s, kappa, b, t_end, dt, rng) -> np.ndarray:
    """Terminal angles of many independent paths; theta0s is (paths, n)."""
    _check_dt(dt)
    theta = np.array([_lift_ccw(row) for row in np.asarray(theta0s, dtype=float)])
    return _run_dbm(theta, kappa, b, t_end, dt, rng)


def _check_dt(dt):
    if dt > 1e-3:
        raise ValueError("dt must be at most 1e-3")


def dbm_with_coe_start(n, kappa, t_end, dt, rng, b: float = 2.0) -> DysonPath:
    """Dyson path started from a circular-orthogonal-ensemble draw."""
    theta0 = coe_sample(n, rng)
    return simulate_dbm(n, kappa, b, theta0, t_end, dt, rng)


# ---------------------------------------------------------------------------
# SLE_kappa(rho) driver


@dataclass
class SleRhoPath:
    times: np.ndarray
    theta: np.ndarray  # (len(times),)
    forces: np.ndarray  # (len(times), p)
    rhos: np.ndarray
    kappa: float


def _rho_advance(th, V, rhos, kappa, dt, rng, collision_tol):
    P = th.shape[0]
    rem = np.full(P, dt)
    while True:
        gap = np.abs(np.mod(V - th[:, None] + math.pi, TWO_PI) - math.pi)
        gmin = gap.min(axis=1) if V.shape[1] else np.full(P, np.inf)
        if (gmin < collision_tol).any():
            raise IntegratorError("force point collided with the driver")
        bmax = max(float(np.max(np.abs(rhos))) / 2.0, 1e-12) if len(rhos) else 0.0
        hmax = np.minimum(
            gmin**2 / (8 * bmax) if bmax > 0 else np.inf,
            gmin**2 / (64 * max(kappa, 1e-12)) if kappa > 0 else np.inf,
        )
        h = np.minimum(rem, np.maximum(hmax, 1e-12))
        h[rem <= 0] = 0.0
        if V.shape[1]:
            cot = np.cos((V - th[:, None]) / 2) / np.sin((V - th[:, None]) / 2)
            dth = -(rhos[None, :] / 2 * cot).sum(axis=1)
            dV = cot
        else:
            dth = np.zeros(P)
            dV = V
        noise = math.sqrt(kappa) * rng.standard_normal(P) if kappa > 0 else 0.0
        th = th + dth * h + np.sqrt(h) * noise
        if V.shape[1]:
            V = V + dV * h[:, None]
        rem = rem - h
        if not (rem > 0).any():
            return th, V


def sle_rho_driver(
    kappa, rhos, theta0, force_args, t_end, dt, rng, collision_tol: float = 1e-9
) -> SleRhoPath:
    """Driver repelled by boundary force points with weights rhos.

    dTheta = sqrt(kappa) dW - sum (rho_j/2) cot((V_j - Theta)/2) dt and
    dV_j = cot((V_j - Theta)/2) dt; with kappa = 0 this is a deterministic
    ODE.  Force points must start away from the driver.
    """
    _check_dt(dt)
    rhos = np.atleast_1d(np.asarray(rhos, dtype=float))
    force_args = np.atleast_1d(np.asarray(force_args, dtype=float))
    if len(rhos) != len(force_args):
        raise ValueError("need one weight per force point")
    if len(force_args) and np.any(
        np.abs(np.mod(force_args - theta0 + math.pi, TWO_PI) - math.pi) < 1e-9
    ):
        raise ValueError("force points must be distinct from the driver")
    steps = int(round(t_end / dt))
    times = np.linspace(0.0, steps * dt, steps + 1)
    th = np.array([float(theta0)])
    # lift forces continuously above theta0 so driver-force gaps are tracked
    V = np.array([[theta0 + np.mod(v - theta0, TWO_PI) for v in force_args]])
    out_th = np.empty(steps + 1)
    out_V = np.empty((steps + 1, len(force_args)))
    out_th[0], out_V[0] = th[0], V[0]
    for k in range(steps):
        th, V = _rho_advance(th, V, rhos, kappa, dt, rng, collision_tol)
        out_th[k + 1], out_V[k + 1] = th[0], V[0]
    return SleRhoPath(times, out_th, out_V, rhos, kappa)


# ---------------------------------------------------------------------------
# Radial Loewner flow


@dataclass
class FlowResult:
    times: np.ndarray
    values: np.ndarray  # (len(times), n_points) complex
    swallow_times: np.ndarray  # inf where never swallowed
    log_deriv: np.ndarray  # (len(times), n_points) complex log g_t'(z)


def _loewner_field(z, drivers):
    """sum_j (e_j + z)/(e_j - z) and its z-derivative summed; drivers (k,)."""
    S = np.zeros_like(z)
    dS = np.zeros_like(z)
    for e in drivers:
        d = e - z
        S += (e + z) / d
        dS += 2 * e / (d * d)
    return S, dS


def loewner_flow(times, drivers, query_points, swallow_eps: float = 1e-3) -> FlowResult:
    """Integrate the radial Loewner ODE for each query point.

    ``drivers`` is (len(times), k) of driving angles; the flow is
    dz/dt = z sum_j (e^{i Theta_j} + z)/(e^{i Theta_j} - z), integrated with
    a midpoint rule and substeps tied to the distance from the driving
    singularities.  Points closer than swallow_eps to a driver are frozen
    and their swallow time recorded.
    """
    times = np.asarray(times, dtype=float)
    drivers = np.atleast_2d(np.asarray(drivers, dtype=float))
    if drivers.shape[0] != len(times):
        drivers = drivers.T
    z = np.asarray(query_points, dtype=complex).ravel().copy()
    if np.any(np.abs(z) > 1 + 1e-12):
        raise ValueError("query points must lie in the closed disc")
    nq = len(z)
    values = np.empty((len(times), nq), dtype=complex)
    logd = np.zeros((len(times), nq), dtype=complex)
    swallow = np.full(nq, np.inf)
    values[0] = z
    cur_logd = np.zeros(nq, dtype=complex)
    for k in range(len(times) - 1):
        dt_k = times[k + 1] - times[k]
        e = np.exp(1j * drivers[k])
        alive = np.isinf(swallow)
        rem = np.where(alive, dt_k, 0.0)
        while (rem > 0).any():
            dist = np.min(np.abs(e[None, :] - z[:, None]), axis=1)
            newly = (dist < swallow_eps) & (rem > 0)
            if newly.any():
                swallow[newly] = times[k + 1] - rem[newly]
                rem[newly] = 0.0
            h = np.minimum(rem, np.maximum(dist**2 / 8.0, 1e-9))
            h[rem <= 0] = 0.0
            S, dS = _loewner_field(z, e)
            zm = z + 0.5 * h * z * S
            Sm, dSm = _loewner_field(zm, e)
            z = z + h * zm * Sm
            cur_logd = cur_logd + h * (Sm + zm * dSm)
            rem = rem - h
        values[k + 1] = z
        logd[k + 1] = cur_logd
    return FlowResult(times, values, swallow, logd)


def trace_points(times, drivers, eps_trace: float = 1e-3, stride: int = 1):
    """Approximate curve traces by backward flows of near-driver points.

    For each retained grid time s, the tip of curve j is estimated by
    flowing e^{i Theta_j(s)} (1 - eps_trace) through the time-reversed
    Loewner field from s back to 0.  Cost is quadratic in the number of
    retained times; use ``stride`` to thin the grid.
    """
    times = np.asarray(times, dtype=float)
    drivers = np.atleast_2d(np.asarray(drivers, dtype=float))
    if drivers.shape[0] != len(times):
        drivers = drivers.T
    n_curves = drivers.shape[1]
    keep = range(0, len(times), stride)
    traces = [[] for _ in range(n_curves)]
    for s in keep:
        e_s = np.exp(1j * drivers[s])
        z = (1 - eps_trace) * e_s
        for k in range(s - 1, -1, -1):
            h_full = times[k + 1] - times[k]
            e = np.exp(1j * drivers[k])
            rem = h_full
            while rem > 0:
                dist = np.min(np.abs(e[None, :] - z[:, None]), axis=1)
                h = min(rem, max(float(dist.min() ** 2) / 8.0, 1e-9))
                S, _ = _loewner_field(z, e)
                zm = z - 0.5 * h * z * S
                Sm, _ = _loewner_field(zm, e)
                z = z - h * zm * Sm
                rem -= h
        for j in range(n_curves):
            traces[j].append(complex(z[j]))
    return [np.array(t) for t in traces]


# ---------------------------------------------------------------------------
# Winding experiments


def sle_winding_experiment(n, kappa, t_end, paths, rng, dt: float = 1e-3):
    """Normalized driver increments of simultaneously grown radial curves.

    Starts from circular-orthogonal-ensemble angles, evolves the b = 2
    Dyson dynamics to t_end, and returns the per-curve winding proxies
    (Theta_j(t) - Theta_j(0)) / sqrt(kappa t / n) together with their
    empirical covariance matrix; as t grows the vector concentrates on the
    diagonal, all entries approaching one standard normal variable.
    """
    if t_end < 20:
        raise ValueError("winding experiment needs t_end >= 20")
    theta0 = np.array([coe_sample(n, rng) for _ in range(paths)])
    theta1 = dbm_ensemble(theta0, kappa, 2.0, t_end, dt, rng)
    norm = (theta1 - theta0) / math.sqrt(kappa * t_end / n)
    cov = np.cov(norm.T) if n > 1 else np.array([[np.var(norm[:, 0], ddof=1)]])
    return norm, np.atleast_2d(cov)


# ---------------------------------------------------------------------------
# Flow-line martingale check


@dataclass
class MartingaleCheck:
    mean_drift: float
    se_drift: float
    qv_empirical: float
    qv_target: float
    qv_rel_mismatch: float
    stopped_fraction: float
    paths: int


def _lifted_h_part(th_angles, gz, kappa):
    """Boundary harmonic sum with continuous-in-time lifts.

    Each Moebius factor satisfies arg((e^{i a} - w)/(1 - conj(w) e^{i a}))
    = a + 2 arg(1 - w e^{-i a}) up to 2 pi; the second term has positive
    real part inside, so feeding lifted angles a keeps the sum continuous.
    """
    inner = np.angle(1.0 - gz[:, None] * np.exp(-1j * th_angles))
    return -(th_angles.sum(axis=1) + 2.0 * inner.sum(axis=1)) / math.sqrt(kappa)


def gff_martingale_check(
    kappa,
    n,
    z,
    w,
    t_end,
    dt,
    paths,
    rng,
    theta0s=None,
    cutoff: float = 0.05,
) -> MartingaleCheck:
    """Drift and Hadamard quadratic-variation test of the flow-line field.

    Grows one radial SLE_kappa(2, ..., 2) curve with n - 1 force points and
    tracks, for interior points z and w,
    H(t) = (chi + n/sqrt(kappa)) arg g_t(z) + h-part(g_t(z)) - chi arg g_t'(z)
    with all angle lifts continuous in t.  Under the coupling H is a
    martingale, and the cross variation of the h-parts at z and w equals
    G_D(z, w) - G_D(g_t(z), g_t(w)).  Paths are frozen at the first time a
    tracked point or force gap comes within ``cutoff`` of the driver, a
    legitimate stopping time for both identities.
    Returns means, standard errors, and the relative mismatch of the
    quadratic-variation identity.
    """
    z = complex(z)
    w = complex(w)
    if abs(z - w) < 0.1:
        raise ValueError("z and w must be at least 0.1 apart")
    if max(abs(z), abs(w)) > 0.9:
        raise ValueError("z and w must stay away from the boundary")
    if dt > 1e-3:
        raise ValueError("dt must be at most 1e-3")
    chi = 2 / math.sqrt(kappa) - math.sqrt(kappa) / 2
    if theta0s is None:
        theta0s = np.arange(n) * TWO_PI / n
    theta0s = _lift_ccw(theta0s)

    P = paths
    th = np.full(P, theta0s[0])
    V = np.tile(theta0s[1:], (P, 1))
    gz = np.full(P, z, dtype=complex)
    gw = np.full(P, w, dtype=complex)
    log_gpz = np.zeros(P, dtype=complex)
    arg_gz = np.full(P, np.angle(z))
    alive = np.ones(P, dtype=bool)

    angles = np.concatenate([th[:, None], V], axis=1)
    A_z = _lifted_h_part(angles, gz, kappa)
    A_w = _lifted_h_part(angles, gw, kappa)
    H = (chi + n / math.sqrt(kappa)) * arg_gz + A_z - chi * log_gpz.imag
    H0 = H.copy()
    qv = np.zeros(P)

    steps = int(round(t_end / dt))
    rhos = np.full(n - 1, 2.0)
    for _ in range(steps):
        e = np.exp(1j * th)
        dist = np.minimum(np.abs(e - gz), np.abs(e - gw))
        if n > 1:
            gapV = np.abs(np.mod(V - th[:, None] + math.pi, TWO_PI) - math.pi).min(axis=1)
            dist = np.minimum(dist, gapV)
        alive &= dist > cutoff
        if not alive.any():
            break
        h = np.where(alive, dt, 0.0)
        # driver and force points (Euler-Maruyama)
        if n > 1:
            cot = np.cos((V - th[:, None]) / 2) / np.sin((V - th[:, None]) / 2)
            dth = -(rhos[None, :] / 2 * cot).sum(axis=1)
        else:
            cot = None
            dth = np.zeros(P)
        th_new = th + dth * h + np.sqrt(kappa * h) * rng.standard_normal(P)
        V_new = V + cot * h[:, None] if n > 1 else V
        # flowed points and derivative (midpoint rule, frozen driver)
        gz_new, dlog = _flow_step(gz, e, h)
        gw_new, _ = _flow_step(gw, e, h)
        arg_gz_new = arg_gz + np.angle(gz_new / np.where(gz_new == 0, 1, gz))
        log_gpz_new = log_gpz + dlog

        angles_new = np.concatenate([th_new[:, None], V_new], axis=1)
        Az_new = _lifted_h_part(angles_new, gz_new, kappa)
        Aw_new = _lifted_h_part(angles_new, gw_new, kappa)
        dAz = np.where(alive, Az_new - A_z, 0.0)
        dAw = np.where(alive, Aw_new - A_w, 0.0)
        if np.max(np.abs(dAz)) > math.pi / 2:
            raise IntegratorError("angle lift jumped by more than pi/2")
        qv += dAz * dAw

        upd = alive
        th = np.where(upd, th_new, th)
        V = np.where(upd[:, None], V_new, V) if n > 1 else V
        gz = np.where(upd, gz_new, gz)
        gw = np.where(upd, gw_new, gw)
        arg_gz = np.where(upd, arg_gz_new, arg_gz)
        log_gpz = np.where(upd, log_gpz_new, log_gpz)
        A_z = np.where(upd, Az_new, A_z)
        A_w = np.where(upd, Aw_new, A_w)

    H_end = (chi + n / math.sqrt(kappa)) * arg_gz + A_z - chi * log_gpz.imag
    drift = H_end - H0
    target = np.array(
        [disc_green(z, w) - disc_green(gz[i], gw[i]) for i in range(P)]
    )
    mean_drift = float(drift.mean())
    se_drift = float(drift.std(ddof=1) / math.sqrt(P))
    qv_mean = float(qv.mean())
    qv_target = float(target.mean())
    rel = abs(qv_mean - qv_target) / max(abs(qv_target), 1e-300)
    return MartingaleCheck(
        mean_drift, se_drift, qv_mean, qv_target, rel, float(1 - alive.mean()), P
    )


def _flow_step(g, e, h):
    """Midpoint update of the single-driver radial flow and its log-derivative."""
    d = e - g
    S = (e + g) / d
    gm = g + 0.5 * h * g * S
    dm = e - gm
    Sm = (e + gm) / dm
    dSm = 2 * e / (dm * dm)
    g_new = g + h * gm * Sm
    dlog = h * (Sm + gm * dSm)
    return g_new, dlog
