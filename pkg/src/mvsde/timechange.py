"""Radial decomposition, random time change and reflected comparison.

For a driftless ``d``-dimensional diffusion ``dX = sigma dW`` (``d >= 2``)
the radius ``|X|`` has diffusion row ``r = (X/|X|)^T sigma`` and the drift
term

    B = |X|^{-1} [Tr a - (a X/|X|, X/|X|)],   a = sigma sigma^T.

(The Ito drift of ``|X|`` is ``B / 2``; ``B`` itself is an upper bound for
it, which is all the comparison below needs.)

With ``tau(t) = int_0^t |r_s|^2 ds`` and ``chi = tau^{-1}`` the process
``What(s) = int_0^{chi(s)} r dW`` has quadratic variation ``s``, and
``Xhat(s) = |X_{chi(s)}|`` is dominated by the reflected process

    dZ = dWhat + C1 ds + dphi,   Z >= 1,

whenever ``C1 >= K C0`` where ``K`` bounds ``B`` on ``|x| >= 1`` and
``C0^{-1} <= |r|^2 <= C0``.
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, DomainError
from .rng import CHANNEL_ORACLE

__all__ = [
    "ORIGIN_GUARD",
    "RadialParts",
    "radial_decompose",
    "TimeChange",
    "build_time_change",
    "ReflectedPath",
    "reflect_simulate",
    "comparison_test",
    "SignReduction",
    "sign_sde_reduce",
    "sup_wiener_exp_moment",
    "sup_wiener_exp_moment_mc",
    "constant_sigma_constants",
    "ComparisonReport",
    "radial_comparison",
]

ORIGIN_GUARD = 1e-8


@dataclass(frozen=True)
class RadialParts:
    """Per-step radial drift ``B``, diffusion rows and radius (left endpoints)."""

    B: np.ndarray
    rows: np.ndarray
    radius: np.ndarray


def radial_decompose(path, sigma_along_path, eps=ORIGIN_GUARD):
    """Radial drift and diffusion row along a path.

    Parameters
    ----------
    path : array (K, ..., d) or (K+1, ..., d)
        States; the first ``K`` are used when ``sigma_along_path`` has
        ``K`` entries.
    sigma_along_path : array (K, ..., d, d1)
    eps : float
        Minimal admissible distance from the origin.

    Raises
    ------
    DomainError
        At the first step where ``|X| < eps``.
    """
    x = np.asarray(path, dtype=float)
    sig = np.asarray(sigma_along_path, dtype=float)
    if x.shape[-1] < 2:
        raise ConfigurationError("radial decomposition needs d >= 2")
    x = x[: sig.shape[0]]
    if x.shape[:-1] != sig.shape[:-2] or x.shape[-1] != sig.shape[-2]:
        raise ConfigurationError("path and sigma shapes do not match")
    rad = np.linalg.norm(x, axis=-1)
    near = rad < eps
    if np.any(near):
        k = int(np.argwhere(near)[0][0])
        raise DomainError(f"path within {eps:g} of the origin at step {k}", step=k)
    u = x / rad[..., None]
    a = sig @ np.swapaxes(sig, -1, -2)
    quad = np.einsum("...i,...ij,...j->...", u, a, u)
    trace = np.trace(a, axis1=-2, axis2=-1)
    rows = np.einsum("...i,...ij->...j", u, sig)
    return RadialParts((trace - quad) / rad, rows, rad)


@dataclass(frozen=True)
class TimeChange:
    """Time change of one path.

    ``tau_grid[k] = tau(t_k)``; ``slope[k]`` is the integrand on step ``k``;
    ``bounds = (1/C0, C0)`` enclose every slope.
    """

    t_grid: np.ndarray
    tau_grid: np.ndarray
    slope: np.ndarray
    bounds: tuple
    power: float
    w_hat_increments: Optional[np.ndarray] = None

    @property
    def C0(self):
        return self.bounds[1]

    def tau(self, t):
        return np.interp(t, self.t_grid, self.tau_grid)

    def chi(self, s):
        """Inverse of ``tau`` by piecewise-linear interpolation."""
        return np.interp(s, self.tau_grid, self.t_grid)

    def roundtrip_error(self):
        return float(np.max(np.abs(self.chi(self.tau_grid) - self.t_grid)))

    def qv_slope(self):
        """Least-squares slope of the cumulative ``sum dWhat^2`` against ``tau``."""
        if self.w_hat_increments is None:
            raise ConfigurationError("no driving increments were supplied")
        qv = np.concatenate([[0.0], np.cumsum(self.w_hat_increments ** 2)])
        s = self.tau_grid
        return float(np.dot(s, qv) / np.dot(s, s))


def build_time_change(rows, dt, dW=None, power=2.0):
    """Time change ``tau(t) = int |r_s|^power ds`` from diffusion rows.

    Parameters
    ----------
    rows : array (K, d1)
        Radial diffusion rows (or a (K,) array of scalar diffusions).
    dt : float or array (K,)
    dW : array (K, d1), optional
        Driving increments; when given, ``dWhat = |r|^{power/2-1} r . dW`` is
        stored so that its quadratic variation tracks ``tau``.
    power : float
        ``2`` gives ``What = int r dW`` a unit rate in the new clock; ``-2``
        is the reciprocal clock, under which the increments are rescaled by
        ``|r|^{-2}`` to keep a unit rate.
    """
    rows = np.asarray(rows, dtype=float)
    if rows.ndim == 1:
        rows = rows[:, None]
    k_steps = rows.shape[0]
    dt = np.broadcast_to(np.asarray(dt, dtype=float), (k_steps,))
    psi2 = np.sum(rows ** 2, axis=1)
    if np.any(psi2 <= 0) or not np.all(np.isfinite(psi2)):
        raise DomainError("diffusion row vanishes", step=int(np.argmax(~(psi2 > 0))))
    slope = psi2 ** (power / 2.0)
    tau = np.concatenate([[0.0], np.cumsum(slope * dt)])
    t = np.concatenate([[0.0], np.cumsum(dt)])
    c0 = float(max(psi2.max(), 1.0 / psi2.min()))
    w_hat = None
    if dW is not None:
        dW = np.asarray(dW, dtype=float).reshape(k_steps, -1)
        w_hat = psi2 ** (power / 4.0 - 0.5) * np.einsum("ki,ki->k", rows, dW)
    return TimeChange(t, tau, slope, (1.0 / c0, c0), power, w_hat)


@dataclass(frozen=True)
class ReflectedPath:
    """Projected (Skorokhod) path ``z`` with correction increments ``phi``."""

    z: np.ndarray
    local_time_increments: np.ndarray
    barrier: float
    C1: float


def reflect_simulate(w_hat_increments, C1, z0, barrier=1.0, dt=None):
    """``z_{k+1} = max(barrier, z_k + dWhat_k + C1 dt_k)``.

    ``w_hat_increments`` has shape (K,) or (K, R) for ``R`` paths; ``dt`` is
    a scalar or per-step array (the new-clock step sizes).  The correction
    ``phi_k`` is the amount added by the projection.
    """
    w = np.asarray(w_hat_increments, dtype=float)
    z0 = np.asarray(z0, dtype=float)
    if np.any(z0 < barrier):
        raise ConfigurationError("z0 must not lie below the barrier")
    if dt is None:
        raise ConfigurationError("dt is required")
    dt = np.asarray(dt, dtype=float)
    if dt.ndim == 1 and w.ndim > 1:
        dt = dt.reshape((-1,) + (1,) * (w.ndim - 1))
    dt = np.broadcast_to(dt, w.shape)
    z = np.empty((w.shape[0] + 1,) + w.shape[1:])
    phi = np.empty(w.shape)
    z[0] = z0
    for k in range(w.shape[0]):
        free = z[k] + w[k] + C1 * dt[k]
        z[k + 1] = np.maximum(barrier, free)
        phi[k] = z[k + 1] - free
    return ReflectedPath(z, phi, float(barrier), float(C1))


def comparison_test(hat_x, reflected, tol=1e-12):
    """Fraction of grid points with ``Z < Xhat - tol``."""
    hat_x = np.asarray(hat_x, dtype=float)
    if hat_x.shape != reflected.z.shape:
        raise ConfigurationError("paths must share the grid")
    return float(np.mean(reflected.z < hat_x - tol))


@dataclass(frozen=True)
class SignReduction:
    """``|V|`` path, its local time at zero and the reflected driving noise."""

    v: np.ndarray
    abs_v: np.ndarray
    local_time_increments: np.ndarray
    w_bar_increments: np.ndarray


def sign_sde_reduce(w_hat_increments, v0, drift=0.0, dt=1.0):
    """Solve ``dV = dWhat + drift sign(V) dt`` and reduce to ``|V|``.

    Discrete Tanaka formula: ``|V_{k+1}| - |V_k| = sign(V_k) dV_k + dL_k``
    with ``dL_k >= 0`` nonzero only on steps where ``V`` changes sign, and
    ``dWbar_k = sign(V_k) dWhat_k``.  ``sign(0)`` is taken as ``+1``.
    """
    w = np.asarray(w_hat_increments, dtype=float)
    v = np.empty((w.shape[0] + 1,) + w.shape[1:])
    v[0] = v0
    sgn = np.empty(w.shape)
    for k in range(w.shape[0]):
        sgn[k] = np.where(v[k] >= 0, 1.0, -1.0)
        v[k + 1] = v[k] + w[k] + drift * sgn[k] * dt
    dv = np.diff(v, axis=0)
    abs_v = np.abs(v)
    local = np.diff(abs_v, axis=0) - sgn * dv
    local = np.maximum(local, 0.0)
    return SignReduction(v, abs_v, local, sgn * w)


def sup_wiener_exp_moment(r, T):
    """``int_0^inf exp(r x^2) f(x) dx`` for ``f(x) = 2 (2 pi T)^{-1/2} exp(-x^2 / (2T))``.

    Equals ``(1 - 2 r T)^{-1/2}``; ``inf`` when ``2 r T >= 1``.
    """
    if T <= 0:
        raise ConfigurationError("T must be positive")
    q = 1.0 - 2.0 * r * T
    if q <= 0:
        return math.inf
    return q ** -0.5


def sup_wiener_exp_moment_mc(r, T, paths=100_000, steps=10_000, seed=0, chunk=500):
    """Monte Carlo ``E exp(r (sup_{s<=T} W_s)^2)`` over Gaussian random walks.

    The one-sided running maximum of a ``steps``-step walk is used.

    Returns
    -------
    (estimate, standard_error)
    """
    gen = np.random.Generator(np.random.Philox(key=[int(seed), CHANNEL_ORACLE]))
    sd = math.sqrt(T / steps)
    total = 0.0
    total2 = 0.0
    done = 0
    buf = np.empty((chunk, steps))
    while done < paths:
        n = min(chunk, paths - done)
        z = buf[:n]
        gen.standard_normal(out=z)
        np.cumsum(z, axis=1, out=z)
        m = np.maximum(z.max(axis=1), 0.0) * sd
        vals = np.exp(r * m * m)
        total += vals.sum()
        total2 += (vals ** 2).sum()
        done += n
    mean = total / paths
    var = max(total2 / paths - mean ** 2, 0.0)
    return mean, math.sqrt(var / paths)


def constant_sigma_constants(sigma):
    """``(K, C0)`` for a constant ``sigma``.

    ``K = sup_{|x| >= 1} B = Tr a - lambda_min(a)`` and
    ``C0 = max(lambda_max(a), 1 / lambda_min(a))``.
    """
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    lam = np.linalg.eigvalsh(sigma @ sigma.T)
    if lam[0] <= 0:
        raise ConfigurationError("sigma sigma^T must be positive definite")
    return float(lam.sum() - lam[0]), float(max(lam[-1], 1.0 / lam[0]))


@dataclass(frozen=True)
class ComparisonReport:
    violation_fraction: float
    domination_violation: float
    roundtrip_error: float
    max_grid_cell: float
    qv_slope: float
    K: float
    C0: float
    C1: float
    paths: int
    steps: int

    def to_dict(self):
        return dict(self.__dict__)


def radial_comparison(bundle, K, C0, C1=None, tol=1e-12):
    """Couple ``Xhat = |X|`` in the new clock with the reflected ``Z``.

    ``bundle`` must come from a driftless simulation with
    ``record_diffusion=True``.  Every recorded path gets its own time
    change; ``Z`` is driven by the same ``dWhat`` and started at
    ``max(|X_0|, 1)``.  Reports the fraction of grid points with
    ``Z < Xhat``, the fraction of paths violating
    ``sup_{t<=T} |X_t| <= sup_{s<=C0 T} Xhat_s``, the worst round trip
    ``|chi(tau(t_k)) - t_k|`` and the mean quadratic-variation slope.
    """
    if bundle.diffusion_recorded is None:
        raise ConfigurationError("bundle lacks the recorded diffusion")
    C1 = K * C0 if C1 is None else C1
    traj = bundle.trajectories
    parts = radial_decompose(traj[:-1], bundle.diffusion_recorded)
    k_steps, r_paths = parts.B.shape
    hat_x = np.linalg.norm(traj, axis=-1)
    viol = 0
    dom = 0
    roundtrip = 0.0
    cell = 0.0
    slopes = np.empty(r_paths)
    for j in range(r_paths):
        tc = build_time_change(parts.rows[:, j], bundle.dt, bundle.noise_increments[:, j])
        ref = reflect_simulate(tc.w_hat_increments, C1, max(hat_x[0, j], 1.0), 1.0,
                               np.diff(tc.tau_grid))
        viol += int(np.sum(ref.z < hat_x[:, j] - tol))
        roundtrip = max(roundtrip, tc.roundtrip_error())
        cell = max(cell, float(np.max(np.diff(tc.t_grid))))
        slopes[j] = tc.qv_slope()
        within = tc.tau_grid <= C0 * bundle.horizon * (1 + 1e-12)
        if hat_x[:, j].max() > hat_x[within, j].max() + tol:
            dom += 1
    return ComparisonReport(viol / hat_x.size, dom / r_paths, roundtrip, cell,
                            float(slopes.mean()), float(K), float(C0), float(C1), r_paths, k_steps)
