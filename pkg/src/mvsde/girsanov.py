"""Girsanov weights, total-variation bounds and the contraction argument.

Setting: ``sigma(t, x)`` is square, invertible and free of ``y``; the
normalised drift is ``bt[t, x, mu] = sigma(t, x)^{-1} b[t, x, mu]``.  Along
paths of the driftless equation ``dX = sigma dW`` the stochastic exponent

    gamma_T = exp( int bt . dW - 1/2 int |bt|^2 ds )

is a probability density, and for two measure flows ``mu1, mu2``

    TV(law1, law2) <= sqrt(E rho^2 - 1),
    E rho^2 <= sqrt(E exp(6 int |bt[mu2] - bt[mu1]|^2 ds)).

Stochastic integrals are left-endpoint (Ito) sums over the stored
increments of a :class:`~mvsde.simulate.PathBundle`.  All weight
arithmetic stays in log space.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .coeffs import KernelCoefficients, mean_field_diffusion, mean_field_drift
from .distances import discrete_tv, fd_edges, two_sample_report
from .errors import ConfigurationError, DegeneracyError, NumericError

__all__ = [
    "LOG_GUARD",
    "LogWeightAccumulator",
    "accumulate_logweight",
    "drift_tilde_path",
    "tv_upper_bound",
    "Rho2Estimate",
    "estimate_rho2",
    "linear_growth_rho2_bound",
    "TVGap",
    "kernel_tv_gap",
    "ContractionTrace",
    "contraction_iterate",
    "smallness_alpha",
    "TVLedger",
    "interval_induction",
    "ProbeReport",
    "empirical_uniqueness_probe",
    "girsanov_report",
]

LOG_GUARD = 700.0
SINGULAR_TOL = 1e-12


@dataclass
class LogWeightAccumulator:
    """Running ``M = int bt . dW`` and ``Q = int |bt|^2 ds`` per path."""

    M: np.ndarray
    Q: np.ndarray
    steps: int = 0
    horizon: float = 0.0
    guard: float = LOG_GUARD

    @classmethod
    def zeros(cls, n, guard=LOG_GUARD):
        return cls(np.zeros(n), np.zeros(n), 0, 0.0, guard)

    def update(self, b_tilde, dW, dt):
        b_tilde = np.asarray(b_tilde, dtype=float)
        self.M = self.M + np.einsum("ni,ni->n", b_tilde, dW)
        self.Q = self.Q + np.einsum("ni,ni->n", b_tilde, b_tilde) * dt
        self.steps += 1
        self.horizon += dt

    @property
    def log_gamma(self):
        return self.M - 0.5 * self.Q

    @property
    def clipped(self):
        """Number of paths whose log weight exceeds the guard in magnitude."""
        return int(np.sum(np.abs(self.log_gamma) > self.guard))

    def gamma(self):
        """``exp(M - Q/2)`` with the exponent clipped to ``[-guard, guard]``."""
        return np.exp(np.clip(self.log_gamma, -self.guard, self.guard))

    def summary(self):
        g = self.gamma()
        n = g.size
        return {
            "E_gamma": float(g.mean()),
            "E_gamma_se": float(g.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan"),
            "E_gamma2": float(np.mean(g ** 2)),
            "E_gamma2_se": float(np.std(g ** 2, ddof=1) / math.sqrt(n)) if n > 1 else float("nan"),
            "clipped": self.clipped,
        }


def _sigma_inverse_apply(sig, vec, k):
    sv = np.linalg.svd(sig, compute_uv=False)
    smallest = sv[..., -1]
    bad = smallest <= SINGULAR_TOL * np.maximum(sv[..., 0], 1.0)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise DegeneracyError(f"sigma is singular at step {k}, path {i}",
                              eigenvalue=float(smallest[i]), location=(k, i))
    return np.linalg.solve(sig, vec[..., None])[..., 0]


def drift_tilde_path(bundle, drift, measure=None):
    """``bt[t_k, X_k, mu_k]`` along the recorded paths, shape (K, R, d).

    Parameters
    ----------
    bundle : PathBundle
    drift : KernelCoefficients or callable
        Coefficients (square, ``y``-free diffusion): the drift is averaged
        against ``mu_k`` and multiplied by ``sigma^{-1}``.  A callable is
        used as ``drift(t, x, k) -> (R, d)`` values of ``bt`` directly.
    measure : array (K+1, M, d), optional
        States defining ``mu_k``; defaults to the recorded trajectories.
    """
    traj = bundle.trajectories
    k_steps = traj.shape[0] - 1
    measure = traj if measure is None else np.asarray(measure, dtype=float)
    out = np.empty((k_steps,) + traj.shape[1:])
    for k in range(k_steps):
        t = bundle.time_grid[k]
        x = traj[k]
        if isinstance(drift, KernelCoefficients):
            if drift.dim_state != drift.dim_noise:
                raise ConfigurationError("Girsanov weights need a square diffusion")
            b = mean_field_drift(drift, t, x, measure[k])
            sig = mean_field_diffusion(drift, t, x, measure[k])
            out[k] = _sigma_inverse_apply(sig, b, k)
        else:
            out[k] = drift(t, x, k)
    if not np.all(np.isfinite(out)):
        k, i = np.argwhere(~np.isfinite(out).all(axis=2))[0]
        raise NumericError("non-finite normalised drift", step=int(k), particle=int(i))
    return out


def accumulate_logweight(bundle, drift, acc=None, measure=None):
    """Accumulate the Girsanov log weight of every recorded path.

    See :func:`drift_tilde_path` for ``drift`` and ``measure``.  The noise
    increments stored in the bundle are reused as ``dW``.

    Returns
    -------
    LogWeightAccumulator
    """
    bt = drift_tilde_path(bundle, drift, measure)
    dW = bundle.noise_increments
    if dW.shape != bt.shape:
        raise ConfigurationError("bundle noise does not match the state dimension")
    acc = LogWeightAccumulator.zeros(bt.shape[1]) if acc is None else acc
    for k in range(bt.shape[0]):
        acc.update(bt[k], dW[k], bundle.dt)
    return acc


def tv_upper_bound(Erho2, tol=1e-12):
    """``sqrt(E rho^2 - 1)``; defects down to ``1 - tol`` are clipped to 0."""
    if Erho2 < 1.0 - tol:
        raise ConfigurationError(f"E rho^2 = {Erho2!r} is below one")
    return math.sqrt(max(Erho2 - 1.0, 0.0))


@dataclass(frozen=True)
class Rho2Estimate:
    """Monte Carlo estimate of ``E exp(c int |dbt|^2)`` and its square root."""

    raw: float
    raw_se: float
    bound: float
    bound_se: float
    tv_bound: float
    constant: float


def _rho2_from_integrals(integral, constant):
    n = integral.size
    vals = np.exp(np.minimum(constant * integral, LOG_GUARD))
    raw = float(vals.mean())
    raw_se = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    bound = math.sqrt(raw)
    return Rho2Estimate(raw, raw_se, bound, raw_se / (2.0 * bound), tv_upper_bound(bound),
                        constant)


def estimate_rho2(bundle, drift1, drift2, measure1=None, measure2=None, constant=6.0):
    """Bound ``E rho^2 <= sqrt(E exp(constant int |bt[mu2] - bt[mu1]|^2 ds))``.

    ``drift1``/``drift2`` and ``measure1``/``measure2`` are as in
    :func:`drift_tilde_path`; the paths are those of ``bundle``.
    """
    diff = drift_tilde_path(bundle, drift2, measure2) - drift_tilde_path(bundle, drift1, measure1)
    integral = np.sum(np.sum(diff ** 2, axis=2), axis=0) * bundle.dt
    return _rho2_from_integrals(integral, constant)


def linear_growth_rho2_bound(bundle, C, v, constant=6.0):
    """``sqrt(E exp(constant C^2 v^2 int (1 + |X|^2) ds))`` along ``bundle``.

    Dominates :func:`estimate_rho2` whenever
    ``sup_y |bt(s, x, y)| <= C (1 + |x|)`` up to the factor between
    ``(1 + |x|)^2`` and ``1 + |x|^2`` and ``TV(mu1_s, mu2_s) <= v``.
    """
    traj = bundle.trajectories[:-1]
    integral = np.sum(1.0 + np.sum(traj ** 2, axis=2), axis=0) * bundle.dt
    return _rho2_from_integrals(C ** 2 * v ** 2 * integral, constant)


@dataclass(frozen=True)
class TVGap:
    gap: float
    sup_kernel: float
    tv: float
    bound: float
    holds: bool


def kernel_tv_gap(kernel, x, mu1, mu2, t=0.0, binned=False, rtol=1e-12):
    """Check ``|bt[x, mu2] - bt[x, mu1]| <= sup_y |bt(x, y)| * TV(mu1, mu2)``.

    Parameters
    ----------
    kernel : callable
        ``kernel(t, x, ys) -> (n, d)`` (vectorised over ``ys``).
    mu1, mu2 : DiscreteMeasure
    binned : bool
        Use the histogram TV of the atoms (scalar states only) instead of
        the exact discrete TV.

    The supremum over ``y`` is taken over the union of the atoms.
    """
    ys = np.concatenate([mu1.atoms, mu2.atoms])
    vals = np.atleast_2d(np.asarray(kernel(t, x, ys), dtype=float))
    v1, v2 = vals[: mu1.atoms.shape[0]], vals[mu1.atoms.shape[0]:]
    avg1 = mu1.weights @ v1
    avg2 = mu2.weights @ v2
    gap = float(np.linalg.norm(avg2 - avg1))
    sup = float(np.max(np.linalg.norm(vals, axis=1)))
    if binned:
        edges = fd_edges(ys[:, 0])
        p = np.histogram(mu1.atoms[:, 0], edges, weights=mu1.weights)[0]
        q = np.histogram(mu2.atoms[:, 0], edges, weights=mu2.weights)[0]
        tv = float(np.abs(p - q).sum())
    else:
        tv = discrete_tv(mu1, mu2)
    bound = sup * tv
    return TVGap(gap, sup, tv, bound, gap <= bound * (1 + rtol) + rtol)


@dataclass(frozen=True)
class ContractionTrace:
    iterates: list
    converged: bool
    diverged: bool
    monotone: bool

    @property
    def iterations(self):
        return len(self.iterates) - 1


def contraction_iterate(C, T, v0, max_iter=200, tol=1e-12, guard=LOG_GUARD):
    """Iterate ``v -> sqrt(exp(C T v^2) - 1)`` from ``v0``.

    Stops when an iterate drops below ``tol`` (``converged``) or when the
    exponent ``C T v^2`` exceeds ``guard`` (``diverged``).
    """
    if not (C > 0 and T > 0):
        raise ConfigurationError("C and T must be positive")
    if not 0 <= v0 <= 2:
        raise ConfigurationError("v0 must lie in [0, 2]")
    v = float(v0)
    its = [v]
    converged = v < tol
    diverged = False
    for _ in range(max_iter):
        if converged:
            break
        expo = C * T * v * v
        if expo > guard:
            diverged = True
            break
        v = math.sqrt(math.expm1(expo))
        its.append(v)
        if v < tol:
            converged = True
    monotone = all(b <= a for a, b in zip(its, its[1:]))
    return ContractionTrace(its, converged, diverged, monotone)


def smallness_alpha():
    """Largest ``alpha > 0`` with ``exp(4 alpha) - 1 <= 8 alpha`` (about 0.3141)."""
    return float(optimize.brentq(lambda a: math.expm1(4 * a) - 8 * a, 0.1, 1.0, xtol=1e-15))


@dataclass(frozen=True)
class TVLedger:
    """Interval-by-interval record of the induction ``v(kT) = 0 => v((k+1)T) = 0``."""

    C: float
    T: float
    alpha: float
    horizon: float
    endpoints: list
    values: list
    trace: list = field(default_factory=list)

    @property
    def all_zero(self):
        return all(v == 0.0 for v in self.values)


def _interval_count(horizon, T):
    q = horizon / T
    n = round(q)
    if abs(q - n) <= 1e-9 * max(1.0, q):
        return max(int(n), 1)
    return max(int(math.ceil(q)), 1)


def interval_induction(C, T, horizon, v0=2.0, max_iter=200):
    """Propagate ``v = 0`` across ``[kT, (k+1)T]`` up to ``horizon``.

    Requires ``2 C T < 1`` and ``C T <= alpha`` with ``alpha`` from
    :func:`smallness_alpha`.  On each interval the contraction is iterated
    from the worst case ``v0``; an interval's verdict is 0 when the
    iteration converges.
    """
    if not (C > 0 and T > 0 and horizon > 0):
        raise ConfigurationError("C, T and horizon must be positive")
    alpha = smallness_alpha()
    if not 2 * C * T < 1:
        raise ConfigurationError(f"T = {T!r} violates T < 1/(2C) = {1 / (2 * C)!r}")
    if C * T > alpha:
        raise ConfigurationError(f"C T = {C * T!r} exceeds the smallness bound {alpha!r}")
    n = _interval_count(horizon, T)
    endpoints, values, trace = [0.0], [0.0], []
    for k in range(n):
        ct = contraction_iterate(C, T, v0, max_iter)
        end = min((k + 1) * T, horizon)
        val = 0.0 if ct.converged else ct.iterates[-1]
        endpoints.append(end)
        values.append(val)
        trace.append({"k": k, "start": k * T, "end": end, "v_start": values[-2],
                      "v_end": val, "iterations": ct.iterations, "converged": ct.converged})
        if not ct.converged:
            break
    return TVLedger(C, T, alpha, horizon, endpoints, values, trace)


@dataclass(frozen=True)
class ProbeReport:
    """Two-run comparison of terminal marginals."""

    tv_hat: float
    tv_null: float
    ks_stat: float
    ks_threshold: float
    reject: bool
    n_a: int
    n_b: int

    def to_dict(self):
        return {"tv_hat": self.tv_hat, "tv_null": self.tv_null, "ks_stat": self.ks_stat,
                "ks_threshold": self.ks_threshold, "reject": self.reject,
                "n_a": self.n_a, "n_b": self.n_b}


def empirical_uniqueness_probe(configA, configB, workers=1, alpha=0.01, n_perm=100,
                               bundles=None):
    """Simulate two configurations and compare their terminal laws.

    Identical configurations give identical ensembles, hence ``tv_hat = 0``.
    ``bundles`` may supply already simulated ``(A, B)`` results.
    """
    from .simulate import simulate

    if bundles is None:
        bundles = (simulate(configA, workers=workers), simulate(configB, workers=workers))
    a, b = bundles[0].terminal.states, bundles[1].terminal.states
    rep = two_sample_report(a, b, alpha=alpha, n_perm=n_perm, seed=configA.seed)
    return ProbeReport(rep.tv_hat, rep.tv_null, rep.ks_stat, rep.ks_threshold, rep.reject,
                       a.shape[0], b.shape[0])


def girsanov_report(acc=None, rho2=None, probe=None, contraction=None):
    """JSON-ready report with the documented keys (``None`` where not computed)."""
    out = {"E_gamma": None, "E_gamma_se": None, "E_rho2": None, "tv_bound": None,
           "tv_hat": None, "ks_stat": None, "ks_threshold": None, "contraction_trace": []}
    if acc is not None:
        s = acc.summary()
        out.update(E_gamma=s["E_gamma"], E_gamma_se=s["E_gamma_se"])
    if rho2 is not None:
        out.update(E_rho2=rho2.bound, tv_bound=rho2.tv_bound)
    if probe is not None:
        out.update(tv_hat=probe.tv_hat, ks_stat=probe.ks_stat, ks_threshold=probe.ks_threshold)
    if contraction is not None:
        out["contraction_trace"] = list(contraction.iterates)
    return out
