"""Distances between laws known through samples or finite atoms.

Total variation uses the L1 convention ``TV(mu, nu) = int |d mu - d nu|``,
so it ranges over ``[0, 2]`` and two distinct Dirac masses are at
distance 2.
"""
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .errors import ConfigurationError

__all__ = [
    "DiscreteMeasure",
    "discrete_tv",
    "fd_edges",
    "binned_tv",
    "ks_statistic",
    "ks_threshold",
    "TwoSampleReport",
    "two_sample_report",
]


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finitely many atoms ``(n, d)`` with nonnegative weights summing to one."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (atoms.shape[0],):
            raise ConfigurationError("one weight per atom required")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ConfigurationError("weights must be nonnegative and sum to one")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", w)

    @classmethod
    def empirical(cls, samples):
        samples = np.asarray(samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, None]
        n = samples.shape[0]
        return cls(samples, np.full(n, 1.0 / n))

    @classmethod
    def dirac(cls, point):
        return cls(np.atleast_2d(np.asarray(point, dtype=float)), np.ones(1))

    @property
    def states(self):
        return self.atoms


def discrete_tv(mu, nu):
    """Exact TV of two discrete measures (atoms matched bitwise)."""
    atoms = np.concatenate([mu.atoms, nu.atoms])
    uniq, inv = np.unique(atoms, axis=0, return_inverse=True)
    inv = inv.ravel()
    diff = np.zeros(uniq.shape[0])
    np.add.at(diff, inv[: mu.atoms.shape[0]], mu.weights)
    np.add.at(diff, inv[mu.atoms.shape[0]:], -nu.weights)
    return float(np.abs(diff).sum())


def fd_edges(pooled, max_bins=10_000):
    """Bin edges with the Freedman-Diaconis width on the pooled sample."""
    pooled = np.asarray(pooled, dtype=float).ravel()
    lo, hi = float(pooled.min()), float(pooled.max())
    if hi <= lo:
        return np.array([lo - 0.5, lo + 0.5])
    q75, q25 = np.percentile(pooled, [75, 25])
    width = 2.0 * (q75 - q25) / np.cbrt(pooled.size)
    # the cap is applied before any edges are allocated; outliers can make
    # (hi - lo) / width astronomically large
    bins = 1 if width <= 0 else int(min(max_bins, max(1.0, np.ceil((hi - lo) / width))))
    return np.linspace(lo, hi, bins + 1)


def binned_tv(a, b, edges=None):
    """Histogram estimate of TV between the laws of two scalar samples.

    Returns ``sum_k |p_k - q_k|`` with bin frequencies ``p, q`` on common
    Freedman-Diaconis edges of the pooled sample (unless ``edges`` is given).
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if edges is None:
        edges = fd_edges(np.concatenate([a, b]))
    p = np.histogram(a, edges)[0] / a.size
    q = np.histogram(b, edges)[0] / b.size
    return float(np.abs(p - q).sum())


def ks_statistic(a, b):
    return float(stats.ks_2samp(np.ravel(a), np.ravel(b)).statistic)


def ks_threshold(n, m, alpha=0.01):
    """Asymptotic two-sample KS critical value at level ``alpha``."""
    return float(special.kolmogi(alpha) * np.sqrt((n + m) / (n * m)))


@dataclass(frozen=True)
class TwoSampleReport:
    """Per-coordinate two-sample comparison; ``reject`` uses KS at ``alpha / d``."""

    ks_stat: float
    ks_threshold: float
    tv_hat: float
    tv_null: float
    reject: bool
    alpha: float


def _tv_null(a, b, edges, n_perm, seed):
    pooled = np.concatenate([a, b])
    gen = np.random.Generator(np.random.Philox(seed))
    vals = np.empty(n_perm)
    for i in range(n_perm):
        perm = gen.permutation(pooled)
        vals[i] = binned_tv(perm[: a.size], perm[a.size:], edges)
    return float(np.quantile(vals, 0.99))


def two_sample_report(a, b, alpha=0.01, n_perm=100, seed=0):
    """KS and binned TV of samples ``a`` (n, d) and ``b`` (m, d).

    The coordinate with the largest KS statistic is reported; ``tv_null``
    is the 99th percentile of the binned TV over ``n_perm`` label
    permutations of that coordinate (0 disables it).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a = a[:, None] if a.ndim == 1 else a
    b = b[:, None] if b.ndim == 1 else b
    if a.shape[1] != b.shape[1]:
        raise ConfigurationError("samples must have the same dimension")
    d = a.shape[1]
    ks = [ks_statistic(a[:, i], b[:, i]) for i in range(d)]
    j = int(np.argmax(ks))
    thr = ks_threshold(a.shape[0], b.shape[0], alpha / d)
    edges = fd_edges(np.concatenate([a[:, j], b[:, j]]))
    tv = binned_tv(a[:, j], b[:, j], edges)
    null = _tv_null(a[:, j], b[:, j], edges, n_perm, seed) if n_perm else float("nan")
    return TwoSampleReport(ks[j], thr, tv, null, ks[j] > thr, alpha)
