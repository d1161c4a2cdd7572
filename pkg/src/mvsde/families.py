"""Builtin analytic coefficient families.

Every family is returned in product form (so ensemble averages are O(N))
and carries ``params["verdicts"]``: the expected outcome of each condition
check on :func:`default_plan` with nondegeneracy floor
:data:`DEFAULT_FLOOR`.  Keys are condition names, with the Lipschitz
checks suffixed by their target, e.g. ``"lipschitz_x_local_y:drift"``.
A verdict of ``None`` means the check does not apply (e.g. strong
nondegeneracy of a rectangular diffusion).

The drift Lipschitz constant used for the ``:drift`` checks is
``params["drift_lipschitz"]``; the diffusion one is
``coeffs.lipschitz_constant``.
"""
import math

import numpy as np

from .coeffs import KernelCoefficients, ProductTerm, SamplePlan, rect_identity
from .errors import ConfigurationError

__all__ = ["FAMILIES", "DEFAULT_FLOOR", "builtin", "default_plan", "verdict_keys"]

DEFAULT_FLOOR = 1e-3


def default_plan():
    return SamplePlan(t_range=(0.0, 1.0), x_range=(-5.0, 5.0), y_range=(-5.0, 5.0),
                      n_samples=256)


def verdict_keys():
    return ("linear_growth", "nondegeneracy", "nondegeneracy_strong",
            "lipschitz_x_local_y:drift", "lipschitz_x_local_y:diffusion",
            "lipschitz_sigma_global:diffusion")


def _ones(t, y):
    return 1.0


def _const(value):
    value = np.asarray(value, dtype=float)

    def left(t, x):
        x = np.asarray(x)
        return np.broadcast_to(value, x.shape[:-1] + value.shape)
    return left


def _vec(value, d, name):
    v = np.asarray(value, dtype=float)
    if v.ndim == 0:
        v = np.full(d, float(v))
    if v.shape != (d,):
        raise ConfigurationError(f"{name} must be a scalar or a length-{d} vector")
    return v


def _finish(d, d1, drift_terms, diff_terms, growth, lip_sigma, lip_drift, verdicts, tag,
            y_free, params):
    params = dict(params)
    params["drift_lipschitz"] = lip_drift
    params["verdicts"] = verdicts
    return KernelCoefficients.from_terms(d, d1, drift_terms, diff_terms, growth_constant=growth,
                                         builtin_tag=tag, lipschitz_constant=lip_sigma,
                                         y_free_diffusion=y_free, params=params)


def _constant(d, d1, c=0.0, s=1.0):
    """``b = c``, ``sigma = s * E`` with ``E`` the rectangular identity."""
    c = _vec(c, d, "c")
    e = rect_identity(d, d1)
    m = min(d, d1)
    growth = float(np.linalg.norm(c) + abs(s) * math.sqrt(m))
    growth = growth if growth > 0 else 1.0
    nondeg = bool(s != 0 and d1 >= d)
    verdicts = {
        "linear_growth": True,
        "nondegeneracy": nondeg,
        "nondegeneracy_strong": bool(s > 0) if d == d1 else None,
        "lipschitz_x_local_y:drift": True,
        "lipschitz_x_local_y:diffusion": True,
        "lipschitz_sigma_global:diffusion": True,
    }
    return _finish(d, d1, [ProductTerm(_const(c), _ones)], [ProductTerm(_const(s * e), _ones)],
                   growth, 1.0, 1.0, verdicts, "constant", True, {"c": c.tolist(), "s": s})


def _brownian(d, d1):
    """``b = 0``, ``sigma = E``."""
    coeffs = _constant(d, d1, 0.0, 1.0)
    params = dict(coeffs.params)
    return KernelCoefficients.from_terms(d, d1, coeffs.drift_terms, coeffs.diffusion_terms,
                                         growth_constant=coeffs.growth_constant,
                                         builtin_tag="brownian", lipschitz_constant=1.0,
                                         y_free_diffusion=True, params=params)


def _linear(d, d1, a=-1.0, beta=0.5, s=0.2):
    """``b = a x + beta y``, ``sigma = s E``.

    The drift is unbounded in ``y``, so no constant satisfies the linear
    growth bound uniformly in ``y`` when ``beta != 0``; the declared
    constant ``|a| + |s| sqrt(min(d, d1))`` covers the ``x`` dependence only.
    """
    e = rect_identity(d, d1)
    m = min(d, d1)

    def ax(t, x):
        return a * np.asarray(x, dtype=float)

    def identity_y(t, y):
        return np.asarray(y, dtype=float)

    drift = [ProductTerm(ax, _ones), ProductTerm(_const(np.full(d, beta)), identity_y)]
    growth = abs(a) + abs(s) * math.sqrt(m)
    growth = growth if growth > 0 else 1.0
    verdicts = {
        "linear_growth": beta == 0,
        "nondegeneracy": bool(s != 0 and d1 >= d),
        "nondegeneracy_strong": bool(s > 0) if d == d1 else None,
        "lipschitz_x_local_y:drift": True,
        "lipschitz_x_local_y:diffusion": True,
        "lipschitz_sigma_global:diffusion": True,
    }
    return _finish(d, d1, drift, [ProductTerm(_const(s * e), _ones)], growth, 1.0,
                   max(abs(a), 1e-12), verdicts, "linear", True, {"a": a, "beta": beta, "s": s})


def _mean_reverting(d, d1, kappa=1.0, theta=0.5, s=1.0):
    """``b = -kappa x + theta tanh(y)``, ``sigma = s E``."""
    e = rect_identity(d, d1)
    m = min(d, d1)

    def left(t, x):
        return -kappa * np.asarray(x, dtype=float)

    def tanh_y(t, y):
        return np.tanh(y)

    drift = [ProductTerm(left, _ones), ProductTerm(_const(np.full(d, theta)), tanh_y)]
    growth = max(abs(kappa), abs(theta) * math.sqrt(d) + abs(s) * math.sqrt(m), 1e-12)
    verdicts = {
        "linear_growth": True,
        "nondegeneracy": bool(s != 0 and d1 >= d),
        "nondegeneracy_strong": bool(s > 0) if d == d1 else None,
        "lipschitz_x_local_y:drift": True,
        "lipschitz_x_local_y:diffusion": True,
        "lipschitz_sigma_global:diffusion": True,
    }
    return _finish(d, d1, drift, [ProductTerm(_const(s * e), _ones)], growth, 1.0,
                   max(abs(kappa), 1e-12), verdicts, "mean_reverting", True,
                   {"kappa": kappa, "theta": theta, "s": s})


def _step_drift(d, d1, s=1.0):
    """``b = sign(x)`` componentwise, ``sigma = s E``: bounded, discontinuous."""
    e = rect_identity(d, d1)
    m = min(d, d1)

    def left(t, x):
        return np.sign(x)

    growth = math.sqrt(d) + abs(s) * math.sqrt(m)
    verdicts = {
        "linear_growth": True,
        "nondegeneracy": bool(s != 0 and d1 >= d),
        "nondegeneracy_strong": bool(s > 0) if d == d1 else None,
        "lipschitz_x_local_y:drift": False,
        "lipschitz_x_local_y:diffusion": True,
        "lipschitz_sigma_global:diffusion": True,
    }
    return _finish(d, d1, [ProductTerm(left, _ones)], [ProductTerm(_const(s * e), _ones)],
                   growth, 1.0, 1.0, verdicts, "step_drift", True, {"s": s})


def _sine_step(d=1, d1=1, freq=7.0, amp=0.3, eps=0.2, shift=0.0):
    """``b = sign(sin(freq x)) + amp tanh(y) + shift``, ``sigma = 1 + eps sin(x)``; d = d1 = 1.

    A bounded measurable drift with a Lipschitz, nondegenerate,
    ``y``-free diffusion.  ``shift`` moves the drift by a constant (used
    to build a deliberately different equation).
    """
    if d != 1 or d1 != 1:
        raise ConfigurationError("sine_step is one-dimensional")
    if not 0 <= eps < 1:
        raise ConfigurationError("eps must lie in [0, 1)")

    def left_sign(t, x):
        return np.sign(np.sin(freq * np.asarray(x, dtype=float))) + shift

    def tanh_y(t, y):
        return np.tanh(y)

    def sigma(t, x):
        x = np.asarray(x, dtype=float)
        return (1.0 + eps * np.sin(x))[..., None]

    drift = [ProductTerm(left_sign, _ones), ProductTerm(_const(np.array([amp])), tanh_y)]
    growth = 1.0 + abs(shift) + abs(amp) + 1.0 + eps
    verdicts = {
        "linear_growth": True,
        "nondegeneracy": True,
        "nondegeneracy_strong": True,
        "lipschitz_x_local_y:drift": False,
        "lipschitz_x_local_y:diffusion": True,
        "lipschitz_sigma_global:diffusion": True,
    }
    return _finish(1, 1, drift, [ProductTerm(sigma, _ones)], growth, max(eps, 1e-12), 1.0,
                   verdicts, "sine_step", True,
                   {"freq": freq, "amp": amp, "eps": eps, "shift": shift})


_S0 = np.array([[1.0, 0.0, 0.5], [0.0, 1.0, 0.5]])
_S1 = np.array([[0.0, 0.3, 0.0], [0.3, 0.0, 0.0]])


def _rectangular(d=2, d1=3, kappa=1.0, theta=0.5, eps=0.2, eta=0.5):
    """Two-dimensional state, three-dimensional noise.

    ``b = -kappa x + theta tanh(y)`` and
    ``sigma = (1 + eps sin(x_0)) S0 + eta cos(y_0) S1`` with fixed
    ``S0`` (rank 2, smallest singular value 1) and ``S1`` (norm 0.3).
    Nondegenerate whenever ``1 - eps - 0.3 eta > 0``.
    """
    if d != 2 or d1 != 3:
        raise ConfigurationError("rectangular is defined for d=2, d1=3")
    if 1 - abs(eps) - 0.3 * abs(eta) <= 0:
        raise ConfigurationError("eps and eta too large: diffusion may degenerate")

    def left_x(t, x):
        return -kappa * np.asarray(x, dtype=float)

    def tanh_y(t, y):
        return np.tanh(y)

    def s0(t, x):
        x = np.asarray(x, dtype=float)
        return (1.0 + eps * np.sin(x[..., 0]))[..., None, None] * _S0

    def cos_y0(t, y):
        y = np.asarray(y, dtype=float)
        return (eta * np.cos(y[..., 0]))[..., None, None]

    drift = [ProductTerm(left_x, _ones), ProductTerm(_const(np.full(2, theta)), tanh_y)]
    diffusion = [ProductTerm(s0, _ones), ProductTerm(_const(_S1), cos_y0)]
    norm = (1 + abs(eps)) * np.linalg.norm(_S0) + abs(eta) * np.linalg.norm(_S1)
    growth = max(abs(kappa), abs(theta) * math.sqrt(2) + norm)
    lip_sigma = max(abs(eps) * float(np.linalg.norm(_S0)), 1e-12)
    verdicts = {
        "linear_growth": True,
        "nondegeneracy": True,
        "nondegeneracy_strong": None,
        "lipschitz_x_local_y:drift": True,
        "lipschitz_x_local_y:diffusion": True,
        "lipschitz_sigma_global:diffusion": True,
    }
    return _finish(2, 3, drift, diffusion, float(growth), lip_sigma, max(abs(kappa), 1e-12),
                   verdicts, "rectangular", False,
                   {"kappa": kappa, "theta": theta, "eps": eps, "eta": eta})


FAMILIES = {
    "brownian": _brownian,
    "constant": _constant,
    "linear": _linear,
    "mean_reverting": _mean_reverting,
    "step_drift": _step_drift,
    "sine_step": _sine_step,
    "rectangular": _rectangular,
}


def builtin(name, d, d1, **params):
    """Instantiate a builtin family by name."""
    try:
        factory = FAMILIES[name]
    except KeyError:
        raise ConfigurationError(f"unknown coefficient family {name!r}; "
                                 f"choose from {sorted(FAMILIES)}") from None
    try:
        return factory(d, d1, **params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for family {name!r}: {exc}") from None
