"""Kernel coefficients, mean-field averages, mollification and hypothesis checks.

A McKean-Vlasov coefficient of kernel type is evaluated against a measure
as ``b[t, x, mu] = int b(t, x, y) mu(dy)``.  Here ``mu`` is always an
empirical measure (an ensemble of particles, possibly weighted), so the
integral is a finite average.

Kernels are vectorised callables ``kernel(t, x, y)`` where ``t`` is a
scalar and ``x``, ``y`` are broadcastable arrays whose last axis has length
``d``.  The drift returns ``(..., d)`` and the diffusion ``(..., d, d1)``.

Averaging a generic kernel over ``N`` particles for ``N`` query points
costs ``O(N^2)``.  Kernels that factor as a finite sum of products
``sum_m left_m(t, x) * right_m(t, y)`` can declare that structure through
:class:`ProductTerm`; the average then costs ``O(N)`` because only
``mean_j right_m(t, Y_j)`` is needed.
"""
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.stats import qmc

from .errors import ConfigurationError, NumericError

__all__ = [
    "ProductTerm",
    "KernelCoefficients",
    "Mollifier",
    "SamplePlan",
    "ConditionReport",
    "CONDITIONS",
    "mean_field_drift",
    "mean_field_diffusion",
    "mollify",
    "rect_identity",
    "check_linear_growth",
    "check_nondegeneracy",
    "check_lipschitz",
]

CONDITIONS = ("linear_growth", "nondegeneracy", "nondegeneracy_strong",
              "lipschitz_x_local_y", "lipschitz_sigma_global")

# pairwise evaluation budget (floats) for the O(N^2) path
_PAIR_BUDGET = 2_000_000


def rect_identity(d, d1):
    """The ``d x d1`` matrix with ones on the main diagonal."""
    return np.eye(d, d1)


@dataclass(frozen=True)
class ProductTerm:
    """One summand ``left(t, x) * right(t, y)`` of a product-form kernel.

    ``left`` returns the full output shape (``(..., d)`` or ``(..., d, d1)``);
    ``right`` returns anything broadcastable against it, e.g. ``(..., d)``
    or a scalar per point with a trailing singleton axis.
    """

    left: Callable
    right: Callable


def _sum_terms(terms):
    def kernel(t, x, y):
        out = 0.0
        for term in terms:
            out = out + term.left(t, x) * term.right(t, y)
        return out
    return kernel


@dataclass(frozen=True)
class KernelCoefficients:
    """Drift and diffusion kernels of a McKean-Vlasov equation.

    Attributes
    ----------
    dim_state, dim_noise : int
        State dimension ``d`` and noise dimension ``d1``.
    drift_kernel, diffusion_kernel : callable
        ``(t, x, y) -> (..., d)`` and ``(t, x, y) -> (..., d, d1)``.
    growth_constant : float
        Declared ``C`` with ``|b| + ||sigma||_F <= C (1 + |x|)``.
    builtin_tag : str or None
        Family name for builtin coefficients.
    drift_terms, diffusion_terms : tuple of ProductTerm
        Optional product-form decomposition enabling O(N) averages.  When
        present the matching kernel must equal the sum of the terms.
    lipschitz_constant : float or None
        Declared Lipschitz constant in ``x`` (used by :func:`check_lipschitz`).
    y_free_diffusion : bool
        True when ``sigma`` does not depend on ``y``.
    """

    dim_state: int
    dim_noise: int
    drift_kernel: Callable
    diffusion_kernel: Callable
    growth_constant: float = math.inf
    builtin_tag: Optional[str] = None
    drift_terms: tuple = ()
    diffusion_terms: tuple = ()
    lipschitz_constant: Optional[float] = None
    y_free_diffusion: bool = False
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim_state < 1 or self.dim_noise < 1:
            raise ConfigurationError("dimensions must be positive")
        if self.growth_constant < 0:
            raise ConfigurationError("growth_constant must be nonnegative")

    @classmethod
    def from_terms(cls, dim_state, dim_noise, drift_terms, diffusion_terms, **kwargs):
        drift_terms = tuple(drift_terms)
        diffusion_terms = tuple(diffusion_terms)
        return cls(dim_state, dim_noise, _sum_terms(drift_terms), _sum_terms(diffusion_terms),
                   drift_terms=drift_terms, diffusion_terms=diffusion_terms, **kwargs)

    def drift(self, t, x, y):
        return self._eval(self.drift_kernel, t, x, y, (self.dim_state,))

    def diffusion(self, t, x, y):
        return self._eval(self.diffusion_kernel, t, x, y, (self.dim_state, self.dim_noise))

    def _eval(self, kernel, t, x, y, shape):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        batch = np.broadcast_shapes(x.shape[:-1], y.shape[:-1])
        out = np.broadcast_to(np.asarray(kernel(float(t), x, y), dtype=float), batch + shape)
        return out


def _states(ensemble):
    states = getattr(ensemble, "states", ensemble)
    return np.asarray(states, dtype=float)


def _weights(ensemble, n):
    w = getattr(ensemble, "weights", None)
    if w is None:
        return None
    w = np.asarray(w, dtype=float)
    if w.shape != (n,):
        raise ConfigurationError("weights must have one entry per particle")
    return w


def _check_query(coeffs, x, ys):
    d = coeffs.dim_state
    if ys.ndim != 2 or ys.shape[0] == 0:
        raise ConfigurationError("ensemble must be a non-empty (N, d) array")
    if ys.shape[1] != d:
        raise ConfigurationError(f"ensemble has dimension {ys.shape[1]}, expected {d}")
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != d or x.ndim > 2:
        raise ConfigurationError(f"query point must have shape (d,) or (n, d) with d={d}")
    return x


def _first_bad_row(values):
    bad = ~np.isfinite(values.reshape(values.shape[0], -1)).all(axis=1)
    return int(np.flatnonzero(bad)[0])


def _mean_right(term, t, ys, weights, out_shape):
    r = np.asarray(term.right(t, ys), dtype=float)
    if r.ndim == 0:
        r = np.broadcast_to(r, (ys.shape[0],))
    if not np.all(np.isfinite(r)):
        j = _first_bad_row(r)
        raise NumericError(f"non-finite kernel value for ensemble particle {j}", particle=j)
    if weights is None:
        return r.mean(axis=0)
    return np.tensordot(weights, r, axes=(0, 0)) / weights.sum()


def _average(coeffs, kernel, terms, t, x, ensemble, out_shape):
    ys = _states(ensemble)
    x = _check_query(coeffs, x, ys)
    weights = _weights(ensemble, ys.shape[0])
    single = x.ndim == 1
    xb = x[None, :] if single else x
    t = float(t)
    if terms:
        out = np.zeros((xb.shape[0],) + out_shape)
        for term in terms:
            mean_r = _mean_right(term, t, ys, weights, out_shape)
            left = np.asarray(term.left(t, xb), dtype=float)
            out = out + left * mean_r
    else:
        n, big_n = xb.shape[0], ys.shape[0]
        size = int(np.prod(out_shape))
        chunk = max(1, _PAIR_BUDGET // max(1, big_n * size))
        out = np.empty((n,) + out_shape)
        for lo in range(0, n, chunk):
            xs = xb[lo:lo + chunk, None, :]
            vals = np.broadcast_to(np.asarray(kernel(t, xs, ys[None, :, :]), dtype=float),
                                   (xs.shape[0], big_n) + out_shape)
            if not np.all(np.isfinite(vals)):
                j = _first_bad_row(np.moveaxis(vals, 1, 0))
                raise NumericError(f"non-finite kernel value for ensemble particle {j}",
                                   particle=j)
            if weights is None:
                out[lo:lo + chunk] = vals.mean(axis=1)
            else:
                out[lo:lo + chunk] = np.tensordot(vals, weights, axes=(1, 0)) / weights.sum()
    if not np.all(np.isfinite(out)):
        i = _first_bad_row(out)
        raise NumericError(f"non-finite mean-field value at query point {i}", particle=i)
    return out[0] if single else out


def mean_field_drift(coeffs, t, x, ensemble):
    """``b[t, x, mu_N] = (1/N) sum_j b(t, x, Y_j)`` for the ensemble's measure.

    ``x`` may be a single point ``(d,)`` or a batch ``(n, d)``.  ``ensemble``
    is an ``(N, d)`` array or any object with a ``states`` attribute (and
    optionally ``weights`` for a weighted empirical measure).
    """
    return _average(coeffs, coeffs.drift_kernel, coeffs.drift_terms, t, x, ensemble,
                    (coeffs.dim_state,))


def mean_field_diffusion(coeffs, t, x, ensemble):
    """Entrywise average of ``sigma(t, x, Y_j)``; see :func:`mean_field_drift`."""
    return _average(coeffs, coeffs.diffusion_kernel, coeffs.diffusion_terms, t, x, ensemble,
                    (coeffs.dim_state, coeffs.dim_noise))


# --------------------------------------------------------------------------
# mollification

def _bump(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1
    out[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    return out


@dataclass(frozen=True)
class Mollifier:
    """Compactly supported smoothing at level ``n`` with bandwidth ``1/n`` per axis.

    The one-dimensional kernel is proportional to ``exp(-1/(1-u^2))`` on
    ``(-1, 1)``, rescaled to half-width ``h``.  Integrals against it are
    approximated by Gauss-Legendre quadrature whose weights are multiplied
    by the bump and renormalised to sum to one, so constants are reproduced
    exactly and every smoothed value is a convex combination of values
    within the support.

    In ``d`` dimensions the state kernels are tensor products with
    per-coordinate half-width ``h / sqrt(d)``: the support is a cube
    inscribed in the ball of radius ``h``.
    """

    level: int
    quadrature_nodes: int = 5

    def __post_init__(self):
        if self.level < 1:
            raise ConfigurationError("mollifier level must be a positive integer")
        if self.quadrature_nodes < 3:
            raise ConfigurationError("quadrature_nodes must be at least 3")

    @property
    def bandwidths(self):
        h = 1.0 / self.level
        return (h, h, h)

    def rule(self):
        """Nodes on ``(-1, 1)`` and normalised bump weights."""
        nodes, weights = np.polynomial.legendre.leggauss(self.quadrature_nodes)
        weights = weights * _bump(nodes)
        return nodes, weights / weights.sum()

    def grid(self, d, halfwidth):
        """Tensor-product shifts ``(Q**d, d)`` and weights ``(Q**d,)``."""
        nodes, weights = self.rule()
        mesh = np.stack(np.meshgrid(*([nodes] * d), indexing="ij"), axis=-1).reshape(-1, d)
        wmesh = np.prod(np.stack(np.meshgrid(*([weights] * d), indexing="ij"), axis=-1)
                        .reshape(-1, d), axis=1)
        return halfwidth * mesh, wmesh


def _smoothed(fn, shifts, weights):
    def smoothed(t, z):
        z = np.asarray(z, dtype=float)
        out = 0.0
        for shift, w in zip(shifts, weights):
            out = out + w * np.asarray(fn(t, z - shift), dtype=float)
        return out
    return smoothed


def _mollify_terms(terms, time_nodes, time_weights, xs, xw, ys, yw, extension):
    out = []
    for term in terms:
        left_s = _smoothed(term.left, xs, xw)
        right_s = _smoothed(term.right, ys, yw)
        for s, w in zip(time_nodes, time_weights):
            def left(t, x, s=s, w=w, left_s=left_s):
                if t - s < 0:
                    return 0.0  # zero drift / handled by the extension term
                return w * left_s(t - s, x)

            def right(t, y, s=s, right_s=right_s):
                return right_s(max(t - s, 0.0), y)
            out.append(ProductTerm(left, right))
    if extension is not None:
        def ext_left(t, x):
            x = np.asarray(x, dtype=float)
            mass = sum(w for s, w in zip(time_nodes, time_weights) if t - s < 0)
            return np.broadcast_to(mass * extension, x.shape[:-1] + extension.shape)

        def ext_right(t, y):
            return 1.0
        out.append(ProductTerm(ext_left, ext_right))
    return tuple(out)


def mollify(coeffs, moll):
    """Smooth both kernels in ``t``, ``x`` and ``y`` with the given mollifier.

    Returns new coefficients whose kernels are quadrature approximations of
    ``b(t, x, y) * psi_n(t) * phi_n(x) * phi_n(y)``.  For negative times
    the drift is taken to be zero and the diffusion the ``d x d1``
    identity-like matrix (ones on the main diagonal).  Product-form inputs
    stay in product form, with one term per time node.
    """
    d, d1 = coeffs.dim_state, coeffs.dim_noise
    ht, hx, hy = moll.bandwidths
    tn, tw = moll.rule()
    time_nodes = ht * tn
    xs, xw = moll.grid(d, hx / math.sqrt(d))
    ys, yw = moll.grid(d, hy / math.sqrt(d))
    eye = rect_identity(d, d1)
    kwargs = dict(growth_constant=coeffs.growth_constant, builtin_tag=coeffs.builtin_tag,
                  lipschitz_constant=coeffs.lipschitz_constant,
                  y_free_diffusion=coeffs.y_free_diffusion,
                  params={**coeffs.params, "mollifier_level": moll.level})

    if coeffs.drift_terms and coeffs.diffusion_terms:
        drift_terms = _mollify_terms(coeffs.drift_terms, time_nodes, tw, xs, xw, ys, yw, None)
        diff_terms = _mollify_terms(coeffs.diffusion_terms, time_nodes, tw, xs, xw, ys, yw, eye)
        return KernelCoefficients.from_terms(d, d1, drift_terms, diff_terms, **kwargs)

    def make(kernel, negative):
        def smoothed(t, x, y):
            x = np.asarray(x, dtype=float)
            y = np.asarray(y, dtype=float)
            out = 0.0
            for s, w in zip(time_nodes, tw):
                if t - s < 0:
                    out = out + w * negative(x, y)
                    continue
                for sx, wx in zip(xs, xw):
                    for sy, wy in zip(ys, yw):
                        out = out + (w * wx * wy) * np.asarray(kernel(t - s, x - sx, y - sy),
                                                               dtype=float)
            return out
        return smoothed

    def zero_drift(x, y):
        return np.zeros(np.broadcast_shapes(x.shape[:-1], y.shape[:-1]) + (d,))

    def unit_diffusion(x, y):
        return np.broadcast_to(eye, np.broadcast_shapes(x.shape[:-1], y.shape[:-1]) + (d, d1))

    return KernelCoefficients(d, d1, make(coeffs.drift_kernel, zero_drift),
                              make(coeffs.diffusion_kernel, unit_diffusion), **kwargs)


# --------------------------------------------------------------------------
# sample-based condition checks

@dataclass(frozen=True)
class SamplePlan:
    """Deterministic quasi-random points over a bounded ``(t, x, y)`` box.

    Points are an unscrambled Sobol sequence (``2**ceil(log2 n)`` points)
    plus, when ``include_corners`` is set and the box has at most 12
    dimensions, every corner of the box.  Scalar bounds apply to every
    state coordinate.
    """

    t_range: tuple = (0.0, 1.0)
    x_range: tuple = (-5.0, 5.0)
    y_range: tuple = (-5.0, 5.0)
    n_samples: int = 256
    include_corners: bool = True

    def _bounds(self, d, pair):
        lo = [self.t_range[0]] + [self.x_range[0]] * d + [self.y_range[0]] * d
        hi = [self.t_range[1]] + [self.x_range[1]] * d + [self.y_range[1]] * d
        if pair:
            lo += [self.x_range[0]] * d
            hi += [self.x_range[1]] * d
        return np.array(lo, dtype=float), np.array(hi, dtype=float)

    def points(self, d, pair=False):
        """Return ``(t, x, y)`` or ``(t, x, y, x2)`` sample arrays."""
        lo, hi = self._bounds(d, pair)
        dims = lo.size
        m = max(0, math.ceil(math.log2(max(1, self.n_samples))))
        unit = qmc.Sobol(d=dims, scramble=False).random_base2(m)
        if self.include_corners and dims <= 12:
            corners = np.array(np.meshgrid(*([[0.0, 1.0]] * dims), indexing="ij"))
            unit = np.vstack([unit, corners.reshape(dims, -1).T])
        pts = lo + unit * (hi - lo)
        t = pts[:, 0]
        x = pts[:, 1:1 + d]
        y = pts[:, 1 + d:1 + 2 * d]
        if not pair:
            return t, x, y
        # partner points: offsets at cycling scales 1, 1e-1, ..., 1e-4 of
        # the box width so that both global and local quotients are probed
        scales = 10.0 ** -(np.arange(t.size) % 5)
        width = self.x_range[1] - self.x_range[0]
        offset = (unit[:, 1 + 2 * d:] - 0.5) * width * scales[:, None]
        x2 = np.clip(x + offset, self.x_range[0], self.x_range[1])
        return t, x, y, x2


@dataclass(frozen=True)
class ConditionReport:
    """Outcome of one sampled hypothesis check.

    ``worst_ratio`` is the largest observed quotient of the checked
    quantity against its claimed bound; ``passed`` iff it is at most
    ``1 + tolerance``.  ``extreme`` carries the raw extreme value when the
    ratio is a reparametrisation of it (the minimum eigenvalue for the
    nondegeneracy checks).
    """

    condition: str
    samples_checked: int
    worst_ratio: float
    worst_witness: tuple
    passed: bool
    extreme: Optional[float] = None
    tolerance: float = 1e-12

    def to_dict(self):
        return {
            "condition": self.condition,
            "samples_checked": self.samples_checked,
            "worst_ratio": self.worst_ratio,
            "worst_witness": [np.asarray(w).tolist() for w in self.worst_witness],
            "passed": self.passed,
            "extreme": self.extreme,
            "tolerance": self.tolerance,
        }


def _report(condition, ratios, witnesses, tol, extreme=None):
    ratios = np.asarray(ratios, dtype=float)
    # first index attaining the max: deterministic tie-breaking
    k = int(np.argmax(ratios))
    worst = float(ratios[k])
    return ConditionReport(condition, int(ratios.size), worst, tuple(w[k] for w in witnesses),
                           bool(worst <= 1.0 + tol), extreme, tol)


def _pointwise(fn, t, x, y):
    return np.stack([fn(float(ti), xi, yi) for ti, xi, yi in zip(t, x, y)])


def check_linear_growth(coeffs, sample_plan, constant=None, tol=1e-12):
    """Sampled check of ``|b| + ||sigma||_F <= C (1 + |x|)``."""
    c = coeffs.growth_constant if constant is None else constant
    t, x, y = sample_plan.points(coeffs.dim_state)
    b = _pointwise(coeffs.drift, t, x, y)
    s = _pointwise(coeffs.diffusion, t, x, y)
    lhs = np.linalg.norm(b, axis=1) + np.sqrt(np.sum(s ** 2, axis=(1, 2)))
    rhs = c * (1.0 + np.linalg.norm(x, axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(lhs == 0, 0.0, lhs / rhs)
    return _report("linear_growth", ratios, (t, x, y), tol)


def check_nondegeneracy(coeffs, sample_plan, floor=1e-8, strong=False, tol=1e-12):
    """Sampled check of uniform nondegeneracy.

    With ``strong=False`` the checked quantity is the smallest eigenvalue of
    ``sigma sigma^T`` (the infimum of ``lambda^T sigma sigma^T lambda`` over
    unit ``lambda``).  With ``strong=True`` (square ``sigma`` only) it is the
    smallest eigenvalue of the symmetric part of ``sigma``, i.e. the infimum
    of ``lambda^T sigma lambda``.  ``worst_ratio = floor / min_eigenvalue``.
    """
    if floor <= 0:
        raise ConfigurationError("floor must be positive")
    d, d1 = coeffs.dim_state, coeffs.dim_noise
    if strong and d != d1:
        raise ConfigurationError("strong nondegeneracy needs a square diffusion")
    t, x, y = sample_plan.points(d)
    s = _pointwise(coeffs.diffusion, t, x, y)
    if strong:
        m = 0.5 * (s + np.swapaxes(s, 1, 2))
    else:
        m = s @ np.swapaxes(s, 1, 2)
    eig = np.linalg.eigvalsh(m)[:, 0]
    with np.errstate(divide="ignore"):
        ratios = np.where(eig > 0, floor / np.where(eig > 0, eig, 1.0), np.inf)
    name = "nondegeneracy_strong" if strong else "nondegeneracy"
    rep = _report(name, ratios, (t, x, y), tol)
    return replace(rep, extreme=float(eig.min()))


def check_lipschitz(coeffs, sample_plan, variant, constant=None, target="diffusion",
                    tol=1e-12):
    """Worst sampled difference quotient in ``x`` against a Lipschitz bound.

    ``variant="lipschitz_x_local_y"`` bounds
    ``|f(t,x,y) - f(t,x',y)| <= C (1 + |y|^2) |x - x'|``;
    ``variant="lipschitz_sigma_global"`` bounds it by ``C |x - x'|``
    (the diffusion must not depend on ``y`` for that reading, but the check
    is applied as stated at the sampled ``y``).  ``target`` selects the
    drift or the diffusion (Frobenius norm).
    """
    if variant not in ("lipschitz_x_local_y", "lipschitz_sigma_global"):
        raise ConfigurationError(f"unknown Lipschitz variant {variant!r}")
    if target not in ("drift", "diffusion"):
        raise ConfigurationError("target must be 'drift' or 'diffusion'")
    c = constant
    if c is None:
        c = coeffs.lipschitz_constant if coeffs.lipschitz_constant is not None \
            else coeffs.growth_constant
    fn = coeffs.drift if target == "drift" else coeffs.diffusion
    t, x, y, x2 = sample_plan.points(coeffs.dim_state, pair=True)
    f1 = _pointwise(fn, t, x, y).reshape(t.size, -1)
    f2 = _pointwise(fn, t, x2, y).reshape(t.size, -1)
    num = np.linalg.norm(f1 - f2, axis=1)
    dist = np.linalg.norm(x - x2, axis=1)
    weight = 1.0 + np.sum(y ** 2, axis=1) if variant == "lipschitz_x_local_y" else 1.0
    den = c * weight * dist
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(num == 0, 0.0, num / den)
    return _report(variant, ratios, (t, x, x2, y), tol)
