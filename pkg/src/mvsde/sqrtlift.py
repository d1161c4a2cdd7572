"""Reduction of a rectangular diffusion to its symmetric square root.

Given ``sigma`` of shape ``d x d1`` (``d1 >= d``) with ``a = sigma sigma^T``
nondegenerate, let ``s = a^{1/2}`` (symmetric root) and
``p = s^{-1} sigma``.  Then ``p^T p`` is the orthogonal projector onto the
row space of ``sigma`` and, for independent Wiener increments ``dW~``
(``d``-dimensional) and ``dWbar`` (``d1``-dimensional),

    dW0 = p^T dW~ + (I - p^T p) dWbar

are increments of a ``d1``-dimensional Wiener process with
``sigma dW0 = s dW~`` exactly.  Everything here works on stacks of
matrices: leading axes are batch axes.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DegeneracyError, NumericError, StreamCollisionError

__all__ = [
    "LiftOperators",
    "sym_sqrt",
    "build_lift",
    "lift_defects",
    "synthesize_w0",
    "LevyReport",
    "levy_check",
    "ReconstructionReport",
    "reconstruction_check",
    "diagnostics",
]

SYMMETRY_TOL = 1e-10


def _default_floor(a):
    d = a.shape[-1]
    return 1e-8 * np.trace(a, axis1=-2, axis2=-1) / d


def _eigh_checked(a, floor):
    a = np.asarray(a, dtype=float)
    if a.shape[-1] != a.shape[-2]:
        raise ConfigurationError("matrix must be square")
    asym = np.abs(a - np.swapaxes(a, -1, -2)).max(initial=0.0)
    scale = np.abs(a).max(initial=0.0)
    if asym > 1e-12 * max(scale, 1.0):
        raise ConfigurationError(f"matrix is not symmetric (defect {asym:.3g})")
    a = 0.5 * (a + np.swapaxes(a, -1, -2))
    lam, vec = np.linalg.eigh(a)
    floor = _default_floor(a) if floor is None else np.asarray(floor, dtype=float)
    low = lam[..., 0]
    bad = low < floor
    if np.any(bad):
        idx = np.unravel_index(int(np.argmax(bad)), bad.shape) if bad.ndim else ()
        ev = float(low[idx]) if bad.ndim else float(low)
        raise DegeneracyError(f"smallest eigenvalue {ev:.3g} below floor", eigenvalue=ev,
                              location=idx)
    return lam, vec


def _compose(vec, diag):
    return (vec * diag[..., None, :]) @ np.swapaxes(vec, -1, -2)


def sym_sqrt(a, floor=None):
    """Symmetric positive definite square root via eigendecomposition.

    Parameters
    ----------
    a : array_like, shape (..., d, d)
        Symmetric matrices.
    floor : float or array, optional
        Smallest admissible eigenvalue; defaults to ``1e-8 * trace(a) / d``.

    Raises
    ------
    DegeneracyError
        If some eigenvalue is below ``floor``.
    """
    lam, vec = _eigh_checked(a, floor)
    return _compose(vec, np.sqrt(lam))


@dataclass(frozen=True)
class LiftOperators:
    """``a``, ``a^{1/2}``, ``p``, ``p^T p`` and ``I - p^T p`` for one or many ``sigma``."""

    a: np.ndarray
    sqrt_a: np.ndarray
    p: np.ndarray
    projector: np.ndarray
    complement: np.ndarray
    min_eig_a: np.ndarray

    @property
    def shape(self):
        return self.p.shape[-2:]


def build_lift(sigma, floor=None):
    """Construct :class:`LiftOperators` for ``sigma`` of shape ``(..., d, d1)``."""
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim < 2:
        raise ConfigurationError("sigma must be at least two-dimensional")
    d, d1 = sigma.shape[-2:]
    if d1 < d:
        raise ConfigurationError(f"need d1 >= d, got d={d}, d1={d1}")
    a = sigma @ np.swapaxes(sigma, -1, -2)
    a = 0.5 * (a + np.swapaxes(a, -1, -2))
    lam, vec = _eigh_checked(a, floor)
    sqrt_a = _compose(vec, np.sqrt(lam))
    inv_sqrt = _compose(vec, 1.0 / np.sqrt(lam))
    p = inv_sqrt @ sigma
    proj = np.swapaxes(p, -1, -2) @ p
    sym = np.abs(proj - np.swapaxes(proj, -1, -2)).max(initial=0.0)
    if sym > SYMMETRY_TOL:
        raise NumericError(f"p^T p is not symmetric (defect {sym:.3g})")
    comp = np.eye(d1) - proj
    return LiftOperators(a, sqrt_a, p, proj, comp, lam[..., 0])


def lift_defects(lift, sigma):
    """Worst defects of the algebraic identities, relative where a scale exists.

    Returns a dict with ``sqrt`` (``||s s - a|| / ||a||``), ``idempotence``
    (``||P P - P||``), ``symmetry`` (``||P - P^T||``) and ``sigma_pT``
    (``||sigma p^T - s|| / ||a||``), all Frobenius and maximised over the batch.
    """
    sigma = np.asarray(sigma, dtype=float)

    def fro(m):
        return np.sqrt(np.sum(m ** 2, axis=(-2, -1)))

    na = fro(lift.a)
    proj = lift.projector
    return {
        "sqrt": float(np.max(fro(lift.sqrt_a @ lift.sqrt_a - lift.a) / na)),
        "idempotence": float(np.max(fro(proj @ proj - proj))),
        "symmetry": float(np.max(fro(proj - np.swapaxes(proj, -1, -2)))),
        "sigma_pT": float(np.max(fro(sigma @ np.swapaxes(lift.p, -1, -2) - lift.sqrt_a) / na)),
    }


def synthesize_w0(lift, dW_tilde, dW_bar, sources=None):
    """Increments ``p^T dW~ + (I - p^T p) dWbar`` of the synthesised process.

    Parameters
    ----------
    lift : LiftOperators
        Either a single lift (applied at every step) or one per step with
        batch shape matching the leading axes of the increments.
    dW_tilde : array_like, shape (..., d)
    dW_bar : array_like, shape (..., d1)
    sources : pair of hashables, optional
        Identifiers of the RNG streams behind the two increment arrays
        (e.g. ``(seed, channel, offset)``).  Equal identifiers are rejected.

    Raises
    ------
    StreamCollisionError
        If the two inputs come from the same stream or share memory.
    """
    dW_tilde = np.asarray(dW_tilde, dtype=float)
    dW_bar = np.asarray(dW_bar, dtype=float)
    if sources is not None and sources[0] == sources[1]:
        raise StreamCollisionError(f"dW_tilde and dW_bar share the stream {sources[0]!r}")
    if np.shares_memory(dW_tilde, dW_bar):
        raise StreamCollisionError("dW_tilde and dW_bar share memory")
    d, d1 = lift.shape
    if dW_tilde.shape[-1] != d or dW_bar.shape[-1] != d1:
        raise ConfigurationError(f"increments must end in ({d},) and ({d1},)")
    if dW_tilde.shape[:-1] != dW_bar.shape[:-1]:
        raise ConfigurationError("dW_tilde and dW_bar must have the same number of steps")
    return (np.einsum("...ij,...i->...j", lift.p, dW_tilde)
            + np.einsum("...jk,...k->...j", lift.complement, dW_bar))


@dataclass(frozen=True)
class LevyReport:
    covariation: np.ndarray
    deviation: np.ndarray
    max_offdiag: float
    max_diag_reldev: float
    horizon: float
    steps: int


def levy_check(w0_increments, horizon):
    """Empirical quadratic covariation ``sum dW0 dW0^T`` compared with ``T I``."""
    w = np.asarray(w0_increments, dtype=float)
    if w.ndim != 2:
        raise ConfigurationError("increments must have shape (steps, d1)")
    cov = w.T @ w
    dev = cov - horizon * np.eye(w.shape[1])
    off = dev - np.diag(np.diag(dev))
    return LevyReport(cov, dev, float(np.abs(off).max(initial=0.0)),
                      float(np.abs(np.diag(dev)).max() / horizon), float(horizon), w.shape[0])


@dataclass(frozen=True)
class ReconstructionReport:
    max_defect: float
    max_relative_defect: float
    steps: int


def reconstruction_check(sigma_per_step, lift_per_step, dW_tilde, dW0):
    """Per-step defect of ``sigma dW0 - a^{1/2} dW~``.

    ``max_relative_defect`` divides each step's defect by
    ``||sigma||_F (|dW0| + |dW~|)``, the natural rounding scale.
    """
    sigma = np.asarray(sigma_per_step, dtype=float)
    dW_tilde = np.asarray(dW_tilde, dtype=float)
    dW0 = np.asarray(dW0, dtype=float)
    lhs = np.einsum("...ij,...j->...i", sigma, dW0)
    rhs = np.einsum("...ij,...j->...i", lift_per_step.sqrt_a, dW_tilde)
    defect = np.abs(lhs - rhs).max(axis=-1)
    scale = (np.sqrt(np.sum(sigma ** 2, axis=(-2, -1)))
             * (np.linalg.norm(dW0, axis=-1) + np.linalg.norm(dW_tilde, axis=-1)))
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(scale > 0, defect / np.where(scale > 0, scale, 1.0), defect)
    steps = dW0.shape[0] if dW0.ndim > 1 else 1
    return ReconstructionReport(float(defect.max(initial=0.0)), float(rel.max(initial=0.0)),
                                int(steps))


def diagnostics(levy=None, recon=None):
    """JSON-ready block with keys ``max_offdiag``, ``max_diag_reldev``, ``max_defect``, ``steps``."""
    out = {"max_offdiag": None, "max_diag_reldev": None, "max_defect": None, "steps": None}
    if levy is not None:
        out.update(max_offdiag=levy.max_offdiag, max_diag_reldev=levy.max_diag_reldev,
                   steps=levy.steps)
    if recon is not None:
        out["max_defect"] = recon.max_defect
        if out["steps"] is None:
            out["steps"] = recon.steps
    return out
