"""Interacting-particle Euler-Maruyama integration of McKean-Vlasov equations.

The law ``mu_t`` in the coefficients is replaced by the empirical measure
of the ``N`` particles.  One step maps ``X_i`` to

    X_i + b[t, X_i, mu_N] dt + sigma[t, X_i, mu_N] dW_i

for every alive particle; ``mu_N`` is the pre-step ensemble, stopped
particles included (they stay frozen at their exit state and keep
contributing to the measure).

Randomness: particle ``i`` uses stream ``lineage.offset + i`` of the
counter-based generator in :mod:`mvsde.rng`, step ``k`` uses counter word
``k``.  Results are therefore bit-identical for any number of worker
threads.
"""
import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import rng
from .coeffs import mean_field_diffusion, mean_field_drift
from .errors import ConfigurationError, NumericError
from .rng import StreamLineage
from .sqrtlift import sym_sqrt

__all__ = [
    "ParticleEnsemble",
    "PathBundle",
    "MomentReport",
    "StoppingResult",
    "euler_step",
    "simulate",
    "spawn_independent_copy",
    "apply_stopping",
    "chebyshev_check",
    "moment_report",
]


@dataclass
class ParticleEnsemble:
    """``N`` particle states at a common time.

    ``alive`` is False once a particle has been stopped; ``exit_step`` holds
    the step index at which that happened (-1 while alive).
    """

    states: np.ndarray
    time: float = 0.0
    alive: Optional[np.ndarray] = None
    lineage: StreamLineage = StreamLineage(0)
    step: int = 0
    exit_step: Optional[np.ndarray] = None

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        n = self.states.shape[0]
        if n == 0:
            raise ConfigurationError("ensemble must contain at least one particle")
        if self.alive is None:
            self.alive = np.ones(n, dtype=bool)
        if self.exit_step is None:
            self.exit_step = np.full(n, -1, dtype=np.int64)
        if not np.all(np.isfinite(self.states)):
            i = int(np.flatnonzero(~np.isfinite(self.states).all(axis=1))[0])
            raise NumericError(f"non-finite state for particle {i}", step=self.step, particle=i)

    @property
    def N(self):
        return self.states.shape[0]

    @property
    def d(self):
        return self.states.shape[1]


def _chunks(n, workers):
    workers = max(1, min(int(workers), n))
    edges = np.linspace(0, n, workers + 1).astype(int)
    return [(int(lo), int(hi)) for lo, hi in zip(edges[:-1], edges[1:]) if hi > lo]


def _effective_diffusion(coeffs, t, xs, ensemble_states, mode):
    sig = mean_field_diffusion(coeffs, t, xs, ensemble_states)
    if mode == "lift":
        return sym_sqrt(sig @ np.swapaxes(sig, -1, -2))
    return sig


def _increment(coeffs, t, xs, states, dt, noise, mode):
    b = mean_field_drift(coeffs, t, xs, states)
    sig = _effective_diffusion(coeffs, t, xs, states, mode)
    return b * dt + np.einsum("nij,nj->ni", sig, noise)


def _noise_dim(coeffs, mode):
    return coeffs.dim_state if mode == "lift" else coeffs.dim_noise


def _check_finite(new, step, lo=0):
    if not np.all(np.isfinite(new)):
        i = lo + int(np.flatnonzero(~np.isfinite(new).all(axis=1))[0])
        raise NumericError(f"non-finite state after step {step} for particle {i}",
                           step=step, particle=i)


def euler_step(ensemble, coeffs, dt, noise, mode="direct", workers=1):
    """One Euler-Maruyama step of the particle system.

    Parameters
    ----------
    ensemble : ParticleEnsemble
    coeffs : KernelCoefficients
    dt : float
        Positive step.
    noise : array_like, shape (N, d1)
        Wiener increments (already scaled, i.e. ``N(0, dt I)`` rows).
        In ``mode="lift"`` the shape is ``(N, d)`` and the diffusion used is
        ``(sigma sigma^T)^{1/2}``.
    workers : int
        Threads over particle chunks; the result does not depend on it.

    Returns
    -------
    ParticleEnsemble
        New ensemble at ``time + dt``; stopped particles are not moved.
    """
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    noise = np.asarray(noise, dtype=float)
    states = ensemble.states
    if states.shape[1] != coeffs.dim_state:
        raise ConfigurationError("ensemble dimension does not match the coefficients")
    if noise.shape != (ensemble.N, _noise_dim(coeffs, mode)):
        raise ConfigurationError(f"noise must have shape ({ensemble.N}, "
                                 f"{_noise_dim(coeffs, mode)}), got {noise.shape}")
    t = ensemble.time
    new = states.copy()

    def work(bounds):
        lo, hi = bounds
        # overflow is reported as NumericError below, not as a numpy warning
        with np.errstate(over="ignore", invalid="ignore"):
            incr = _increment(coeffs, t, states[lo:hi], states, dt, noise[lo:hi], mode)
        alive = ensemble.alive[lo:hi]
        new[lo:hi][alive] = states[lo:hi][alive] + incr[alive]

    chunks = _chunks(ensemble.N, workers)
    try:
        if len(chunks) == 1:
            work(chunks[0])
        else:
            with ThreadPoolExecutor(len(chunks)) as pool:
                list(pool.map(work, chunks))
    except NumericError as exc:
        if exc.step is None:
            exc.step = ensemble.step
        raise
    _check_finite(new, ensemble.step)
    return ParticleEnsemble(new, t + dt, ensemble.alive.copy(), ensemble.lineage,
                            ensemble.step + 1, ensemble.exit_step.copy())


@dataclass(frozen=True)
class PathBundle:
    """Recorded output of one simulation.

    Attributes
    ----------
    time_grid : ndarray (K+1,)
        ``t_k = k dt``.
    record_ids : ndarray (R,)
        Indices of the recorded particles.
    trajectories : ndarray (K+1, R, d)
    noise_increments : ndarray (K, R, m)
        Wiener increments used by the recorded particles (``m = d1``, or
        ``d`` in lift mode).
    terminal : ParticleEnsemble
        Full ensemble at the final time.
    moments : dict
        Per-step ensemble statistics over all ``N`` particles: ``mean``
        (K+1, d), ``m2`` and ``m4`` (K+1,) for ``E|X|^2`` and ``E|X|^4``.
    exit_steps : ndarray (N,)
        Stopping step per particle, -1 if never stopped.
    diffusion_recorded : ndarray (K, R, d, d1) or None
        ``sigma[t_k, X_k, mu_k]`` for recorded particles, when requested.
    """

    time_grid: np.ndarray
    record_ids: np.ndarray
    trajectories: np.ndarray
    noise_increments: np.ndarray
    terminal: ParticleEnsemble
    moments: dict
    exit_steps: np.ndarray
    dt: float
    lineage: StreamLineage
    diffusion_mode: str = "direct"
    diffusion_recorded: Optional[np.ndarray] = None
    initial_moments: dict = field(default_factory=dict)

    @property
    def steps(self):
        return self.time_grid.size - 1

    @property
    def horizon(self):
        return float(self.time_grid[-1])

    def aux_increments(self):
        """Independent ``d1``-dimensional increments on the auxiliary channel.

        Regenerated from the counter-based streams of the recorded particles;
        used as ``dWbar`` by the square-root lift.
        """
        k_steps = self.steps
        d1 = self.diffusion_recorded.shape[-1] if self.diffusion_recorded is not None \
            else self.noise_increments.shape[-1]
        streams = self.lineage.offset + self.record_ids
        out = np.empty((k_steps, self.record_ids.size, d1))
        for k in range(k_steps):
            out[k] = rng.normals(self.lineage.seed, rng.CHANNEL_AUX, k, streams, d1)
        return math.sqrt(self.dt) * out

    def csv_rows(self):
        k_steps, r, d = self.trajectories.shape
        for k in range(k_steps):
            t = self.time_grid[k]
            for j in range(r):
                yield [k, t, int(self.record_ids[j]), *self.trajectories[k, j]]

    def to_csv(self, path):
        """Write ``step, time, particle_id, x_0..x_{d-1}`` rows."""
        d = self.trajectories.shape[2]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "time", "particle_id"] + [f"x_{i}" for i in range(d)])
            for row in self.csv_rows():
                w.writerow([row[0], repr(float(row[1])), row[2]]
                           + [repr(float(v)) for v in row[3:]])


def _initial_ensemble(config, lineage):
    states = config.initial_law.sample(lineage, config.N)
    return ParticleEnsemble(states, 0.0, lineage=lineage)


def simulate(config, workers=1, coeffs=None, lineage=None, record_diffusion=False):
    """Run the particle system described by ``config``.

    Parameters
    ----------
    config : ExperimentConfig
    workers : int
        Worker threads per step (results do not depend on it).
    coeffs : KernelCoefficients, optional
        Overrides ``config.build_coefficients()``.
    lineage : StreamLineage, optional
        Defaults to ``StreamLineage(config.seed, 0)``.
    record_diffusion : bool
        Also store ``sigma[t, X, mu]`` along recorded paths.

    Returns
    -------
    PathBundle
    """
    coeffs = config.build_coefficients() if coeffs is None else coeffs
    if coeffs.dim_state != config.d or coeffs.dim_noise != config.d1:
        raise ConfigurationError("coefficient dimensions do not match the config")
    lineage = StreamLineage(config.seed, 0) if lineage is None else lineage
    mode = config.diffusion_mode
    n, k_steps, dt = config.N, config.steps, config.dt
    m = _noise_dim(coeffs, mode)
    rec = np.arange(config.n_record)
    r = rec.size

    ens = _initial_ensemble(config, lineage)
    traj = np.empty((k_steps + 1, r, config.d))
    noise_rec = np.empty((k_steps, r, m))
    diff_rec = np.empty((k_steps, r, config.d, config.d1)) if record_diffusion else None
    mean = np.empty((k_steps + 1, config.d))
    m2 = np.empty(k_steps + 1)
    m4 = np.empty(k_steps + 1)

    def stats(k, states):
        with np.errstate(over="ignore"):
            sq = np.sum(states ** 2, axis=1)
            mean[k] = states.mean(axis=0)
            m2[k] = sq.mean()
            m4[k] = (sq ** 2).mean()
        traj[k] = states[rec]

    stats(0, ens.states)
    radius = config.stopping_radius
    if radius is not None:
        out = np.linalg.norm(ens.states, axis=1) >= radius
        ens.alive[out] = False
        ens.exit_step[out] = 0

    chunks = _chunks(n, workers)
    streams = lineage.streams(n)
    sqdt = math.sqrt(dt)
    pool = ThreadPoolExecutor(len(chunks)) if len(chunks) > 1 else None
    try:
        for k in range(k_steps):
            t = k * dt
            states = ens.states
            new = states.copy()
            noise = np.empty((n, m))

            def work(bounds, k=k, t=t, states=states, new=new, noise=noise):
                lo, hi = bounds
                rng.normals(lineage.seed, rng.CHANNEL_NOISE, k, streams[lo:hi], m,
                            out=noise[lo:hi])
                noise[lo:hi] *= sqdt
                with np.errstate(over="ignore", invalid="ignore"):
                    incr = _increment(coeffs, t, states[lo:hi], states, dt, noise[lo:hi], mode)
                alive = ens.alive[lo:hi]
                new[lo:hi][alive] = states[lo:hi][alive] + incr[alive]

            try:
                if pool is None:
                    work(chunks[0])
                else:
                    list(pool.map(work, chunks))
            except NumericError as exc:
                if exc.step is None:
                    exc.step = k
                raise
            _check_finite(new, k)
            noise_rec[k] = noise[rec]
            if diff_rec is not None:
                diff_rec[k] = mean_field_diffusion(coeffs, t, states[rec], states)
            ens = ParticleEnsemble(new, (k + 1) * dt, ens.alive, lineage, k + 1, ens.exit_step)
            if radius is not None:
                out = ens.alive & (np.linalg.norm(new, axis=1) >= radius)
                ens.alive[out] = False
                ens.exit_step[out] = k + 1
            stats(k + 1, ens.states)
    finally:
        if pool is not None:
            pool.shutdown()

    return PathBundle(
        time_grid=np.arange(k_steps + 1) * dt,
        record_ids=rec,
        trajectories=traj,
        noise_increments=noise_rec,
        terminal=ens,
        moments={"mean": mean, "m2": m2, "m4": m4},
        exit_steps=ens.exit_step.copy(),
        dt=dt,
        lineage=lineage,
        diffusion_mode=mode,
        diffusion_recorded=diff_rec,
        initial_moments={"m2": config.initial_law.moment(2), "m4": config.initial_law.moment(4)},
    )


def spawn_independent_copy(config, offset=None, workers=1, primary=None, **kwargs):
    """Simulate an identically configured, independent copy of the ensemble.

    The copy uses the same seed with stream indices shifted by ``offset``
    (default ``N``), so its streams never meet those of ``primary``
    (default ``StreamLineage(config.seed, 0)``).

    Raises
    ------
    StreamCollisionError
        If the requested lineage overlaps the primary one.
    """
    primary = StreamLineage(config.seed, 0) if primary is None else primary
    offset = config.N if offset is None else offset
    copy_lineage = primary.shifted(offset)
    copy_lineage.require_disjoint(primary, config.N)
    return simulate(config, workers=workers, lineage=copy_lineage, **kwargs)


@dataclass(frozen=True)
class StoppingResult:
    """Recorded paths stopped at the first grid time ``|X| >= R``."""

    radius: float
    trajectories: np.ndarray
    exit_steps: np.ndarray
    exit_times: np.ndarray
    alive_history: np.ndarray
    exit_fraction: float


def apply_stopping(bundle, radius):
    """Freeze each recorded path at the first grid time its norm reaches ``radius``."""
    traj = bundle.trajectories
    k1, r, _ = traj.shape
    if math.isinf(radius):
        return StoppingResult(radius, traj.copy(), np.full(r, -1), np.full(r, np.nan),
                              np.ones((k1, r), dtype=bool), 0.0)
    hit = np.linalg.norm(traj, axis=2) >= radius
    ever = hit.any(axis=0)
    first = np.where(ever, np.argmax(hit, axis=0), -1)
    steps = np.arange(k1)[:, None]
    alive = (first[None, :] < 0) | (steps < first[None, :])
    frozen = traj.copy()
    for j in np.flatnonzero(ever):
        frozen[first[j]:, j] = traj[first[j], j]
    times = np.where(ever, bundle.time_grid[np.clip(first, 0, None)], np.nan)
    return StoppingResult(radius, frozen, first, times, alive, float(ever.mean()))


def chebyshev_check(bundle, radius):
    """Empirical ``P(sup_t |X_t| >= R)`` against ``C (1 + E|x0|^2) / (R - 1)^2``.

    ``C`` is measured on the same paths as ``E sup_t |X_t|^2 / (1 + E|x0|^2)``.
    """
    if radius <= 1:
        raise ConfigurationError("radius must exceed 1")
    sup2 = np.max(np.sum(bundle.trajectories ** 2, axis=2), axis=0)
    x0sq = float(np.mean(np.sum(bundle.trajectories[0] ** 2, axis=1)))
    c_t = float(sup2.mean() / (1.0 + x0sq))
    prob = float(np.mean(np.sqrt(sup2) >= radius))
    bound = c_t * (1.0 + x0sq) / (radius - 1.0) ** 2
    return {"probability": prob, "bound": bound, "C_T": c_t, "holds": prob <= bound}


@dataclass(frozen=True)
class MomentReport:
    """A priori moment diagnostics of one run.

    ``increment_exponent`` is the least-squares slope of
    ``log E|X_{t+h} - X_t|^4`` against ``log h``; ``None`` when the
    increments vanish or fewer than two ladder points exist.
    """

    sup_second_moment: float
    sup_fourth_moment: float
    increment_exponent: Optional[float]
    constants_witness: dict
    ladder: list

    def to_dict(self):
        return {
            "sup_m2": self.sup_second_moment,
            "sup_m4": self.sup_fourth_moment,
            "increment_exponent": self.increment_exponent,
            "constants_witness": dict(self.constants_witness),
            "ladder": [dict(p) for p in self.ladder],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def moment_report(bundle, ladder_points=4):
    """Moment bounds and fourth-moment increment scaling for a bundle.

    The ladder uses ``h = dt * 2**j`` for ``j < ladder_points`` (truncated
    to ``h <= T``); at each ``h`` all overlapping windows of all recorded
    paths are averaged.
    """
    traj = bundle.trajectories
    k_steps = traj.shape[0] - 1
    ladder = []
    for j in range(ladder_points):
        lag = 2 ** j
        if lag > k_steps:
            break
        inc = traj[lag:] - traj[:-lag]
        m4 = float(np.mean(np.sum(inc ** 2, axis=2) ** 2))
        h = lag * bundle.dt
        ladder.append({"h": h, "m4": m4, "ratio": m4 / h ** 2})
    exponent = None
    if len(ladder) >= 2 and all(p["m4"] > 0 for p in ladder):
        hs = np.log([p["h"] for p in ladder])
        ms = np.log([p["m4"] for p in ladder])
        exponent = float(np.polyfit(hs, ms, 1)[0])
    sup2 = float(bundle.moments["m2"].max())
    sup4 = float(bundle.moments["m4"].max())
    e2 = bundle.initial_moments.get("m2", float(bundle.moments["m2"][0]))
    e4 = bundle.initial_moments.get("m4", float(bundle.moments["m4"][0]))
    witness = {
        "C2": sup2 / (1.0 + e2),
        "C4": sup4 / (1.0 + e4),
        "C_inc": max((p["ratio"] for p in ladder), default=None),
    }
    return MomentReport(sup2, sup4, exponent, witness, ladder)
