"""Named experiments driven by an :class:`~mvsde.config.ExperimentConfig`.

Each runner returns an :class:`Outcome`: a JSON-ready report, the CSV
tables to write next to it and the list of failed hard checks.  Reports
never contain wall-clock data, so equal configs give byte-equal files.

Experiment parameters live in ``config.params``:

``simulate``, ``moments``
    none (``stopping_radius`` is honoured).
``mollify-converge``
    ``levels`` (default ``[4, 8, 16, 32]``).
``sqrt-lift``
    none; ``diffusion_mode`` is forced to ``"lift"``.
``girsanov``
    optional ``compare``: ``{"name", "params"}`` of a second drift.
``uniqueness-probe``
    ``seed_b``, optional ``dt_b`` and ``compare`` (coefficients of run B),
    ``expect`` (``"same"`` or ``"different"``).
``contraction``
    ``C``, ``T``, optional ``v0``.
``timechange``
    optional ``K``, ``C0``, ``C1`` (derived from ``sigma(0, 0)`` otherwise).
``sup-moment``
    ``r``, ``T``, optional ``mc`` (bool), ``paths``, ``steps``.
"""
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import girsanov, sqrtlift, timechange
from .coeffs import KernelCoefficients, mean_field_diffusion
from .config import ExperimentConfig
from .distances import binned_tv, fd_edges
from .errors import ConfigurationError
from .families import builtin
from .simulate import apply_stopping, moment_report, simulate

__all__ = ["Outcome", "run_experiment", "mollify_converge", "RUNNERS"]

log = logging.getLogger("mvsde")


@dataclass
class Outcome:
    report: dict
    tables: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)


def _csv_text(bundle):
    buf = io.StringIO()
    d = bundle.trajectories.shape[2]
    buf.write(",".join(["step", "time", "particle_id"] + [f"x_{i}" for i in range(d)]) + "\n")
    for row in bundle.csv_rows():
        buf.write(f"{row[0]},{float(row[1])!r},{row[2]},"
                  + ",".join(repr(float(v)) for v in row[3:]) + "\n")
    return buf.getvalue()


def _terminal_summary(bundle):
    x = bundle.terminal.states
    n = x.shape[0]
    cov = np.atleast_2d(np.cov(x, rowvar=False)) if n > 1 else np.zeros((x.shape[1],) * 2)
    return {"N": n, "mean": x.mean(axis=0).tolist(), "cov": cov.tolist()}


def _simulate(config, workers):
    bundle = simulate(config, workers=workers)
    rep = {"experiment": config.experiment, "terminal": _terminal_summary(bundle),
           "steps": config.steps, "dt": config.dt}
    if config.stopping_radius is not None:
        exited = bundle.exit_steps >= 0
        rep["stopping"] = {"radius": config.stopping_radius,
                           "exit_fraction": float(exited.mean())}
    return Outcome(rep, {"trajectories.csv": _csv_text(bundle)})


def _moments(config, workers):
    bundle = simulate(config, workers=workers)
    rep = moment_report(bundle).to_dict()
    rep["experiment"] = config.experiment
    if config.stopping_radius is not None:
        rep["stopping"] = {"radius": config.stopping_radius,
                           "recorded_exit_fraction":
                               apply_stopping(bundle, config.stopping_radius).exit_fraction}
    return Outcome(rep, {"trajectories.csv": _csv_text(bundle)})


def _projected_se(samples, estimate):
    """SE of ``|mean(samples)|`` by the delta method along the mean direction."""
    n = samples.shape[0]
    norm = float(np.linalg.norm(estimate))
    if norm > 0:
        proj = samples @ (estimate.ravel() / norm)
    else:
        proj = samples[:, int(np.argmax(samples.std(axis=0)))]
    return float(np.std(proj, ddof=1) / math.sqrt(n))


def _paired(xa, xb):
    """Mean and covariance distances of two coupled ensembles with paired SEs."""
    n, d = xa.shape
    diff = xb - xa
    dmean = diff.mean(axis=0)
    ca, cb = xa - xa.mean(axis=0), xb - xb.mean(axis=0)
    prod = (cb[:, :, None] * cb[:, None, :] - ca[:, :, None] * ca[:, None, :]).reshape(n, d * d)
    dcov = prod.mean(axis=0) * n / max(n - 1, 1)
    if n < 2:
        return float(np.linalg.norm(dmean)), float("nan"), float(np.linalg.norm(dcov)), float("nan")
    return (float(np.linalg.norm(dmean)), _projected_se(diff, dmean),
            float(np.linalg.norm(dcov)), _projected_se(prod, dcov))


def mollify_converge(config, levels=(4, 8, 16, 32), workers=1):
    """Simulated-law distances between consecutive mollification levels.

    All levels share the seed, so particle ``i`` sees the same noise at
    every level and the mean distance has a paired standard error.  The
    same holds for the covariance distance.  The check passes when every
    distance beyond level 8 is at most the previous one plus ``2 SE``.  With ``N = 1`` the report carries a
    warning and no check is made.
    """
    levels = [int(n) for n in levels]
    if sorted(levels) != levels or len(levels) < 2:
        raise ConfigurationError("levels must be increasing and at least two", "params/levels")
    terminals = {}
    for n in levels:
        cfg = config.replace(mollifier_level=n)
        terminals[n] = simulate(cfg, workers=workers).terminal.states
        log.info("mollify-converge: level %d done", n)
    rows = []
    for lo, hi in zip(levels, levels[1:]):
        xa, xb = terminals[lo], terminals[hi]
        dist, se, cov_d, cov_se = _paired(xa, xb)
        edges = fd_edges(np.concatenate([xa[:, 0], xb[:, 0]]))
        rows.append({"from": lo, "to": hi, "mean_distance": dist, "mean_distance_se": se,
                     "cov_distance": cov_d, "cov_distance_se": cov_se,
                     "tv_hat": binned_tv(xa[:, 0], xb[:, 0], edges)})
    warning = config.N < 2
    checks = []
    for prev, cur in zip(rows, rows[1:]):
        if cur["from"] < 8:
            continue
        for key in ("mean_distance", "cov_distance"):
            se = math.hypot(prev[key + "_se"], cur[key + "_se"])
            ok = cur[key] <= prev[key] + 2 * se
            checks.append({"pair": [prev["to"], cur["to"]], "distance": key,
                           "nonincreasing": bool(ok)})
    monotone = None if warning else all(c["nonincreasing"] for c in checks)
    return {"levels": levels, "distances": rows, "checks": checks,
            "nonincreasing_beyond_8": monotone, "warning": "N < 2: no standard errors"
            if warning else None}


def _mollify(config, workers):
    rep = mollify_converge(config, config.params.get("levels", (4, 8, 16, 32)), workers)
    rep["experiment"] = config.experiment
    failures = [] if rep["nonincreasing_beyond_8"] in (True, None) else ["nonincreasing_beyond_8"]
    return Outcome(rep, failures=failures)


def _sqrt_lift(config, workers):
    cfg = config.replace(diffusion_mode="lift")
    bundle = simulate(cfg, workers=workers, record_diffusion=True)
    sig = bundle.diffusion_recorded
    lift = sqrtlift.build_lift(sig)
    defects = sqrtlift.lift_defects(lift, sig)
    dW_t = bundle.noise_increments
    dW_b = bundle.aux_increments()
    w0 = sqrtlift.synthesize_w0(lift, dW_t, dW_b, sources=("noise", "aux"))
    recon = sqrtlift.reconstruction_check(sig, lift, dW_t, w0)
    levy = [sqrtlift.levy_check(w0[:, j], bundle.horizon) for j in range(w0.shape[1])]
    worst = max(levy, key=lambda r: r.max_diag_reldev) if levy else None
    rep = {"experiment": config.experiment, "defects": defects,
           "diagnostics": sqrtlift.diagnostics(worst, recon),
           "max_relative_defect": recon.max_relative_defect,
           "paths": int(w0.shape[1])}
    failures = [k for k in ("idempotence", "symmetry") if defects[k] > 1e-10]
    if defects["sqrt"] > 1e-10 or defects["sigma_pT"] > 1e-10:
        failures.append("identities")
    if recon.max_relative_defect > 1e-10:
        failures.append("reconstruction")
    if "levy_diag" in config.tolerances and worst is not None:
        if worst.max_diag_reldev > config.tolerance("levy_diag"):
            failures.append("levy_diag")
    return Outcome(rep, failures=failures)


def _driftless(config):
    coeffs = config.build_coefficients()
    zero = builtin("constant", config.d, config.d1, c=0.0, s=0.0)
    return coeffs, KernelCoefficients.from_terms(
        config.d, config.d1, zero.drift_terms, coeffs.diffusion_terms,
        growth_constant=coeffs.growth_constant, y_free_diffusion=coeffs.y_free_diffusion)


def _girsanov(config, workers):
    coeffs, base = _driftless(config)
    bundle = simulate(config, workers=workers, coeffs=base)
    acc = girsanov.accumulate_logweight(bundle, coeffs)
    rho2 = None
    compare = config.params.get("compare")
    if compare is not None:
        other = builtin(compare["name"], config.d, config.d1, **compare.get("params", {}))
        rho2 = girsanov.estimate_rho2(bundle, coeffs, other,
                                      constant=float(config.params.get("constant", 6.0)))
    rep = girsanov.girsanov_report(acc=acc, rho2=rho2)
    rep.update(experiment=config.experiment, summary=acc.summary())
    failures = []
    mult = config.tolerance("se_mult")
    if abs(rep["E_gamma"] - 1.0) > mult * rep["E_gamma_se"]:
        failures.append("E_gamma")
    return Outcome(rep, failures=failures)


def _probe(config, workers):
    p = config.params
    if "seed_b" not in p:
        raise ConfigurationError("uniqueness-probe needs params.seed_b", "params/seed_b")
    changes = {"seed": int(p["seed_b"])}
    if "dt_b" in p:
        dt_b = float(p["dt_b"])
        changes.update(dt=dt_b, steps=int(round(config.horizon / dt_b)))
    if "compare" in p:
        changes["coefficients"] = {"name": p["compare"]["name"],
                                   "params": dict(p["compare"].get("params", {}))}
    config_b = config.replace(**changes)
    probe = girsanov.empirical_uniqueness_probe(config, config_b, workers=workers,
                                                alpha=config.tolerances.get("alpha", 0.01))
    rep = girsanov.girsanov_report(probe=probe)
    rep.update(experiment=config.experiment, probe=probe.to_dict())
    expect = p.get("expect", "same")
    failures = []
    if expect == "same" and probe.reject:
        failures.append("ks_reject")
    if expect == "different" and not probe.reject:
        failures.append("ks_accept")
    return Outcome(rep, failures=failures)


def _contraction(config, workers):
    p = config.params
    try:
        C, T = float(p["C"]), float(p["T"])
    except KeyError as exc:
        raise ConfigurationError(f"contraction needs params.{exc.args[0]}",
                                 f"params/{exc.args[0]}") from None
    rep = contraction_report(C, T, config.horizon, float(p.get("v0", 2.0)))
    rep["experiment"] = config.experiment
    failures = [] if rep["converged"] and rep["all_zero"] else ["contraction"]
    return Outcome(rep, failures=failures)


def contraction_report(C, T, horizon, v0=2.0):
    trace = girsanov.contraction_iterate(C, T, v0)
    rep = girsanov.girsanov_report(contraction=trace)
    rep.update(C=C, T=T, horizon=horizon, converged=trace.converged, diverged=trace.diverged,
               monotone=trace.monotone, iterations=trace.iterations,
               alpha=girsanov.smallness_alpha())
    try:
        ledger = girsanov.interval_induction(C, T, horizon, v0)
        rep.update(intervals=len(ledger.values) - 1, all_zero=ledger.all_zero,
                   induction=ledger.trace)
    except ConfigurationError as exc:
        rep.update(intervals=0, all_zero=False, induction=[], precondition=str(exc))
    return rep


def _timechange(config, workers):
    coeffs, base = _driftless(config)
    bundle = simulate(config, workers=workers, coeffs=base, record_diffusion=True)
    p = config.params
    if "K" in p and "C0" in p:
        K, C0 = float(p["K"]), float(p["C0"])
    else:
        sig0 = mean_field_diffusion(coeffs, 0.0, np.zeros(config.d), np.zeros((1, config.d)))
        K, C0 = timechange.constant_sigma_constants(sig0)
    rep = timechange.radial_comparison(bundle, K, C0, p.get("C1")).to_dict()
    rep["experiment"] = config.experiment
    failures = []
    if rep["violation_fraction"] > config.tolerance("violation"):
        failures.append("comparison")
    if rep["roundtrip_error"] > rep["max_grid_cell"]:
        failures.append("roundtrip")
    return Outcome(rep, failures=failures)


def sup_moment_report(r, T, mc=False, paths=100_000, steps=10_000, seed=0):
    rep = {"r": r, "T": T, "closed_form": timechange.sup_wiener_exp_moment(r, T)}
    if math.isinf(rep["closed_form"]):
        rep["closed_form"] = "inf"
    if mc:
        est, se = timechange.sup_wiener_exp_moment_mc(r, T, paths, steps, seed)
        rep.update(mc=est, mc_se=se, paths=paths, steps=steps)
    return rep


def _sup_moment(config, workers):
    p = config.params
    try:
        r, T = float(p["r"]), float(p["T"])
    except KeyError as exc:
        raise ConfigurationError(f"sup-moment needs params.{exc.args[0]}",
                                 f"params/{exc.args[0]}") from None
    rep = sup_moment_report(r, T, bool(p.get("mc", False)), int(p.get("paths", 100_000)),
                            int(p.get("steps", 10_000)), config.seed)
    rep["experiment"] = config.experiment
    failures = []
    if "mc" in rep and rep["closed_form"] != "inf" and "mc_rel" in config.tolerances:
        if abs(rep["mc"] / rep["closed_form"] - 1) > config.tolerance("mc_rel"):
            failures.append("mc")
    return Outcome(rep, failures=failures)


RUNNERS = {
    "simulate": _simulate,
    "moments": _moments,
    "mollify-converge": _mollify,
    "sqrt-lift": _sqrt_lift,
    "girsanov": _girsanov,
    "uniqueness-probe": _probe,
    "contraction": _contraction,
    "timechange": _timechange,
    "sup-moment": _sup_moment,
}


def run_experiment(config: ExperimentConfig, workers=1) -> Outcome:
    return RUNNERS[config.experiment](config, workers)
