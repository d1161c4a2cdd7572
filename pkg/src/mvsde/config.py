"""Experiment configuration: schema, validation and the initial law.

A config is a JSON document (``schema_version`` 1)::

    {
      "schema_version": 1,
      "experiment": "simulate",
      "coefficients": {"name": "linear", "params": {"a": -1.0, "beta": 0.5, "s": 0.2}},
      "d": 1, "d1": 1, "N": 100000, "steps": 1000, "dt": 0.001, "horizon": 1.0,
      "seed": 20240611,
      "initial_law": {"kind": "point", "mean": [1.0]},
      "tolerances": {"se_mult": 3.0},
      "stopping_radius": null,
      "record": 100,
      "diffusion_mode": "direct",
      "mollifier_level": null,
      "params": {}
    }

``seed`` and ``tolerances`` have no defaults.  ``steps * dt`` must equal
``horizon`` to within ``1e-12``.
"""
import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import jsonschema
import numpy as np

from . import rng
from .coeffs import Mollifier, mollify
from .errors import ConfigurationError
from .families import builtin

__all__ = ["SCHEMA", "EXPERIMENTS", "InitialLaw", "ExperimentConfig", "config_hash"]

SCHEMA_VERSION = 1

EXPERIMENTS = ("simulate", "moments", "mollify-converge", "sqrt-lift", "girsanov",
               "uniqueness-probe", "contraction", "timechange", "sup-moment")

_NUM_LIST = {"type": "array", "items": {"type": "number"}, "minItems": 1}

SCHEMA = {
    "type": "object",
    "required": ["schema_version", "experiment", "coefficients", "d", "d1", "N", "steps",
                 "dt", "horizon", "seed", "initial_law", "tolerances"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "experiment": {"enum": list(EXPERIMENTS)},
        "coefficients": {
            "type": "object",
            "required": ["name"],
            "additionalProperties": False,
            "properties": {"name": {"type": "string"}, "params": {"type": "object"}},
        },
        "d": {"type": "integer", "minimum": 1},
        "d1": {"type": "integer", "minimum": 1},
        "N": {"type": "integer", "minimum": 1},
        "steps": {"type": "integer", "minimum": 0},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "horizon": {"type": "number", "minimum": 0},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "stopping_radius": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "initial_law": {
            "type": "object",
            "required": ["kind", "mean"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["point", "gaussian"]},
                "mean": _NUM_LIST,
                "cov": {"type": "array", "items": _NUM_LIST},
            },
        },
        "output_dir": {"type": ["string", "null"]},
        "tolerances": {"type": "object", "additionalProperties": {"type": "number"}},
        "record": {"type": ["integer", "null"], "minimum": 0},
        "diffusion_mode": {"enum": ["direct", "lift"]},
        "mollifier_level": {"type": ["integer", "null"], "minimum": 1},
        "params": {"type": "object"},
    },
}


def _json_path(error):
    return "/".join(str(p) for p in error.absolute_path) or "<root>"


@dataclass(frozen=True)
class InitialLaw:
    """Point mass at ``mean`` or Gaussian ``N(mean, cov)``."""

    kind: str
    mean: np.ndarray
    cov: Optional[np.ndarray] = None

    @classmethod
    def point(cls, mean):
        return cls("point", np.atleast_1d(np.asarray(mean, dtype=float)))

    @classmethod
    def gaussian(cls, mean, cov):
        return cls("gaussian", np.atleast_1d(np.asarray(mean, dtype=float)),
                   np.atleast_2d(np.asarray(cov, dtype=float)))

    def validate(self, d):
        if self.mean.shape != (d,):
            raise ConfigurationError(f"initial mean must have length {d}", "initial_law/mean")
        if self.kind == "gaussian":
            if self.cov is None or self.cov.shape != (d, d):
                raise ConfigurationError(f"initial cov must be {d}x{d}", "initial_law/cov")
            if not np.allclose(self.cov, self.cov.T):
                raise ConfigurationError("initial cov must be symmetric", "initial_law/cov")
            if np.linalg.eigvalsh(self.cov)[0] < -1e-12:
                raise ConfigurationError("initial cov must be positive semidefinite",
                                         "initial_law/cov")

    def root(self):
        lam, vec = np.linalg.eigh(self.cov)
        return (vec * np.sqrt(np.clip(lam, 0.0, None))) @ vec.T

    def sample(self, lineage, n, start=0):
        """States of particles ``start .. start + n - 1`` of the lineage."""
        d = self.mean.size
        if self.kind == "point":
            return np.tile(self.mean, (n, 1))
        z = rng.normals(lineage.seed, rng.CHANNEL_INITIAL, 0, lineage.streams(n, start), d)
        return self.mean + z @ self.root().T

    def moment(self, power):
        """``E |x0|^power`` for ``power`` in {2, 4} (exact, not sampled)."""
        m = self.mean
        if self.kind == "point":
            return float(np.dot(m, m) ** (power / 2))
        c = self.cov
        m2 = float(m @ m + np.trace(c))
        if power == 2:
            return m2
        if power == 4:
            # E|X|^4 for Gaussian X: (E|X|^2)^2 + Var|X|^2
            var = 2.0 * np.trace(c @ c) + 4.0 * float(m @ c @ m)
            return float(m2 ** 2 + var)
        raise ValueError("power must be 2 or 4")

    def to_dict(self):
        out = {"kind": self.kind, "mean": self.mean.tolist()}
        if self.cov is not None:
            out["cov"] = self.cov.tolist()
        return out


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete description of one experiment."""

    experiment: str
    coefficients: dict
    d: int
    d1: int
    N: int
    steps: int
    dt: float
    horizon: float
    seed: int
    initial_law: InitialLaw
    tolerances: dict
    stopping_radius: Optional[float] = None
    output_dir: Optional[str] = None
    record: Optional[int] = None
    diffusion_mode: str = "direct"
    mollifier_level: Optional[int] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(f"unknown experiment {self.experiment!r}", "experiment")
        if self.N < 1:
            raise ConfigurationError("N must be at least 1", "N")
        if self.steps < 0:
            raise ConfigurationError("steps must be nonnegative", "steps")
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive", "dt")
        if abs(self.dt * self.steps - self.horizon) > 1e-12:
            raise ConfigurationError(
                f"dt * steps = {self.dt * self.steps!r} differs from horizon {self.horizon!r}",
                "horizon")
        if self.diffusion_mode not in ("direct", "lift"):
            raise ConfigurationError("diffusion_mode must be 'direct' or 'lift'",
                                     "diffusion_mode")
        if self.stopping_radius is not None and not self.stopping_radius > 0:
            raise ConfigurationError("stopping_radius must be positive", "stopping_radius")
        self.initial_law.validate(self.d)

    @property
    def n_record(self):
        return self.N if self.record is None else min(self.record, self.N)

    @classmethod
    def from_dict(cls, doc):
        try:
            jsonschema.validate(doc, SCHEMA)
        except jsonschema.ValidationError as exc:
            path = _json_path(exc)
            raise ConfigurationError(f"{path}: {exc.message}", path) from None
        law = doc["initial_law"]
        if law["kind"] == "point":
            initial = InitialLaw.point(law["mean"])
        else:
            if "cov" not in law:
                raise ConfigurationError("gaussian initial law needs cov", "initial_law/cov")
            initial = InitialLaw.gaussian(law["mean"], law["cov"])
        return cls(
            experiment=doc["experiment"],
            coefficients={"name": doc["coefficients"]["name"],
                          "params": dict(doc["coefficients"].get("params", {}))},
            d=doc["d"], d1=doc["d1"], N=doc["N"], steps=doc["steps"], dt=float(doc["dt"]),
            horizon=float(doc["horizon"]), seed=doc["seed"], initial_law=initial,
            tolerances=dict(doc["tolerances"]), stopping_radius=doc.get("stopping_radius"),
            output_dir=doc.get("output_dir"), record=doc.get("record"),
            diffusion_mode=doc.get("diffusion_mode", "direct"),
            mollifier_level=doc.get("mollifier_level"), params=dict(doc.get("params", {})),
        )

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(doc)

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "experiment": self.experiment,
            "coefficients": copy.deepcopy(self.coefficients),
            "d": self.d, "d1": self.d1, "N": self.N, "steps": self.steps, "dt": self.dt,
            "horizon": self.horizon, "seed": self.seed,
            "stopping_radius": self.stopping_radius,
            "initial_law": self.initial_law.to_dict(),
            "output_dir": self.output_dir,
            "tolerances": dict(self.tolerances),
            "record": self.record,
            "diffusion_mode": self.diffusion_mode,
            "mollifier_level": self.mollifier_level,
            "params": copy.deepcopy(self.params),
        }

    def replace(self, **changes):
        doc = self.to_dict()
        law = changes.pop("initial_law", None)
        doc.update(changes)
        out = ExperimentConfig.from_dict(doc)
        if law is not None:
            out = ExperimentConfig(**{**out.__dict__, "initial_law": law})
        return out

    def build_coefficients(self):
        coeffs = builtin(self.coefficients["name"], self.d, self.d1,
                         **self.coefficients.get("params", {}))
        if self.mollifier_level is not None:
            coeffs = mollify(coeffs, Mollifier(self.mollifier_level))
        return coeffs

    def tolerance(self, key):
        try:
            return float(self.tolerances[key])
        except KeyError:
            raise ConfigurationError(f"tolerance {key!r} missing", f"tolerances/{key}") from None


def config_hash(config):
    """SHA-256 of the canonical JSON form, ignoring ``output_dir``."""
    doc = config.to_dict()
    doc.pop("output_dir", None)
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def horizon_steps(horizon, dt):
    """Number of steps ``K`` with ``K dt == horizon`` (raises if not integral)."""
    k = round(horizon / dt)
    if abs(k * dt - horizon) > 1e-12 or not math.isfinite(horizon):
        raise ConfigurationError(f"horizon {horizon} is not a multiple of dt {dt}")
    return int(k)
