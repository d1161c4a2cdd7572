"""Girsanov weights and the contraction behind uniqueness.

Part 1 reweights Brownian paths by the stochastic exponent of a constant
normalised drift c: the weights average to 1 and their second moment is
exp(c^2 T).

Part 2 bounds the total variation between two drifts through
sqrt(E rho^2 - 1) with E rho^2 <= sqrt(E exp(6 int |db|^2)).

Part 3 iterates v -> sqrt(exp(C T v^2) - 1).  For short intervals the
iterates collapse to zero (so two solutions agree on [0, T], then on
[T, 2T], and so on); for long ones they blow up.

Run:  python demos/03_girsanov_contraction.py
"""
import math

from mvsde import ExperimentConfig, builtin, simulate
from mvsde.girsanov import (accumulate_logweight, contraction_iterate, estimate_rho2,
                            interval_induction, smallness_alpha)

doc = {
    "schema_version": 1, "experiment": "simulate",
    "coefficients": {"name": "brownian", "params": {}},
    "d": 1, "d1": 1, "N": 50_000, "steps": 50, "dt": 0.02, "horizon": 1.0, "seed": 11,
    "initial_law": {"kind": "point", "mean": [0.0]}, "tolerances": {"se_mult": 3.0},
}
paths = simulate(ExperimentConfig.from_dict(doc))
for c in (0.25, 0.5, 1.0):
    s = accumulate_logweight(paths, builtin("constant", 1, 1, c=c)).summary()
    print(f"c={c:4}: E gamma = {s['E_gamma']:.4f} +- {s['E_gamma_se']:.4f}, "
          f"E gamma^2 = {s['E_gamma2']:.4f} (exact {math.exp(c * c):.4f})")

for delta in (0.05, 0.1, 0.2):
    est = estimate_rho2(paths, builtin("constant", 1, 1, c=0.0),
                        builtin("constant", 1, 1, c=delta))
    print(f"drift gap {delta}: E rho^2 <= {est.bound:.4f}, TV <= {est.tv_bound:.4f}")

print(f"smallness alpha = {smallness_alpha():.6f}")
for T in (1 / 24, 1 / 12, 0.2, 1.0):
    tr = contraction_iterate(6.0, T, 2.0)
    state = "converged" if tr.converged else ("diverged" if tr.diverged else "stalled")
    print(f"C=6, T={T:.4f}: {state} after {tr.iterations} iterations; "
          f"first iterates {[round(v, 4) for v in tr.iterates[:4]]}")
led = interval_induction(6.0, 1 / 24, 1.0)
print(f"induction over [0, 1]: {len(led.trace)} intervals, all zero = {led.all_zero}")
