import numpy as np
import pytest

from mvsde import ExperimentConfig


def make_config(**overrides):
    """Small valid config; keyword arguments replace top-level fields."""
    doc = {
        "schema_version": 1,
        "experiment": "simulate",
        "coefficients": {"name": "brownian", "params": {}},
        "d": 1, "d1": 1, "N": 200, "steps": 10, "dt": 0.1, "horizon": 1.0,
        "seed": 1234,
        "initial_law": {"kind": "point", "mean": [0.0]},
        "tolerances": {"se_mult": 3.0},
    }
    doc.update(overrides)
    return ExperimentConfig.from_dict(doc)


@pytest.fixture
def config_factory():
    return make_config


def kernel_coeffs(drift, diffusion, d=1, d1=1, **kwargs):
    """Generic (non product-form) coefficients from scalar-friendly lambdas."""
    from mvsde import KernelCoefficients
    return KernelCoefficients(d, d1, drift, diffusion, **kwargs)


def se(x):
    x = np.asarray(x, dtype=float)
    return x.std(ddof=1) / np.sqrt(x.size)


def product_drift(left, right, d=1, s=1.0):
    """Product-form drift ``left(t, x) * right(t, y)`` with constant ``sigma = s I``.

    Averages cost O(N), unlike :func:`kernel_coeffs`.
    """
    import dataclasses
    from mvsde import builtin
    from mvsde.coeffs import ProductTerm
    base = builtin("constant", d, d, c=0.0, s=s)
    return dataclasses.replace(base, drift_kernel=lambda t, x, y: left(t, x) * right(t, y),
                               drift_terms=(ProductTerm(left, right),), builtin_tag=None,
                               params={})


_ACCEPTANCE = []


@pytest.fixture
def verdict():
    """Record one acceptance line, then fail the test if ``ok`` is false."""
    def record(name, ok, detail):
        line = f"{name} {'PASS' if ok else 'FAIL'}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
