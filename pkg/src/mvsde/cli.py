"""Command-line entry point ``mvsde``.

Exit codes: 0 all checks passed, 2 usage or configuration error,
3 numeric failure, 4 a hard check of the experiment failed.
"""
import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import __version__
from .config import ExperimentConfig, config_hash
from .errors import (ConfigurationError, DegeneracyError, DomainError, NumericError,
                     StreamCollisionError)
from .experiments import contraction_report, mollify_converge, run_experiment, sup_moment_report

__all__ = ["main", "run", "mollify_converge", "EXIT_OK", "EXIT_USAGE", "EXIT_NUMERIC",
           "EXIT_ASSERTION"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_ASSERTION = 4

log = logging.getLogger("mvsde")


def _dump(obj):
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def run(config, out_dir=None, workers=1):
    """Run one experiment, write its files and return the manifest dict.

    Files: ``report.json``, any CSV tables, and ``manifest.json`` (the only
    file holding the wall time).
    """
    out = Path(out_dir or config.output_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    chash = config_hash(config)
    log.info("running %s (config %s) with %d worker(s)", config.experiment, chash[:12], workers)
    start = time.perf_counter()
    outcome = run_experiment(config, workers=workers)
    wall = time.perf_counter() - start
    (out / "report.json").write_text(_dump(outcome.report))
    csv_paths = []
    for name, text in sorted(outcome.tables.items()):
        (out / name).write_text(text)
        csv_paths.append(name)
    manifest = {
        "config_hash": chash,
        "version": __version__,
        "experiment": config.experiment,
        "wall_time": wall,
        "report": "report.json",
        "csv": csv_paths,
        "failures": list(outcome.failures),
        "status": "ok" if not outcome.failures else "assertion_failed",
    }
    (out / "manifest.json").write_text(_dump(manifest))
    log.info("%s finished in %.2f s: %s", config.experiment, wall, manifest["status"])
    return manifest


def _parser():
    p = argparse.ArgumentParser(prog="mvsde", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment described by a config file")
    r.add_argument("--config", required=True)
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--out", default=None)
    s = sub.add_parser("sup-moment", help="E exp(r sup W^2) in closed form")
    s.add_argument("--r", type=float, required=True)
    s.add_argument("--T", type=float, required=True)
    s.add_argument("--mc", action="store_true", help="also print a Monte Carlo estimate")
    s.add_argument("--paths", type=int, default=100_000)
    s.add_argument("--steps", type=int, default=10_000)
    s.add_argument("--seed", type=int, default=0)
    c = sub.add_parser("contraction", help="iterate the total-variation contraction")
    c.add_argument("--C", type=float, required=True)
    c.add_argument("--T", type=float, required=True)
    c.add_argument("--horizon", type=float, required=True)
    c.add_argument("--v0", type=float, default=2.0)
    return p


def _configure_logging():
    level = os.environ.get("MVSDE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    _configure_logging()
    args = _parser().parse_args(argv)
    try:
        if args.command == "run":
            config = ExperimentConfig.load(args.config)
            manifest = run(config, args.out, args.workers)
            sys.stdout.write(_dump(manifest))
            return EXIT_OK if manifest["status"] == "ok" else EXIT_ASSERTION
        if args.command == "sup-moment":
            rep = sup_moment_report(args.r, args.T, args.mc, args.paths, args.steps, args.seed)
            sys.stdout.write(_dump(rep))
            return EXIT_OK
        rep = contraction_report(args.C, args.T, args.horizon, args.v0)
        sys.stdout.write(_dump(rep))
        return EXIT_OK if rep["converged"] and rep["all_zero"] else EXIT_ASSERTION
    except (ConfigurationError, StreamCollisionError, OSError) as exc:
        log.error("%s", exc)
        sys.stderr.write(f"mvsde: usage error: {exc}\n")
        return EXIT_USAGE
    except (NumericError, DegeneracyError, DomainError) as exc:
        sys.stderr.write(f"mvsde: numeric failure: {exc}\n")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
