"""Command-line interface.

Every subcommand reads a configuration file and writes a JSON report with
the fields ``schema_version``, ``command``, ``config_echo``, ``results``,
``warnings`` and ``wall_clock_seconds``. Exit status is 0 on success, 1
for invalid input and 2 when a numerical procedure fails.
"""

import argparse
import json
import sys
import time
import warnings

import numpy as np

from .config import ingest_csv, parse_config
from .covariance import CovarianceKernel
from .exceptions import ConfigError, NumericalError, ValidationError
from .geometry import critical_value, detect_singularities, manifold_summary, tail_probability, tube_constants
from .harness import ExperimentSpec, run_suite, table_specs
from .oracle import field_grid, mc_null_distribution, mc_sup_tail
from .score import run_test, sequential_build

SCHEMA_VERSION = "1.0"
COMMANDS = ("test", "build", "constants", "tail", "critical", "oracle", "simulate")
NEEDS_DATA = ("test", "build")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(1)


def build_parser():
    parser = _Parser(prog="perturbscore", description="Score tests for a perturbation (extra mixture component).")
    parser.add_argument("command", choices=COMMANDS, help="operation to run")
    parser.add_argument("-c", "--config", required=True, help="configuration file")
    parser.add_argument("-d", "--data", help="CSV data file (test and build)")
    parser.add_argument("-o", "--output", help="report path; overrides [output] path; '-' for stdout")
    return parser


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _constants_for(cfg):
    if "constants" in cfg.present:
        return cfg.constants(), None
    if not cfg.has_model():
        raise ConfigError("need a [constants] section or a model ([null] and [perturbation])")
    kernel = CovarianceKernel(cfg.model())
    manifold = manifold_summary(kernel)
    return tube_constants(kernel, manifold, cfg["test"]["eps_excl"]), manifold


def dispatch(command, cfg, data=None):
    """Run one subcommand and return its ``results`` mapping."""
    t = cfg["test"]
    if command in NEEDS_DATA and data is None:
        raise ValidationError(f"'{command}' needs a data file (--data)")
    if command == "test":
        out = run_test(data, cfg.model(), t["alpha"], t["grid"], t["eps_excl"])
        return out.to_dict()
    if command == "build":
        model = cfg.model()
        res = sequential_build(data, model.family, model.domain, t["alpha"], t["grid"], t["max_components"],
                               t["eps_excl"])
        return res.to_dict()
    if command == "constants":
        k, manifold = _constants_for(cfg)
        out = {"constants": k.to_dict()}
        if manifold is not None:
            out["manifold"] = manifold.to_dict()
        return out
    if command == "tail":
        k, _ = _constants_for(cfg)
        c = cfg["tail"]["thresholds"] or np.linspace(0.5, 4.0, 36).tolist()
        return {"constants": k.to_dict(), "thresholds": list(c),
                "probabilities": np.atleast_1d(tail_probability(np.asarray(c), k)).tolist()}
    if command == "critical":
        k, _ = _constants_for(cfg)
        return {"constants": k.to_dict(), "alpha": t["alpha"], "critical_value": critical_value(t["alpha"], k)}
    if command == "oracle":
        mc = cfg["mc"]
        model = cfg.model()
        if mc["mode"] == "null":
            dist = mc_null_distribution(model, mc["n"], mc["replicates"], mc["seed"], alpha=t["alpha"],
                                        grid=t["grid"], eps_excl=t["eps_excl"])
            return {"mode": "null", **dist.to_dict()}
        kernel = CovarianceKernel(model)
        sing = detect_singularities(kernel)
        manifold = manifold_summary(kernel, sing)
        k = tube_constants(kernel, manifold, t["eps_excl"])
        c = critical_value(t["alpha"], k)
        grid = field_grid(model.domain, sing, t["grid"], t["eps_excl"])
        thresholds = cfg["tail"]["thresholds"] or np.linspace(0.5, 4.0, 36).tolist()
        curve = mc_sup_tail(kernel, grid, mc["replicates"], mc["seed"], thresholds, mc["jitter"])
        p, se = curve.exceedance(c)
        return {"mode": "field", "grid_points": len(grid), "constants": k.to_dict(), "critical_value": c,
                "tube_tail": tail_probability(np.asarray(thresholds), k).tolist(),
                "mc_tail_at_critical": float(p), "mc_se_at_critical": float(se), **curve.to_dict()}
    if command == "simulate":
        e = cfg["experiment"]
        seed = cfg["mc"]["seed"]
        if e["table"]:
            specs = table_specs(e["reps"], seed, t["alpha"], t["grid"])
        else:
            specs = [ExperimentSpec(int(m), eta, e["n"], e["reps"], t["alpha"], seed, t["grid"])
                     for m in e["models"] for eta in e["eta"]]
        doc = run_suite(specs)
        return {"summary": doc["summary"], "reports": doc["reports"]}
    raise ValidationError(f"unknown command {command!r}")


def _report(command, cfg, results, notes, elapsed):
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config_echo": cfg.echo() if cfg is not None else None,
        "results": results,
        "warnings": notes,
        "wall_clock_seconds": elapsed,
    }


def _write(doc, path):
    text = json.dumps(_jsonable(doc), indent=2, sort_keys=False) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def main(argv=None):
    args = build_parser().parse_args(argv)
    start = time.perf_counter()
    cfg = None
    try:
        with open(args.config, encoding="utf-8") as fh:
            cfg = parse_config(fh.read())
        data = ingest_csv(args.data) if args.data else None
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            results = dispatch(args.command, cfg, data)
        notes = list(cfg.warnings) + [str(w.message) for w in caught]
    except (ValidationError, OSError) as exc:
        sys.stderr.write(f"perturbscore: error: {exc}\n")
        return 1
    except NumericalError as exc:
        sys.stderr.write(f"perturbscore: numerical failure: {exc}\n")
        return 2
    path = args.output or cfg["output"]["path"]
    doc = _report(args.command, cfg, results, notes, time.perf_counter() - start)
    try:
        _write(doc, path)
    except OSError as exc:
        sys.stderr.write(f"perturbscore: error: {exc}\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
