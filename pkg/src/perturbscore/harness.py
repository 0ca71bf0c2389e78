"""Simulation experiments for the normal-mixture order test.

Data come from ``0.5 (1 - eta) N(-2, 1) + eta N(0, 1) + 0.5 (1 - eta) N(2, 1)``
and the null is the two-component mixture at ``-2`` and ``2``:

* model 1: weights and supports fixed at the truth (0.5, 0.5; -2, 2);
* model 2: weights estimated, supports fixed;
* model 3: weights and supports estimated, starting from the truth.
"""

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import PerturbScoreError, ValidationError
from .families import Normal
from .model import Box, MixingDistribution, NullModel, PerturbationModel
from .score import DEFAULT_GRID, calibrate, run_test

SCHEMA_VERSION = "1.0"
DOMAIN = (-4.0, 4.0)
_ESTIMATE = {1: "none", 2: "weights", 3: "full"}


@dataclass(frozen=True)
class ExperimentSpec:
    """One cell of the rejection-rate table."""

    model_id: int
    eta: float
    n: int
    reps: int
    alpha: float = 0.05
    seed: int = 0
    grid: int = DEFAULT_GRID
    domain: tuple = DOMAIN

    def __post_init__(self):
        if self.model_id not in _ESTIMATE:
            raise ValidationError(f"model id must be 1, 2 or 3, got {self.model_id}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValidationError("eta must lie in [0, 1]")
        if self.reps < 1 or self.n < 1:
            raise ValidationError("reps and n must be positive")
        if not 0.0 < self.alpha <= 0.5:
            raise ValidationError("alpha must lie in (0, 0.5]")


@dataclass(eq=False)
class ExperimentReport:
    spec: ExperimentSpec
    rejections: int
    completed: int
    rate: float
    standard_error: float
    statistics: list
    constants: list
    excluded: int
    errors: list = field(default_factory=list)
    wall_clock_seconds: float = 0.0

    def to_dict(self):
        out = {"spec": asdict(self.spec)}
        out["spec"]["domain"] = list(self.spec.domain)
        out.update({k: getattr(self, k) for k in ("rejections", "completed", "rate", "standard_error",
                                                  "statistics", "constants", "excluded", "errors",
                                                  "wall_clock_seconds")})
        return out


def null_model(model_id, domain=DOMAIN):
    """Perturbation model whose null matches the given model id."""
    mix = MixingDistribution([-2.0, 2.0], [0.5, 0.5])
    return PerturbationModel(NullModel(Normal(), mix, _ESTIMATE[model_id]), Box(*domain))


def simulate_data(eta, n, seed):
    """Draw from the three-component truth; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    comp = rng.choice(3, size=n, p=[0.5 * (1 - eta), eta, 0.5 * (1 - eta)])
    return rng.standard_normal(n) + np.array([-2.0, 0.0, 2.0])[comp]


def run_experiment(spec):
    """Run every replicate of one cell; replicate ``i`` uses seed ``(seed, i)``.

    Replicates raising a package error are excluded and listed in
    ``errors``; the rate is over completed replicates.
    """
    start = time.perf_counter()
    model = null_model(spec.model_id, spec.domain)
    cache = calibrate(model) if spec.model_id == 1 else None
    stats, consts, errors = [], [], []
    rejections = 0
    for i in range(spec.reps):
        x = simulate_data(spec.eta, spec.n, [spec.seed, i])
        try:
            out = run_test(x, model, spec.alpha, spec.grid, calibration=cache)
        except PerturbScoreError as exc:
            errors.append(f"replicate {i}: {type(exc).__name__}: {exc}")
            continue
        stats.append(out.statistic)
        rejections += int(out.reject)
        if cache is None or not consts:
            consts.append({"kappa0": out.constants.kappa0, "ell0": out.constants.ell0})
    done = len(stats)
    rate = rejections / done if done else float("nan")
    se = float(np.sqrt(rate * (1 - rate) / done)) if done else float("nan")
    return ExperimentReport(spec, rejections, done, rate, se, stats, consts, len(errors), errors,
                            time.perf_counter() - start)


def table_specs(reps=1000, seed=0, alpha=0.05, grid=DEFAULT_GRID):
    """The 18 cells: models 1-3 at ``n = 200`` and ``n = 1000``."""
    cells = [(200, (0.0, 0.1, 0.2)), (1000, (0.0, 0.05, 0.1))]
    return [ExperimentSpec(m, eta, n, reps, alpha, seed, grid)
            for n, etas in cells for m in (1, 2, 3) for eta in etas]


def summary_table(reports):
    """Rows of ``(model, n, eta, rejections, completed, rate)`` in input order."""
    return [{"model": r.spec.model_id, "n": r.spec.n, "eta": r.spec.eta, "rejections": r.rejections,
             "completed": r.completed, "rate": r.rate} for r in reports]


def format_table(rows):
    """Plain-text table with one line per model and one column per (n, eta)."""
    cols = sorted({(r["n"], r["eta"]) for r in rows})
    lines = ["model " + " ".join(f"n={n},eta={e:g}".rjust(14) for n, e in cols)]
    for m in sorted({r["model"] for r in rows}):
        cells = []
        for key in cols:
            hit = [r for r in rows if r["model"] == m and (r["n"], r["eta"]) == key]
            cells.append(f"{hit[0]['rate']:.3f}".rjust(14) if hit else " " * 14)
        lines.append(f"{m:<5} " + " ".join(cells))
    return "\n".join(lines)


def run_suite(specs, path=None):
    """Run a list of cells and optionally write one JSON document.

    Duplicate specs are run (and reported) twice.
    """
    specs = list(specs)
    if not specs:
        raise ValidationError("the suite needs at least one experiment")
    start = time.perf_counter()
    reports = [run_experiment(s) for s in specs]
    doc = {
        "schema_version": SCHEMA_VERSION,
        "reports": [r.to_dict() for r in reports],
        "summary": summary_table(reports),
        "wall_clock_seconds": time.perf_counter() - start,
    }
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
    return doc
