"""Monte Carlo checks of the tube approximation and the score asymptotics.

Nothing here reuses the geometric constants: the field oracle samples the
limiting Gaussian process directly from its correlation matrix, and the
finite-sample oracle simulates data and reruns the whole pipeline.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh

from .covariance import CovarianceKernel
from .exceptions import IllConditionedKernelError, PerturbScoreError, ValidationError
from .geometry import EPS_EXCL, critical_value, detect_singularities
from .model import PerturbationModel, sample
from .score import DEFAULT_GRID, _evaluate, calibrate, lrt_profile, make_grid, run_test

JITTERS = (1e-10, 1e-8, 1e-6)


@dataclass(eq=False)
class TailCurve:
    """Empirical exceedance probabilities of a supremum.

    Attributes
    ----------
    thresholds, probabilities, standard_errors : ndarray
    replicates : int
    sups : ndarray
        Sorted replicate suprema, so further thresholds can be evaluated.
    jitter : float
        Diagonal jitter that the factorization needed.
    """

    thresholds: np.ndarray
    probabilities: np.ndarray
    standard_errors: np.ndarray
    replicates: int
    sups: np.ndarray = field(repr=False)
    jitter: float = 0.0
    rank: int = 0

    def exceedance(self, c):
        """Fraction of replicate suprema at or above ``c``, with its binomial SE."""
        c = np.asarray(c, float)
        p = 1.0 - np.searchsorted(self.sups, c, side="left") / self.replicates
        se = np.sqrt(p * (1 - p) / self.replicates)
        return p, se

    def to_dict(self):
        return {"thresholds": self.thresholds.tolist(), "probabilities": self.probabilities.tolist(),
                "standard_errors": self.standard_errors.tolist(), "replicates": self.replicates,
                "jitter": self.jitter, "rank": self.rank}


def field_factor(corr, jitter=JITTERS[0], rel_cut=1e-12):
    """Square-root factor ``L`` with ``L L' = corr + jitter I``.

    Eigen-directions with negligible variance are dropped, so ``L`` has as
    many columns as the numerical rank.

    Returns
    -------
    (L, jitter_used)

    Raises
    ------
    IllConditionedKernelError
        If the jittered matrix is still indefinite at jitter ``1e-6``.
    """
    corr = 0.5 * (np.asarray(corr, float) + np.asarray(corr, float).T)
    k = len(corr)
    for j in [x for x in JITTERS if x >= jitter] or [jitter]:
        vals, vecs = eigh(corr + j * np.eye(k))
        if np.all(np.isfinite(vals)) and vals[0] > 0:
            keep = vals > rel_cut * vals[-1]
            return vecs[:, keep] * np.sqrt(vals[keep]), j
    raise IllConditionedKernelError("correlation matrix is indefinite even after jitter 1e-6")


def _check_replicates(replicates):
    if replicates < 1:
        raise ValidationError("need at least one replicate")


def _replicate_normals(seed, start, stop, dim):
    out = np.empty((stop - start, dim))
    for i in range(start, stop):
        out[i - start] = np.random.default_rng([seed, i]).standard_normal(dim)
    return out


def mc_sup_tail(kernel, grid, replicates, seed, thresholds=None, jitter=JITTERS[0], max_cells=20_000_000):
    """Monte Carlo tail of ``max_i Z(theta_i)`` for the field with the kernel's correlation.

    Replicate ``i`` draws its normals from a generator seeded by
    ``(seed, i)``, so results do not depend on chunking.
    """
    _check_replicates(replicates)
    grid = np.atleast_2d(np.asarray(grid, float)).reshape(-1, kernel.dim)
    L, used = field_factor(kernel.corr_matrix(grid), jitter)
    return _tail_from_factor(L, used, replicates, seed, thresholds, max_cells)


def mc_sup_tail_corr(corr, replicates, seed, thresholds=None, jitter=JITTERS[0], max_cells=20_000_000):
    """As :func:`mc_sup_tail` for an explicit correlation matrix."""
    _check_replicates(replicates)
    L, used = field_factor(corr, jitter)
    return _tail_from_factor(L, used, replicates, seed, thresholds, max_cells)


def _tail_from_factor(L, used, replicates, seed, thresholds, max_cells):
    k, r = L.shape
    step = max(1, max_cells // max(k, 1))
    sups = np.empty(replicates)
    for a in range(0, replicates, step):
        b = min(a + step, replicates)
        Z = _replicate_normals(seed, a, b, r)
        sups[a:b] = np.max(Z @ L.T, axis=1)
    sups.sort()
    if thresholds is None:
        thresholds = np.linspace(0.5, 4.0, 36)
    thresholds = np.asarray(thresholds, float)
    curve = TailCurve(thresholds, np.empty(0), np.empty(0), replicates, sups, used, r)
    p, se = curve.exceedance(thresholds)
    curve.probabilities = np.atleast_1d(p)
    curve.standard_errors = np.atleast_1d(se)
    return curve


def field_grid(domain, singularities=(), points=DEFAULT_GRID, eps_excl=EPS_EXCL, radial=36, angular=112):
    """Grid for the field oracle.

    Boxes use the score-process grid. Disks use a polar grid about the
    centre (``radial x angular`` points, the centre itself excluded), which
    keeps the correlation matrix small enough to factorize.
    """
    if domain.shape == "disk":
        r = np.linspace(domain.radius / radial, domain.radius, radial)
        w = np.arange(angular) * 2 * np.pi / angular
        R, W = np.meshgrid(r, w, indexing="ij")
        pts = np.stack([R * np.cos(W), R * np.sin(W)], axis=-1).reshape(-1, 2) + domain.center
        return pts
    grid = make_grid(domain, points, singularities, eps_excl)
    keep = np.ones(len(grid), bool)
    for s in singularities:
        keep &= np.linalg.norm(grid - s.location, axis=1) > eps_excl * domain.width * (1 - 1e-9)
    return grid[keep]


@dataclass(eq=False)
class NullDistribution:
    """Finite-sample null distribution of ``T`` from repeated simulation."""

    statistics: np.ndarray
    critical_values: np.ndarray
    rejection_rates: np.ndarray
    standard_errors: np.ndarray
    failures: int
    replicates: int
    errors: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return {"statistics": self.statistics.tolist(), "critical_values": self.critical_values.tolist(),
                "rejection_rates": self.rejection_rates.tolist(), "standard_errors": self.standard_errors.tolist(),
                "failures": self.failures, "replicates": self.replicates, "errors": self.errors}


def mc_null_distribution(model, n, replicates, seed, critical_values=None, alpha=0.05, grid=DEFAULT_GRID,
                         eps_excl=EPS_EXCL):
    """Simulate data from the null, rerun the test, and tabulate ``T``.

    Parameters
    ----------
    model : PerturbationModel
        Data are drawn from its null (``eta`` is ignored).
    critical_values : array_like, optional
        Thresholds at which rejection rates are reported; defaults to the
        tube critical value at ``alpha`` for the data-generating null.

    Failed replicates are counted in ``failures`` rather than raised.
    """
    if replicates < 1:
        raise ValidationError("need at least one replicate")
    h0 = PerturbationModel(model.null, model.domain, model.family, 0.0)
    cache = calibrate(h0, eps_excl) if h0.null.n_free == 0 else None
    if critical_values is None:
        k = cache[2] if cache is not None else calibrate(h0, eps_excl)[2]
        critical_values = [critical_value(alpha, k)]
    crit = np.atleast_1d(np.asarray(critical_values, float))
    theta0 = h0.null.mixing.support_points[0]
    stats, errors = [], []
    for i in range(replicates):
        x = sample(h0, theta0, n, [seed, i])
        try:
            out = run_test(x, h0, alpha, grid, eps_excl, calibration=cache)
        except PerturbScoreError as exc:
            errors.append(f"replicate {i}: {type(exc).__name__}: {exc}")
            continue
        stats.append(out.statistic)
    stats = np.array(stats)
    done = max(len(stats), 1)
    rates = np.array([np.sum(stats >= c) / done for c in crit])
    se = np.sqrt(rates * (1 - rates) / done)
    return NullDistribution(stats, crit, rates, se, len(errors), replicates, errors)


def lrt_equivalence_report(model, n_values, replicates, seed, grid=DEFAULT_GRID, eps_excl=EPS_EXCL, margin=None):
    """Median over replicates of ``max_theta |l*(theta) - max(0, S*(theta))^2 / 2|``.

    Data are drawn from the (fixed) null of ``model``. Each replicate is a
    single sample of size ``max(n_values)`` and smaller sizes use its leading
    observations, so the trend across n is not swamped by fresh noise.

    Parameters
    ----------
    margin : float, optional
        Drop grid points closer than ``margin * width`` to a singular point.
        The quadratic approximation is only uniform where ``C(theta, theta)``
        stays away from zero. Next to a flip the fitted eta sits on its upper
        bound and the gap does not shrink with n. By default every point the
        score grid keeps is used.

    Returns
    -------
    list of dict
        One entry per sample size with the median and the raw discrepancies.
    """
    if model.null.n_free:
        raise ValidationError("the equivalence check needs a fully specified null")
    kernel = CovarianceKernel(model, kind="fixed")
    sing = detect_singularities(kernel)
    pts = make_grid(model.domain, grid, sing, eps_excl) if np.ndim(grid) == 0 else np.asarray(grid, float)
    if margin is not None:
        flat = pts.reshape(len(pts), -1)
        keep = np.ones(len(pts), bool)
        for sg in sing:
            keep &= np.linalg.norm(flat - sg.location, axis=1) >= margin * model.domain.width
        pts = pts[keep]
        if not len(pts):
            raise ValidationError("margin leaves no grid points")
    h0 = PerturbationModel(model.null, model.domain, model.family, 0.0)
    theta0 = model.null.mixing.support_points[0]
    # replicate i is one growing sample path; smaller n use its prefixes
    paths = [sample(h0, theta0, int(max(n_values)), [seed, i]) for i in range(replicates)]
    rows = []
    for n in n_values:
        disc = np.empty(replicates)
        for i in range(replicates):
            x = paths[i][:int(n)]
            ev = _evaluate(x, h0, kernel, pts, sing, eps_excl)
            ok = ~np.isnan(ev.normalized)
            lstar = lrt_profile(x, h0, ev.grid[ok])
            disc[i] = np.max(np.abs(lstar - 0.5 * np.maximum(ev.normalized[ok], 0.0) ** 2))
        rows.append({"n": int(n), "median": float(np.median(disc)), "discrepancies": disc.tolist()})
    return rows
