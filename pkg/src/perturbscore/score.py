"""Score processes, the sup statistic, null fitting and the full test."""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .covariance import EPS_SING, CovarianceKernel
from .exceptions import DegenerateFitError, SupportViolationError, ValidationError
from .geometry import (EPS_EXCL, FLIP, critical_value, detect_singularities, manifold_summary,
                       tail_probability, tube_constants)
from .model import MixingDistribution, NullModel

DEFAULT_GRID = 401
_CHUNK = 4_000_000


class FitWarning(UserWarning):
    """A mixture fit merged or dropped components, or stopped early."""


class CappedResultWarning(UserWarning):
    """Sequential building hit the component cap while still rejecting."""


@dataclass(eq=False)
class ProcessEvaluation:
    """Score process values on a grid.

    ``normalized`` is NaN at the indices listed in ``excluded``.
    """

    grid: np.ndarray
    raw: np.ndarray
    normalized: np.ndarray
    diag: np.ndarray
    n: int
    excluded: np.ndarray

    def to_dict(self):
        return {"grid": self.grid.tolist(), "raw": self.raw.tolist(),
                "normalized": [None if np.isnan(v) else float(v) for v in self.normalized],
                "n": self.n, "excluded": self.excluded.tolist()}


@dataclass(eq=False)
class TestOutcome:
    """Result of one score test."""

    statistic: float
    critical_value: float
    p_value: float
    theta_hat: np.ndarray
    null: NullModel
    constants: object
    reject: bool
    alpha: float
    evaluation: ProcessEvaluation = field(repr=False, default=None)
    manifold: object = field(repr=False, default=None)

    def to_dict(self):
        return {
            "statistic": float(self.statistic),
            "critical_value": None if self.critical_value is None else float(self.critical_value),
            "p_value": None if self.p_value is None else float(self.p_value),
            "reject": bool(self.reject),
            "alpha": float(self.alpha),
            "theta_hat": np.asarray(self.theta_hat, float).tolist(),
            "null": {"support_points": self.null.mixing.support_points.tolist(),
                     "weights": self.null.mixing.weights.tolist(),
                     "estimate": self.null.estimate},
            "constants": None if self.constants is None else self.constants.to_dict(),
            "singularities": [] if self.manifold is None else [s.to_dict() for s in self.manifold.singularities],
        }


# -- grids and processes -----------------------------------------------------

def make_grid(domain, points=DEFAULT_GRID, singularities=(), eps_excl=EPS_EXCL):
    """Equispaced grid over the domain plus points flanking each flip.

    Flanking points sit at distance ``eps_excl * width`` from the flip on
    either side along each axis.
    """
    lo, hi = domain.bounds
    axes = [np.linspace(a, b, points) for a, b in zip(lo, hi)]
    if domain.dim == 1:
        grid = axes[0][:, None]
    else:
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.dim)
        grid = grid[domain.contains(grid, tol=1e-12 * domain.width)]
    eps = eps_excl * domain.width
    extra = []
    for s in singularities:
        if s.kind != FLIP:
            continue
        for axis in range(domain.dim):
            for sign in (-1.0, 1.0):
                p = s.location.copy()
                p[axis] += sign * eps
                if domain.contains(p)[0]:
                    extra.append(p)
    if extra:
        grid = np.concatenate([grid, np.array(extra)])
    order = np.lexsort(grid.T[::-1])
    return grid[order]


def _check_data(family, data):
    x = family.as_data(data)
    if len(x) == 0:
        raise ValidationError("data must contain at least one observation")
    if not np.all(family.in_support(x)):
        raise SupportViolationError("observation outside the family support")
    return x


def _ratios(family, null, x, thetas):
    """``psi(x_i; theta) / f(x_i) - 1`` as a ``(k, n)`` matrix."""
    logf = null.logpdf(x)
    if not np.all(np.isfinite(logf)):
        raise SupportViolationError("null density is zero at an observation")
    lp = family.logpdf_matrix(x, thetas)
    with np.errstate(over="ignore"):
        return np.expm1(lp - logf[None, :])


def _raw_scores(family, null, x, grid):
    step = max(1, _CHUNK // len(x))
    return np.concatenate([_ratios(family, null, x, grid[i:i + step]).sum(axis=1)
                           for i in range(0, len(grid), step)])


def _evaluate(data, model, kernel, grid, singularities, eps_excl):
    fam = model.family
    x = _check_data(fam, data)
    grid = np.atleast_2d(np.asarray(grid, float))
    if grid.shape[1] != model.dim:
        grid = grid.reshape(-1, model.dim)
    raw = _raw_scores(fam, model.null, x, grid)
    diag = kernel.diag(grid)
    n = len(x)
    eps = eps_excl * model.domain.width
    bad = diag < EPS_SING
    for s in singularities or ():
        bad |= np.linalg.norm(grid - s.location, axis=1) < eps * (1 - 1e-9)
    with np.errstate(invalid="ignore", divide="ignore"):
        norm = np.where(bad, np.nan, raw / np.sqrt(n * np.where(bad, 1.0, diag)))
    return ProcessEvaluation(grid, raw, norm, diag, n, np.flatnonzero(bad))


def score_process(data, model, grid=None, kernel=None, singularities=None, eps_excl=EPS_EXCL):
    """Score process ``S(theta) = sum_i [psi(x_i; theta) / f(x_i) - 1]`` with ``f`` fixed.

    Normalized values divide by ``sqrt(n C(theta, theta))``.

    Raises
    ------
    SupportViolationError
        If the null density vanishes at an observation.
    """
    if kernel is None:
        kernel = CovarianceKernel(model, kind="fixed")
    if singularities is None:
        singularities = detect_singularities(kernel)
    if grid is None:
        grid = make_grid(model.domain, DEFAULT_GRID, singularities, eps_excl)
    return _evaluate(data, model, kernel, grid, singularities, eps_excl)


def score_process_nuisance(data, model, grid=None, kernel=None, singularities=None, eps_excl=EPS_EXCL):
    """Score process at fitted null parameters, normalized by ``C*``."""
    if kernel is None:
        kernel = CovarianceKernel(model)
    if singularities is None:
        singularities = detect_singularities(kernel)
    if grid is None:
        grid = make_grid(model.domain, DEFAULT_GRID, singularities, eps_excl)
    return _evaluate(data, model, kernel, grid, singularities, eps_excl)


def statistic(evaluation):
    """``T = max S*`` over non-excluded grid points and its location.

    Ties go to the lexicographically smallest parameter.
    """
    vals = evaluation.normalized
    ok = ~np.isnan(vals)
    if not np.any(ok):
        raise ValidationError("no grid points left after excluding singularities")
    top = np.max(vals[ok])
    idx = np.flatnonzero(ok & (vals == top))
    grid = evaluation.grid
    best = idx[np.lexsort(grid[idx].T[::-1])[0]]
    return float(top), grid[best].copy()


# -- perturbation size and likelihood ratio --------------------------------

def _eta_hat_rows(U, tol=1e-12):
    """Row-wise maximizer of ``sum log(1 + eta u)`` over ``eta`` in ``[0, 1]``."""
    k = U.shape[0]
    s0 = U.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = np.sum(U / (1.0 + U), axis=1)
    d1 = np.where(np.any(U <= -1.0, axis=1), -np.inf, d1)
    eta = np.zeros(k)
    one = (s0 > 0) & (d1 >= 0)
    eta[one] = 1.0
    mid = np.flatnonzero((s0 > 0) & ~one)
    if mid.size:
        V = U[mid]
        lo = np.zeros(mid.size)
        hi = np.ones(mid.size)
        while np.max(hi - lo) > tol:
            m = 0.5 * (lo + hi)
            with np.errstate(divide="ignore", invalid="ignore"):
                g = np.sum(V / (1.0 + m[:, None] * V), axis=1)
            up = g > 0
            lo = np.where(up, m, lo)
            hi = np.where(up, hi, m)
        eta[mid] = 0.5 * (lo + hi)
    return eta


def eta_hat(data, model, theta):
    """Maximum likelihood perturbation size at a fixed ``theta``.

    Returns 0 when the score at ``eta = 0`` is not positive (including the
    flat case ``psi = f``), 1 when the likelihood still increases at
    ``eta = 1``, and otherwise the interior root found by bisection.
    """
    x = _check_data(model.family, data)
    t = np.atleast_2d(np.asarray(theta, float)).reshape(1, model.dim)
    return float(_eta_hat_rows(_ratios(model.family, model.null, x, t))[0])


def lrt_profile(data, model, grid):
    """Profile loglikelihood ratio ``l(eta_hat(theta), theta) - l(0)`` on a grid."""
    x = _check_data(model.family, data)
    grid = np.atleast_2d(np.asarray(grid, float)).reshape(-1, model.dim)
    out = np.empty(len(grid))
    step = max(1, _CHUNK // len(x))
    for i in range(0, len(grid), step):
        U = _ratios(model.family, model.null, x, grid[i:i + step])
        eta = _eta_hat_rows(U)
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.where(eta[:, None] > 0, np.log1p(eta[:, None] * U), 0.0).sum(axis=1)
        out[i:i + step] = np.maximum(vals, 0.0)
    return out


# -- null fitting ------------------------------------------------------------

def _loglik(comps, weights):
    g = weights @ comps
    with np.errstate(divide="ignore"):
        return float(np.sum(np.log(g))), g


def fit_weights(data, family, support_points, weights=None, tol=1e-10, max_iter=10_000, drop=1e-8,
                return_trace=False):
    """Maximum likelihood mixing weights for fixed support points by EM.

    Components whose weight falls below ``drop`` are removed and the rest
    renormalized.

    Returns
    -------
    MixingDistribution, or ``(MixingDistribution, loglik_trace)`` when
    ``return_trace`` is set.

    Raises
    ------
    DegenerateFitError
        If some observation has zero density under every component.
    """
    x = _check_data(family, data)
    pts = np.asarray(support_points, float)
    pts = pts.reshape(-1, 1) if pts.ndim <= 1 else pts
    for p in pts:
        family.check_theta(p)
    m = len(pts)
    comps = family.pdf_matrix(x, pts)
    if np.any(comps.sum(axis=0) <= 0):
        raise DegenerateFitError("an observation has zero density under every component")
    w = np.full(m, 1.0 / m) if weights is None else np.asarray(weights, float) / np.sum(weights)
    ll, g = _loglik(comps, w)
    trace = [ll]
    for _ in range(max_iter if m > 1 else 0):
        new = w * (comps @ (1.0 / g)) / len(x)
        new /= new.sum()
        change = np.max(np.abs(new - w))
        w = new
        ll, g = _loglik(comps, w)
        trace.append(ll)
        if change < tol:
            break
    keep = w >= drop
    if not np.any(keep):
        raise DegenerateFitError("every mixing weight vanished")
    mix = MixingDistribution.sorted(pts[keep], w[keep] / w[keep].sum())
    return (mix, np.array(trace)) if return_trace else mix


def stationarity(data, family, mixing):
    """Per-observation score residuals at each support point.

    Returns ``(r0, r1)`` with ``r0_j = mean(psi_j / g - 1)`` and
    ``r1_j = mean(d psi_j / g)``; both vanish at an interior maximum.
    """
    x = family.as_data(data)
    comps = family.pdf_matrix(x, mixing.support_points)
    g = mixing.weights @ comps
    r0 = np.mean(comps / g - 1.0, axis=1)
    r1 = np.mean(family.dpdf_matrix(x, mixing.support_points) / g[None, :, None], axis=1)
    return r0, r1


def _merge_close(pts, w, width):
    """Merge support points closer than ``1e-8`` (relative to ``width``)."""
    merged = False
    i = 0
    while i < len(pts):
        j = i + 1
        while j < len(pts):
            if np.linalg.norm(pts[i] - pts[j]) < 1e-8 * max(width, 1.0):
                tot = w[i] + w[j]
                pts[i] = (w[i] * pts[i] + w[j] * pts[j]) / tot if tot > 0 else pts[i]
                w[i] = tot
                pts = np.delete(pts, j, axis=0)
                w = np.delete(w, j)
                merged = True
            else:
                j += 1
        i += 1
    return pts, w, merged


def fit_full(data, family, initial_supports, weights=None, tol=1e-10, max_iter=20_000, stationarity_tol=1e-6,
             drop=1e-8):
    """Maximum likelihood weights and support points by EM.

    The M-step is the exact weighted maximum likelihood estimate of each
    component. Iteration stops once the loglikelihood changes by less than
    ``tol`` and the mean score residuals at every support point are below
    ``stationarity_tol``.

    Collapsing components (supports within ``1e-8``) are merged and
    negligible weights dropped; both emit a :class:`FitWarning`.
    """
    x = _check_data(family, data)
    pts = np.array(initial_supports, dtype=float)
    pts = pts.reshape(-1, 1) if pts.ndim <= 1 else pts.copy()
    for p in pts:
        family.check_theta(p)
    m = len(pts)
    if m < 1:
        raise ValidationError("need at least one initial support point")
    w = np.full(m, 1.0 / m) if weights is None else np.asarray(weights, float) / np.sum(weights)
    scale = float(np.max(np.abs(pts))) if pts.size else 1.0
    notes = []
    comps = family.pdf_matrix(x, pts)
    ll, g = _loglik(comps, w)
    if not np.isfinite(ll):
        raise DegenerateFitError("initial mixture has zero density at an observation")
    converged = False
    for it in range(max_iter):
        tau = (w[:, None] * comps) / g[None, :]
        w = tau.mean(axis=1)
        keep = w >= drop
        if not np.all(keep):
            if not np.any(keep):
                raise DegenerateFitError("all responsibilities vanished")
            notes.append(f"dropped {int(np.sum(~keep))} component(s) with negligible weight")
            tau, w, pts = tau[keep], w[keep], pts[keep]
            w = w / w.sum()
        pts = np.array([np.clip(family.m_step(x, t), family.lower, family.upper) for t in tau])
        pts, w, merged = _merge_close(pts, w, scale)
        if merged:
            notes.append("merged collapsing components")
        comps = family.pdf_matrix(x, pts)
        new_ll, g = _loglik(comps, w)
        if not np.isfinite(new_ll):
            raise DegenerateFitError("fitted mixture has zero density at an observation")
        small = abs(new_ll - ll) < tol
        ll = new_ll
        if small and (it % 10 == 0 or len(w) == 1):
            mix = MixingDistribution.sorted(pts, w)
            r0, r1 = stationarity(x, family, mix)
            if max(np.max(np.abs(r0)), np.max(np.abs(r1))) < stationarity_tol:
                converged = True
                break
    mix = MixingDistribution.sorted(pts, w)
    if not converged:
        notes.append("stationarity conditions not met within the iteration limit")
    for note in dict.fromkeys(notes):
        warnings.warn(note, FitWarning, stacklevel=2)
    return mix


def fit_null(data, null):
    """Refit the free parameters of a null model."""
    if null.estimate == "none":
        return null
    if null.estimate == "weights":
        mix = fit_weights(data, null.family, null.mixing.support_points, null.mixing.weights)
    else:
        mix = fit_full(data, null.family, null.mixing.support_points, null.mixing.weights)
    return NullModel(null.family, mix, null.estimate)


# -- the test ----------------------------------------------------------------

def calibrate(model, eps_excl=EPS_EXCL):
    """Kernel, manifold summary and tube constants for a (fitted) model."""
    kernel = CovarianceKernel(model)
    manifold = manifold_summary(kernel)
    constants = tube_constants(kernel, manifold, eps_excl) if model.dim <= 2 else None
    return kernel, manifold, constants


def run_test(data, model, alpha=0.05, grid=DEFAULT_GRID, eps_excl=EPS_EXCL, constants=None, calibration=None):
    """Fit the null, evaluate the normalized score process and calibrate ``T``.

    Parameters
    ----------
    data : array_like
    model : PerturbationModel
        The null's ``estimate`` flag decides which parameters are refitted.
    alpha : float
        Level in ``(0, 0.5]``.
    grid : int or array_like
        Points per axis, or explicit grid points.
    constants : TubeConstants, optional
        Precomputed constants (skips the geometry step).
    calibration : tuple, optional
        ``(kernel, manifold, constants)`` from :func:`calibrate`, reusable
        when the null is fully specified.
    """
    if not 0.0 < alpha <= 0.5:
        raise ValidationError(f"alpha must lie in (0, 0.5], got {alpha}")
    null = fit_null(data, model.null)
    fitted = model.with_null(null)
    if calibration is not None:
        kernel, manifold, cached = calibration
        constants = constants or cached
    else:
        kernel = CovarianceKernel(fitted)
        manifold = manifold_summary(kernel)
        if constants is None and fitted.dim <= 2:
            constants = tube_constants(kernel, manifold, eps_excl)
    if np.ndim(grid) == 0:
        grid = make_grid(fitted.domain, int(grid), manifold.singularities, eps_excl)
    ev = _evaluate(data, fitted, kernel, grid, manifold.singularities, eps_excl)
    T, theta = statistic(ev)
    if constants is None:
        crit = pval = None
        reject = False
    else:
        crit = critical_value(alpha, constants)
        pval = tail_probability(T, constants) if T > 0 else 1.0
        reject = bool(T >= crit)
    return TestOutcome(T, crit, pval, theta, null, constants, reject, alpha, ev, manifold)


@dataclass(eq=False)
class BuildResult:
    """Final mixture from sequential building plus its audit trail."""

    mixing: MixingDistribution
    trail: list
    capped: bool

    def to_dict(self):
        return {"support_points": self.mixing.support_points.tolist(),
                "weights": self.mixing.weights.tolist(), "capped": self.capped, "trail": self.trail}


def sequential_build(data, family, domain, alpha=0.05, grid=DEFAULT_GRID, max_components=5, eps_excl=EPS_EXCL):
    """Add components one at a time until the score test stops rejecting.

    Starts from a single component at the maximum likelihood estimate; each
    rejection adds a component at the maximizing ``theta`` and refits all
    weights and supports.
    """
    from .model import PerturbationModel

    if max_components < 1:
        raise ValidationError("max_components must be at least 1")
    x = _check_data(family, data)
    start = family.m_step(x, np.ones(len(x)))
    null = NullModel(family, MixingDistribution(start.reshape(1, -1), [1.0]), "full")
    trail = []
    capped = False
    while True:
        model = PerturbationModel(null, domain, family)
        out = run_test(x, model, alpha, grid, eps_excl)
        null = out.null
        k = out.constants
        trail.append({
            "m": null.m,
            "support_points": null.mixing.support_points.tolist(),
            "weights": null.mixing.weights.tolist(),
            "statistic": out.statistic,
            "critical_value": out.critical_value,
            "p_value": out.p_value,
            "theta_hat": out.theta_hat.tolist(),
            "kappa0": None if k is None else k.kappa0,
            "ell0": None if k is None else k.ell0,
            "reject": out.reject,
        })
        if not out.reject:
            break
        if null.m >= max_components:
            capped = True
            warnings.warn(f"component cap {max_components} reached while the test still rejects",
                          CappedResultWarning, stacklevel=2)
            break
        m = null.m
        pts = np.concatenate([null.mixing.support_points, out.theta_hat.reshape(1, -1)])
        w = np.concatenate([null.mixing.weights * m / (m + 1.0), [1.0 / (m + 1.0)]])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", FitWarning)
            mix = fit_full(x, family, pts, w)
        null = NullModel(family, mix, "full")
    return BuildResult(null.mixing, trail, capped)
