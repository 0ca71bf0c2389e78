"""scikit-learn style wrappers around the score test and sequential fitting."""

import numpy as np
from sklearn.base import BaseEstimator, DensityMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .families import get_family
from .model import Box, Disk, MixingDistribution, NullModel, PerturbationModel
from .score import _ratios, run_test, sequential_build


def _domain(lower, upper, radius):
    if radius is not None:
        return Disk(radius)
    return Box(lower, upper)


def _prepare(X, family):
    X = check_array(X, ensure_2d=False, dtype=float)
    if X.ndim == 2 and X.shape[1] == 1 and family.data_dim == 1:
        X = X[:, 0]
    return X


class ScoreTest(TransformerMixin, BaseEstimator):
    """Normalized score test for one extra component.

    Parameters
    ----------
    family : str
        Component family name (``"normal"``, ``"binomial2"``, ``"poisson"``,
        ``"mvnormal"``).
    supports, weights : array_like
        Null mixing distribution (weights default to equal).
    estimate : {"none", "weights", "full"}
        Null parameters refitted on ``fit``.
    lower, upper : array_like
        Box for the perturbation parameter; ``radius`` gives a centred disk
        instead.
    alpha : float
    grid : int
        Grid points per axis.
    """

    def __init__(self, family="normal", supports=(0.0,), weights=None, estimate="none", lower=-3.0, upper=3.0,
                 radius=None, dim=None, alpha=0.05, grid=401, eps_excl=1e-4):
        self.family = family
        self.supports = supports
        self.weights = weights
        self.estimate = estimate
        self.lower = lower
        self.upper = upper
        self.radius = radius
        self.dim = dim
        self.alpha = alpha
        self.grid = grid
        self.eps_excl = eps_excl

    def _model(self):
        fam = get_family(self.family, self.dim)
        pts = np.asarray(self.supports, float)
        w = np.full(len(pts), 1.0 / len(pts)) if self.weights is None else np.asarray(self.weights, float)
        null = NullModel(fam, MixingDistribution.sorted(pts, w), self.estimate)
        return PerturbationModel(null, _domain(self.lower, self.upper, self.radius), fam)

    def fit(self, X, y=None):
        model = self._model()
        X = _prepare(X, model.family)
        out = run_test(X, model, self.alpha, self.grid, self.eps_excl)
        self.outcome_ = out
        self.statistic_ = out.statistic
        self.critical_value_ = out.critical_value
        self.p_value_ = out.p_value
        self.reject_ = out.reject
        self.theta_hat_ = out.theta_hat
        self.null_ = out.null
        self.constants_ = out.constants
        self.grid_ = out.evaluation.grid
        self.n_features_in_ = 1 if X.ndim == 1 else X.shape[1]
        return self

    def transform(self, X):
        """Per-observation score contributions ``psi(x; theta) / f(x) - 1``.

        Returns an ``(n_samples, n_grid)`` array whose column sums are the
        raw score process on ``grid_``.
        """
        check_is_fitted(self, "outcome_")
        fam = self.null_.family
        X = _prepare(X, fam)
        return _ratios(fam, self.null_, fam.as_data(X), self.grid_).T


class SequentialMixture(DensityMixin, BaseEstimator):
    """Mixture whose order is chosen by repeated score tests.

    Parameters
    ----------
    family : str
    lower, upper : array_like
        Box searched for new components.
    alpha : float
    max_components : int
    grid : int
    """

    def __init__(self, family="normal", lower=-4.0, upper=4.0, radius=None, dim=None, alpha=0.05,
                 max_components=5, grid=401):
        self.family = family
        self.lower = lower
        self.upper = upper
        self.radius = radius
        self.dim = dim
        self.alpha = alpha
        self.max_components = max_components
        self.grid = grid

    def fit(self, X, y=None):
        fam = get_family(self.family, self.dim)
        X = _prepare(X, fam)
        res = sequential_build(X, fam, _domain(self.lower, self.upper, self.radius), self.alpha, self.grid,
                               self.max_components)
        self.family_ = fam
        self.mixing_ = res.mixing
        self.trail_ = res.trail
        self.capped_ = res.capped
        self.n_components_ = res.mixing.m
        self.weights_ = np.array(res.mixing.weights)
        self.supports_ = np.array(res.mixing.support_points)
        self.n_features_in_ = 1 if X.ndim == 1 else X.shape[1]
        return self

    def _null(self):
        check_is_fitted(self, "mixing_")
        return NullModel(self.family_, self.mixing_)

    def predict_proba(self, X):
        null = self._null()
        X = self.family_.as_data(_prepare(X, self.family_))
        comps = self.mixing_.weights[:, None] * null.component_pdfs(X)
        return (comps / comps.sum(axis=0)).T

    def predict(self, X):
        """Index of the most responsible component for each observation."""
        return np.argmax(self.predict_proba(X), axis=1)

    def score_samples(self, X):
        """Log density of each observation under the fitted mixture."""
        null = self._null()
        return null.logpdf(self.family_.as_data(_prepare(X, self.family_)))

    def score(self, X, y=None):
        return float(np.mean(self.score_samples(X)))

