"""Null models, parameter domains and the perturbation model."""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError, SupportViolationError, ValidationError
from .families import DensityFamily, as_thetas, density_eval  # noqa: F401

WEIGHT_TOL = 1e-12
ESTIMATE_MODES = ("none", "weights", "full")


class MixingDistribution:
    """Discrete mixing distribution with support points and weights.

    Parameters
    ----------
    support_points : array_like, shape (m,) or (m, d)
    weights : array_like, shape (m,)
    """

    def __init__(self, support_points, weights):
        pts = np.asarray(support_points, dtype=float)
        if pts.ndim <= 1:
            pts = pts.reshape(-1, 1)
        w = np.asarray(weights, dtype=float).reshape(-1)
        if len(w) != len(pts) or len(w) == 0:
            raise ValidationError("need one weight per support point and at least one point")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise ValidationError("mixing weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValidationError(f"mixing weights sum to {w.sum()!r}, not 1")
        if pts.shape[1] == 1:
            if np.any(np.diff(pts[:, 0]) <= 0):
                raise ValidationError("scalar support points must be strictly increasing")
        else:
            for i in range(len(pts)):
                if np.any(np.all(pts[i + 1:] == pts[i], axis=1)):
                    raise ValidationError("support points must be distinct")
        pts.setflags(write=False)
        w.setflags(write=False)
        self.support_points = pts
        self.weights = w

    @classmethod
    def sorted(cls, support_points, weights):
        """Build after sorting scalar supports ascending and renormalizing."""
        pts = np.asarray(support_points, float)
        pts = pts.reshape(-1, 1) if pts.ndim <= 1 else pts
        w = np.asarray(weights, float).reshape(-1)
        if pts.shape[1] == 1:
            order = np.argsort(pts[:, 0], kind="stable")
            pts, w = pts[order], w[order]
        return cls(pts, w / w.sum())

    @property
    def m(self):
        return len(self.weights)

    @property
    def dim(self):
        return self.support_points.shape[1]

    def __repr__(self):
        pts = self.support_points[:, 0].tolist() if self.dim == 1 else self.support_points.tolist()
        return f"MixingDistribution(support_points={pts}, weights={self.weights.tolist()})"

    def __eq__(self, other):
        return (isinstance(other, MixingDistribution)
                and np.array_equal(self.support_points, other.support_points)
                and np.array_equal(self.weights, other.weights))

    def __hash__(self):
        return hash((self.support_points.tobytes(), self.weights.tobytes()))


@dataclass(frozen=True, eq=False)
class NullModel:
    """Null density ``f(x; lambda) = sum_j beta_j psi(x; theta_j)``.

    ``estimate`` says which parameters are fitted from data: ``"none"`` for
    a fully specified density, ``"weights"`` for the mixing weights only,
    ``"full"`` for weights and support points.
    """

    family: DensityFamily
    mixing: MixingDistribution
    estimate: str = "none"

    def __post_init__(self):
        if self.estimate not in ESTIMATE_MODES:
            raise ValidationError(f"estimate must be one of {ESTIMATE_MODES}, got {self.estimate!r}")
        if self.mixing.dim != self.family.dim:
            raise DomainError("support point dimension does not match the family")
        for p in self.mixing.support_points:
            self.family.check_theta(p)

    @classmethod
    def fixed(cls, family, lam):
        """A single fully specified component ``f = psi(.; lam)``."""
        return cls(family, MixingDistribution(as_thetas(lam, family.dim), [1.0]), "none")

    @property
    def m(self):
        return self.mixing.m

    @property
    def is_fixed(self):
        return self.estimate == "none" or (self.estimate == "weights" and self.m == 1)

    @property
    def n_free(self):
        """Number of free nuisance parameters under ``estimate``."""
        if self.estimate == "none":
            return 0
        k = self.m - 1
        if self.estimate == "full":
            k += self.m * self.family.dim
        return k

    def with_mixing(self, mixing):
        return NullModel(self.family, mixing, self.estimate)

    def component_pdfs(self, x):
        return self.family.pdf_matrix(x, self.mixing.support_points)

    def pdf(self, x):
        """Vectorized null density at observations ``x`` (no support checks)."""
        return self.mixing.weights @ self.component_pdfs(x)

    def logpdf(self, x):
        lp = self.family.logpdf_matrix(x, self.mixing.support_points)
        with np.errstate(divide="ignore"):
            lw = np.log(self.mixing.weights)
        a = lp + lw[:, None]
        top = np.max(a, axis=0)
        safe = np.where(np.isfinite(top), top, 0.0)
        with np.errstate(divide="ignore"):
            return safe + np.log(np.sum(np.exp(a - safe), axis=0)) + np.where(np.isfinite(top), 0.0, top)

    def log_grad(self, x):
        """Gradient of ``log f`` in the free parameters, shape ``(n, p)``.

        Weights use the first ``m - 1`` coordinates (the last weight is one
        minus their sum); support point coordinates follow.
        """
        comps = self.component_pdfs(x)
        g = self.mixing.weights @ comps
        cols = []
        if self.estimate in ("weights", "full") and self.m > 1:
            cols.append(((comps[:-1] - comps[-1]) / g).T)
        if self.estimate == "full":
            dp = self.family.dpdf_matrix(x, self.mixing.support_points)
            scaled = self.mixing.weights[:, None, None] * dp / g[None, :, None]
            cols.append(np.transpose(scaled, (1, 0, 2)).reshape(len(g), -1))
        if not cols:
            return np.zeros((len(g), 0))
        return np.concatenate(cols, axis=1)

    def sample(self, size, rng):
        counts = rng.multinomial(size, self.mixing.weights)
        parts = [self.family.sample(p, int(c), rng) for p, c in zip(self.mixing.support_points, counts)]
        out = np.concatenate(parts) if parts else np.empty(0)
        return out[rng.permutation(size)]


def mixture_density(mixing, family, x):
    """Evaluate ``g(x; Q) = sum_j beta_j psi(x; theta_j)``.

    Examples
    --------
    >>> from perturbscore.families import Normal
    >>> q = MixingDistribution([-2.0, 2.0], [0.5, 0.5])
    >>> round(mixture_density(q, Normal(), 0.0), 7)
    0.053991
    """
    total = 0.0
    for p, w in zip(mixing.support_points, mixing.weights):
        total = total + w * np.asarray(density_eval(family, p, x))
    return float(total) if np.ndim(total) == 0 else total


def log_density_grad(null, x, lam=None):
    """Gradient of ``log f(x; lambda)`` in the free null parameters.

    Parameters
    ----------
    null : NullModel or DensityFamily
        With a bare family, ``lam`` gives the single component parameter and
        the gradient is taken with respect to it.
    x : array_like
        Observations.
    lam : array_like, optional

    Returns
    -------
    ndarray of shape ``(n, p)``, or ``(p,)`` for a single observation.

    Raises
    ------
    SupportViolationError
        If the density vanishes at any observation.
    """
    if isinstance(null, DensityFamily):
        null = NullModel(null, MixingDistribution(as_thetas(lam, null.dim), [1.0]), "full")
    xs = null.family.as_data(x)
    if np.any(null.pdf(xs) <= 0) or not np.all(null.family.in_support(xs)):
        raise SupportViolationError("null density is zero at an observation")
    out = null.log_grad(xs)
    single = np.ndim(x) == 0 or (null.family.data_dim > 1 and np.ndim(x) == 1)
    return out[0] if single else out


class Box:
    """Compact parameter box ``[lower, upper]``."""

    shape = "box"

    def __init__(self, lower, upper):
        lo = np.atleast_1d(np.asarray(lower, float))
        hi = np.atleast_1d(np.asarray(upper, float))
        if lo.shape != hi.shape or lo.ndim != 1 or lo.size == 0:
            raise DomainError("box bounds must be matching 1-D arrays")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise DomainError("box bounds must be finite")
        if np.any(lo >= hi):
            raise DomainError("box needs lower < upper on every axis")
        self.lower, self.upper = lo, hi

    @property
    def dim(self):
        return self.lower.size

    @property
    def width(self):
        return float(np.max(self.upper - self.lower))

    @property
    def bounds(self):
        return self.lower, self.upper

    def contains(self, points, tol=0.0):
        p = np.atleast_2d(points)
        return np.all((p >= self.lower - tol) & (p <= self.upper + tol), axis=-1)

    def interior(self, points, margin):
        p = np.atleast_2d(points)
        return np.all((p > self.lower + margin) & (p < self.upper - margin), axis=-1)

    def to_dict(self):
        return {"shape": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}

    def __repr__(self):
        return f"Box({self.lower.tolist()}, {self.upper.tolist()})"


class Disk:
    """Closed disk of radius ``radius`` about ``center`` in two dimensions."""

    shape = "disk"

    def __init__(self, radius, center=(0.0, 0.0)):
        self.radius = float(radius)
        self.center = np.asarray(center, float).reshape(2)
        if not np.isfinite(self.radius) or self.radius <= 0:
            raise DomainError("disk radius must be positive and finite")

    dim = 2

    @property
    def width(self):
        return 2.0 * self.radius

    @property
    def bounds(self):
        return self.center - self.radius, self.center + self.radius

    def contains(self, points, tol=0.0):
        p = np.atleast_2d(points)
        return np.linalg.norm(p - self.center, axis=-1) <= self.radius + tol

    def interior(self, points, margin):
        p = np.atleast_2d(points)
        return np.linalg.norm(p - self.center, axis=-1) < self.radius - margin

    def to_dict(self):
        return {"shape": "disk", "radius": self.radius, "center": self.center.tolist()}

    def __repr__(self):
        return f"Disk(radius={self.radius}, center={self.center.tolist()})"


def as_domain(domain):
    if isinstance(domain, (Box, Disk)):
        return domain
    lo, hi = domain
    return Box(lo, hi)


@dataclass(frozen=True, eq=False)
class PerturbationModel:
    """``(1 - eta) f(x; lambda) + eta psi(x; theta)`` with ``theta`` in a domain.

    Parameters
    ----------
    null : NullModel
    domain : Box, Disk or (lower, upper)
        Search domain for the perturbation parameter.
    family : DensityFamily, optional
        Perturbation family, defaulting to the null family.
    eta : float
        Perturbation size in ``[0, 1]``; only used for simulation.
    """

    null: NullModel
    domain: object
    family: DensityFamily = None
    eta: float = 0.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "domain", as_domain(self.domain))
        if self.family is None:
            object.__setattr__(self, "family", self.null.family)
        if not 0.0 <= self.eta <= 1.0:
            raise DomainError(f"eta must lie in [0, 1], got {self.eta}")
        if self.domain.dim != self.family.dim:
            raise DomainError("domain dimension does not match the perturbation family")
        if type(self.family) is not type(self.null.family) or self.family.data_dim != self.null.family.data_dim:
            raise SupportViolationError("perturbation family must share the null family's support")
        lo, hi = self.domain.bounds
        if np.any(lo < self.family.lower) or np.any(hi > self.family.upper):
            raise DomainError("parameter domain extends outside the family parameter box")

    @property
    def dim(self):
        return self.domain.dim

    def with_null(self, null):
        return PerturbationModel(null, self.domain, self.family, self.eta, self.extra)


def sample(model, theta0, n, seed):
    """Draw ``n`` observations from ``(1 - eta) f + eta psi(.; theta0)``.

    Deterministic given ``seed``.
    """
    if n < 1:
        raise ValidationError("n must be at least 1")
    theta0 = model.family.check_theta(theta0)
    rng = np.random.default_rng(seed)
    k = int(rng.binomial(n, model.eta))
    bulk = model.null.sample(n - k, rng)
    pert = model.family.sample(theta0, k, rng)
    data = np.concatenate([bulk, pert]) if k else bulk
    return data[rng.permutation(n)]
