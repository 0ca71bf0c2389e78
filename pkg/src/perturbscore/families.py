"""Component density families.

A family evaluates ``psi(x; theta)`` for many parameters at once: methods
suffixed ``_matrix`` take observations ``x`` of shape ``(n,)`` (scalar
data) or ``(n, s)`` and parameters of shape ``(k, d)`` and return arrays
with the parameter axis first.
"""

import math

import numpy as np
from scipy.special import gammaln

from .exceptions import DomainError
from .quadrature import composite_rule, tensor_rule

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def _series(x, coef, cut):
    """``sum_k coef(k) x^k`` for ``k >= 2``, used where ``|x| < cut``."""
    acc = np.zeros_like(x)
    for k in range(len(coef) + 1, 1, -1):
        acc = (acc + coef[k - 2]) * x
    return acc * x


_EXP_COEF = [1.0 / math.factorial(k) for k in range(2, 21)]
# log1p(x) - x = sum_{k>=2} (-1)^(k+1) x^k / k; 0.1^k / k < 1e-17 by k = 16
_LOG_COEF = [(-1.0) ** (k + 1) / k for k in range(2, 17)]


def _expm1_minus_x(x):
    """``exp(x) - 1 - x`` without cancellation near zero."""
    x = np.asarray(x, float)
    small = np.abs(x) < 0.5
    series = _series(np.where(small, x, 0.0), _EXP_COEF, 0.5)
    with np.errstate(over="ignore"):
        return np.where(small, series, np.expm1(np.where(small, 0.0, x)) - x)


def _log1p_minus_x(x):
    """``log(1 + x) - x`` without cancellation near zero."""
    x = np.asarray(x, float)
    small = np.abs(x) < 0.1
    series = _series(np.where(small, x, 0.0), _LOG_COEF, 0.1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(small, series, np.log1p(np.where(small, 0.0, x)) - x)


def as_thetas(theta, dim):
    """Coerce a parameter or a list of parameters to shape ``(k, dim)``."""
    arr = np.asarray(theta, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1) if dim == 1 else arr.reshape(1, -1)
    if arr.shape[-1] != dim:
        raise DomainError(f"parameter has dimension {arr.shape[-1]}, expected {dim}")
    return arr


class DensityFamily:
    """Interface shared by every component family.

    Attributes
    ----------
    dim : int
        Parameter dimension ``d``.
    data_dim : int
        Observation dimension ``s``.
    lower, upper : ndarray
        Parameter box (possibly infinite).
    support : ndarray or None
        Finite list of support values for discrete families, ``None`` for
        continuous ones.
    """

    name = "family"
    dim = 1
    data_dim = 1
    support = None

    @property
    def discrete(self):
        return self.support is not None or getattr(self, "_counting", False)

    def check_theta(self, theta):
        theta = np.atleast_1d(np.asarray(theta, float))
        if theta.shape[-1] != self.dim:
            raise DomainError(f"{self.name}: parameter must have dimension {self.dim}")
        if np.any(~np.isfinite(theta)) or np.any(theta < self.lower) or np.any(theta > self.upper):
            raise DomainError(f"{self.name}: parameter {theta} outside [{self.lower}, {self.upper}]")
        return theta

    def as_data(self, x):
        x = np.asarray(x, dtype=float)
        if self.data_dim == 1:
            return x.reshape(-1)
        return x.reshape(-1, self.data_dim)

    def in_support(self, x):
        x = self.as_data(x)
        if self.data_dim == 1:
            return np.isfinite(x)
        return np.all(np.isfinite(x), axis=-1)

    # Vectorized kernels; subclasses implement these.
    def logpdf_matrix(self, x, thetas):
        raise NotImplementedError

    def pdf_matrix(self, x, thetas):
        with np.errstate(divide="ignore", under="ignore"):
            return np.exp(self.logpdf_matrix(x, thetas))

    def dlogpdf_matrix(self, x, thetas):
        """Gradient of ``log psi`` in ``theta``; shape ``(k, n, d)``."""
        raise NotImplementedError

    def dpdf_matrix(self, x, thetas):
        return self.pdf_matrix(x, thetas)[..., None] * self.dlogpdf_matrix(x, thetas)

    def log_remainder(self, x, thetas, anchors):
        """Second-order Taylor remainder of ``log psi`` about paired anchors.

        Row ``i`` holds ``log psi(x; t_i) - log psi(x; s_i) - (t_i - s_i) . grad log psi(x; s_i)``.
        Subclasses override this with cancellation-free forms.
        """
        thetas = np.asarray(thetas, float)
        anchors = np.asarray(anchors, float)
        grad = self.dlogpdf_matrix(x, anchors)
        lin = np.sum((thetas - anchors)[:, None, :] * grad, axis=-1)
        return self.logpdf_matrix(x, thetas) - self.logpdf_matrix(x, anchors) - lin

    def pdf(self, x, theta):
        return self.pdf_matrix(x, as_thetas(theta, self.dim))[0]

    def sample(self, theta, size, rng):
        raise NotImplementedError

    def m_step(self, x, resp):
        """Weighted maximum likelihood estimate of a single component."""
        raise NotImplementedError

    def integration_rule(self, theta_lower, theta_upper, supports):
        """Nodes and weights covering the integrands ``psi psi' / f``.

        ``supports`` are the component locations of the null density, and
        ``theta_lower``/``theta_upper`` bound the perturbation parameters.
        """
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"

    def __eq__(self, other):
        return type(self) is type(other) and self.__dict__ == other.__dict__

    def __hash__(self):
        return hash(type(self).__name__)


class Binomial2(DensityFamily):
    """Binomial(2, theta) on ``{0, 1, 2}`` with ``theta`` in ``[0, 1]``."""

    name = "binomial2"
    support = np.array([0.0, 1.0, 2.0])
    lower = np.array([0.0])
    upper = np.array([1.0])

    def in_support(self, x):
        x = self.as_data(x)
        return (x == 0) | (x == 1) | (x == 2)

    def pdf_matrix(self, x, thetas):
        x = self.as_data(x)
        t = np.asarray(thetas, float)[:, 0][:, None]
        out = np.where(x == 0, (1 - t) ** 2, np.where(x == 1, 2 * t * (1 - t), t * t))
        return np.where(self.in_support(x)[None, :], out, 0.0)

    def logpdf_matrix(self, x, thetas):
        with np.errstate(divide="ignore"):
            return np.log(self.pdf_matrix(x, thetas))

    def dpdf_matrix(self, x, thetas):
        x = self.as_data(x)
        t = np.asarray(thetas, float)[:, 0][:, None]
        d = np.where(x == 0, -2 * (1 - t), np.where(x == 1, 2 - 4 * t, 2 * t))
        return np.where(self.in_support(x)[None, :], d, 0.0)[..., None]

    def dlogpdf_matrix(self, x, thetas):
        x = self.as_data(x)
        t = np.asarray(thetas, float)[:, 0][:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            return (x / t - (2 - x) / (1 - t))[..., None]

    def log_remainder(self, x, thetas, anchors):
        x = self.as_data(x)
        t = np.asarray(thetas, float)[:, 0][:, None]
        a = np.asarray(anchors, float)[:, 0][:, None]
        if np.any((a <= 0) | (a >= 1)):
            return super().log_remainder(x, thetas, anchors)
        d = t - a
        return x[None, :] * _log1p_minus_x(d / a) + (2 - x[None, :]) * _log1p_minus_x(-d / (1 - a))

    def sample(self, theta, size, rng):
        return rng.binomial(2, float(np.ravel(theta)[0]), size=size).astype(float)

    def m_step(self, x, resp):
        x = self.as_data(x)
        return np.array([np.dot(resp, x) / (2.0 * resp.sum())])

    def integration_rule(self, theta_lower, theta_upper, supports):
        return self.support.copy(), np.ones(3)

    # Closed forms with lambda factored out of the centred differences.
    @staticmethod
    def cov_closed(a, b, lam):
        s = a[..., 0] - lam[0]
        t = b[..., 0] - lam[0]
        v = lam[0] * (1 - lam[0])
        st = s * t
        return 2 * st / v + (st / v) ** 2

    @staticmethod
    def cov_nuisance_closed(a, b, lam):
        v = lam[0] * (1 - lam[0])
        return ((a[..., 0] - lam[0]) * (b[..., 0] - lam[0]) / v) ** 2

    @staticmethod
    def mean_score(theta, lam):
        """``E_theta`` of the score of ``lam``: ``2(theta - lam) / (lam (1 - lam))``."""
        v = lam[0] * (1 - lam[0])
        return (2 * (theta[..., 0] - lam[0]) / v)[..., None]

    @staticmethod
    def fisher(lam):
        return np.array([[2.0 / (lam[0] * (1 - lam[0]))]])


class ExponentialFamily(DensityFamily):
    """Natural exponential family ``exp(theta . x - phi(theta)) psi0(x)``.

    Parameters
    ----------
    cumulant, cumulant_grad, cumulant_hess : callable
        ``phi`` and its first two derivatives, vectorized over rows of a
        ``(k, d)`` array (``cumulant_hess`` returns ``(k, d, d)``).
    log_base : callable
        ``log psi0(x)``.
    sampler : callable
        ``sampler(theta, size, rng)``.
    dim : int
        Parameter (and observation) dimension.
    lower, upper : array_like
        Natural parameter box.
    rule : callable, optional
        ``rule(theta_lower, theta_upper, supports) -> (nodes, weights)`` for
        numerical integration over the sample space.
    name : str
    """

    def __init__(self, cumulant, cumulant_grad, cumulant_hess, log_base, sampler, dim=1,
                 lower=-np.inf, upper=np.inf, rule=None, name="expfam"):
        self.cumulant = cumulant
        self.cumulant_grad = cumulant_grad
        self.cumulant_hess = cumulant_hess
        self.log_base = log_base
        self.sampler = sampler
        self.dim = self.data_dim = dim
        self.lower = np.broadcast_to(np.asarray(lower, float), (dim,)).copy()
        self.upper = np.broadcast_to(np.asarray(upper, float), (dim,)).copy()
        self._rule = rule
        self.name = name

    def _dot(self, x, thetas):
        x = self.as_data(x)
        if self.data_dim == 1:
            return thetas[:, 0][:, None] * x[None, :]
        return thetas @ x.T

    def logpdf_matrix(self, x, thetas):
        thetas = np.asarray(thetas, float)
        return self._dot(x, thetas) - self.cumulant(thetas)[:, None] + self.log_base(self.as_data(x))[None, :]

    def dlogpdf_matrix(self, x, thetas):
        x = self.as_data(x)
        thetas = np.asarray(thetas, float)
        xs = x[:, None] if self.data_dim == 1 else x
        return xs[None, :, :] - self.cumulant_grad(thetas)[:, None, :]

    def mean(self, thetas):
        return self.cumulant_grad(np.asarray(thetas, float))

    def fisher(self, lam):
        return self.cumulant_hess(np.asarray(lam, float).reshape(1, -1))[0]

    def bregman(self, thetas, anchors):
        """``phi(t) - phi(s) - (t - s) . grad phi(s)`` for paired rows."""
        d = thetas - anchors
        return (self.cumulant(thetas) - self.cumulant(anchors)
                - np.sum(d * self.cumulant_grad(anchors), axis=-1))

    def log_remainder(self, x, thetas, anchors):
        x = self.as_data(x)
        b = self.bregman(np.asarray(thetas, float), np.asarray(anchors, float))
        return np.broadcast_to(-b[:, None], (len(b), len(x)))

    def cumulant_cross(self, a, b, lam):
        """``phi(a + b - lam) + phi(lam) - phi(a) - phi(b)`` for paired rows."""
        lam = np.broadcast_to(lam, a.shape)
        return self.cumulant(a + b - lam) + self.cumulant(lam) - self.cumulant(a) - self.cumulant(b)

    def sample(self, theta, size, rng):
        return self.sampler(np.asarray(theta, float), size, rng)

    def m_step(self, x, resp):
        x = self.as_data(x)
        target = resp @ (x[:, None] if self.data_dim == 1 else x) / resp.sum()
        return self.mean_inverse(target)

    def mean_inverse(self, target, start=None, tol=1e-13, max_iter=100):
        """Solve ``phi'(theta) = target`` by damped Newton steps."""
        theta = np.zeros(self.dim) if start is None else np.array(start, float)
        for _ in range(max_iter):
            g = self.cumulant_grad(theta[None, :])[0] - target
            if np.max(np.abs(g)) < tol:
                break
            step = np.linalg.solve(self.cumulant_hess(theta[None, :])[0], g)
            theta = theta - np.clip(step, -1.0, 1.0)
        return theta

    def integration_rule(self, theta_lower, theta_upper, supports):
        if self._rule is None:
            raise NotImplementedError(f"{self.name}: no sample-space integration rule supplied")
        return self._rule(theta_lower, theta_upper, supports)


def _normal_rule(theta_lower, theta_upper, supports, margin=10.0, width=1.0, order=12):
    lo_t = np.asarray(theta_lower, float)
    hi_t = np.asarray(theta_upper, float)
    supports = np.atleast_2d(supports)
    smin = supports.min(axis=0)
    smax = supports.max(axis=0)
    lo = np.minimum.reduce([2 * lo_t - smax, smin, lo_t]) - margin
    hi = np.maximum.reduce([2 * hi_t - smin, smax, hi_t]) + margin
    panels = np.ceil((hi - lo) / width).astype(int)
    if lo.size == 1:
        return composite_rule(lo[0], hi[0], int(panels[0]), order)
    return tensor_rule(lo, hi, panels, order=order // 2 + 2)


class Normal(ExponentialFamily):
    """Unit-variance normal with mean ``theta``."""

    def __init__(self):
        super().__init__(
            cumulant=lambda t: 0.5 * np.sum(t * t, axis=-1),
            cumulant_grad=lambda t: np.asarray(t, float),
            cumulant_hess=lambda t: np.broadcast_to(np.eye(1), (len(t), 1, 1)),
            log_base=lambda x: -0.5 * x * x - _LOG_SQRT_2PI,
            sampler=lambda t, size, rng: rng.normal(float(np.ravel(t)[0]), 1.0, size=size),
            dim=1,
            rule=_normal_rule,
            name="normal",
        )

    def logpdf_matrix(self, x, thetas):
        x = self.as_data(x)
        diff = x[None, :] - np.asarray(thetas, float)[:, 0][:, None]
        return -0.5 * diff * diff - _LOG_SQRT_2PI

    def bregman(self, thetas, anchors):
        d = thetas - anchors
        return 0.5 * np.sum(d * d, axis=-1)

    def cumulant_cross(self, a, b, lam):
        return np.sum((a - lam) * (b - lam), axis=-1)

    def mean_inverse(self, target, start=None, **kw):
        return np.asarray(target, float).reshape(1)

    def __eq__(self, other):
        return type(self) is type(other)

    def __hash__(self):
        return hash("normal")

    def __repr__(self):
        return "Normal()"


class MultivariateNormal(ExponentialFamily):
    """Identity-covariance normal in ``dim`` dimensions with mean ``theta``."""

    def __init__(self, dim=2):
        self._d = dim
        super().__init__(
            cumulant=lambda t: 0.5 * np.sum(t * t, axis=-1),
            cumulant_grad=lambda t: np.asarray(t, float),
            cumulant_hess=lambda t: np.broadcast_to(np.eye(dim), (len(t), dim, dim)),
            log_base=lambda x: -0.5 * np.sum(x * x, axis=-1) - dim * _LOG_SQRT_2PI,
            sampler=lambda t, size, rng: rng.normal(size=(size, dim)) + np.ravel(t)[None, :],
            dim=dim,
            rule=_normal_rule,
            name="mvnormal",
        )

    def logpdf_matrix(self, x, thetas):
        x = self.as_data(x)
        thetas = np.asarray(thetas, float)
        sq = np.sum(x * x, axis=1)[None, :] - 2 * thetas @ x.T + np.sum(thetas * thetas, axis=1)[:, None]
        return -0.5 * np.maximum(sq, 0.0) - self.dim * _LOG_SQRT_2PI

    def bregman(self, thetas, anchors):
        d = thetas - anchors
        return 0.5 * np.sum(d * d, axis=-1)

    def cumulant_cross(self, a, b, lam):
        return np.sum((a - lam) * (b - lam), axis=-1)

    def mean_inverse(self, target, start=None, **kw):
        return np.asarray(target, float).reshape(self.dim)

    def __eq__(self, other):
        return type(self) is type(other) and self.dim == other.dim

    def __hash__(self):
        return hash(("mvnormal", self.dim))

    def __repr__(self):
        return f"MultivariateNormal(dim={self.dim})"


def _poisson_rule(theta_lower, theta_upper, supports):
    lam_lo = float(np.min(supports))
    top = max(np.exp(2 * theta_upper[0] - lam_lo), np.exp(np.max(supports)), np.exp(theta_upper[0]))
    xmax = int(np.ceil(top + 12 * np.sqrt(top) + 30))
    nodes = np.arange(xmax + 1, dtype=float)
    return nodes, np.ones_like(nodes)


class Poisson(ExponentialFamily):
    """Poisson with natural parameter ``theta = log(mean)``."""

    _counting = True

    def __init__(self):
        super().__init__(
            cumulant=lambda t: np.exp(t[..., 0]),
            cumulant_grad=lambda t: np.exp(np.asarray(t, float)),
            cumulant_hess=lambda t: np.exp(np.asarray(t, float))[:, :, None],
            log_base=lambda x: -gammaln(x + 1.0),
            sampler=lambda t, size, rng: rng.poisson(np.exp(float(np.ravel(t)[0])), size=size).astype(float),
            dim=1,
            rule=_poisson_rule,
            name="poisson",
        )

    def in_support(self, x):
        x = self.as_data(x)
        return (x >= 0) & (x == np.floor(x))

    def logpdf_matrix(self, x, thetas):
        out = super().logpdf_matrix(x, thetas)
        return np.where(self.in_support(x)[None, :], out, -np.inf)

    def mean_inverse(self, target, start=None, **kw):
        return np.log(np.asarray(target, float)).reshape(1)

    def bregman(self, thetas, anchors):
        return np.exp(anchors[:, 0]) * _expm1_minus_x(thetas[:, 0] - anchors[:, 0])

    def __eq__(self, other):
        return type(self) is type(other)

    def __hash__(self):
        return hash("poisson")

    def __repr__(self):
        return "Poisson()"


FAMILIES = {
    "binomial2": Binomial2,
    "normal": Normal,
    "mvnormal": MultivariateNormal,
    "poisson": Poisson,
}


def get_family(name, dim=None):
    """Look up a family by its configuration name."""
    try:
        cls = FAMILIES[name]
    except KeyError:
        raise DomainError(f"unknown family {name!r}; choose from {sorted(FAMILIES)}") from None
    if cls is MultivariateNormal:
        return cls(dim or 2)
    return cls()


def density_eval(family, theta, x):
    """Evaluate ``psi(x; theta)`` with full domain checking.

    Discrete observations outside the support have mass 0; continuous
    observations outside the support raise :class:`DomainError`.
    """
    theta = family.check_theta(theta)
    xs = family.as_data(x)
    ok = family.in_support(xs)
    if not np.all(ok) and not family.discrete:
        raise DomainError(f"{family.name}: observation outside support")
    vals = family.pdf_matrix(xs, theta.reshape(1, -1))[0]
    vals = np.where(ok, vals, 0.0)
    return float(vals[0]) if np.ndim(x) == 0 or (family.data_dim > 1 and np.ndim(x) == 1) else vals
