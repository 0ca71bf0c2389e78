"""Covariance kernels of the score process.

``C(a, b) = int psi(x; a) psi(x; b) / f(x) dx - 1`` is the limiting
covariance with the null density known. When null parameters are fitted,
the score is projected off the null scores and the kernel becomes
``C*(a, b) = C(a, b) - c(a)' I^{-1} c(b)``.

The quadrature strategy represents both kernels as inner products of
feature vectors ``r_a(x)`` against the weights ``w(x) f(x)``, which keeps
them symmetric and positive semidefinite by construction.
"""

import numpy as np

from .exceptions import (DegenerateModelError, NonFiniteVarianceError, SingularityError,
                         SupportViolationError, ValidationError)
from .families import (Binomial2, ExponentialFamily, MultivariateNormal, Normal, Poisson, _expm1_minus_x,
                       as_thetas)
from .model import MixingDistribution, NullModel

EPS_SING = 1e-8
_CHUNK = 2_000_000
# features within this fraction of the domain width of a support point are anchored there
ANCHOR_RADIUS = 0.05


def _as_pairs(a, b, dim):
    a = as_thetas(a, dim)
    b = as_thetas(b, dim)
    a, b = np.broadcast_arrays(a, b)
    return a, b


def _gradient_null(null):
    """The null model whose free parameters define the projection.

    A fully specified model is treated as if its parameters were fitted, so
    that cross-covariances and information refer to ``lambda`` itself.
    """
    if null.estimate == "none":
        return NullModel(null.family, null.mixing, "full")
    return null


class _SampleSpace:
    """Quadrature representation of the sample space under the null."""

    def __init__(self, null, family, domain):
        lo, hi = domain.bounds
        nodes, weights = family.integration_rule(lo, hi, null.mixing.support_points)
        logf = null.logpdf(nodes)
        if not np.all(np.isfinite(logf)):
            raise SupportViolationError("null density vanishes on part of the sample space")
        self.nodes = nodes
        self.wf = weights * np.exp(logf)
        self.logf = logf
        self.family = family
        if family.discrete:
            top = nodes if nodes.ndim == 1 else nodes[:, 0]
            self.edge = top >= top.min() + 0.95 * (top.max() - top.min()) if family.support is None else None
        else:
            pts = nodes.reshape(len(weights), -1)
            span = pts.max(axis=0) - pts.min(axis=0)
            self.edge = np.any((pts < pts.min(axis=0) + 0.05 * span) | (pts > pts.max(axis=0) - 0.05 * span), axis=1)

    def ratios(self, thetas):
        """``u = psi / f - 1`` at every node, shape ``(k, K)``."""
        lp = self.family.logpdf_matrix(self.nodes, thetas)
        with np.errstate(over="ignore"):
            return np.expm1(lp - self.logf[None, :])


class CovarianceKernel:
    """Evaluable covariance kernel ``C`` or ``C*`` over the perturbation domain.

    Parameters
    ----------
    model : PerturbationModel
        Supplies the null (possibly with fitted parameters), the perturbation
        family and the domain.
    kind : {"fixed", "nuisance"}, optional
        Defaults to ``"nuisance"`` when the null has free parameters.
    strategy : {"auto", "analytic", "quadrature"}
        ``"auto"`` uses a closed form when one exists.

    Notes
    -----
    Calls are vectorized over pairs: ``kernel(a, b)`` with ``a`` and ``b``
    of shape ``(k, d)`` returns the ``k`` values ``C(a_i, b_i)``.
    """

    def __init__(self, model, kind=None, strategy="auto"):
        null = model.null
        if kind is None:
            kind = "fixed" if null.n_free == 0 else "nuisance"
        if kind not in ("fixed", "nuisance"):
            raise ValidationError(f"kind must be 'fixed' or 'nuisance', got {kind!r}")
        if strategy not in ("auto", "analytic", "quadrature"):
            raise ValidationError(f"unknown strategy {strategy!r}")
        self.model = model
        self.null = null
        self.family = model.family
        self.domain = model.domain
        self.dim = model.dim
        self.kind = "fixed" if null.n_free == 0 else kind
        analytic = self._analytic_form()
        if strategy == "analytic" and analytic is None:
            raise ValidationError("no closed form for this model; use quadrature")
        self.strategy = "analytic" if (strategy != "quadrature" and analytic is not None) else "quadrature"
        self._pair = analytic if self.strategy == "analytic" else None
        self._space = None
        if self.strategy == "quadrature":
            self._setup_quadrature()

    # -- construction --------------------------------------------------
    def _analytic_form(self):
        null, fam = self.null, self.family
        if null.m != 1 or type(fam) is not type(null.family):
            return None
        if self.kind == "nuisance" and null.estimate != "full":
            return None
        lam = null.mixing.support_points[0]
        nuis = self.kind == "nuisance"
        if isinstance(fam, Binomial2):
            if nuis:
                return lambda a, b: Binomial2.cov_nuisance_closed(a, b, lam)
            return lambda a, b: Binomial2.cov_closed(a, b, lam)
        if isinstance(fam, (Normal, MultivariateNormal)):
            if nuis:
                return lambda a, b: _expm1_minus_x(np.sum((a - lam) * (b - lam), axis=-1))
            return lambda a, b: np.expm1(np.sum((a - lam) * (b - lam), axis=-1))
        if isinstance(fam, Poisson):
            # the cross cumulant equals the projection term, so C* = exp(K) - 1 - K
            def cross(a, b):
                return np.exp(lam[0]) * np.expm1(a[..., 0] - lam[0]) * np.expm1(b[..., 0] - lam[0])
            if nuis:
                return lambda a, b: _expm1_minus_x(cross(a, b))
            return lambda a, b: np.expm1(cross(a, b))
        if isinstance(fam, ExponentialFamily):
            if not nuis:
                return lambda a, b: np.expm1(fam.cumulant_cross(a, b, lam))
            info = fam.fisher(lam)
            mu = fam.mean(lam[None, :])[0]

            def pair(a, b):
                ca = fam.mean(a) - mu
                cb = fam.mean(b) - mu
                quad = np.sum(ca * np.linalg.solve(info, cb.T).T, axis=-1)
                return np.expm1(fam.cumulant_cross(a, b, lam)) - quad
            return pair
        return None

    def _setup_quadrature(self):
        space = _SampleSpace(self.null, self.family, self.domain)
        self._space = space
        if self.kind == "nuisance":
            G = self.null.log_grad(space.nodes)
            M = space.wf[:, None] * G
            self._G = G
            self._M = M
            self._info = _check_information(G.T @ M)
        self._check_tails()

    def _check_tails(self):
        space = self._space
        if space.edge is None:
            return
        lo, hi = self.domain.bounds
        corners = np.array(np.meshgrid(*zip(lo, hi), indexing="ij")).reshape(self.dim, -1).T
        with np.errstate(over="ignore", invalid="ignore"):
            r = self.features(corners)
            contrib = space.wf[None, :] * r * r
        total = contrib.sum(axis=1)
        tail = contrib[:, space.edge].sum(axis=1)
        if not np.all(np.isfinite(total)) or np.any(tail > 1e-10 * np.maximum(total, 1.0)):
            raise NonFiniteVarianceError("covariance integral does not converge on the sample space")

    # -- evaluation ------------------------------------------------------
    @property
    def has_features(self):
        return self.strategy == "quadrature"

    @property
    def feature_weights(self):
        return self._space.wf

    def features(self, thetas):
        """Feature vectors ``r_theta`` with ``C(a, b) = sum(wf * r_a * r_b)``."""
        thetas = np.asarray(thetas, float)
        u = self._space.ratios(thetas)
        if self.kind == "fixed":
            return u
        u = self._anchored(thetas, u)
        c = u @ self._M
        coef = np.linalg.solve(self._info, c.T).T
        return u - coef @ self._G.T

    def _anchored(self, thetas, u):
        """Swap ``u`` near a support point ``s`` for an equivalent residual.

        ``u_s`` (and ``grad u_s`` when supports are fitted) lie in the span
        of the null scores, so removing them leaves the projection
        unchanged. What remains is ``O(|theta - s|^2)`` and is computed from
        the Taylor remainder of ``log psi`` without cancellation.
        """
        pts = self.null.mixing.support_points
        diff = thetas[:, None, :] - pts[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=2))
        idx = np.argmin(dist, axis=1)
        rows = np.flatnonzero(dist[np.arange(len(thetas)), idx] < ANCHOR_RADIUS * self.domain.width)
        if not rows.size:
            return u
        space, fam = self._space, self.family
        t = thetas[rows]
        s = pts[idx[rows]]
        lead = np.exp(fam.logpdf_matrix(space.nodes, s) - space.logf[None, :])
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            rem = fam.log_remainder(space.nodes, t, s)
            if self.null.estimate == "full":
                lin = np.sum((t - s)[:, None, :] * fam.dlogpdf_matrix(space.nodes, s), axis=-1)
                v = lead * (_expm1_minus_x(lin + rem) + rem)
            else:
                lin = fam.logpdf_matrix(space.nodes, t) - fam.logpdf_matrix(space.nodes, s)
                v = lead * np.expm1(lin)
        ok = np.all(np.isfinite(v), axis=1)
        out = u.copy()
        out[rows[ok]] = v[ok]
        return out

    def _chunks(self, k):
        K = 1 if self._space is None else len(self._space.wf)
        step = max(1, _CHUNK // max(K, 1))
        return [slice(i, min(i + step, k)) for i in range(0, k, step)]

    def __call__(self, a, b):
        a, b = _as_pairs(a, b, self.dim)
        if self._pair is not None:
            out = self._pair(a, b)
        else:
            out = np.empty(len(a))
            wf = self._space.wf
            for sl in self._chunks(len(a)):
                out[sl] = np.sum(wf * self.features(a[sl]) * self.features(b[sl]), axis=1)
        return out

    def eval(self, a, b):
        """Scalar convenience wrapper around the paired evaluation."""
        return float(self(a, b)[0])

    def diag(self, thetas):
        t = as_thetas(thetas, self.dim)
        return self(t, t)

    def matrix(self, thetas):
        """Full ``k x k`` kernel matrix on a list of parameters."""
        t = as_thetas(thetas, self.dim)
        if self._pair is None:
            R = np.concatenate([self.features(t[sl]) for sl in self._chunks(len(t))])
            S = R * np.sqrt(self._space.wf)
            out = S @ S.T
        else:
            lam = self.null.mixing.support_points[0]
            if isinstance(self.family, (Normal, MultivariateNormal)):
                A = t - lam
                x = A @ A.T
                out = _expm1_minus_x(x) if self.kind == "nuisance" else np.expm1(x)
            else:
                i, j = np.triu_indices(len(t))
                vals = self._pair(t[i], t[j])
                out = np.empty((len(t), len(t)))
                out[i, j] = vals
                out[j, i] = vals
        return 0.5 * (out + out.T)

    def corr(self, a, b):
        """Correlation ``C(a, b) / sqrt(C(a, a) C(b, b))`` clamped to ``[-1, 1]``.

        Raises
        ------
        SingularityError
            If either diagonal value is below ``EPS_SING``.
        """
        a, b = _as_pairs(a, b, self.dim)
        da, db = self(a, a), self(b, b)
        if np.any(da < EPS_SING) or np.any(db < EPS_SING):
            raise SingularityError("kernel diagonal below the singularity tolerance")
        out = np.clip(self(a, b) / np.sqrt(da * db), -1.0, 1.0)
        return float(out[0]) if out.size == 1 else out

    def corr_matrix(self, thetas):
        C = self.matrix(thetas)
        d = np.diag(C)
        if np.any(d < EPS_SING):
            raise SingularityError("kernel diagonal below the singularity tolerance")
        s = 1.0 / np.sqrt(d)
        R = np.clip(C * s[:, None] * s[None, :], -1.0, 1.0)
        np.fill_diagonal(R, 1.0)
        return R

    def __repr__(self):
        return f"CovarianceKernel(kind={self.kind!r}, strategy={self.strategy!r})"


def _check_information(info):
    info = 0.5 * (info + info.T)
    eig = np.linalg.eigvalsh(info)
    if not np.all(np.isfinite(eig)) or eig[0] <= 1e-12 * max(eig[-1], 1e-300):
        raise DegenerateModelError("Fisher information is singular")
    return info


def fisher_info(null):
    """Fisher information of the free null parameters.

    A fully specified null is treated as if all of its parameters (weights
    and supports) were estimated.
    """
    null = _gradient_null(null)
    fam = null.family
    if null.m == 1 and null.estimate == "full":
        lam = null.mixing.support_points[0]
        if isinstance(fam, Binomial2):
            return Binomial2.fisher(lam)
        if isinstance(fam, ExponentialFamily):
            return _check_information(np.array(fam.fisher(lam), dtype=float))
    if null.n_free == 0:
        return np.zeros((0, 0))
    # The domain only steers where the rule is accurate for perturbations.
    lo = np.min(null.mixing.support_points, axis=0)
    hi = np.max(null.mixing.support_points, axis=0)
    nodes, weights = fam.integration_rule(lo, hi, null.mixing.support_points)
    G = null.log_grad(nodes)
    wf = weights * null.pdf(nodes)
    return _check_information((G * wf[:, None]).T @ G)


def cov_fixed(model, theta, theta2):
    """``C(theta, theta2)`` with the null parameters held fixed."""
    return CovarianceKernel(model, kind="fixed").eval(theta, theta2)


def cov_nuisance(model, theta, theta2, lam_hat=None):
    """``C*(theta, theta2)`` at the (plug-in) null parameters.

    ``lam_hat`` may replace the support points of a single-component null.
    """
    if lam_hat is not None:
        model = model.with_null(NullModel(model.null.family,
                                          MixingDistribution(as_thetas(lam_hat, model.null.family.dim), [1.0]),
                                          "full"))
    elif model.null.estimate == "none":
        model = model.with_null(_gradient_null(model.null))
    return CovarianceKernel(model, kind="nuisance").eval(theta, theta2)


def cov_vector(model, theta, lam0=None):
    """Cross-covariance ``c(theta) = int psi(x; theta) grad l(lambda | x) dx``.

    Returned in the free-parameter coordinates of the null (all parameters
    when the null is fully specified). ``lam0`` replaces the support of a
    single-component null.
    """
    null = model.null
    if lam0 is not None:
        null = NullModel(null.family, MixingDistribution(as_thetas(lam0, null.family.dim), [1.0]), "full")
    null = _gradient_null(null)
    fam = model.family
    t = as_thetas(theta, fam.dim)
    if null.m == 1 and null.estimate == "full" and type(fam) is type(null.family):
        lam = null.mixing.support_points[0]
        if isinstance(fam, Binomial2):
            out = Binomial2.mean_score(t, lam)
            return out[0] if len(t) == 1 else out
        if isinstance(fam, ExponentialFamily):
            out = fam.mean(t) - fam.mean(lam[None, :])
            return out[0] if len(t) == 1 else out
    space = _SampleSpace(null, fam, model.domain)
    G = null.log_grad(space.nodes)
    out = space.ratios(t) @ (space.wf[:, None] * G)
    return out[0] if len(t) == 1 else out


def corr(kernel, theta, theta2):
    return kernel.corr(theta, theta2)
