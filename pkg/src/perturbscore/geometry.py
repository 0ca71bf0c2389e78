"""Manifold geometry of the normalized score process and the tube tail series.

The normalized process ``S*(theta) / sqrt(n)`` is asymptotically
``<Z, gamma(theta)>`` for a curve or surface ``gamma`` on the unit sphere.
Its ``d``-volume ``kappa0``, boundary volume ``ell0`` and (for ``d = 2``)
Euler characteristic feed the chi-square tail series used for
calibration.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.special import gammaln
from scipy.stats import chi2

from .covariance import EPS_SING
from .exceptions import (BracketError, ClassificationConflictError, CurvatureError, UnsupportedDimensionError,
                         ValidationError)
from .quadrature import integrate_1d, integrate_box_2d, integrate_polar, richardson

FLIP = "flip"
REMOVABLE = "removable"
EPS_EXCL = 1e-4
FD_STEP = 1e-4
NEAR_STEP = 0.01
GEOM_RTOL = 1e-8
GEOM_ATOL = 1e-11


@dataclass(frozen=True, eq=False)
class Singularity:
    """A zero of the kernel diagonal and how the normalized process behaves there."""

    location: np.ndarray
    kind: str

    def __post_init__(self):
        object.__setattr__(self, "location", np.atleast_1d(np.asarray(self.location, float)))
        if self.kind not in (FLIP, REMOVABLE):
            raise ValidationError(f"singularity kind must be {FLIP!r} or {REMOVABLE!r}")

    def to_dict(self):
        return {"location": self.location.tolist(), "kind": self.kind}

    def __repr__(self):
        return f"Singularity({self.location.tolist()}, {self.kind!r})"


@dataclass(frozen=True, eq=False)
class ManifoldSummary:
    """Topological summary of the image of the normalized process.

    Attributes
    ----------
    d : int
    domain : Box or Disk
    singularities : list of Singularity
    segments : int
        Connected pieces for ``d = 1``.
    holes : int
        Interior flip points for ``d = 2``; each punches a hole.
    euler : int
        Euler characteristic (pieces minus holes).
    degenerate : bool
        True when every correlation is ``+-1`` so the image is finitely many
        points; ``sign_classes`` counts them.
    """

    d: int
    domain: object
    singularities: list
    segments: int = 1
    holes: int = 0
    euler: int = 1
    degenerate: bool = False
    sign_classes: int = 1

    def to_dict(self):
        return {
            "d": self.d,
            "domain": self.domain.to_dict(),
            "singularities": [s.to_dict() for s in self.singularities],
            "segments": self.segments,
            "holes": self.holes,
            "euler": self.euler,
            "degenerate": self.degenerate,
        }


@dataclass(frozen=True)
class TubeConstants:
    """Coefficients of the tube tail series.

    ``zeta`` is ``(kappa0, ell0 / 2)`` for ``d = 1`` and
    ``(kappa0, ell0 / 2, (2 pi E - kappa0) / (2 pi))`` for ``d = 2``.
    """

    d: int
    kappa0: float
    ell0: float
    euler: float = None
    details: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.d not in (1, 2):
            raise UnsupportedDimensionError(f"tube constants are available for d in {{1, 2}}, got {self.d}")
        if not (self.kappa0 >= 0 and self.ell0 >= 0):
            raise ValidationError("kappa0 and ell0 must be nonnegative")
        if self.d == 2 and self.euler is None:
            raise ValidationError("d = 2 constants need an Euler characteristic")

    @property
    def zeta(self):
        if self.d == 1:
            return np.array([self.kappa0, self.ell0 / 2.0])
        return np.array([self.kappa0, self.ell0 / 2.0, (2 * np.pi * self.euler - self.kappa0) / (2 * np.pi)])

    def to_dict(self):
        out = {"d": self.d, "kappa0": float(self.kappa0), "ell0": float(self.ell0),
               "zeta": [float(z) for z in self.zeta]}
        if self.d == 2:
            out["euler"] = float(self.euler)
        return out


# -- singularities ---------------------------------------------------------

def declared_kind(null):
    """Flip when only weights (or nothing) are fitted, removable when supports are."""
    return REMOVABLE if null.estimate == "full" else FLIP


def _leading_order_ratio(kernel, loc, width):
    """``q(t/4) / q(t)`` with ``q(t) = C(s + t v, s + t v) / t^2``.

    Near 1 for a quadratic zero (flip); near 1/16 for a quartic one.
    """
    t0 = 1e-2 * width
    ratios = []
    for axis in range(kernel.dim):
        v = np.zeros(kernel.dim)
        v[axis] = 1.0
        if not kernel.domain.contains(loc + t0 * v)[0]:
            v = -v
        q = [kernel.diag(loc + t * v)[0] / t ** 2 for t in (t0, t0 / 4)]
        ratios.append(q[1] / q[0] if q[0] > 0 else 0.0)
    return np.array(ratios)


def _scan_1d(kernel, lo, hi, points=401):
    grid = np.linspace(lo, hi, points)
    diag = kernel.diag(grid[:, None])
    scale = max(np.max(diag), 1e-300)
    found = []
    for i in range(len(grid)):
        left = diag[i - 1] if i > 0 else np.inf
        right = diag[i + 1] if i < len(grid) - 1 else np.inf
        if diag[i] <= left and diag[i] <= right and diag[i] < 1e-3 * scale:
            a, b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
            res = minimize_scalar(lambda t: kernel.diag(np.array([[t]]))[0], bounds=(a, b),
                                  method="bounded", options={"xatol": 1e-12 * (hi - lo)})
            if res.fun < EPS_SING:
                found.append(np.array([res.x]))
    return found


def detect_singularities(kernel, declared=None, kind=None, scan=True):
    """Locate zeros of the kernel diagonal in the domain and classify them.

    Parameters
    ----------
    kernel : CovarianceKernel
    declared : list of array_like, optional
        Extra candidate locations.
    kind : {"flip", "removable"}, optional
        Class implied by the model; derived from the kernel's null model when
        omitted.
    scan : bool
        For ``d = 1``, also search the diagonal for zeros away from the
        null support points.

    Raises
    ------
    ClassificationConflictError
        If the order of the zero contradicts the declared class.
    """
    domain = kernel.domain
    width = domain.width
    null = getattr(kernel, "null", None)
    if kind is None:
        kind = declared_kind(null) if getattr(kernel, "kind", "fixed") == "nuisance" else FLIP
    cands = [np.asarray(p, float) for p in null.mixing.support_points] if null is not None else []
    cands += [np.atleast_1d(np.asarray(p, float)) for p in (declared or [])]
    if scan and kernel.dim == 1:
        lo, hi = domain.bounds
        cands += _scan_1d(kernel, lo[0], hi[0])
    found = []
    for c in cands:
        if not domain.contains(c, tol=1e-12 * width)[0]:
            continue
        if any(np.linalg.norm(c - s) < 1e-6 * width for s in found):
            continue
        if kernel.diag(c[None, :])[0] < EPS_SING:
            found.append(c)
    out = []
    for loc in sorted(found, key=lambda p: tuple(p)):
        ratio = _leading_order_ratio(kernel, loc, width)
        numeric = FLIP if np.all(ratio > 0.5) else REMOVABLE if np.all(ratio < 0.2) else None
        if numeric != kind:
            raise ClassificationConflictError(
                f"zero of the kernel at {loc.tolist()} behaves as {numeric or 'neither class'}, "
                f"but the model implies {kind}")
        out.append(Singularity(loc, kind))
    return out


def _probe_points(domain, singularities, count=9):
    lo, hi = domain.bounds
    width = domain.width
    if domain.dim == 1:
        pts = np.linspace(lo[0], hi[0], 4 * count + 1)[1::2][:, None]
    else:
        axes = [np.linspace(l, h, count + 2)[1:-1] for l, h in zip(lo, hi)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.dim)
        pts = pts[domain.contains(pts)]
    keep = np.ones(len(pts), bool)
    for s in singularities:
        keep &= np.linalg.norm(pts - s.location, axis=1) > 1e-3 * width
    return pts[keep]


def manifold_summary(kernel, singularities=None, **kw):
    """Segments, holes and Euler characteristic of the process image."""
    if singularities is None:
        singularities = detect_singularities(kernel, **kw)
    domain = kernel.domain
    d = kernel.dim
    if d > 2:
        raise UnsupportedDimensionError("manifold summaries are available for d <= 2")
    margin = 1e-9 * domain.width
    interior_flips = [s for s in singularities if s.kind == FLIP and domain.interior(s.location, margin)[0]]
    pts = _probe_points(domain, singularities)
    diag = kernel.diag(pts)
    pts = pts[diag > EPS_SING]
    degenerate, classes = False, 1
    if len(pts) >= 2:
        C = kernel.matrix(pts)
        s = 1.0 / np.sqrt(np.diag(C))
        R = C * s[:, None] * s[None, :]
        if np.min(np.abs(R)) > 1 - 1e-9:
            degenerate = True
            classes = 1 + int(np.any(R[0] < 0))
    if d == 1:
        segments = 1 + len(interior_flips)
        return ManifoldSummary(1, domain, list(singularities), segments=segments, holes=0,
                               euler=segments, degenerate=degenerate, sign_classes=classes)
    holes = len(interior_flips)
    return ManifoldSummary(2, domain, list(singularities), segments=1, holes=holes, euler=1 - holes,
                           degenerate=degenerate, sign_classes=classes)


# -- curvature integrands --------------------------------------------------

class _Bordered:
    """Volume element of the normalized process along ``k`` tangent fields.

    Mathematically this is ``sqrt(det B) / C^((k+1)/2)`` with ``B`` the
    bordered Gram matrix of the process and its derivatives. It is
    evaluated as ``sqrt(det G)``, where ``G`` is the metric of the unit
    normalized process, from the angle ``phi`` between ``n(p + h v)`` and
    ``n(p - h v)``:

        ``|D v|^2 ~ (phi / 2 h)^2``, ``phi = 2 asin(|n(p + h v) - n(p - h v)| / 2)``

    with polarization for the off-diagonal entries. Normalizing before
    differencing avoids the cancellation in ``det B`` where the kernel
    vanishes to high order, as it does at removable singular points.
    """

    def __init__(self, kernel, step, singular=()):
        self.kernel = kernel
        self.step = step
        self.singular = np.array([np.atleast_1d(p) for p in singular], float).reshape(-1, kernel.dim)

    def nearest(self, base):
        """Offset from each point to its nearest singular point, or None."""
        if not len(self.singular):
            return None
        diff = base[:, None, :] - self.singular[None, :, :]
        idx = np.argmin(np.sum(diff * diff, axis=2), axis=1)
        return diff[np.arange(len(base)), idx]

    def steps(self, base):
        """Difference steps, shrunk to a fraction of the distance to a singular point."""
        h = np.full(len(base), float(self.step))
        off = self.nearest(base)
        if off is not None:
            h = np.minimum(h, NEAR_STEP * np.linalg.norm(off, axis=1))
        return h[:, None]

    def _chord2(self, base, v):
        """Squared angular speed of the unit process ``n`` along ``v``.

        Steps ``h`` and ``2 h`` are combined by Richardson extrapolation,
        removing the ``O(h^2)`` term.
        """
        h = self.steps(base)
        return (4.0 * self._angle2(base, v, h) - self._angle2(base, v, 2.0 * h)) / 3.0

    def _angle2(self, base, v, h):
        a, b = base + h * v, base - h * v
        kern = self.kernel
        if kern.has_features:
            wf = kern.feature_weights
            ra, rb = kern.features(a), kern.features(b)
            na = ra / np.sqrt(np.sum(wf * ra * ra, axis=1))[:, None]
            nb = rb / np.sqrt(np.sum(wf * rb * rb, axis=1))[:, None]
            d2 = np.sum(wf * (na - nb) ** 2, axis=1)
        else:
            rho = kern(a, b) / np.sqrt(kern(a, a) * kern(b, b))
            d2 = 2.0 - 2.0 * rho
        phi = 2.0 * np.arcsin(np.minimum(np.sqrt(np.maximum(d2, 0.0)) / 2.0, 1.0))
        return phi * phi / (4.0 * h[:, 0] ** 2)

    def __call__(self, base, tangents):
        """``base``: (N, d) points; ``tangents``: list of (N, d) direction fields."""
        k = len(tangents)
        G = np.empty((len(base), k, k))
        for i, ti in enumerate(tangents):
            G[:, i, i] = self._chord2(base, ti)
            for j in range(i + 1, k):
                tj = tangents[j]
                G[:, i, j] = G[:, j, i] = 0.25 * (self._chord2(base, ti + tj) - self._chord2(base, ti - tj))
        det = G[:, 0, 0] if k == 1 else np.linalg.det(G)
        scale = np.prod(np.abs(np.diagonal(G, axis1=1, axis2=2)), axis=1)
        if np.any(~np.isfinite(det)) or np.any(det < -1e-6 * scale - 1e-14):
            bad = int(np.argmin(np.where(np.isfinite(det), det + 1e-6 * scale, -np.inf)))
            raise CurvatureError(f"negative or undefined metric determinant {det[bad]:.3e} at {base[bad].tolist()}")
        return np.sqrt(np.maximum(det, 0.0))


def _curve_length(bordered, curve, a, b, cuts, eps, rtol, atol):
    """Length of the normalized image of ``curve(u)``, ``u`` in ``[a, b]``.

    ``cuts`` are parameter values of singular points; ``eps`` of parameter
    length is excluded on each side and the result extrapolated to zero.
    """
    point, tangent = curve

    def f(u):
        return bordered(point(u), [tangent(u)])

    def total(e):
        edges = [a] + sorted(c for c in cuts if a < c < b) + [b]
        sing = set(cuts)
        acc = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            lo2 = lo + e if (lo in sing) else lo
            hi2 = hi - e if (hi in sing) else hi
            if hi2 > lo2:
                acc += integrate_1d(f, lo2, hi2, rtol=rtol, atol=atol, order=20, min_panels=8)
        return acc

    if not cuts:
        return total(0.0)
    return richardson(total(eps), total(eps / 2))


def _segment_curve(start, direction):
    start = np.asarray(start, float)
    direction = np.asarray(direction, float)
    return (lambda u: start[None, :] + u[:, None] * direction[None, :],
            lambda u: np.broadcast_to(direction, (len(u), len(direction))))


def _circle_curve(center, radius):
    """Arc-length parameterization of a circle."""
    center = np.asarray(center, float)

    def point(s):
        w = s / radius
        return center[None, :] + radius * np.stack([np.cos(w), np.sin(w)], axis=-1)

    def tangent(s):
        w = s / radius
        return np.stack([-np.sin(w), np.cos(w)], axis=-1)
    return point, tangent


def _kappa0_1d(kernel, manifold, eps, bordered, rtol, atol):
    lo, hi = kernel.domain.bounds
    cuts = [float(s.location[0]) for s in manifold.singularities]
    curve = _segment_curve([0.0], [1.0])
    return _curve_length(bordered, curve, float(lo[0]), float(hi[0]), cuts, eps, rtol, atol)


def _surface_integrand(bordered):
    """Area element in an orthonormal frame aligned with the nearest singular point.

    The metric blows up like ``1 / r^2`` across the rays from a flip, so a
    radial/angular frame keeps it near diagonal and avoids cancellation.
    """
    def f(pts):
        n = len(pts)
        off = bordered.nearest(pts)
        if off is None:
            e1 = np.broadcast_to(np.array([1.0, 0.0]), (n, 2))
        else:
            norm = np.linalg.norm(off, axis=1, keepdims=True)
            e1 = np.where(norm > 0, off / np.where(norm > 0, norm, 1.0), np.array([1.0, 0.0]))
        e2 = np.stack([-e1[:, 1], e1[:, 0]], axis=1)
        return bordered(pts, [e1, e2])
    return f


def _ray_to_box(center, lo, hi):
    def radius(w):
        u = np.stack([np.cos(w), np.sin(w)], axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            tx = np.where(u[:, 0] > 0, (hi[0] - center[0]) / u[:, 0],
                          np.where(u[:, 0] < 0, (lo[0] - center[0]) / u[:, 0], np.inf))
            ty = np.where(u[:, 1] > 0, (hi[1] - center[1]) / u[:, 1],
                          np.where(u[:, 1] < 0, (lo[1] - center[1]) / u[:, 1], np.inf))
        return np.maximum(np.minimum(tx, ty), 0.0)
    return radius


def _box_polar(func, center, lo, hi, r_min, rtol, atol):
    corners = [(lo[0], lo[1]), (hi[0], lo[1]), (hi[0], hi[1]), (lo[0], hi[1])]
    angles = sorted({math.atan2(cy - center[1], cx - center[0]) % (2 * np.pi)
                     for cx, cy in corners if (cx, cy) != tuple(center)})
    cuts = angles + [angles[0] + 2 * np.pi]
    sectors = [(a, b) for a, b in zip(cuts[:-1], cuts[1:]) if b - a > 1e-12]
    return integrate_polar(func, center, _ray_to_box(center, lo, hi), sectors, r_min, rtol=rtol, atol=atol,
                           order=12, max_panels=256)


def _box_region(func, lo, hi, sing, eps, rtol, atol):
    """Integrate over a box holding the singular points ``sing``."""
    if not sing:
        return integrate_box_2d(func, lo, hi, rtol=rtol, atol=atol, order=12, max_panels=256)
    if len(sing) == 1:
        c = sing[0]
        return richardson(_box_polar(func, c, lo, hi, eps, rtol, atol),
                          _box_polar(func, c, lo, hi, eps / 2, rtol, atol))
    pts = np.array(sing)
    spread = pts.max(axis=0) - pts.min(axis=0)
    axis = int(np.argmax(spread))
    order = np.sort(pts[:, axis])
    k = len(order) // 2
    cut = 0.5 * (order[k - 1] + order[k])
    hi_left, lo_right = hi.copy(), lo.copy()
    hi_left[axis] = cut
    lo_right[axis] = cut
    left = [s for s in sing if s[axis] < cut]
    right = [s for s in sing if s[axis] >= cut]
    return (_box_region(func, lo, hi_left, left, eps, rtol, atol)
            + _box_region(func, lo_right, hi, right, eps, rtol, atol))


def _kappa0_2d(kernel, manifold, eps, bordered, rtol, atol):
    func = _surface_integrand(bordered)
    dom = kernel.domain
    sing = [s.location for s in manifold.singularities]
    if dom.shape == "disk":
        if len(sing) > 1:
            raise UnsupportedDimensionError("disk domains support at most one singular point")
        c = sing[0] if sing else dom.center
        off = c - dom.center
        cc = float(off @ off) - dom.radius ** 2

        def radius(w):
            b = np.cos(w) * off[0] + np.sin(w) * off[1]
            return -b + np.sqrt(np.maximum(b * b - cc, 0.0))

        def run(r_min):
            return integrate_polar(func, c, radius, [(0.0, 2 * np.pi)], r_min, rtol=rtol, atol=atol,
                                   order=12, max_panels=256)
        if not sing:
            return run(0.0)
        return richardson(run(eps), run(eps / 2))
    lo, hi = dom.bounds
    return _box_region(func, lo.copy(), hi.copy(), sing, eps, rtol, atol)


def _boundary_2d(kernel, manifold, eps, bordered, rtol, atol):
    dom = kernel.domain
    width = dom.width
    sing = [s.location for s in manifold.singularities]
    if dom.shape == "disk":
        on = [s for s in sing if abs(np.linalg.norm(s - dom.center) - dom.radius) < 1e-9 * width]
        cuts = [dom.radius * (math.atan2(*(s - dom.center)[::-1]) % (2 * np.pi)) for s in on]
        curve = _circle_curve(dom.center, dom.radius)
        return _curve_length(bordered, curve, 0.0, 2 * np.pi * dom.radius, cuts, eps, rtol, atol)
    lo, hi = dom.bounds
    total = 0.0
    for axis in range(2):
        other = 1 - axis
        for fixed in (lo[other], hi[other]):
            start = np.empty(2)
            start[axis] = 0.0
            start[other] = fixed
            direction = np.zeros(2)
            direction[axis] = 1.0
            cuts = [float(s[axis]) for s in sing if abs(s[other] - fixed) < 1e-9 * width]
            total += _curve_length(bordered, _segment_curve(start, direction), float(lo[axis]),
                                   float(hi[axis]), cuts, eps, rtol, atol)
    return total


def kappa0(kernel, manifold=None, eps_excl=EPS_EXCL, fd_step=FD_STEP, rtol=GEOM_RTOL, atol=GEOM_ATOL):
    """Volume of the normalized image of the parameter domain.

    The metric of the normalized process comes from symmetric differences
    with step ``fd_step * width`` (smaller close to singular points); balls
    of radius ``eps_excl * width`` about singular points are excluded and
    the result is extrapolated to zero radius.
    """
    if manifold is None:
        manifold = manifold_summary(kernel)
    if manifold.degenerate:
        return 0.0
    width = kernel.domain.width
    bordered = _Bordered(kernel, fd_step * width, [s.location for s in manifold.singularities])
    eps = eps_excl * width
    if manifold.d == 1:
        return _kappa0_1d(kernel, manifold, eps, bordered, rtol, atol)
    if manifold.d == 2:
        return _kappa0_2d(kernel, manifold, eps, bordered, rtol, atol)
    raise UnsupportedDimensionError("kappa0 is available for d <= 2")


def ell0(kernel, manifold=None, eps_excl=EPS_EXCL, fd_step=FD_STEP, rtol=GEOM_RTOL, atol=GEOM_ATOL):
    """Boundary volume of the normalized image.

    For ``d = 1`` this counts endpoints (two per segment). For ``d = 2`` it
    is the length of the image of the domain boundary plus ``2 pi`` per
    interior flip point.
    """
    if manifold is None:
        manifold = manifold_summary(kernel)
    if manifold.d == 1:
        return 2.0 * (manifold.sign_classes if manifold.degenerate else manifold.segments)
    if manifold.d != 2:
        raise UnsupportedDimensionError("ell0 is available for d <= 2")
    if manifold.degenerate:
        return 0.0
    width = kernel.domain.width
    bordered = _Bordered(kernel, fd_step * width, [s.location for s in manifold.singularities])
    outer = _boundary_2d(kernel, manifold, eps_excl * width, bordered, rtol, atol)
    return outer + 2 * np.pi * manifold.holes


def tube_constants(kernel, manifold=None, eps_excl=EPS_EXCL, fd_step=FD_STEP, **kw):
    """Assemble :class:`TubeConstants` for a kernel on its domain."""
    if manifold is None:
        manifold = manifold_summary(kernel, **kw)
    if manifold.d not in (1, 2):
        raise UnsupportedDimensionError("tube constants are available for d in {1, 2}")
    k0 = kappa0(kernel, manifold, eps_excl, fd_step)
    l0 = ell0(kernel, manifold, eps_excl, fd_step)
    euler = None
    if manifold.d == 2:
        euler = manifold.sign_classes if manifold.degenerate else manifold.euler
    return TubeConstants(manifold.d, float(k0), float(l0), euler, details=manifold.to_dict())


def _sphere_area(t):
    """Surface area ``A_t = 2 pi^(t/2) / Gamma(t/2)`` of the unit sphere in ``R^t``."""
    return 2.0 * np.exp(0.5 * t * np.log(np.pi) - gammaln(0.5 * t))


def tail_probability(c, constants):
    """Tube approximation to ``P(sup S* >= c)``, clamped to ``[0, 1]``.

    Examples
    --------
    >>> k = TubeConstants(1, 2 * np.pi, 2.0)
    >>> round(float(tail_probability(3.0, k)), 7)
    0.0124589
    """
    c = np.asarray(c, float)
    if np.any(c <= 0):
        raise ValidationError("threshold must be positive")
    d = constants.d
    total = np.zeros_like(c)
    for t, z in enumerate(constants.zeta):
        k = d + 1 - t
        total = total + z / _sphere_area(k) * chi2.sf(c * c, k)
    out = np.clip(total, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def critical_value(alpha, constants, lower=0.5, upper=10.0):
    """Threshold ``c`` with ``tail_probability(c) = alpha``.

    Raises
    ------
    ValidationError
        If ``alpha`` is outside ``(0, 0.5]``.
    BracketError
        If the tail does not cross ``alpha`` on ``[lower, upper]``.
    """
    if not 0.0 < alpha <= 0.5:
        raise ValidationError(f"alpha must lie in (0, 0.5], got {alpha}")

    def g(c):
        return tail_probability(c, constants) - alpha

    ga, gb = g(lower), g(upper)
    if ga < 0 or gb > 0:
        raise BracketError(f"tail probability does not cross {alpha} on [{lower}, {upper}]")
    return brentq(g, lower, upper, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
