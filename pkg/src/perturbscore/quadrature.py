"""Vectorized Gauss-Legendre rules with panel refinement.

Everything here integrates functions that accept whole arrays of
abscissae, which is what the kernels and curvature integrands provide.
"""

from functools import lru_cache

import numpy as np

from .exceptions import QuadratureError

RTOL = 1e-7
ATOL = 1e-9


@lru_cache(maxsize=32)
def _legendre(order):
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def composite_rule(a, b, panels, order=15):
    """Composite Gauss-Legendre nodes and weights on ``[a, b]``."""
    x, w = _legendre(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def tensor_rule(lower, upper, panels, order=10):
    """Tensor-product composite rule over a box; returns ``(nodes, weights)``.

    ``nodes`` has shape ``(K, dim)``.
    """
    lower = np.atleast_1d(np.asarray(lower, float))
    upper = np.atleast_1d(np.asarray(upper, float))
    panels = np.broadcast_to(np.atleast_1d(panels), lower.shape)
    axes = [composite_rule(lo, hi, int(p), order) for lo, hi, p in zip(lower, upper, panels)]
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    wgrids = np.meshgrid(*[a[1] for a in axes], indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return nodes, weights


def _converged(new, old, rtol, atol):
    return abs(new - old) <= max(atol, rtol * abs(new))


def integrate_1d(func, a, b, rtol=RTOL, atol=ATOL, order=15, min_panels=4, max_panels=4096):
    """Integrate a vectorized function on ``[a, b]`` by panel doubling.

    Raises
    ------
    QuadratureError
        If successive refinements still disagree at ``max_panels``.
    """
    if b <= a:
        return 0.0
    panels = min_panels
    nodes, weights = composite_rule(a, b, panels, order)
    old = float(np.dot(weights, func(nodes)))
    while panels < max_panels:
        panels *= 2
        nodes, weights = composite_rule(a, b, panels, order)
        new = float(np.dot(weights, func(nodes)))
        if _converged(new, old, rtol, atol):
            return new
        old = new
    raise QuadratureError(f"integral on [{a}, {b}] did not converge (last value {old})")


def integrate_box_2d(func, lower, upper, rtol=RTOL, atol=ATOL, order=10, max_panels=256):
    """Integrate ``func(points)`` over a 2-D box with tensor refinement."""
    panels = 4
    nodes, weights = tensor_rule(lower, upper, panels, order)
    old = float(np.dot(weights, func(nodes)))
    while panels < max_panels:
        panels *= 2
        nodes, weights = tensor_rule(lower, upper, panels, order)
        new = float(np.dot(weights, func(nodes)))
        if _converged(new, old, rtol, atol):
            return new
        old = new
    raise QuadratureError("2-D box integral did not converge")


def integrate_polar(func, center, radius_of, sectors, r_min, rtol=RTOL, atol=ATOL, order=10,
                    max_panels=128):
    """Integrate ``func(points)`` over a star-shaped region in polar form.

    The region is ``{center + r (cos w, sin w): r_min <= r <= radius_of(w)}``
    with ``w`` ranging over the union of ``sectors`` (pairs of angles).
    Sector boundaries should sit wherever ``radius_of`` has a kink.
    """
    center = np.asarray(center, float)

    def evaluate(panels):
        total = 0.0
        for w0, w1 in sectors:
            om, wom = composite_rule(w0, w1, panels, order)
            rmax = radius_of(om)
            t, wt = composite_rule(0.0, 1.0, panels, order)
            span = np.maximum(rmax - r_min, 0.0)
            r = r_min + span[:, None] * t[None, :]
            jac = span[:, None] * wt[None, :] * r
            pts = np.stack(
                [center[0] + r * np.cos(om)[:, None], center[1] + r * np.sin(om)[:, None]], axis=-1
            )
            vals = func(pts.reshape(-1, 2)).reshape(r.shape)
            total += float(np.sum(wom[:, None] * jac * vals))
        return total

    panels = 2
    old = evaluate(panels)
    while panels < max_panels:
        panels *= 2
        new = evaluate(panels)
        if _converged(new, old, rtol, atol):
            return new
        old = new
    raise QuadratureError("polar integral did not converge")


def richardson(values_at_eps, values_at_half):
    """First-order Richardson extrapolation toward a vanishing exclusion radius."""
    return 2.0 * values_at_half - values_at_eps
