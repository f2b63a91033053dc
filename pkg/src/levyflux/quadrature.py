"""Quadrature primitives shared by the density and fluctuation modules."""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy import integrate

from .errors import AccuracyError

EPSABS = 1e-10
EPSREL = 1e-10
LIMIT = 400
#: reported error estimates above this trigger AccuracyError
MAX_ABSERR = 1e-6
#: clamped probabilities warn when the raw value left [0, 1] by more than this
CLAMP_WARN = 1e-6


class Estimate(float):
    """A float that also carries an absolute error estimate."""

    abserr: float

    def __new__(cls, value, abserr=0.0):
        obj = super().__new__(cls, value)
        obj.abserr = float(abserr)
        return obj

    def __repr__(self):
        return f"Estimate({float(self)!r}, abserr={self.abserr:.2e})"


def quad(fn, a, b, points=None, epsabs=EPSABS, epsrel=EPSREL, max_abserr=MAX_ABSERR):
    """Adaptive Gauss-Kronrod over [a, b] with interior breakpoints."""
    if b <= a:
        return Estimate(0.0, 0.0)
    pts = sorted(p for p in (points or ()) if a < p < b)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        if math.isinf(b) or math.isinf(a):
            val, err = integrate.quad(fn, a, b, epsabs=epsabs, epsrel=epsrel, limit=LIMIT)
        else:
            val, err = integrate.quad(
                fn, a, b, points=pts or None, epsabs=epsabs, epsrel=epsrel, limit=LIMIT
            )
    if not np.isfinite(val) or err > max_abserr:
        raise AccuracyError(f"quadrature on [{a}, {b}] missed tolerance: value={val}, abserr={err:.3e}")
    return Estimate(val, err)


def kernel_integral(g, t, points=(), **kw):
    """∫_0^t g(s) ds / s through s = t u**2, so the 1/s kernel becomes 2/u.

    The transformed integrand 2 g(t u^2) / u stays bounded whenever g vanishes
    at least like sqrt(s) at the origin.
    """

    def h(u):
        if u <= 0.0:
            return 0.0
        return 2.0 * g(t * u * u) / u

    upts = [math.sqrt(p / t) for p in points if 0 < p < t]
    return quad(h, 0.0, 1.0, points=upts, **kw)


def clamp_probability(value, label="probability"):
    """Clamp into [0, 1], warning when the raw value overshoots by more than CLAMP_WARN."""
    raw = float(value)
    err = getattr(value, "abserr", 0.0)
    clamped = min(1.0, max(0.0, raw))
    if abs(clamped - raw) > CLAMP_WARN:
        warnings.warn(f"{label} {raw!r} clamped to [0, 1]", RuntimeWarning, stacklevel=2)
    return Estimate(clamped, err)


_GL_CACHE: dict = {}


def gauss_legendre(n):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def panel_nodes(upper, n_panels, order, origin_levels=0):
    """Gauss-Legendre nodes/weights for ``n_panels`` equal panels on [0, upper].

    ``origin_levels > 0`` splits the first panel geometrically toward zero,
    which keeps accuracy for integrands with a |u|**alpha kink at the origin.
    """
    x, w = gauss_legendre(order)
    edges = np.linspace(0.0, upper, n_panels + 1)
    if origin_levels:
        first = edges[1] * 0.5 ** np.arange(origin_levels, 0, -1)
        edges = np.concatenate([[0.0], first, edges[1:]])
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights
