"""Fluctuation identities evaluated by quadrature over the marginal laws p_t.

Every ``ds / s`` integral goes through :func:`levyflux.quadrature.kernel_integral`
so the kernel singularity at ``s = 0`` disappears.  Probabilities come back as
:class:`~levyflux.quadrature.Estimate` floats carrying an absolute error
estimate, clamped to [0, 1].
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable

from scipy import special

from .density import marginal
from .errors import AccuracyError
from .models import GammaSubordinatorJumps, SpectrallyPositiveModel, require_density
from .quadrature import Estimate, clamp_probability, kernel_integral, quad

__all__ = [
    "JointLawQuery",
    "LaplaceQuery",
    "AtomValue",
    "ResidualResult",
    "fpt_density",
    "inf_tail",
    "inf_tail_alt",
    "sup_tail",
    "sup_joint_density",
    "inf_joint_density",
    "joint_density",
    "sup_atom_density",
    "sup_atom_total",
    "sup_laplace",
    "inf_laplace",
    "sup_moment",
    "inf_moment",
    "big_phi",
    "phi_lambda_z",
    "laplace_p0",
    "phi_identity_residual",
    "phi_ode_residual",
    "entrance_law_residual",
    "joint_law_from_entrance",
]

#: log-time integrals run over [1, T_MAX] before the power-law tail is added
T_MAX = 1e6
#: e^{-lam T*} below this ends a damped time integral
DAMPING_CUTOFF = 1e-12


@functools.lru_cache(maxsize=8192)
def _law(model, t):
    return marginal(model, t)


def _p(model, t, x):
    return _law(model, t)._pdf1(x)


def _check_positive(**kw):
    for name, v in kw.items():
        if not (math.isfinite(v) and v > 0):
            raise ValueError(f"{name} must be positive and finite, got {v!r}")


PASSAGE_DECADES = 24


def _support_edges(model, levels):
    """Breakpoints in s for kernels that contain p_s(y) with y < 0.

    A gamma-minus-drift law lives on (-c s, inf), so p_s(y) switches on at
    s = -y / c, where it has a kink or an integrable spike.  Under unbounded
    variation the first passage below y is spread around s ~ y^2 / sigma^2
    (or |y|^alpha / scale for stable jumps), which is far below t for levels
    near 0.  Its density decays only like s^(-3/2) beyond that scale, so a
    ladder of decades from the scale upward lets the adaptive rule find the
    mass; the caller drops breakpoints beyond t.
    """
    pts = []
    j = model.jumps
    for y in levels:
        if y >= 0:
            continue
        if model.is_bounded_variation:
            if isinstance(j, GammaSubordinatorJumps):
                pts.append(-y / model.c)
            continue
        if model.gaussian_coef > 0:
            scale = y * y / model.gaussian_coef
        else:
            scale = (-y) ** j.alpha / j.scale
        pts.extend(scale * 10.0 ** k for k in range(-1, PASSAGE_DECADES))
    return sorted(pts)


# ---------------------------------------------------------------------------
# query types


@dataclass(frozen=True)
class JointLawQuery:
    """One point (t, x, z) of the joint law of an extremum and the terminal value."""

    t: float
    x: float
    z: float
    side: str = "supremum"

    def __post_init__(self):
        _check_positive(t=self.t)
        if self.side == "supremum":
            if not (self.x >= 0 and self.x > self.z):
                raise ValueError("supremum joint law needs x >= 0 and z < x")
        elif self.side == "infimum":
            if not (self.x > 0 and self.z >= -self.x):
                raise ValueError("infimum joint law needs x > 0 and z >= -x")
        else:
            raise ValueError(f"side must be 'supremum' or 'infimum', got {self.side!r}")


@dataclass(frozen=True)
class LaplaceQuery:
    lam: float
    t: float = 1.0
    z: float = -1.0

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("lam must be >= 0")
        _check_positive(t=self.t)
        if not self.z < 0:
            raise ValueError("z must be negative")


class AtomValue(Estimate):
    """Atom of the supremum at 0; ``applicable`` is False for unbounded variation."""

    applicable: bool

    def __new__(cls, value, abserr=0.0, applicable=True):
        obj = super().__new__(cls, value, abserr)
        obj.applicable = applicable
        return obj


# ---------------------------------------------------------------------------
# first passage and extrema tails


def fpt_density(model: SpectrallyPositiveModel, x: float, t: float) -> float:
    """Density of the first passage time below -x, (x / t) p_t(-x)."""
    _check_positive(x=x, t=t)
    require_density(model)
    return x / t * _p(model, t, -x)


def inf_tail(model: SpectrallyPositiveModel, x: float, t: float) -> Estimate:
    """P(inf_{s<=t} X_s < -x) as the time integral of the first-passage density."""
    _check_positive(x=x, t=t)
    require_density(model)
    est = kernel_integral(lambda s: x * _p(model, s, -x), t, points=_support_edges(model, [-x]))
    return clamp_probability(est, "inf_tail")


def inf_tail_alt(model: SpectrallyPositiveModel, x: float, t: float) -> Estimate:
    """P(inf_t < -x) through the joint law of (inf_t, X_t) integrated over the terminal value.

    The integrand carries the factor x from the first-passage density:
    ∫_0^t P(X_{t-s} > 0) x p_s(-x) ds / s + P(X_t < -x).
    """
    _check_positive(x=x, t=t)
    require_density(model)

    def g(s):
        if s >= t:
            return 0.0
        return _law(model, t - s).sf(0.0) * x * _p(model, s, -x)

    est = kernel_integral(g, t, points=_support_edges(model, [-x]))
    total = est + _law(model, t).cdf(-x)
    return clamp_probability(Estimate(total, est.abserr), "inf_tail_alt")


def sup_tail(model: SpectrallyPositiveModel, x: float, t: float) -> Estimate:
    """P(sup_{s<=t} X_s > x) for x >= 0.

    At x = 0 the answer is 1 under unbounded variation (0 is regular for the
    upper half line) and 1 - P(sup_t = 0) under bounded variation.
    """
    _check_positive(t=t)
    if not (math.isfinite(x) and x >= 0):
        raise ValueError("sup_tail needs x >= 0")
    require_density(model)
    if x == 0:
        if model.is_bounded_variation:
            atom = sup_atom_total(model, t)
            return clamp_probability(Estimate(1.0 - atom, atom.abserr), "sup_tail")
        return Estimate(1.0, 0.0)

    def g(s):
        if s >= t:
            return 0.0
        return _law(model, s).neg_part_mean() * _p(model, t - s, x)

    est = kernel_integral(g, t)
    total = est + _law(model, t).sf(x)
    return clamp_probability(Estimate(total, est.abserr), "sup_tail")


# ---------------------------------------------------------------------------
# joint laws


def sup_joint_density(model: SpectrallyPositiveModel, x: float, z: float, t: float) -> Estimate:
    """Density in z of P(sup_t > x, X_t ∈ dz), for x >= 0 and z < x."""
    q = JointLawQuery(t, x, z, "supremum")
    require_density(model)
    d = q.x - q.z

    def g(s):
        if s >= t:
            return 0.0
        return d * _p(model, s, -d) * _p(model, t - s, x)

    est = kernel_integral(g, t, points=_support_edges(model, [-d]))
    return Estimate(max(float(est), 0.0), est.abserr)


def inf_joint_density(model: SpectrallyPositiveModel, x: float, z: float, t: float) -> Estimate:
    """Density in z of P(inf_t < -x, X_t ∈ dz), for x > 0 and z >= -x."""
    q = JointLawQuery(t, x, z, "infimum")
    require_density(model)

    def g(s):
        if s >= t:
            return 0.0
        return x * _p(model, s, -x) * _p(model, t - s, x + q.z)

    est = kernel_integral(g, t, points=_support_edges(model, [-x]))
    return Estimate(max(float(est), 0.0), est.abserr)


def joint_density(model: SpectrallyPositiveModel, query: JointLawQuery) -> Estimate:
    if query.side == "supremum":
        return sup_joint_density(model, query.x, query.z, query.t)
    return inf_joint_density(model, query.x, query.z, query.t)


# ---------------------------------------------------------------------------
# atom of the supremum at zero


def sup_atom_density(model: SpectrallyPositiveModel, t: float, z: float) -> AtomValue:
    """Density in z < 0 of P(sup_t = 0, X_t ∈ dz) = (-z / (c t)) p_t(z)."""
    _check_positive(t=t)
    if not z < 0:
        raise ValueError("the atom density is defined for z < 0")
    if not model.is_bounded_variation:
        return AtomValue(0.0, 0.0, applicable=False)
    require_density(model)
    return AtomValue(-z / (model.c * t) * _p(model, t, z))


def sup_atom_total(model: SpectrallyPositiveModel, t: float) -> AtomValue:
    """P(sup_t = 0) = E[X_t^-] / (c t) under bounded variation, 0 (flagged) otherwise."""
    _check_positive(t=t)
    if not model.is_bounded_variation:
        return AtomValue(0.0, 0.0, applicable=False)
    if model.jumps is not None:
        require_density(model)
    value = _law(model, t).neg_part_mean() / (model.c * t)
    return AtomValue(min(max(value, 0.0), 1.0))


# ---------------------------------------------------------------------------
# Laplace transforms and moments of the extrema


def sup_laplace(model: SpectrallyPositiveModel, lam: float, t: float) -> Estimate:
    """E[exp(-lam sup_t)]."""
    _check_positive(t=t)
    if not lam >= 0:
        raise ValueError("lam must be >= 0")
    require_density(model)
    if lam == 0:
        return Estimate(1.0)

    def g(s):
        if s >= t:
            return 0.0
        return _law(model, s).neg_part_mean() * _law(model, t - s).exp_moment_pos(lam)

    est = kernel_integral(g, t)
    law = _law(model, t)
    total = -lam * est + law.exp_moment_pos(lam) + law.cdf(0.0)
    return clamp_probability(Estimate(total, lam * est.abserr), "sup_laplace")


def inf_laplace(model: SpectrallyPositiveModel, lam: float, t: float) -> Estimate:
    """E[exp(lam inf_t)].

    The integrand weights E[(-X_s) e^{lam X_s}; X_s <= 0], the Laplace
    transform in x of x p_s(-x).
    """
    _check_positive(t=t)
    if not lam >= 0:
        raise ValueError("lam must be >= 0")
    require_density(model)
    if lam == 0:
        return Estimate(1.0)

    def g(s):
        if s >= t:
            return 0.0
        return _law(model, t - s).sf(0.0) * _law(model, s).neg_exp_weighted(lam)

    est = kernel_integral(g, t)
    law = _law(model, t)
    total = -lam * est + law.exp_moment_neg(lam) + law.sf(0.0)
    return clamp_probability(Estimate(total, lam * est.abserr), "inf_laplace")


def _check_order(n):
    if int(n) != n or n < 1:
        raise ValueError("moment order must be an integer >= 1")
    return int(n)


def sup_moment(model: SpectrallyPositiveModel, n: int, t: float) -> Estimate:
    """E[sup_t^n]."""
    n = _check_order(n)
    _check_positive(t=t)
    require_density(model)

    def g(s):
        if s >= t:
            return 0.0
        return _law(model, s).neg_part_mean() * _law(model, t - s).pos_truncated_power(n - 1)

    est = kernel_integral(g, t)
    total = n * est + _law(model, t).pos_power_mean(n)
    return Estimate(max(total, 0.0), n * est.abserr)


def inf_moment(model: SpectrallyPositiveModel, n: int, t: float) -> Estimate:
    """E[(-inf_t)^n]; the integrand uses E[(X_s^-)^n], matching x^{n-1} times x p_s(-x)."""
    n = _check_order(n)
    _check_positive(t=t)
    require_density(model)

    def g(s):
        if s >= t:
            return 0.0
        return _law(model, t - s).sf(0.0) * _law(model, s).neg_power_mean(n)

    est = kernel_integral(g, t)
    total = n * est + _law(model, t).neg_power_mean(n)
    return Estimate(max(total, 0.0), n * est.abserr)


# ---------------------------------------------------------------------------
# Phi(lam) and phi(lam, z)


def _upper_gamma_neg(beta, x):
    """Γ(-beta, x) for 0 < beta < 1 and x > 0."""
    g1 = float(special.gammaincc(1.0 - beta, x)) * math.gamma(1.0 - beta)
    return (x ** (-beta) * math.exp(-x) - g1) / beta


def _power_tail(dens, t_end, lam, kind, ratio=2.0):
    """Tail ∫_{t_end}^∞ w(t) dens(t) dt / t under a power-law fit dens(t) ≈ C t^-beta.

    The exponent comes from dens at t_end and t_end / ratio.  ``kind`` is
    ``"damped"`` for w = e^{-lam t} and ``"complement"`` for w = 1 - e^{-lam t}.
    Densities decaying faster than t^-1.5 give a zero tail.
    """
    f1, f2 = dens(t_end), dens(t_end / ratio)
    if f1 <= 0 or f2 <= 0:
        return 0.0
    beta = math.log(f2 / f1) / math.log(ratio)
    if beta >= 1.5:
        return 0.0
    if beta <= 0:
        return math.inf
    C = f1 * t_end**beta
    base = t_end ** (-beta) / beta
    if lam == 0:
        return C * base if kind == "damped" else 0.0
    x = lam * t_end
    if beta < 1.0:
        damped = C * lam**beta * _upper_gamma_neg(beta, x)
    else:
        v0 = math.log(t_end)
        damped = C * float(quad(lambda v: math.exp(-lam * math.exp(v) - beta * v), v0, v0 + 60.0))
    return damped if kind == "damped" else C * base - damped


def _time_integral(f, dens, lam, kind, t_end):
    """∫_0^∞ f(t) dt / t split as [0, 1] (u^2 substitution), [1, t_end] in log time, then a tail."""
    head = kernel_integral(f, 1.0)
    if t_end <= 1.0:
        return Estimate(float(head), head.abserr)
    body = quad(lambda v: f(math.exp(v)), 0.0, math.log(t_end))
    tail = tail_err = 0.0
    if t_end >= T_MAX:
        # two power-law fits over different spans; their spread is the tail error
        tail = _power_tail(dens, t_end, lam, kind)
        alt = _power_tail(dens, t_end, lam, kind, ratio=8.0)
        if not (math.isfinite(tail) and math.isfinite(alt)):
            raise AccuracyError("time integral has a non-integrable tail")
        tail_err = abs(tail - alt)
    total = float(head) + float(body) + tail
    return Estimate(total, head.abserr + body.abserr + tail_err)


def _damped_end(lam):
    if lam == 0:
        return T_MAX
    return min(T_MAX, -math.log(DAMPING_CUTOFF) / lam)


def big_phi(model: SpectrallyPositiveModel, lam: float) -> Estimate:
    """Φ(lam) = ∫_0^∞ (1 - e^{-lam t}) p_t(0) dt / t."""
    if not lam >= 0:
        raise ValueError("lam must be >= 0")
    require_density(model)
    if lam == 0:
        return Estimate(0.0)

    def p0(t):
        return _p(model, t, 0.0)

    return _time_integral(lambda t: -math.expm1(-lam * t) * p0(t), p0, lam, "complement", T_MAX)


def phi_lambda_z(model: SpectrallyPositiveModel, lam: float, z: float) -> Estimate:
    """φ(lam, z) = ∫_0^∞ e^{-lam t} p_t(z) dt / t for z < 0."""
    LaplaceQuery(lam, 1.0, z)
    require_density(model)

    def pz(t):
        return _p(model, t, z)

    return _time_integral(lambda t: math.exp(-lam * t) * pz(t), pz, lam, "damped", _damped_end(lam))


def laplace_p0(model: SpectrallyPositiveModel, lam: float) -> Estimate:
    """∫_0^∞ e^{-lam t} p_t(0) dt for lam > 0, the derivative of Φ.

    The damping cutoff has to fall inside [0, T_MAX], which needs
    lam >= -log(DAMPING_CUTOFF) / T_MAX.
    """
    lam_min = -math.log(DAMPING_CUTOFF) / T_MAX
    if not lam >= lam_min:
        raise ValueError(f"laplace_p0 needs lam >= {lam_min:.2e}")
    require_density(model)

    def p0(t):
        return _p(model, t, 0.0)

    return _time_integral(lambda t: t * math.exp(-lam * t) * p0(t), p0, lam, "damped", _damped_end(lam))


def phi_identity_residual(model: SpectrallyPositiveModel, lam: float, z: float) -> float:
    """φ(lam, z) - φ(0, z) e^{z Φ(lam)}; zero when the multiplicative identity holds."""
    return float(phi_lambda_z(model, lam, z)) - float(phi_lambda_z(model, 0.0, z)) * math.exp(
        z * float(big_phi(model, lam))
    )


def phi_ode_residual(
    model: SpectrallyPositiveModel, lam: float, z: float, h: float = 1e-4, atom_term: bool = False
) -> float:
    """∂φ/∂lam - z φ ∫ e^{-lam t} p_t(0) dt with a central difference in lam.

    Under bounded variation the supremum has an atom at 0 that the x = 0
    joint law misses; ``atom_term=True`` adds the resulting 1/c to the
    Laplace transform of p_t(0), which makes the residual vanish for those
    models too.
    """
    _check_positive(lam=lam)
    h = min(h, 0.5 * lam)
    deriv = (float(phi_lambda_z(model, lam + h, z)) - float(phi_lambda_z(model, lam - h, z))) / (2 * h)
    rate = float(laplace_p0(model, lam))
    if atom_term and model.is_bounded_variation:
        rate += 1.0 / model.c
    return deriv - z * float(phi_lambda_z(model, lam, z)) * rate


# ---------------------------------------------------------------------------
# entrance laws


@dataclass(frozen=True)
class ResidualResult:
    residual: float
    lhs: float
    rhs: float
    quad_err: float
    fd_err: float
    step: float


def _first_passage_kernel(model, t, d, weight, points=()):
    """∫_0^t (d / r) p_r(-d) weight(t - r) dr, the kernel of a first passage below -d."""

    def g(r):
        if r >= t:
            return 0.0
        return d * _p(model, r, -d) * weight(t - r)

    return kernel_integral(g, t, points=list(points) + _support_edges(model, [-d]))


def entrance_law_residual(
    model: SpectrallyPositiveModel,
    qstar: Callable[[float, float], float],
    t: float,
    x: float,
    z: float,
) -> ResidualResult:
    """LHS - RHS of the integro-differential equation for the entrance law q*.

    LHS = ∫_0^t ((x-z)/(t-s)) p_{t-s}(z-x) q*_s(x) ds and RHS is minus the
    x-derivative of the same integral with q*_s(x) replaced by p_s(x), taken
    by a central difference with step max(1e-4, 1e-4 x).
    """
    _check_positive(t=t, x=x)
    if not z < x:
        raise ValueError("entrance-law residual needs z < x")
    require_density(model)
    lhs = _first_passage_kernel(model, t, x - z, lambda s: qstar(s, x))
    h = max(1e-4, 1e-4 * x)

    def J(y):
        return _first_passage_kernel(model, t, y - z, lambda s: _p(model, s, y))

    def central(step):
        a, b = J(x + step), J(x - step)
        return (float(a) - float(b)) / (2 * step), (a.abserr + b.abserr) / (2 * step)

    d1, e1 = central(h)
    d2, _ = central(2 * h)
    rhs = -d1
    return ResidualResult(
        residual=float(lhs) - rhs,
        lhs=float(lhs),
        rhs=rhs,
        quad_err=lhs.abserr + e1,
        fd_err=abs(d2 - d1) / 3.0,
        step=h,
    )


def joint_law_from_entrance(
    model: SpectrallyPositiveModel,
    q: Callable[[float, float], float],
    qstar: Callable[[float, float], float],
    t: float,
    x: float,
    z: float,
) -> Estimate:
    """∫_0^t q*_s(x) q_{t-s}(x - z) ds, a joint density of (sup_t, X_t) built from entrance laws."""
    _check_positive(t=t, x=x)
    if not z < x:
        raise ValueError("need z < x")

    def g(s):
        if s <= 0 or s >= t:
            return 0.0
        return qstar(s, x) * q(t - s, x - z)

    est = quad(g, 0.0, t, points=[0.5 * t] + [e for e in _support_edges(model, [-x, z - x])])
    return Estimate(max(float(est), 0.0), est.abserr)
