"""Subordinators time-changed by the first passage of Z_u = u - r . X_u.

With tau_t = inf{u : Z_u = t} the process Y_t = X(tau_t) is again a
subordinator.  Its density is t / (t + r.y) times the density of X at time
t + r.y, and its Laplace exponent solves w = phi_X(z + w r).
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special, stats

from .errors import HorizonExhaustedError, ModelValidationError, NoDensityError, NonConvergenceError
from .models import CompoundPoisson, GammaSubordinatorJumps, SubordinatorModel
from .rng import DEFAULT_SEED, Tally, run_blocks
from .simulation import GAMMA_EPS, ballot_mc, gamma_levy_jumps

__all__ = [
    "TimeChangeSpec",
    "time_changed_density",
    "solve_phi_Y",
    "phi_Y_residual",
    "TimeChangeSample",
    "simulate_time_change",
    "laplace_mc",
    "ballot_conditional",
]

FIXED_POINT_TOL = 1e-12
MAX_ITER = 200
HORIZON_FACTOR = 100.0


@dataclass(frozen=True)
class TimeChangeSpec:
    model: SubordinatorModel
    r: tuple

    def __post_init__(self):
        r = tuple(float(v) for v in np.atleast_1d(self.r))
        object.__setattr__(self, "r", r)
        if len(r) != self.model.dim:
            raise ModelValidationError(f"r has length {len(r)}, model has dimension {self.model.dim}")
        if any(not (math.isfinite(v) and v >= 0) for v in r):
            raise ModelValidationError("r must be componentwise >= 0")
        if self.load > 1.0 + 1e-15:
            raise ModelValidationError(f"unstable time change: sum r_i E[X_1^(i)] = {self.load} > 1")

    @property
    def r_vec(self) -> np.ndarray:
        return np.array(self.r)

    @property
    def load(self) -> float:
        """Σ r_i E[X^(i)_1]; Z drifts to +inf iff this is below 1."""
        return float(self.r_vec @ self.model.means)

    @property
    def strictly_stable(self) -> bool:
        return self.load < 1.0

    @property
    def kappa(self) -> float:
        """Slope of Z between jumps: 1 - Σ r_i (drift of coordinate i)."""
        return 1.0 - float(sum(ri * c.drift for ri, c in zip(self.r, self.model.coords)))


def _coordinate_density(coord, s, y):
    j = coord.jumps
    if not isinstance(j, GammaSubordinatorJumps):
        raise NoDensityError("coordinate law has an atom (compound Poisson); no density")
    return float(stats.gamma.pdf(y - coord.drift * s, j.shape_rate * s, scale=j.scale))


def time_changed_density(spec: TimeChangeSpec, t: float, y) -> float:
    """p^Y_t(y) = t / (t + r.y) p^X_{t + r.y}(y) for independent gamma coordinates."""
    if not t > 0:
        raise ValueError("t must be positive")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.shape != (spec.model.dim,):
        raise ValueError(f"y must have length {spec.model.dim}")
    if np.any(y < 0):
        raise ValueError("y must be componentwise >= 0")
    s = t + float(spec.r_vec @ y)
    dens = 1.0
    for coord, yi in zip(spec.model.coords, y):
        dens *= _coordinate_density(coord, s, yi)
    return t / s * dens


def phi_Y_residual(spec: TimeChangeSpec, z, w: float) -> float:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    return w - spec.model.exponent(z + w * spec.r_vec)


def solve_phi_Y(spec: TimeChangeSpec, z, tol: float = FIXED_POINT_TOL, max_iter: int = MAX_ITER) -> float:
    """Fixed point w = phi_X(z + w r) by iteration from w = 0, bisection as fallback.

    The map is increasing and convex in w, so the iterates increase
    monotonically to the smallest fixed point.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape != (spec.model.dim,) or np.any(z < 0):
        raise ValueError(f"z must be a nonnegative vector of length {spec.model.dim}")
    if not spec.strictly_stable:
        warnings.warn("time change on the stability boundary: convergence may be slow", RuntimeWarning, stacklevel=2)
    phi, r = spec.model.exponent, spec.r_vec
    w = 0.0
    for _ in range(max_iter):
        nxt = phi(z + w * r)
        if abs(nxt - w) < tol:
            w = nxt
            if abs(phi_Y_residual(spec, z, w)) < tol:
                return w
        w = nxt
    # bisection on f(w) = w - phi(z + w r): f(phi(z)) <= 0 and f grows once past the fixed point
    lo = phi(z)
    hi = max(1.0, 2.0 * lo)
    while phi_Y_residual(spec, z, hi) < 0:
        hi *= 2.0
        if hi > 1e300:
            raise NonConvergenceError("no bracket for the fixed point", residual=phi_Y_residual(spec, z, w))
    root = optimize.brentq(lambda v: phi_Y_residual(spec, z, v), lo, hi, xtol=1e-15, rtol=4.5e-16, maxiter=500)
    res = phi_Y_residual(spec, z, root)
    if abs(res) >= tol:
        raise NonConvergenceError(f"fixed point residual {res:.3e} above {tol:.0e}", residual=res)
    return root


# ---------------------------------------------------------------------------
# simulation


@dataclass(frozen=True)
class TimeChangeSample:
    t: float
    tau: np.ndarray  # (n,)
    Y: np.ndarray  # (n, d)
    min_increment: float  # smallest coordinate increment over all windows (>= 0 for a subordinator)
    truncation_bias: float  # expected discarded jump mass per coordinate, summed
    horizon: float
    exceed_prob_bound: float
    seed: int

    def support_gap(self, r) -> np.ndarray:
        """tau - (t + r.Y) per sample."""
        return self.tau - (self.t + self.Y @ np.asarray(r, dtype=float))


def _window_increment(rng, coord, dt, eps):
    """Jump totals of one coordinate over windows of lengths dt (array), and the jump counts."""
    j = coord.jumps
    if isinstance(j, CompoundPoisson):
        rate, draw = j.rate, (lambda n: j.size_dist.sample(rng, n))
    elif isinstance(j, GammaSubordinatorJumps):
        rate, draw = j.shape_rate * float(special.exp1(eps / j.scale)), (lambda n: gamma_levy_jumps(rng, n, j.scale, eps))
    else:  # pragma: no cover - Coordinate validation forbids other types
        raise ModelValidationError("unsupported coordinate")
    counts = rng.poisson(rate * dt) if rate > 0 else np.zeros(dt.size, dtype=int)
    total = int(counts.sum())
    if total == 0:
        return np.zeros(dt.size), counts
    sizes = draw(total)
    owner = np.repeat(np.arange(dt.size), counts)
    return np.bincount(owner, weights=sizes, minlength=dt.size), counts


def _time_change_block(rng, size, spec, t, eps, horizon):
    d, r, kappa = spec.model.dim, spec.r_vec, spec.kappa
    J = np.zeros((size, d))
    u = np.zeros(size)
    target = np.full(size, t / kappa)
    active = np.ones(size, dtype=bool)
    min_inc = math.inf
    exceeded = 0
    while active.any():
        idx = np.nonzero(active)[0]
        over = target[idx] > horizon
        if over.any():
            exceeded += int(over.sum())
            active[idx[over]] = False
            idx = idx[~over]
            if idx.size == 0:
                break
        dt = target[idx] - u[idx]
        any_jump = np.zeros(idx.size, dtype=bool)
        for i, coord in enumerate(spec.model.coords):
            inc, counts = _window_increment(rng, coord, dt, eps)
            J[idx, i] += inc
            any_jump |= counts > 0
            if inc.size:
                min_inc = min(min_inc, float(inc.min()))
        u[idx] = target[idx]
        done = idx[~any_jump]
        active[done] = False
        moving = idx[any_jump]
        target[moving] = (t + J[moving] @ r) / kappa
    # at termination kappa tau = t + r.J(tau); drift parts add (1 - kappa) tau
    drifts = np.array([c.drift for c in spec.model.coords])
    if np.all(drifts == 0):
        Y = J
        tau = t + Y @ r
    else:
        tau = (t + J @ r) / kappa
        Y = J + tau[:, None] * drifts[None, :]
    return tau, Y, min_inc, exceeded


def simulate_time_change(
    spec: TimeChangeSpec,
    t: float,
    n_samples: int = 100_000,
    seed: int = DEFAULT_SEED,
    eps: float = GAMMA_EPS,
    horizon: float | None = None,
    workers: int = 1,
) -> TimeChangeSample:
    """Sample (tau_t, Y_t) exactly for finite-activity coordinates, with gamma jumps below eps dropped.

    Z rises at slope kappa between jumps and only jumps down, so the level t
    is reached continuously.  Starting from u = t / kappa, each pass adds
    the jumps on the window since the last pass and moves u to
    (t + r.J(u)) / kappa.  A pass with no jumps means Z hits t exactly at u.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    horizon = HORIZON_FACTOR * t if horizon is None else float(horizon)
    fn = functools.partial(_time_change_block, spec=spec, t=t, eps=eps, horizon=horizon)
    parts = run_blocks(fn, n_samples, seed, workers)
    exceeded = sum(p[3] for p in parts)
    # Markov bound with E[tau_t] = t / (1 - load)
    bound = min(1.0, t / ((1.0 - spec.load) * horizon)) if spec.strictly_stable else 1.0
    if exceeded:
        raise HorizonExhaustedError(
            f"{exceeded} of {n_samples} samples did not reach level {t} by u = {horizon} "
            f"(P(tau > horizon) <= {bound:.3g})",
            exceedances=exceeded,
        )
    tau = np.concatenate([p[0] for p in parts])
    Y = np.concatenate([p[1] for p in parts])
    mean_tau = t / (1.0 - spec.load) if spec.strictly_stable else math.inf
    bias = 0.0
    for c in spec.model.coords:
        if isinstance(c.jumps, GammaSubordinatorJumps):
            bias += mean_tau * c.jumps.shape_rate * c.jumps.scale * -math.expm1(-eps / c.jumps.scale)
    return TimeChangeSample(t, tau, Y, min(p[2] for p in parts), bias, horizon, bound, seed)


def laplace_mc(sample: TimeChangeSample, z) -> tuple[float, float]:
    """Empirical E[exp(-z.Y_t)] and its standard error."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    tally = Tally().add(np.exp(-(sample.Y @ z)))
    return tally.mean, tally.stderr


def ballot_conditional(spec: TimeChangeSpec, s: float, t: float, check: bool = False, n_jumps: int = 5, n_samples: int = 100_000, seed: int = DEFAULT_SEED):
    """P(tau_t = s | X_s = y) on s = t + r.y, which equals t / s.

    In check mode the value is estimated with pinned paths: -Z on [0, s] has
    slope -1, positive jumps and ends at -t, so the ballot estimator with
    c = 1, horizon s and barrier t applies.  Returns (t / s, record or None).
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if s < t:
        raise ValueError(f"conditioning manifold needs s >= t (got s={s}, t={t})")
    if s == t:
        return 1.0, None
    record = ballot_mc(n_jumps, c=1.0, t=s, x=t, n_samples=n_samples, seed=seed) if check else None
    return t / s, record
