"""Parametric spectrally positive Lévy models and their Laplace exponents.

Every model is described by the exponent

    phi(lam) = log E[exp(-lam * X_1)]
             = -drift * lam + gaussian_coef * lam**2 / 2 + psi_jumps(lam),

where ``psi_jumps`` is the uncompensated jump exponent for the finite-variation
families (compound Poisson, gamma) and the mean-zero compensated exponent
``scale * lam**alpha`` for the spectrally positive stable family.  With that
convention ``drift`` is the slope ``-c`` of a bounded-variation model.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import optimize

from .errors import ModelValidationError, NoDensityError, NonConvergenceError

__all__ = [
    "Exponential",
    "GammaSize",
    "Deterministic",
    "CompoundPoisson",
    "GammaSubordinatorJumps",
    "StablePositive",
    "SpectrallyPositiveModel",
    "Coordinate",
    "SubordinatorModel",
    "brownian",
    "gamma_minus_drift",
    "compound_poisson_minus_drift",
    "stable",
    "pure_drift",
    "laplace_exponent",
    "laplace_exponent_derivative",
    "largest_root",
    "inverse_laplace_exponent",
    "model_moments",
    "model_from_dict",
    "model_to_dict",
    "subordinator_from_dict",
    "load_model",
    "model_hash",
]

ROOT_TOL = 1e-12
MAX_BRACKET_DOUBLINGS = 200


def _positive(name, value):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise ModelValidationError(f"{name} must be a finite positive number, got {value!r}")


# ---------------------------------------------------------------------------
# jump-size distributions for compound Poisson jumps


@dataclass(frozen=True)
class Exponential:
    mean: float

    def __post_init__(self):
        _positive("Exponential.mean", self.mean)

    def laplace(self, lam):
        """E[exp(-lam * Y)]; accepts complex ``lam`` with Re(lam) >= 0."""
        return 1.0 / (1.0 + self.mean * lam)

    def laplace_derivative(self, lam):
        return -self.mean / (1.0 + self.mean * lam) ** 2

    @property
    def size_mean(self):
        return self.mean

    def sample(self, rng, n):
        return rng.exponential(self.mean, n)


@dataclass(frozen=True)
class GammaSize:
    shape: float
    scale: float

    def __post_init__(self):
        _positive("GammaSize.shape", self.shape)
        _positive("GammaSize.scale", self.scale)

    def laplace(self, lam):
        return (1.0 + self.scale * lam) ** (-self.shape)

    def laplace_derivative(self, lam):
        return -self.shape * self.scale * (1.0 + self.scale * lam) ** (-self.shape - 1.0)

    @property
    def size_mean(self):
        return self.shape * self.scale

    def sample(self, rng, n):
        return rng.gamma(self.shape, self.scale, n)


@dataclass(frozen=True)
class Deterministic:
    size: float

    def __post_init__(self):
        _positive("Deterministic.size", self.size)

    def laplace(self, lam):
        return np.exp(-self.size * lam)

    def laplace_derivative(self, lam):
        return -self.size * np.exp(-self.size * lam)

    @property
    def size_mean(self):
        return self.size

    def sample(self, rng, n):
        return np.full(n, float(self.size))


SizeDist = Union[Exponential, GammaSize, Deterministic]


# ---------------------------------------------------------------------------
# jump families


@dataclass(frozen=True)
class CompoundPoisson:
    """Finite-activity positive jumps.  ``rate == 0`` is the degenerate no-jump case."""

    rate: float
    size_dist: SizeDist

    def __post_init__(self):
        if not (math.isfinite(self.rate) and self.rate >= 0):
            raise ModelValidationError(f"CompoundPoisson.rate must be >= 0, got {self.rate!r}")
        if not isinstance(self.size_dist, (Exponential, GammaSize, Deterministic)):
            raise ModelValidationError("CompoundPoisson.size_dist must be Exponential, GammaSize or Deterministic")

    def exponent(self, lam):
        return self.rate * (self.size_dist.laplace(lam) - 1.0)

    def exponent_derivative(self, lam):
        return self.rate * self.size_dist.laplace_derivative(lam)

    @property
    def mean(self):
        return self.rate * self.size_dist.size_mean


@dataclass(frozen=True)
class GammaSubordinatorJumps:
    """Gamma subordinator jumps, Lévy measure ``shape_rate * x**-1 * exp(-x / scale) dx``."""

    shape_rate: float
    scale: float

    def __post_init__(self):
        _positive("GammaSubordinatorJumps.shape_rate", self.shape_rate)
        _positive("GammaSubordinatorJumps.scale", self.scale)

    def exponent(self, lam):
        return -self.shape_rate * np.log(1.0 + self.scale * lam)

    def exponent_derivative(self, lam):
        return -self.shape_rate * self.scale / (1.0 + self.scale * lam)

    @property
    def mean(self):
        return self.shape_rate * self.scale


@dataclass(frozen=True)
class StablePositive:
    """Mean-zero spectrally positive stable jumps: exponent ``scale * lam**alpha``."""

    alpha: float
    scale: float

    def __post_init__(self):
        if not (1.0 < self.alpha < 2.0):
            raise ModelValidationError(f"StablePositive.alpha must lie in (1, 2), got {self.alpha!r}")
        _positive("StablePositive.scale", self.scale)

    def exponent(self, lam):
        # principal branch; (-iu)**alpha has argument -pi*alpha/2 * sign(u)
        return self.scale * np.power(lam, self.alpha)

    def exponent_derivative(self, lam):
        if lam == 0:
            return 0.0
        return self.scale * self.alpha * lam ** (self.alpha - 1.0)

    @property
    def mean(self):
        return 0.0


Jumps = Union[None, CompoundPoisson, GammaSubordinatorJumps, StablePositive]


@dataclass(frozen=True)
class SpectrallyPositiveModel:
    drift: float = 0.0
    gaussian_coef: float = 0.0
    jumps: Jumps = None

    def __post_init__(self):
        if not math.isfinite(self.drift):
            raise ModelValidationError("drift must be finite")
        if not (math.isfinite(self.gaussian_coef) and self.gaussian_coef >= 0):
            raise ModelValidationError(f"gaussian_coef must be >= 0, got {self.gaussian_coef!r}")
        if self.jumps is not None and not isinstance(
            self.jumps, (CompoundPoisson, GammaSubordinatorJumps, StablePositive)
        ):
            raise ModelValidationError(f"unsupported jump family {type(self.jumps).__name__}")
        if not (self.gaussian_coef > 0 or self.drift < 0 or isinstance(self.jumps, StablePositive)):
            raise ModelValidationError(
                "model is a subordinator: need gaussian_coef > 0, drift < 0 or stable jumps"
            )

    @property
    def is_bounded_variation(self) -> bool:
        return self.gaussian_coef == 0 and not isinstance(self.jumps, StablePositive)

    @property
    def has_density(self) -> bool:
        """False when X_t carries an atom (finite activity and no Gaussian part)."""
        if self.gaussian_coef > 0:
            return True
        return isinstance(self.jumps, (GammaSubordinatorJumps, StablePositive))

    @property
    def c(self) -> float:
        """Drift magnitude ``c`` of a bounded-variation model ``X_t = Y_t - c t``."""
        if not self.is_bounded_variation:
            raise ModelValidationError("the drift coefficient c is only defined for bounded-variation models")
        return -self.drift

    @property
    def mean(self) -> float:
        """E[X_1] (always finite for the supported families)."""
        return self.drift + (0.0 if self.jumps is None else self.jumps.mean)

    @property
    def variance(self) -> float:
        """Var[X_1], infinite for stable jumps."""
        v = self.gaussian_coef
        j = self.jumps
        if isinstance(j, StablePositive):
            return math.inf
        if isinstance(j, GammaSubordinatorJumps):
            v += j.shape_rate * j.scale**2
        elif isinstance(j, CompoundPoisson):
            d = j.size_dist
            if isinstance(d, Exponential):
                m2 = 2 * d.mean**2
            elif isinstance(d, GammaSize):
                m2 = d.shape * (d.shape + 1) * d.scale**2
            else:
                m2 = d.size**2
            v += j.rate * m2
        return v

    @property
    def family(self) -> str:
        j = self.jumps
        if j is None:
            return "brownian" if self.gaussian_coef > 0 else "pure_drift"
        if isinstance(j, CompoundPoisson):
            return "compound_poisson"
        if isinstance(j, GammaSubordinatorJumps):
            return "gamma"
        return "stable"

    def exponent(self, lam):
        """Laplace exponent at a real or complex argument, no domain checks."""
        out = -self.drift * lam + 0.5 * self.gaussian_coef * lam * lam
        if self.jumps is not None:
            out = out + self.jumps.exponent(lam)
        return out


# convenience constructors --------------------------------------------------


def brownian(drift=0.0, sigma2=1.0):
    return SpectrallyPositiveModel(drift=drift, gaussian_coef=sigma2)


def gamma_minus_drift(c=1.0, shape_rate=1.0, scale=1.0):
    return SpectrallyPositiveModel(drift=-c, jumps=GammaSubordinatorJumps(shape_rate, scale))


def compound_poisson_minus_drift(c=1.0, rate=1.0, size_dist=None, gaussian_coef=0.0):
    return SpectrallyPositiveModel(
        drift=-c, gaussian_coef=gaussian_coef, jumps=CompoundPoisson(rate, size_dist or Exponential(1.0))
    )


def stable(alpha=1.5, scale=1.0, drift=0.0):
    return SpectrallyPositiveModel(drift=drift, jumps=StablePositive(alpha, scale))


def pure_drift(c=1.0):
    return SpectrallyPositiveModel(drift=-c)


# ---------------------------------------------------------------------------
# exponent, roots, inverse


def laplace_exponent(model: SpectrallyPositiveModel, lam):
    """phi(lam) = log E[exp(-lam X_1)] for lam >= 0 (scalar or array)."""
    arr = np.asarray(lam, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValueError("laplace_exponent requires lam >= 0")
    out = model.exponent(arr)
    return float(out) if np.ndim(out) == 0 else out


def laplace_exponent_derivative(model: SpectrallyPositiveModel, lam: float) -> float:
    d = -model.drift + model.gaussian_coef * lam
    if model.jumps is not None:
        d += float(model.jumps.exponent_derivative(lam))
    return d


def _upper_bracket(fn, target, start=1.0):
    hi = start
    for _ in range(MAX_BRACKET_DOUBLINGS):
        if fn(hi) > target:
            return hi
        hi *= 2.0
    raise NonConvergenceError(f"could not bracket phi(s) = {target}", residual=fn(hi) - target)


def largest_root(model: SpectrallyPositiveModel, tol: float = ROOT_TOL, max_iter: int = 200) -> float:
    """Largest s >= 0 with phi(s) = 0; zero whenever E[X_1] <= 0."""
    if model.mean <= 0:
        return 0.0
    phi = model.exponent
    lo, hi = 0.0, _upper_bracket(phi, 0.0)
    # phi <= 0 exactly on [0, rho] by strict convexity, so the predicate is monotone
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if phi(mid) > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= tol * max(1.0, hi):
            return 0.5 * (lo + hi)
    raise NonConvergenceError("bisection for the largest root did not converge", residual=hi - lo)


def inverse_laplace_exponent(model: SpectrallyPositiveModel, q: float) -> float:
    """Right inverse of phi on [rho, inf)."""
    if not q >= 0:
        raise ValueError("inverse_laplace_exponent requires q >= 0")
    rho = largest_root(model)
    if q == 0:
        return rho
    phi = model.exponent
    if phi(rho) >= q:
        # q below the resolution of the root itself
        return rho
    hi = _upper_bracket(phi, q, start=max(1.0, 2.0 * rho))
    try:
        return optimize.brentq(lambda s: phi(s) - q, rho, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
    except RuntimeError as exc:  # pragma: no cover - brentq raises only on maxiter
        raise NonConvergenceError(str(exc)) from exc


def model_moments(model: SpectrallyPositiveModel, t: float, kind: str) -> float:
    """E[X_t], E[X_t^-] or E[X_t 1{X_t <= 0}]."""
    if not t > 0:
        raise ValueError("t must be positive")
    if kind == "mean":
        return t * model.mean
    from .density import marginal  # local import: density depends on this module

    law = marginal(model, t)
    if kind == "neg_part_mean":
        return law.neg_part_mean()
    if kind == "neg_truncated_mean":
        return -law.neg_part_mean()
    raise ValueError(f"unknown moment kind {kind!r}")


# ---------------------------------------------------------------------------
# subordinators for the time-change construction


@dataclass(frozen=True)
class Coordinate:
    jumps: Union[CompoundPoisson, GammaSubordinatorJumps]
    drift: float = 0.0

    def __post_init__(self):
        if not isinstance(self.jumps, (CompoundPoisson, GammaSubordinatorJumps)):
            raise ModelValidationError("subordinator coordinates need compound Poisson or gamma jumps")
        if not (math.isfinite(self.drift) and self.drift >= 0):
            raise ModelValidationError("subordinator drift must be >= 0")

    def exponent(self, z):
        """-log E[exp(-z X_1)] for this coordinate."""
        return self.drift * z - self.jumps.exponent(z)

    @property
    def mean(self):
        return self.drift + self.jumps.mean


@dataclass(frozen=True)
class SubordinatorModel:
    coords: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(self.coords))
        if len(self.coords) < 1:
            raise ModelValidationError("a subordinator needs at least one coordinate")
        for c in self.coords:
            if not isinstance(c, Coordinate):
                raise ModelValidationError("coords must be Coordinate instances")

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def means(self) -> np.ndarray:
        return np.array([c.mean for c in self.coords])

    def exponent(self, z) -> float:
        """phi_X(z) with E[exp(-z . X_t)] = exp(-t phi_X(z)); independent coordinates."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if z.shape != (self.dim,):
            raise ValueError(f"z must have length {self.dim}")
        return float(sum(c.exponent(zi) for c, zi in zip(self.coords, z)))


# ---------------------------------------------------------------------------
# JSON round trip

_SIZE_TYPES = {"exponential": Exponential, "gamma": GammaSize, "deterministic": Deterministic}


def _size_from_dict(d):
    d = dict(d)
    kind = d.pop("dist", None)
    if kind not in _SIZE_TYPES:
        raise ModelValidationError(f"unknown jump size distribution {kind!r}")
    try:
        return _SIZE_TYPES[kind](**d)
    except TypeError as exc:
        raise ModelValidationError(str(exc)) from exc


def _jumps_from_dict(d):
    if d is None:
        return None
    d = dict(d)
    kind = d.pop("type", None)
    try:
        if kind == "compound_poisson":
            return CompoundPoisson(float(d["rate"]), _size_from_dict(d["size"]))
        if kind == "gamma":
            return GammaSubordinatorJumps(float(d["shape_rate"]), float(d["scale"]))
        if kind == "stable":
            return StablePositive(float(d["alpha"]), float(d["scale"]))
    except KeyError as exc:
        raise ModelValidationError(f"missing jump parameter {exc}") from exc
    raise ModelValidationError(f"unknown jump type {kind!r}")


def _size_to_dict(s):
    if isinstance(s, Exponential):
        return {"dist": "exponential", "mean": s.mean}
    if isinstance(s, GammaSize):
        return {"dist": "gamma", "shape": s.shape, "scale": s.scale}
    return {"dist": "deterministic", "size": s.size}


def _jumps_to_dict(j):
    if j is None:
        return None
    if isinstance(j, CompoundPoisson):
        return {"type": "compound_poisson", "rate": j.rate, "size": _size_to_dict(j.size_dist)}
    if isinstance(j, GammaSubordinatorJumps):
        return {"type": "gamma", "shape_rate": j.shape_rate, "scale": j.scale}
    return {"type": "stable", "alpha": j.alpha, "scale": j.scale}


def model_from_dict(d: dict) -> SpectrallyPositiveModel:
    """Build a model from ``{"family", "drift", "gaussian_coef", "jumps"}``."""
    if not isinstance(d, dict):
        raise ModelValidationError("model document must be a JSON object")
    try:
        drift = float(d.get("drift", 0.0))
        gc = float(d.get("gaussian_coef", 0.0))
    except (TypeError, ValueError) as exc:
        raise ModelValidationError(str(exc)) from exc
    model = SpectrallyPositiveModel(drift=drift, gaussian_coef=gc, jumps=_jumps_from_dict(d.get("jumps")))
    family = d.get("family")
    if family is not None and family != model.family:
        raise ModelValidationError(f"family {family!r} does not match parameters (looks like {model.family!r})")
    return model


def model_to_dict(model: SpectrallyPositiveModel) -> dict:
    return {
        "family": model.family,
        "drift": model.drift,
        "gaussian_coef": model.gaussian_coef,
        "jumps": _jumps_to_dict(model.jumps),
    }


def subordinator_from_dict(d: dict) -> SubordinatorModel:
    """``{"coords": [{"jumps": {...}, "drift": 0.0}, ...]}``; bare jump dicts are accepted too."""
    coords = []
    for entry in d.get("coords", []):
        if "type" in entry:
            entry = {"jumps": entry}
        j = _jumps_from_dict(entry.get("jumps"))
        coords.append(Coordinate(j, float(entry.get("drift", 0.0))))
    return SubordinatorModel(tuple(coords))


def load_model(path):
    """Load either a spectrally positive model or a subordinator from a JSON file."""
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelValidationError(f"{path}: invalid JSON ({exc})") from exc
    if isinstance(d, dict) and "coords" in d:
        return subordinator_from_dict(d)
    return model_from_dict(d)


def model_hash(model) -> str:
    if isinstance(model, SubordinatorModel):
        doc = {"coords": [{"jumps": _jumps_to_dict(c.jumps), "drift": c.drift} for c in model.coords]}
    else:
        doc = model_to_dict(model)
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def require_density(model: SpectrallyPositiveModel):
    if not model.has_density:
        raise NoDensityError(f"{model.family} model without Gaussian part has an atom; no density exists")
