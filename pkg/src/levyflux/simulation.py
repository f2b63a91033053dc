"""Monte Carlo for bounded-variation spectrally positive models.

Paths are simulated exactly for compound Poisson jumps and with jumps below
``eps`` discarded for gamma jumps; the discarded mean mass per path is
reported as ``truncation_bias``.  Every estimator runs over fixed-size
blocks with block-keyed streams (see :mod:`levyflux.rng`).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import ModelValidationError
from .models import CompoundPoisson, Exponential, GammaSubordinatorJumps, SpectrallyPositiveModel
from .paths import BVPath
from .rng import DEFAULT_SEED, Tally, block_rng, run_blocks

__all__ = [
    "GAMMA_EPS",
    "PathBatch",
    "simulate_batch",
    "sample_path",
    "truncation_bias",
    "gamma_levy_jumps",
    "BallotRecord",
    "ballot_mc",
    "ballot_block",
    "KendallRecord",
    "kendall_mc",
    "AtomRecord",
    "atom_mc",
]

#: gamma jumps smaller than this are dropped
GAMMA_EPS = 1e-6


def _require_simulable(model):
    if not model.is_bounded_variation:
        raise ModelValidationError("only bounded-variation models can be simulated path by path")


def truncation_bias(model: SpectrallyPositiveModel, t: float, eps: float = GAMMA_EPS) -> float:
    """Expected total size of the discarded jumps on [0, t]: t ∫_0^eps x ν(dx)."""
    j = model.jumps
    if isinstance(j, GammaSubordinatorJumps):
        return t * j.shape_rate * j.scale * -math.expm1(-eps / j.scale)
    return 0.0


def _rejection(rng, n, propose, accept_prob):
    out = np.empty(n)
    filled = 0
    while filled < n:
        k = n - filled
        y = propose(int(1.6 * k) + 16)
        y = y[rng.random(y.size) < accept_prob(y)][:k]
        out[filled : filled + y.size] = y
        filled += y.size
    return out


def gamma_levy_jumps(rng: np.random.Generator, n: int, scale: float, eps: float = GAMMA_EPS) -> np.ndarray:
    """n iid jumps from the gamma Lévy measure x^-1 e^{-x/scale} restricted to [eps, inf).

    In units y = x / scale the density is proportional to e^{-y}/y.  On
    (d, 1) a log-uniform proposal is kept with probability e^{-y}; on [1, inf)
    a 1 + Exp(1) proposal is kept with probability 1/y.  The two pieces are
    chosen with their exact masses E1(d) - E1(1) and E1(1).
    """
    d = eps / scale
    e1_one = float(special.exp1(1.0))
    p_low = (float(special.exp1(d)) - e1_one) / float(special.exp1(d)) if d < 1 else 0.0
    n_low = int(rng.binomial(n, p_low)) if n else 0
    low = _rejection(
        rng, n_low, lambda m: d * (1.0 / d) ** rng.random(m), lambda y: np.exp(-y)
    ) if n_low else np.empty(0)
    high = _rejection(
        rng, n - n_low, lambda m: 1.0 + rng.exponential(size=m), lambda y: 1.0 / y
    ) if n - n_low else np.empty(0)
    y = np.concatenate([low, high])
    rng.shuffle(y)
    return scale * y


def _jump_rate_and_sizes(model, eps):
    j = model.jumps
    if j is None:
        return 0.0, None
    if isinstance(j, CompoundPoisson):
        return j.rate, lambda rng, n: j.size_dist.sample(rng, n)
    if isinstance(j, GammaSubordinatorJumps):
        rate = j.shape_rate * float(special.exp1(eps / j.scale))
        return rate, lambda rng, n: gamma_levy_jumps(rng, n, j.scale, eps)
    raise ModelValidationError(f"cannot simulate {type(j).__name__} jumps")


@dataclass(frozen=True)
class PathBatch:
    """n paths on [0, horizon] as padded arrays; row i holds counts[i] real jumps then padding.

    Padding entries have time ``horizon`` and size 0, so row-wise sorted
    times keep real jumps first.
    """

    horizon: float
    c: float
    times: np.ndarray
    sizes: np.ndarray
    counts: np.ndarray

    @property
    def n(self) -> int:
        return self.counts.size

    def jumps_before(self):
        """Sum of the jumps strictly before each jump column."""
        return np.cumsum(self.sizes, axis=1) - self.sizes

    def left_limits(self):
        return -self.c * self.times + self.jumps_before()

    def post_jump_values(self):
        return -self.c * self.times + np.cumsum(self.sizes, axis=1)

    def terminal(self):
        return -self.c * self.horizon + self.sizes.sum(axis=1)

    def path(self, i: int) -> BVPath:
        k = int(self.counts[i])
        return BVPath(self.horizon, 0.0, self.c, self.times[i, :k], self.sizes[i, :k])


def simulate_batch(model: SpectrallyPositiveModel, t: float, rng: np.random.Generator, n: int, eps: float = GAMMA_EPS) -> PathBatch:
    _require_simulable(model)
    rate, draw = _jump_rate_and_sizes(model, eps)
    counts = rng.poisson(rate * t, size=n) if rate > 0 else np.zeros(n, dtype=int)
    K = int(counts.max()) if n else 0
    times = np.full((n, K), float(t))
    sizes = np.zeros((n, K))
    if K:
        real = np.arange(K)[None, :] < counts[:, None]
        times[real] = rng.uniform(0.0, t, size=int(counts.sum()))
        times.sort(axis=1)
        sizes[real] = draw(rng, int(counts.sum()))
    return PathBatch(float(t), model.c, times, sizes, counts)


def sample_path(model: SpectrallyPositiveModel, t: float, seed=DEFAULT_SEED, eps: float = GAMMA_EPS) -> BVPath:
    """One path; ``seed`` may be an int or a numpy Generator."""
    rng = seed if isinstance(seed, np.random.Generator) else block_rng(seed, 0)
    return simulate_batch(model, t, rng, 1, eps).path(0)


# ---------------------------------------------------------------------------
# ballot theorem


@dataclass(frozen=True)
class BallotRecord:
    estimate: float
    stderr: float
    target: float
    mean_lebesgue_over_t: float
    general_form_diff: float
    general_form_stderr: float
    n_samples: int
    seed: int


def _lebesgue_E_rows(left, post, end, x, c):
    """Vectorised ballot-set measure for paths starting at 0 with drift -c.

    left[:, k] is the left limit before jump k, post[:, k] the value after it,
    end the terminal value.  Segment k sweeps fresh infimum levels from
    min(previous infimum, value at its start) down to its end value.
    """
    n = left.shape[0]
    seg_end = np.concatenate([left, end[:, None]], axis=1)
    seg_start = np.concatenate([np.zeros((n, 1)), post], axis=1)
    prev_inf = np.minimum.accumulate(np.concatenate([np.zeros((n, 1)), seg_end[:, :-1]], axis=1), axis=1)
    inf_t = np.minimum(0.0, seg_end.min(axis=1))
    top = np.minimum(prev_inf, seg_start)
    lo, hi = inf_t[:, None], inf_t[:, None] + x
    swept = np.clip(np.minimum(top, hi) - np.maximum(seg_end, lo), 0.0, None)
    swept = np.where(seg_end < top, swept, 0.0)
    return swept.sum(axis=1) / c


def ballot_block(rng, size, n_jumps, jump_dist, c, t, x):
    """One block of endpoint-pinned, uniformly shifted paths.

    Returns (times, sizes, hit, lebesgue) where hit marks T_x = t.
    """
    sizes = jump_dist.sample(rng, size * n_jumps).reshape(size, n_jumps)
    sizes *= (c * t - x) / sizes.sum(axis=1, keepdims=True)
    times = np.sort(rng.uniform(0.0, t, size=(size, n_jumps)), axis=1)
    u = rng.uniform(0.0, t, size=size)[:, None]
    shifted = np.where(times > u, times - u, times + (t - u))
    order = np.argsort(shifted, axis=1)
    times = np.take_along_axis(shifted, order, axis=1)
    sizes = np.take_along_axis(sizes, order, axis=1)
    csum = np.cumsum(sizes, axis=1)
    left = -c * times + (csum - sizes)
    post = -c * times + csum
    end = -c * t + csum[:, -1]
    hit = np.all(left > -x, axis=1)
    leb = _lebesgue_E_rows(left, post, end, x, c)
    return times, sizes, hit, leb


def _ballot_tallies(rng, size, n_jumps, jump_dist, c, t, x):
    _, _, hit, leb = ballot_block(rng, size, n_jumps, jump_dist, c, t, x)
    h = hit.astype(float)
    return Tally().add(h), Tally().add(leb / t), Tally().add(h - leb / t)


def ballot_mc(
    n_jumps: int,
    jump_dist=None,
    c: float = 1.0,
    t: float = 1.0,
    x: float = 0.5,
    n_samples: int = 100_000,
    seed: int = DEFAULT_SEED,
    workers: int = 1,
) -> BallotRecord:
    """Estimate P(T_x = t) for paths pinned at -x by a uniform cyclic shift.

    Each sample has n_jumps iid sizes rescaled to total c t - x, iid uniform
    times, and is then shifted by an independent uniform U.  The estimate
    is compared both with x / (c t) and with the mean ballot-set measure over t.
    """
    if n_jumps < 1:
        raise ValueError("need at least one jump")
    if not (c > 0 and t > 0 and x > 0):
        raise ValueError("c, t and x must be positive")
    if not x < c * t:
        raise ValueError(f"endpoint -x is unreachable: need x < c t = {c * t}")
    jump_dist = jump_dist or Exponential(1.0)
    fn = functools.partial(_ballot_tallies, n_jumps=n_jumps, jump_dist=jump_dist, c=c, t=t, x=x)
    hit, leb, diff = Tally(), Tally(), Tally()
    for a, b, d in run_blocks(fn, n_samples, seed, workers):
        hit.merge(a)
        leb.merge(b)
        diff.merge(d)
    return BallotRecord(hit.mean, hit.stderr, x / (c * t), leb.mean, diff.mean, diff.stderr, n_samples, seed)


# ---------------------------------------------------------------------------
# Kendall's identity


@dataclass(frozen=True)
class KendallRecord:
    """First-passage histogram per barrier x against the quadrature of (x/t) p_t(-x)."""

    x_values: np.ndarray
    t_edges: np.ndarray
    empirical: np.ndarray  # (n_x, n_t) fraction of paths with T_x in each t bin
    stderr: np.ndarray
    analytic: np.ndarray
    crossed: np.ndarray  # fraction with T_x <= t_max
    never_crossed: np.ndarray
    truncation_bias: float
    n_samples: int
    seed: int

    def z_scores(self):
        diff = np.abs(self.empirical - self.analytic)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(diff == 0, 0.0, diff / self.stderr)

    def rows(self):
        for i, x in enumerate(self.x_values):
            for j in range(self.t_edges.size - 1):
                yield (
                    0.5 * (self.t_edges[j] + self.t_edges[j + 1]),
                    float(x),
                    float(self.empirical[i, j]),
                    float(self.analytic[i, j]),
                    float(self.stderr[i, j]),
                )


def passage_times(batch: PathBatch, x: float) -> np.ndarray:
    """T_x per path (inf where -x is not reached by the horizon).

    Before the first jump whose left limit is at or below -x the path has
    fallen c T - (jumps so far) = x, so T_x = (x + jumps before) / c.
    """
    left = np.concatenate([batch.left_limits(), batch.terminal()[:, None]], axis=1)
    before = np.concatenate([batch.jumps_before(), batch.sizes.sum(axis=1)[:, None]], axis=1)
    hit = left <= -x
    first = np.argmax(hit, axis=1)
    any_hit = hit[np.arange(batch.n), first]
    T = (x + before[np.arange(batch.n), first]) / batch.c
    return np.where(any_hit, np.minimum(T, batch.horizon), np.inf)


def _kendall_block(rng, size, model, x_values, t_edges, eps):
    batch = simulate_batch(model, t_edges[-1], rng, size, eps)
    counts = np.zeros((x_values.size, t_edges.size - 1))
    crossed = np.zeros(x_values.size)
    for i, x in enumerate(x_values):
        T = passage_times(batch, x)
        finite = np.isfinite(T)
        crossed[i] = finite.sum()
        T = T[finite & (T >= t_edges[0])]
        idx = np.searchsorted(t_edges, T, side="right") - 1
        idx = np.minimum(idx, t_edges.size - 2)  # T = t_max belongs to the last bin
        counts[i] = np.bincount(idx, minlength=t_edges.size - 1)
    return counts, crossed, size


def _analytic_cells(model, x_values, t_edges):
    from .fluctuation import inf_tail

    out = np.full((x_values.size, t_edges.size - 1), np.nan)
    if model.jumps is None and model.gaussian_coef == 0:
        for i, x in enumerate(x_values):
            T = x / model.c
            if T <= t_edges[-1]:
                j = min(int(np.searchsorted(t_edges, T, side="right")) - 1, t_edges.size - 2)
                out[i] = 0.0
                out[i, j] = 1.0
            else:
                out[i] = 0.0
        return out
    if not model.has_density:
        return out
    for i, x in enumerate(x_values):
        cdf = [0.0 if t == 0 else float(inf_tail(model, float(x), float(t))) for t in t_edges]
        out[i] = np.diff(cdf)
    return out


def kendall_mc(
    model: SpectrallyPositiveModel,
    x_grid,
    t_max: float,
    n_samples: int = 100_000,
    seed: int = DEFAULT_SEED,
    t_bins: int = 5,
    t_edges=None,
    workers: int = 1,
    eps: float = GAMMA_EPS,
) -> KendallRecord:
    """Empirical first-passage law of T_x on t bins for each x, against quadrature."""
    _require_simulable(model)
    x_values = np.asarray(x_grid, dtype=float).ravel()
    if np.any(x_values <= 0):
        raise ValueError("barriers must be positive")
    edges = np.linspace(0.0, t_max, t_bins + 1) if t_edges is None else np.asarray(t_edges, dtype=float)
    fn = functools.partial(_kendall_block, model=model, x_values=x_values, t_edges=edges, eps=eps)
    counts = np.zeros((x_values.size, edges.size - 1))
    crossed = np.zeros(x_values.size)
    n = 0
    for c, cr, size in run_blocks(fn, n_samples, seed, workers):
        counts += c
        crossed += cr
        n += size
    emp = counts / n
    se = np.sqrt(emp * (1.0 - emp) / n)
    crossed_frac = crossed / n
    return KendallRecord(
        x_values,
        edges,
        emp,
        se,
        _analytic_cells(model, x_values, edges),
        crossed_frac,
        (n - crossed) / n,
        truncation_bias(model, float(edges[-1]), eps),
        n,
        seed,
    )


# ---------------------------------------------------------------------------
# atom of the supremum


@dataclass(frozen=True)
class AtomRecord:
    estimate: float
    stderr: float
    truncation_bias: float
    n_samples: int
    seed: int


def _atom_block(rng, size, model, t, eps):
    batch = simulate_batch(model, t, rng, size, eps)
    if batch.sizes.shape[1] == 0:
        return Tally().add(np.ones(size))
    real = np.arange(batch.sizes.shape[1])[None, :] < batch.counts[:, None]
    post = np.where(real, batch.post_jump_values(), -np.inf)
    return Tally().add((post.max(axis=1) <= 0.0).astype(float))


def atom_mc(model: SpectrallyPositiveModel, t: float, n_samples: int = 100_000, seed: int = DEFAULT_SEED, workers: int = 1, eps: float = GAMMA_EPS) -> AtomRecord:
    """Monte Carlo P(sup_{s<=t} X_s = 0): no post-jump value exceeds 0."""
    _require_simulable(model)
    fn = functools.partial(_atom_block, model=model, t=t, eps=eps)
    tally = Tally()
    for part in run_blocks(fn, n_samples, seed, workers):
        tally.merge(part)
    return AtomRecord(tally.mean, tally.stderr, truncation_bias(model, t, eps), n_samples, seed)
