"""Exact bounded-variation paths and sampled grid paths, with the cyclic shift.

A :class:`BVPath` is ``start - c s + (sum of jumps up to s)`` on ``[0, horizon]``
with finitely many positive jumps, so every functional below (running
extrema, first passage, the ballot set measure) is computed exactly from the
jump list.  :class:`GridPath` holds an arbitrary path sampled on a uniform
grid and read as a right-continuous step function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: slack used only to recognise a pinned terminal value in floating point
ENDPOINT_ATOL = 1e-9


def _frozen(a):
    arr = np.array(a, dtype=float).ravel()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class BVPath:
    """Drift ``-drift_rate`` between jumps, positive jumps at ``jump_times`` in (0, horizon]."""

    horizon: float
    start: float = 0.0
    drift_rate: float = 1.0
    jump_times: np.ndarray = ()
    jump_sizes: np.ndarray = ()

    def __post_init__(self):
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ValueError("horizon must be positive")
        if not (math.isfinite(self.drift_rate) and self.drift_rate >= 0):
            raise ValueError("drift_rate (c) must be >= 0")
        times, sizes = _frozen(self.jump_times), _frozen(self.jump_sizes)
        if times.shape != sizes.shape:
            raise ValueError("jump_times and jump_sizes must have equal length")
        if times.size:
            if np.any(np.diff(times) <= 0):
                raise ValueError("jump_times must be strictly increasing")
            if times[0] <= 0 or times[-1] > self.horizon:
                raise ValueError("jump_times must lie in (0, horizon]")
            if np.any(sizes <= 0):
                raise ValueError("jump sizes must be positive")
        object.__setattr__(self, "jump_times", times)
        object.__setattr__(self, "jump_sizes", sizes)

    def __eq__(self, other):
        if not isinstance(other, BVPath):
            return NotImplemented
        return (
            self.horizon == other.horizon
            and self.start == other.start
            and self.drift_rate == other.drift_rate
            and np.array_equal(self.jump_times, other.jump_times)
            and np.array_equal(self.jump_sizes, other.jump_sizes)
        )

    __hash__ = None

    @property
    def c(self) -> float:
        return self.drift_rate

    @property
    def n_jumps(self) -> int:
        return int(self.jump_times.size)

    @property
    def end_value(self) -> float:
        return evaluate(self, self.horizon)

    def segments(self):
        """(start time, end time, value at start) of each drift segment.

        Segment k runs from jump k-1 (or 0) to jump k (or the horizon); its
        value at the right end is the left limit before the next jump.
        """
        a = np.concatenate([[0.0], self.jump_times])
        b = np.concatenate([self.jump_times, [self.horizon]])
        csum = np.concatenate([[0.0], np.cumsum(self.jump_sizes)])
        v = self.start - self.drift_rate * a + csum
        return a, b, v

    def left_limits(self):
        """Value at the right end of each segment, before any jump there."""
        a, b, v = self.segments()
        return v - self.drift_rate * (b - a)


@dataclass(frozen=True, eq=False)
class GridPath:
    """Path sampled at ``horizon * i / (n - 1)``, i = 0..n-1, read as a right-continuous step function."""

    horizon: float
    values: np.ndarray

    def __post_init__(self):
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ValueError("horizon must be positive")
        vals = _frozen(self.values)
        if vals.size < 2:
            raise ValueError("a grid path needs at least two samples")
        object.__setattr__(self, "values", vals)

    def __eq__(self, other):
        if not isinstance(other, GridPath):
            return NotImplemented
        return self.horizon == other.horizon and np.array_equal(self.values, other.values)

    __hash__ = None

    @property
    def mesh(self) -> float:
        return self.horizon / (self.values.size - 1)

    @property
    def start(self) -> float:
        return float(self.values[0])

    def index(self, s) -> int:
        return min(int(math.floor(s / self.mesh + 1e-9)), self.values.size - 1)


def _check_time(path, s):
    if not (0.0 <= s <= path.horizon):
        raise ValueError(f"time {s!r} outside [0, {path.horizon}]")


# ---------------------------------------------------------------------------
# evaluation and extrema


def evaluate(path, s: float) -> float:
    _check_time(path, s)
    if isinstance(path, GridPath):
        return float(path.values[path.index(s)])
    k = int(np.searchsorted(path.jump_times, s, side="right"))
    return float(path.start - path.drift_rate * s + path.jump_sizes[:k].sum())


def running_inf(path, s: float) -> float:
    """inf over [0, s]; for a BVPath the infimum sits at left limits or at s itself."""
    _check_time(path, s)
    if isinstance(path, GridPath):
        return float(path.values[: path.index(s) + 1].min())
    k = int(np.searchsorted(path.jump_times, s, side="right"))
    lows = path.left_limits()[:k]
    return float(min(path.start, evaluate(path, s), *lows)) if k else float(min(path.start, evaluate(path, s)))


def running_sup(path, s: float) -> float:
    """sup over [0, s]; between jumps the path decreases, so the candidates are post-jump values."""
    _check_time(path, s)
    if isinstance(path, GridPath):
        return float(path.values[: path.index(s) + 1].max())
    k = int(np.searchsorted(path.jump_times, s, side="right"))
    _, _, v = path.segments()
    return float(max(path.start, *v[1 : k + 1])) if k else float(path.start)


def first_passage(path: BVPath, x: float, atol: float = ENDPOINT_ATOL):
    """inf{s : X_s = -x}, or None if the level is not reached by the horizon.

    Jumps go up, so the level can only be hit along a drift segment.  A hit
    exactly at a left limit does not count because the path sits strictly
    above the level before it and jumps away.  The one exception is the
    horizon: a path pinned to end at -x reaches it there, and rounding in
    the jump sum is absorbed by ``atol``.
    """
    if not x > 0:
        raise ValueError("x must be positive")
    level = -x
    a, b, v = path.segments()
    c = path.drift_rate
    last = a.size - 1
    for k in range(a.size):
        if v[k] == level:
            return float(a[k])
        if v[k] < level or c == 0:
            continue
        s = a[k] + (v[k] - level) / c
        if k < last:
            if s < b[k]:
                return float(s)
        elif s < b[k] - atol:
            return float(s)
        elif abs(s - b[k]) <= atol:
            return float(path.horizon)
    return None


def lebesgue_E(path, x: float) -> float:
    """Lebesgue measure of {s : X_s = inf_s, X_s ∈ [inf_t, inf_t + x)}.

    BVPath: exact segment scan.  On a segment the path is at its running
    infimum while it sweeps fresh levels below the previous infimum, at speed
    c, so the measure is the swept level length inside the window over c.
    GridPath: count of grid cells at their running minimum inside the window,
    times the mesh (error at most a few mesh widths).
    """
    if not x > 0:
        raise ValueError("x must be positive")
    if isinstance(path, GridPath):
        vals = path.values
        run_min = np.minimum.accumulate(vals)
        lo = run_min[-1]
        at_inf = (vals <= run_min) & (vals >= lo) & (vals < lo + x)
        return float(at_inf[:-1].sum() * path.mesh)
    a, b, v = path.segments()
    ends = path.left_limits()
    c = path.drift_rate
    inf_t = min(path.start, float(ends.min()))
    lo, hi = inf_t, inf_t + x
    if c == 0:
        # flat path: at its infimum only before the first jump, at level start
        return float(b[0] - a[0]) if lo <= path.start < hi else 0.0
    total = 0.0
    m = path.start
    for k in range(a.size):
        top = min(m, v[k])
        bottom = ends[k]
        if bottom < top:
            total += max(0.0, min(top, hi) - max(bottom, lo))
        m = min(m, bottom)
    return total / c


# ---------------------------------------------------------------------------
# transformations


def shift(path, u: float):
    """The cyclic shift θ_u: increments after u first, then those before u.

    Values at 0 and at the horizon are preserved.  On a BVPath a jump at
    v > u moves to v - u and a jump at v <= u moves to v + horizon - u.
    A GridPath shifts by the nearest whole number of grid steps.
    """
    t = path.horizon
    if not (0.0 <= u <= t):
        raise ValueError(f"shift amount {u!r} outside [0, {t}]")
    if isinstance(path, GridPath):
        n = path.values.size - 1
        k = int(round(u / path.mesh)) % n
        if k == 0:
            return path
        v = path.values
        head = v[0] + (v[k:] - v[k])
        tail = v[1 : k + 1] + (v[n] - v[k])
        new = np.concatenate([head, tail])
        new[-1] = v[-1]
        return GridPath(t, new)
    if u == 0 or u == t:
        return path
    times, sizes = path.jump_times, path.jump_sizes
    after = times > u
    new_times = np.concatenate([times[after] - u, times[~after] + (t - u)])
    new_sizes = np.concatenate([sizes[after], sizes[~after]])
    return BVPath(t, path.start, path.drift_rate, new_times, new_sizes)


def time_reverse(path: BVPath) -> BVPath:
    """s -> start + X_t - X_{(t-s)-}: same drift, jump at v moved to t - v.

    A jump at the horizon itself would land at time 0 and break X_0 = start,
    so such paths are rejected.
    """
    t = path.horizon
    if path.n_jumps and path.jump_times[-1] == t:
        raise ValueError("time reversal needs no jump at the horizon")
    return BVPath(t, path.start, path.drift_rate, (t - path.jump_times)[::-1], path.jump_sizes[::-1])


def check_shift_equivalence(path: BVPath, x: float, u: float) -> bool:
    """Both sides of: T_x(θ_u X) = t  iff  X_u = inf_u and X_u ∈ [inf_t, inf_t + x).

    The path should end at -x.  θ_0 and θ_t are the same map, so u = 0 is
    evaluated at u = t, where the right side reads at the terminal value.
    Returns True when the two sides agree.
    """
    t = path.horizon
    if u == 0:
        u = t
    hit = first_passage(shift(path, u), x)
    lhs = hit is not None and hit == t
    xu = evaluate(path, u)
    inf_u, inf_t = running_inf(path, u), running_inf(path, t)
    rhs = xu == inf_u and inf_t <= xu < inf_t + x
    return lhs == rhs


# ---------------------------------------------------------------------------
# examples


def pure_drift_path(horizon: float, c: float = 1.0, start: float = 0.0) -> BVPath:
    return BVPath(horizon, start, c)


def application_path(t: float = 1.0, x: float = 1.0, n: int = 100_001) -> GridPath:
    """Deterministic path s^2 on [0, t/4), -s^3 - x on [t/4, t/2), -(t-s)^3 - x on [t/2, t].

    It ends at -x, and when x > 7 t^3 / 64 its ballot set has measure t / 4.
    """
    s = np.linspace(0.0, t, n)
    vals = np.where(s < t / 4, s**2, np.where(s < t / 2, -(s**3) - x, -((t - s) ** 3) - x))
    return GridPath(t, vals)
