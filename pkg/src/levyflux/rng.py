"""Reproducible random streams for block-parallel Monte Carlo.

Samples are processed in fixed-size blocks.  Block ``k`` of a run seeded with
``seed`` always draws from a Philox generator keyed by
``SeedSequence([seed, k])``, so an estimate does not depend on how blocks are
spread over workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

DEFAULT_SEED = 20240601
BLOCK_SIZE = 4096


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(block)])))


def blocks(n_samples: int, block_size: int = BLOCK_SIZE) -> Iterator[tuple[int, int]]:
    """(block index, block length) pairs covering n_samples."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    for k in range(math.ceil(n_samples / block_size)):
        yield k, min(block_size, n_samples - k * block_size)


@dataclass
class Tally:
    """Running count, mean and centred second moment (Welford / Chan merge)."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def add(self, values) -> "Tally":
        v = np.asarray(values, dtype=float).ravel()
        if v.size:
            self.merge(Tally(v.size, float(v.mean()), float(((v - v.mean()) ** 2).sum())))
        return self

    def merge(self, other: "Tally") -> "Tally":
        if other.n == 0:
            return self
        n = self.n + other.n
        delta = other.mean - self.mean
        self.mean += delta * other.n / n
        self.m2 += other.m2 + delta * delta * self.n * other.n / n
        self.n = n
        return self

    @property
    def variance(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0

    @property
    def stderr(self) -> float:
        return math.sqrt(self.variance / self.n) if self.n else math.nan


def run_blocks(fn: Callable[[np.random.Generator, int], object], n_samples: int, seed: int, workers: int = 1):
    """Call ``fn(rng, size)`` for every block and return the results in block order.

    ``fn`` must be picklable when ``workers > 1``.
    """
    jobs = list(blocks(n_samples))
    if workers <= 1 or len(jobs) == 1:
        return [fn(block_rng(seed, k), size) for k, size in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_call_block, fn, seed, k, size) for k, size in jobs]
        return [f.result() for f in futures]


def _call_block(fn, seed, k, size):
    return fn(block_rng(seed, k), size)
