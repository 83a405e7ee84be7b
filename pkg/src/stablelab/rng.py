"""Seeded random streams and deterministic parallel Monte Carlo reduction.

Every estimator splits its sample budget into fixed-size chunks. Chunk ``i``
draws from stream ``base_stream + i`` so the draws do not depend on how many
worker threads run the chunks, and the per-chunk statistics are merged in a
fixed pairwise tree keyed by chunk index.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

CHUNK_SIZE = 4096

_default_threads = os.cpu_count() or 1


def set_default_threads(threads: int | None) -> None:
    global _default_threads
    _default_threads = max(1, int(threads or os.cpu_count() or 1))


def default_threads() -> int:
    return _default_threads


@dataclass(frozen=True)
class RngState:
    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed & (2**64 - 1), spawn_key=(self.stream & (2**64 - 1),))
        return np.random.Generator(np.random.PCG64(ss))

    def substream(self, index: int) -> "RngState":
        """Stream for chunk ``index``; streams of distinct chunks never collide."""
        return RngState(self.seed, (self.stream << 20) + index + 1)


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    n_samples: int
    flagged: int = 0  # samples that hit a step cap (scored as zero)

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if not self.stderr >= 0:
            raise ValueError("stderr must be non-negative")

    def z_score(self, target: float) -> float:
        if self.stderr == 0:
            return 0.0 if self.mean == target else math.inf
        return (self.mean - target) / self.stderr

    def as_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "n_samples": self.n_samples, "flagged": self.flagged}


@dataclass(frozen=True)
class Moments:
    """Count, mean and centred second moment of a batch (Chan et al. merge)."""

    n: int
    mean: float
    m2: float

    @classmethod
    def of(cls, values: np.ndarray) -> "Moments":
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            return cls(0, 0.0, 0.0)
        mu = float(np.mean(values))
        return cls(int(values.size), mu, float(np.sum((values - mu) ** 2)))

    def merge(self, other: "Moments") -> "Moments":
        if self.n == 0:
            return other
        if other.n == 0:
            return self
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / n
        return Moments(n, mean, m2)

    def estimate(self) -> MCEstimate:
        if self.n < 2:
            return MCEstimate(self.mean, 0.0, max(self.n, 1))
        var = self.m2 / (self.n - 1)
        return MCEstimate(self.mean, math.sqrt(max(var, 0.0) / self.n), self.n)


def pairwise_reduce(items: Sequence, combine: Callable):
    """Reduce ``items`` with a balanced binary tree in index order."""
    items = list(items)
    if not items:
        raise ValueError("nothing to reduce")
    while len(items) > 1:
        nxt = [combine(items[i], items[i + 1]) for i in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]


def chunk_sizes(n: int, chunk: int = CHUNK_SIZE) -> list[int]:
    full, rem = divmod(n, chunk)
    return [chunk] * full + ([rem] if rem else [])


def map_chunks(fn: Callable[[np.random.Generator, int], object], n: int, rng: RngState,
               threads: int | None = None, chunk: int = CHUNK_SIZE) -> list:
    """Run ``fn(generator, size)`` over chunks; results come back in chunk order."""
    sizes = chunk_sizes(n, chunk)
    tasks = [(rng.substream(i), size) for i, size in enumerate(sizes)]
    threads = threads or _default_threads

    def run(task):
        state, size = task
        return fn(state.generator(), size)

    if threads <= 1 or len(tasks) <= 1:
        return [run(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, tasks))


def estimate_from_chunks(values: Sequence[np.ndarray]) -> MCEstimate:
    return pairwise_reduce([Moments.of(v) for v in values], Moments.merge).estimate()
