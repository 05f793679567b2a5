"""Exact k-nearest-neighbour search and kNN regression over a MemorySet.

The search is a linear scan.  Memories stay bounded (a few thousand samples
of a few dozen dimensions), where a scan beats tree structures and gives
exact, reproducible results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .core import InputError, MemorySet, Sample, StateError


@dataclass(frozen=True)
class NeighborResult:
    """Neighbours sorted by ascending distance, ties by ascending index."""

    samples: tuple[Sample, ...]
    distances: np.ndarray

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def indices(self) -> list[int]:
        return [s.index for s in self.samples]

    @property
    def targets(self) -> np.ndarray:
        return np.array([s.target for s in self.samples])


def _as_vector(a) -> np.ndarray:
    v = np.ascontiguousarray(a, dtype=np.float64).ravel()
    if not np.all(np.isfinite(v)):
        raise InputError("vector contains non-finite values")
    return v


def distance(a, b) -> float:
    """Euclidean distance between two equal-length vectors."""
    a = _as_vector(a)
    b = _as_vector(b)
    if a.shape != b.shape:
        raise InputError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(K.dist_row(a[None, :], b)[0])


def distances(memory: MemorySet, query) -> np.ndarray:
    """Distances from ``query`` to every sample of ``memory``, in memory order."""
    q = _as_vector(query)
    if q.shape[0] != memory.dim:
        raise InputError(f"query has {q.shape[0]} features, memory has {memory.dim}")
    return K.dist_row(memory.X, q)


def _neighbor_positions(memory: MemorySet, query, k: int) -> tuple[np.ndarray, np.ndarray]:
    if k < 1:
        raise InputError("k must be at least 1")
    if len(memory) == 0:
        raise StateError("k-nearest query on an empty memory")
    D = distances(memory, query)
    pos = K.k_smallest(D, memory.idx, k)
    return pos, D[pos]


def k_nearest(memory: MemorySet, query, k: int) -> NeighborResult:
    """The ``min(k, len(memory))`` samples closest to ``query``."""
    pos, dist = _neighbor_positions(memory, query, k)
    return NeighborResult(tuple(memory[int(p)] for p in pos), dist)


def knn_predict(memory: MemorySet, query, k: int, weighted: bool = False) -> float:
    """Mean target of the k nearest samples (inverse-distance weighted if asked)."""
    pos, dist = _neighbor_positions(memory, query, k)
    return float(K.aggregate(dist, memory.y[pos], weighted))


class RunningScaler:
    """Per-feature running z-score (Welford).

    Statistics are updated with every vector passed to :meth:`update`; the
    transform of a vector uses the statistics at the time it is called, so a
    sample stored in a memory keeps the coordinates it was given on arrival.
    """

    def __init__(self, dim: int, eps: float = 1e-12):
        self.n = 0
        self.mean = np.zeros(dim)
        self._m2 = np.zeros(dim)
        self.eps = eps

    def update(self, x) -> None:
        x = np.asarray(x, dtype=np.float64)
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self._m2 += delta * (x - self.mean)

    @property
    def std(self) -> np.ndarray:
        if self.n < 2:
            return np.ones_like(self.mean)
        sd = np.sqrt(self._m2 / (self.n - 1))
        return np.where(sd > self.eps, sd, 1.0)

    def transform(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std
