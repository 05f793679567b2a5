"""Domain types shared by every module: samples, memory sets and error trackers."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np


class InputError(ValueError):
    """Raised for malformed caller input (bad shapes, non-finite values, ...)."""


class StateError(RuntimeError):
    """Raised when an operation is invoked on an object in an unusable state."""


class DivergenceError(ArithmeticError):
    """Raised when an online model's parameters stop being finite."""


@dataclass(frozen=True)
class Sample:
    """One time step: the feature vector, the scalar target and its time index."""

    features: np.ndarray
    target: float
    index: int

    def __post_init__(self):
        x = np.array(self.features, dtype=np.float64).ravel()
        if not np.all(np.isfinite(x)):
            raise InputError(f"sample {self.index}: non-finite feature value")
        if not math.isfinite(float(self.target)):
            raise InputError(f"sample {self.index}: non-finite target")
        x.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "target", float(self.target))
        object.__setattr__(self, "index", int(self.index))


class MemorySet:
    """Ordered, array-backed collection of samples.

    Samples are kept in strictly increasing index order (insertion order equals
    time order).  The object is treated as an immutable value: every operation
    that changes membership returns a new ``MemorySet``.
    """

    __slots__ = ("X", "y", "idx")

    def __init__(self, X: np.ndarray, y: np.ndarray, idx: np.ndarray, *, check: bool = True):
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.ascontiguousarray(y, dtype=np.float64).ravel()
        idx = np.ascontiguousarray(idx, dtype=np.int64).ravel()
        if X.ndim != 2:
            raise InputError("feature matrix must be two-dimensional")
        if not (len(X) == len(y) == len(idx)):
            raise InputError("features, targets and indices differ in length")
        if check:
            if len(idx) > 1 and np.any(np.diff(idx) <= 0):
                raise InputError("memory indices must be strictly increasing")
            if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
                raise InputError("memory contains non-finite values")
        self.X = X
        self.y = y
        self.idx = idx

    @classmethod
    def empty(cls, dim: int) -> MemorySet:
        return cls(np.empty((0, dim)), np.empty(0), np.empty(0, dtype=np.int64), check=False)

    @classmethod
    def from_samples(cls, samples: Iterable[Sample], dim: int | None = None) -> MemorySet:
        samples = list(samples)
        if not samples:
            if dim is None:
                raise InputError("dimension required for an empty memory")
            return cls.empty(dim)
        X = np.vstack([s.features for s in samples])
        y = np.array([s.target for s in samples])
        idx = np.array([s.index for s in samples], dtype=np.int64)
        return cls(X, y, idx)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return len(self.idx)

    def __iter__(self) -> Iterator[Sample]:
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i: int) -> Sample:
        return Sample(self.X[i], self.y[i], int(self.idx[i]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, MemorySet):
            return NotImplemented
        return (
            np.array_equal(self.idx, other.idx)
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y)
        )

    def __repr__(self) -> str:
        return f"MemorySet(n={len(self)}, dim={self.dim})"

    def indices(self) -> list[int]:
        return self.idx.tolist()

    def take(self, positions: Sequence[int] | np.ndarray) -> MemorySet:
        positions = np.asarray(positions, dtype=np.int64)
        return MemorySet(self.X[positions], self.y[positions], self.idx[positions], check=False)

    def select(self, mask: np.ndarray) -> MemorySet:
        return MemorySet(self.X[mask], self.y[mask], self.idx[mask], check=False)

    def suffix(self, length: int) -> MemorySet:
        """The ``length`` most recent samples."""
        start = len(self) - length
        return MemorySet(self.X[start:], self.y[start:], self.idx[start:], check=False)

    def prefix(self, length: int) -> MemorySet:
        return MemorySet(self.X[:length], self.y[:length], self.idx[:length], check=False)

    def append(self, sample: Sample) -> MemorySet:
        if len(self) and sample.index <= self.idx[-1]:
            raise InputError(f"index {sample.index} does not follow {self.idx[-1]}")
        return MemorySet(
            np.vstack([self.X, sample.features[None, :]]),
            np.append(self.y, sample.target),
            np.append(self.idx, sample.index),
            check=False,
        )

    def without_index(self, index: int) -> MemorySet:
        return self.select(self.idx != index)

    def union(self, other: MemorySet) -> MemorySet:
        """Merge by index; a sample present in both appears once."""
        if len(other) == 0:
            return self
        if len(self) == 0:
            return other
        idx = np.concatenate([self.idx, other.idx])
        order = np.argsort(idx, kind="stable")
        idx = idx[order]
        keep = np.ones(len(idx), dtype=bool)
        keep[1:] = idx[1:] != idx[:-1]
        order = order[keep]
        return MemorySet(
            np.vstack([self.X, other.X])[order],
            np.concatenate([self.y, other.y])[order],
            idx[keep],
            check=False,
        )

    def difference(self, other: MemorySet) -> MemorySet:
        """Samples of ``self`` whose index is not in ``other``."""
        return self.select(~np.isin(self.idx, other.idx))


@dataclass
class ErrorTracker:
    """Running interleaved train-test error (prequential RMSE).

    With ``window=None`` the tracker is cumulative from the first residual;
    otherwise only the last ``window`` squared residuals contribute.
    """

    count: int = 0
    sum_sq: float = 0.0
    window: int | None = None
    _recent: deque = field(default_factory=deque, repr=False)

    def __post_init__(self):
        if self.window is not None and self.window < 1:
            raise InputError("tracker window must be at least 1")

    def record(self, residual: float) -> ErrorTracker:
        return record_residual(self, residual)

    @property
    def value(self) -> float:
        return itte(self)

    def copy(self) -> ErrorTracker:
        return ErrorTracker(self.count, self.sum_sq, self.window, deque(self._recent))


def record_residual(tracker: ErrorTracker, residual: float) -> ErrorTracker:
    """Add one residual to ``tracker`` (in place) and return it."""
    residual = float(residual)
    if not math.isfinite(residual):
        raise InputError(f"non-finite residual {residual!r}")
    sq = residual * residual
    if tracker.window is None:
        tracker.count += 1
        tracker.sum_sq += sq
        return tracker
    tracker._recent.append(sq)
    if len(tracker._recent) > tracker.window:
        tracker._recent.popleft()
    tracker.count = len(tracker._recent)
    # exact re-summation keeps the windowed value free of add/subtract drift
    tracker.sum_sq = math.fsum(tracker._recent)
    return tracker


def itte(tracker: ErrorTracker) -> float:
    """sqrt(sum_sq / count), or +inf for a tracker that has seen nothing."""
    if tracker.count == 0:
        return math.inf
    return math.sqrt(tracker.sum_sq / tracker.count)
