"""Short-term window adaptation, memory cleaning and long-term compression.

These functions work on :class:`~samknn.core.MemorySet` values and define the
reference semantics.  :class:`samknn.regressor.SamKnnRegressor` reproduces
them incrementally; its test-suite checks both routes against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .core import InputError, MemorySet, Sample, StateError

DEFAULT_K = 5
DEFAULT_L_MIN = 50
DEFAULT_L_MAX = 5000

# neighbour-list length kept per sample during compression
_COMPRESS_LIST = 8


@dataclass
class SamMemories:
    stm: MemorySet
    ltm: MemorySet
    l_min: int = DEFAULT_L_MIN
    l_max: int = DEFAULT_L_MAX

    def __post_init__(self):
        if self.l_max < self.l_min:
            raise InputError("l_max must be at least l_min")

    @property
    def cm(self) -> MemorySet:
        return self.stm.union(self.ltm)


def candidate_windows(stm: MemorySet | int, l_min: int) -> list[int]:
    """Window lengths m, m//2, m//4, ... that are still at least ``l_min``."""
    m = stm if isinstance(stm, int) else len(stm)
    if m < l_min:
        raise StateError(f"short-term memory holds {m} samples, fewer than l_min={l_min}")
    out = [m]
    length = m // 2
    while length >= l_min:
        out.append(length)
        length //= 2
    return out


def window_residuals(window: MemorySet, k: int, weighted: bool = False) -> np.ndarray:
    """Squared test-then-train residuals inside ``window`` (first k samples skipped)."""
    if len(window) < k + 1:
        raise StateError(f"window of {len(window)} samples cannot be scored with k={k}")
    return K.window_residuals(window.X, window.y, k, weighted)


def window_itte(window: MemorySet, k: int, weighted: bool = False) -> float:
    """Prequential RMSE of a kNN model grown sample by sample inside ``window``."""
    r2 = window_residuals(window, k, weighted)
    return math.sqrt(K.seq_sum(r2) / len(r2))


def adapt_stm(
    mem: SamMemories, k: int, weighted: bool = False
) -> tuple[MemorySet, MemorySet]:
    """Pick the suffix window with the lowest window ITTE.

    Returns ``(new_stm, discarded)``; ties go to the longest window.
    """
    stm = mem.stm
    best_len, best_err = None, math.inf
    for length in candidate_windows(stm, mem.l_min):
        err = window_itte(stm.suffix(length), k, weighted)
        if best_len is None or err < best_err:
            best_len, best_err = length, err
    return stm.suffix(best_len), stm.prefix(len(stm) - best_len)


def _pivot_stats(b: MemorySet, pivot_pos: int, k: int) -> tuple[float, float]:
    D = K.dist_row(b.X, b.X[pivot_pos])
    nn = K.k_smallest_excluding(D, b.idx, k, pivot_pos)
    dx = float(D[nn].max())
    if dx <= 0.0:
        return dx, -math.inf
    gaps = np.abs(b.y[pivot_pos] - b.y[nn]) / np.exp(D[nn] / dx)
    return dx, float(gaps.max())


def clean_one(a: MemorySet, b: MemorySet, pivot: Sample, k: int) -> MemorySet:
    """Remove from ``a`` the samples contradicting ``b`` around ``pivot``.

    The pivot's k nearest neighbours in ``b`` (pivot excluded) fix a radius
    (their largest distance) and a tolerance (their largest target gap to the
    pivot, discounted by exp(distance / radius)).  Samples of ``a`` strictly
    inside the radius whose discounted gap exceeds the tolerance are dropped.
    A zero radius removes nothing.
    """
    if len(b) < k + 1:
        raise StateError(f"cleaning needs at least k+1={k + 1} reference samples, got {len(b)}")
    hits = np.flatnonzero(b.idx == pivot.index)
    if len(hits) != 1:
        raise InputError(f"pivot {pivot.index} is not a member of the reference set")
    if len(a) == 0:
        return a
    p = int(hits[0])
    dx, dy = _pivot_stats(b, p, k)
    if dx <= 0.0:
        return a
    d = K.dist_row(a.X, b.X[p])
    inside = d < dx
    gaps = np.abs(b.y[p] - a.y) / np.exp(d / dx)
    return a.select(~(inside & (gaps > dy)))


def clean_set(a: MemorySet, b: MemorySet, k: int) -> MemorySet:
    """Clean ``a`` by every sample of ``b`` in turn (ascending index order).

    Whether a sample of ``a`` is dropped by a given pivot depends only on that
    sample and on ``b``, so the fold reduces to one pass over all pivots.
    """
    if len(b) < k + 1:
        raise StateError(f"cleaning needs at least k+1={k + 1} reference samples, got {len(b)}")
    if len(a) == 0:
        return a
    dx, dy = K.pivot_radii(b.X, b.y, k)
    keep = K.clean_mask(a.X, a.y, b.X, b.y, dx, dy)
    return a.select(keep)


def compress_ltm(ltm: MemorySet, l_max: int) -> MemorySet:
    """Drop the densest samples one at a time until ``len(ltm) <= l_max``.

    Density is the summed distance to the two nearest other samples and is
    recomputed after every removal; ties remove the oldest sample.
    """
    excess = len(ltm) - l_max
    if excess <= 0:
        return ltm
    removed = K.compress_order(ltm.X, excess, _COMPRESS_LIST)
    keep = np.ones(len(ltm), dtype=bool)
    keep[removed] = False
    return ltm.select(keep)


def absorb_discarded(mem: SamMemories, o_t: MemorySet, k: int) -> SamMemories:
    """Move the samples dropped from the STM into the LTM.

    The discarded samples are cleaned against the new STM and merged into the
    LTM, the whole LTM is cleaned against the STM, and compression restores
    the capacity bound.  Cleaning is idempotent, so the discarded set needs no
    separate pass before the merge.
    """
    merged = mem.ltm.union(o_t)
    ltm = clean_set(merged, mem.stm, k)
    ltm = compress_ltm(ltm, mem.l_max)
    return SamMemories(mem.stm, ltm, mem.l_min, mem.l_max)
