"""Brute-force reference implementations used as test oracles.

Everything here is plain Python over lists of (features, target, index)
tuples: no shared code with the package beyond the float operation order
(sequential sums, mean = sum / n) needed for bit-for-bit comparisons.
"""

from __future__ import annotations

import math

import numpy as np


def as_rows(memory) -> list[tuple[tuple[float, ...], float, int]]:
    """A MemorySet (or anything with X, y, idx) as a list of plain tuples."""
    return [
        (tuple(float(v) for v in memory.X[i]), float(memory.y[i]), int(memory.idx[i]))
        for i in range(len(memory.idx))
    ]


def dist(a, b) -> float:
    s = 0.0
    for u, v in zip(a, b):
        t = u - v
        s += t * t
    return math.sqrt(s)


def nearest(rows, query, k: int):
    """Full sort by (distance, index); the first k entries."""
    scored = sorted(((dist(r[0], query), r[2], r) for r in rows), key=lambda e: (e[0], e[1]))
    return [(d, r) for d, _, r in scored[:k]]


def mean_target(neigh) -> float:
    s = 0.0
    for _, r in neigh:
        s += r[1]
    return s / len(neigh)


def knn_mean(rows, query, k: int) -> float:
    return mean_target(nearest(rows, query, k))


def prequential_rmse(window, k: int) -> float:
    s = 0.0
    n = 0
    for j in range(k, len(window)):
        r = knn_mean(window[:j], window[j][0], k) - window[j][1]
        s += r * r
        n += 1
    return math.sqrt(s / n)


def best_window(stm, k: int, l_min: int) -> int:
    """Length of the suffix window with the lowest prequential error (ties: longest)."""
    m = len(stm)
    lengths = [m]
    length = m // 2
    while length >= l_min:
        lengths.append(length)
        length //= 2
    best, best_err = None, math.inf
    for length in lengths:
        err = prequential_rmse(stm[m - length:], k)
        if best is None or err < best_err:
            best, best_err = length, err
    return best


def clean_by_pivot(a, b, pivot, k: int):
    """The five cleaning steps for one pivot of ``b``, written out literally."""
    others = [r for r in b if r[2] != pivot[2]]
    neigh = nearest(others, pivot[0], k)
    radius = max(d for d, _ in neigh)
    if radius == 0.0:
        return list(a)
    tolerance = max(abs(pivot[1] - r[1]) / math.exp(d / radius) for d, r in neigh)
    survivors = []
    for r in a:
        d = dist(pivot[0], r[0])
        if d < radius and abs(pivot[1] - r[1]) / math.exp(d / radius) > tolerance:
            continue
        survivors.append(r)
    return survivors


def clean_fold(a, b, k: int):
    """Fold the single-pivot cleaning over b in ascending index order."""
    out = list(a)
    for pivot in sorted(b, key=lambda r: r[2]):
        out = clean_by_pivot(out, b, pivot, k)
    return out


def compress(rows, l_max: int):
    """Drop the sample with the smallest two-neighbour distance sum until at capacity."""
    rows = list(rows)
    while len(rows) > l_max:
        best, best_score = None, math.inf
        for i, r in enumerate(rows):
            ds = sorted(dist(r[0], q[0]) for j, q in enumerate(rows) if j != i)
            score = 0.0
            for d in ds[:2]:
                score += d
            if score < best_score:
                best, best_score = i, score
        del rows[best]
    return rows


def union(a, b):
    seen = {}
    for r in list(a) + list(b):
        seen.setdefault(r[2], r)
    return [seen[i] for i in sorted(seen)]


class ReferenceSam:
    """Straight-line SAM-kNN regressor over Python lists.

    Follows the same rules as the production engine but recomputes every
    quantity from scratch on every step.
    """

    def __init__(self, k=5, l_min=50, l_max=5000, stm_max=None):
        self.k, self.l_min, self.l_max, self.stm_max = k, l_min, l_max, stm_max
        self.stm: list = []
        self.ltm: list = []
        self.sums = {"STM": [0, 0.0], "LTM": [0, 0.0], "CM": [0, 0.0]}
        self.warm: list = []

    def _err(self, name):
        n, s = self.sums[name]
        return math.inf if n == 0 else math.sqrt(s / n)

    def learn(self, x, y, index):
        row = (tuple(float(v) for v in x), float(y), int(index))
        if len(self.warm) < self.l_min:
            self.warm.append(row)
            if len(self.warm) == self.l_min:
                self.stm = list(self.warm)
                self.ltm = list(self.warm)
            return None
        k = self.k
        preds = {"STM": knn_mean(self.stm, row[0], k)}
        if self.ltm:
            preds["LTM"] = knn_mean(self.ltm, row[0], k)
            preds["CM"] = knn_mean(union(self.stm, self.ltm), row[0], k)
        else:
            preds["CM"] = preds["STM"]
        chosen, best = None, math.inf
        for name in ("STM", "CM", "LTM"):
            if name not in preds or (name == "LTM" and len(self.ltm) < k):
                continue
            err = self._err(name)
            if chosen is None or err < best:
                chosen, best = name, err
        for name, p in preds.items():
            r = p - row[1]
            self.sums[name][0] += 1
            self.sums[name][1] += r * r
        self.stm.append(row)
        keep = best_window(self.stm, k, self.l_min)
        if keep < len(self.stm):
            dropped = self.stm[: len(self.stm) - keep]
            self.stm = self.stm[len(self.stm) - keep:]
            merged = union(self.ltm, clean_fold(dropped, self.stm, k))
            self.ltm = compress(clean_fold(merged, self.stm, k), self.l_max)
        if self.stm_max is not None and len(self.stm) > self.stm_max:
            keep = len(self.stm) // 2
            dropped = self.stm[: len(self.stm) - keep]
            self.stm = self.stm[len(self.stm) - keep:]
            self.ltm = compress(union(self.ltm, dropped), self.l_max)
        return preds[chosen], chosen


def random_stream(rng: np.random.Generator, n: int, dim: int, drift_every: int = 0, noise: float = 0.05):
    """Piecewise-linear random concepts; a new concept every ``drift_every`` steps."""
    X = rng.uniform(-1, 1, size=(n, dim))
    y = np.empty(n)
    w = rng.normal(size=dim)
    for t in range(n):
        if drift_every and t % drift_every == 0 and t:
            w = rng.normal(size=dim)
        y[t] = X[t] @ w + noise * rng.normal()
    return X, y
