"""SAM-kNN regression: kNN over a short-term, a long-term and a combined memory.

Per step the regressor

1. predicts the new sample with each of the three memories and records every
   residual in that memory's error tracker (the emitted prediction comes from
   the memory with the lowest tracked error),
2. appends the sample to the short-term memory (STM),
3. scores the suffix windows m, m/2, m/4, ... of the STM with their
   test-then-train error and keeps the best one,
4. on a shrink, cleans the dropped samples and the long-term memory (LTM)
   against the new STM, merges them and compresses the LTM to capacity.

Step 3 is incremental.  For each STM sample the kNN prediction is cached as a
step function of the window start (it only changes when a closer sample
enters the window), and every candidate window keeps the squared residual of
each of its samples.  Moving a window start forward only touches the samples
whose neighbour set loses the departing sample.  The result is bit-identical
to evaluating :func:`samknn.memory.window_itte` from scratch.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels as K
from .core import ErrorTracker, InputError, MemorySet, Sample, StateError, itte, record_residual
from .memory import DEFAULT_K, DEFAULT_L_MAX, DEFAULT_L_MIN, SamMemories, _COMPRESS_LIST


class Memory(enum.Enum):
    STM = "STM"
    LTM = "LTM"
    CM = "CM"


# selection order on equal errors
_TIE_ORDER = (Memory.STM, Memory.CM, Memory.LTM)


@dataclass(frozen=True)
class SamConfig:
    """Hyper-parameters of :class:`SamKnnRegressor`.

    ``stm_max`` caps the short-term memory: once exceeded, its older half is
    moved to the long-term memory.  ``adapt_stride`` evaluates the window
    sizes only every r-th sample (r > 1 is an approximation).
    ``tracker_window`` switches the three sub-model trackers from cumulative
    to sliding-window errors.
    """

    k: int = DEFAULT_K
    l_min: int = DEFAULT_L_MIN
    l_max: int = DEFAULT_L_MAX
    stm_max: int | None = 5000
    weighted: bool = False
    adapt_stride: int = 1
    tracker_window: int | None = None

    def __post_init__(self):
        if self.k < 1:
            raise InputError("k must be at least 1")
        if self.l_min < self.k + 1:
            raise InputError("l_min must be at least k + 1")
        if self.l_max < self.l_min:
            raise InputError("l_max must be at least l_min")
        if self.stm_max is not None and self.stm_max < 2 * self.l_min:
            raise InputError("stm_max must be at least 2 * l_min")
        if self.adapt_stride < 1:
            raise InputError("adapt_stride must be at least 1")


class StepResult(NamedTuple):
    prediction: float
    chosen: Memory
    residuals: dict  # Memory -> residual (prediction - target) per sub-model


@dataclass
class StepTrace:
    index: int
    prediction: float
    target: float
    chosen: Memory
    stm_size: int
    ltm_size: int
    shrunk: bool


class _Level:
    """One candidate window: its start (STM sequence number) and residuals."""

    __slots__ = ("start", "r2")

    def __init__(self, start: int, capacity: int):
        self.start = start
        self.r2 = np.zeros(capacity)


@dataclass
class _Shadow:
    preds: dict
    stair: tuple
    stm_set: tuple
    ltm_set: tuple | None


class SamKnnRegressor:
    """Online kNN regressor with self-adjusting short- and long-term memories.

    The first ``l_min`` samples initialise both memories and yield no
    prediction; afterwards :meth:`predict_learn` follows test-then-train.
    """

    def __init__(self, config: SamConfig | None = None, **kwargs):
        if config is None:
            config = SamConfig(**kwargs)
        elif kwargs:
            raise InputError("pass either a config or keyword arguments")
        self.config = config
        self.k = config.k
        self.samples_seen = 0
        self.e_stm = ErrorTracker(window=config.tracker_window)
        self.e_ltm = ErrorTracker(window=config.tracker_window)
        self.e_cm = ErrorTracker(window=config.tracker_window)
        # error of the emitted predictions, always cumulative
        self.e_model = ErrorTracker()
        self.n_shrinks = 0
        self.n_shifts = 0
        self.trace: list[StepTrace] | None = None
        self._warm: list[Sample] = []
        self._dim: int | None = None
        self._ready = False
        self._last_index: int | None = None

    # ------------------------------------------------------------------ state

    @property
    def initialized(self) -> bool:
        return self._ready

    @property
    def warmup(self) -> int:
        return self.config.l_min

    @property
    def stm(self) -> MemorySet:
        self._require_ready()
        m = self._m
        return MemorySet(self._sx[:m].copy(), self._sy[:m].copy(), self._sidx[:m].copy(), check=False)

    @property
    def ltm(self) -> MemorySet:
        self._require_ready()
        return MemorySet(self._lx.copy(), self._ly.copy(), self._lidx.copy(), check=False)

    @property
    def memories(self) -> SamMemories:
        return SamMemories(self.stm, self.ltm, self.config.l_min, self.config.l_max)

    @property
    def stm_size(self) -> int:
        return self._m if self._ready else len(self._warm)

    @property
    def ltm_size(self) -> int:
        return len(self._lidx) if self._ready else 0

    def itte(self) -> float:
        """ITTE of the emitted predictions."""
        return itte(self.e_model)

    def tracker(self, which: Memory) -> ErrorTracker:
        return {Memory.STM: self.e_stm, Memory.LTM: self.e_ltm, Memory.CM: self.e_cm}[which]

    def window_errors(self) -> list[tuple[int, float]]:
        """(length, error) of every candidate window of the current STM."""
        self._require_ready()
        return [(self._m >> i, self._level_error(i)) for i in range(len(self._levels))]

    def _require_ready(self):
        if not self._ready:
            raise StateError("regressor still warming up")

    # ------------------------------------------------------------------- init

    def initialize(self, samples: list[Sample]) -> None:
        """Fill both memories with exactly ``l_min`` samples."""
        if self._ready:
            raise StateError("regressor already initialised")
        if len(samples) != self.config.l_min:
            raise InputError(f"initialisation needs exactly l_min={self.config.l_min} samples, got {len(samples)}")
        dim = len(samples[0].features)
        for s in samples:
            self._check_sample(s, dim)
        self._dim = dim
        cap = max(2 * self.config.l_min, 64)
        self._sx = np.empty((cap, dim))
        self._sy = np.empty(cap)
        self._sidx = np.empty(cap, dtype=np.int64)
        self._m = 0
        self._base = 0  # sequence number of STM position 0
        self._stairs: list[tuple[np.ndarray, np.ndarray]] = []
        self._rev: dict[int, list[tuple[int, int]]] = {}
        self._levels: list[_Level] = [_Level(0, cap)]
        for s in samples:
            self._push_stm(s.features, s.target, s.index, self._staircase(s.features))
        init = MemorySet.from_samples(samples)
        self._lx, self._ly, self._lidx = init.X.copy(), init.y.copy(), init.idx.copy()
        self._ready = True
        self._last_index = samples[-1].index

    def _check_sample(self, s: Sample, dim: int):
        if len(s.features) != dim:
            raise InputError(f"sample {s.index}: expected {dim} features, got {len(s.features)}")
        if self._last_index is not None and s.index <= self._last_index:
            raise InputError(f"sample index {s.index} does not follow {self._last_index}")
        self._last_index = s.index

    # ------------------------------------------------------------- prediction

    def _staircase(self, x: np.ndarray):
        m = self._m
        D = K.dist_row(self._sx[:m], x)
        return K.staircase(D, self._sy[:m], self.k, self.config.weighted)

    def _shadow(self, x: np.ndarray) -> _Shadow:
        k, weighted = self.k, self.config.weighted
        stair = self._staircase(x)
        starts, preds, set_pos, set_dist = stair
        preds_out = {Memory.STM: float(preds[-1])}
        stm_set = (self._sidx[set_pos], set_dist, self._sy[set_pos])
        ltm_set = None
        if len(self._lidx):
            D = K.dist_row(self._lx, x)
            pos = K.k_smallest(D, self._lidx, k)
            ltm_set = (self._lidx[pos], D[pos], self._ly[pos])
            preds_out[Memory.LTM] = float(K.aggregate(D[pos], self._ly[pos], weighted))
            idx = np.concatenate([stm_set[0], ltm_set[0]])
            dist = np.concatenate([stm_set[1], ltm_set[1]])
            tgt = np.concatenate([stm_set[2], ltm_set[2]])
            order = np.lexsort((idx, dist))
            idx, dist, tgt = idx[order], dist[order], tgt[order]
            # a sample held by both memories shows up twice with equal distance
            keep = np.ones(len(idx), dtype=bool)
            keep[1:] = ~((idx[1:] == idx[:-1]) & (dist[1:] == dist[:-1]))
            dist, tgt = dist[keep][:k], tgt[keep][:k]
            preds_out[Memory.CM] = float(K.aggregate(dist, tgt, weighted))
        else:
            preds_out[Memory.CM] = preds_out[Memory.STM]
        return _Shadow(preds_out, stair, stm_set, ltm_set)

    def _choose(self, available) -> Memory:
        best, best_err = None, math.inf
        for mem in _TIE_ORDER:
            if mem not in available:
                continue
            if mem is Memory.LTM and len(self._lidx) < self.k:
                continue
            err = itte(self.tracker(mem))
            if best is None or err < best_err:
                best, best_err = mem, err
        return best

    def predict_one(self, features) -> tuple[float, Memory]:
        """Prediction of the best memory; does not change any state."""
        self._require_ready()
        x = np.ascontiguousarray(features, dtype=np.float64).ravel()
        if x.shape[0] != self._dim:
            raise InputError(f"expected {self._dim} features, got {x.shape[0]}")
        shadow = self._shadow(x)
        chosen = self._choose(shadow.preds)
        return shadow.preds[chosen], chosen

    # --------------------------------------------------------------- learning

    def learn_one(self, features, target: float, index: int | None = None) -> StepResult | None:
        """Test-then-train on one sample.  Returns None while warming up."""
        if index is None:
            index = (self._last_index + 1) if self._last_index is not None else 0
        sample = Sample(features, target, index)
        if not self._ready:
            dim = len(self._warm[0].features) if self._warm else len(sample.features)
            self._check_sample(sample, dim)
            self._warm.append(sample)
            self.samples_seen += 1
            if len(self._warm) == self.config.l_min:
                warm, self._warm = self._warm, []
                self._last_index = None
                self.initialize(warm)
            return None
        self._check_sample(sample, self._dim)
        x, y = sample.features, sample.target
        shadow = self._shadow(x)
        chosen = self._choose(shadow.preds)
        prediction = shadow.preds[chosen]
        residuals = {}
        for mem, pred in shadow.preds.items():
            if mem is Memory.LTM and shadow.ltm_set is None:
                continue
            residuals[mem] = pred - y
            record_residual(self.tracker(mem), pred - y)
        record_residual(self.e_model, prediction - y)
        self.samples_seen += 1

        self._push_stm(x, y, sample.index, shadow.stair)
        shrunk = False
        if (self.samples_seen % self.config.adapt_stride) == 0:
            shrunk = self._adapt()
        cap = self.config.stm_max
        if cap is not None and self._m > cap:
            self._shift_half()
        if self.trace is not None:
            self.trace.append(
                StepTrace(sample.index, prediction, y, chosen, self._m, len(self._lidx), shrunk)
            )
        return StepResult(prediction, chosen, residuals)

    predict_learn = learn_one

    # ------------------------------------------------------- STM bookkeeping

    def _grow(self):
        cap = len(self._sy) * 2
        self._sx = np.resize(self._sx, (cap, self._dim))
        self._sy = np.resize(self._sy, cap)
        self._sidx = np.resize(self._sidx, cap)
        for lv in self._levels:
            lv.r2 = np.resize(lv.r2, cap)

    @staticmethod
    def _lookup(stair, s: int) -> float:
        starts, preds = stair
        # starts are descending; take the last entry still >= s
        t = int(np.searchsorted(-starts, -s, side="right")) - 1
        return float(preds[t])

    def _push_stm(self, x, y, index, stair):
        if self._m == len(self._sy):
            self._grow()
        pos = self._m
        seq = self._base + pos
        self._sx[pos] = x
        self._sy[pos] = y
        self._sidx[pos] = index
        starts = stair[0] + self._base
        preds = stair[1]
        self._stairs.append((starts, preds))
        rev = self._rev
        for t in range(1, len(starts)):
            rev.setdefault(int(starts[t]), []).append((seq, t))
        self._m += 1
        self._update_levels()

    def _update_levels(self):
        m, k, base = self._m, self.k, self._base
        newest = base + m - 1
        for i, lv in enumerate(self._levels):
            target = base + m - (m >> i)
            while lv.start < target:
                self._advance(lv)
            self._set_r2(lv, newest)
        i = len(self._levels)
        if (m >> i) >= self.config.l_min:
            lv = _Level(base + m - (m >> i), len(self._sy))
            for seq in range(lv.start + k, newest + 1):
                self._set_r2(lv, seq)
            self._levels.append(lv)

    def _set_r2(self, lv: _Level, seq: int):
        if seq - lv.start < self.k:
            return
        pos = seq - self._base
        r = self._lookup(self._stairs[pos], lv.start) - self._sy[pos]
        lv.r2[pos] = r * r

    def _advance(self, lv: _Level):
        p = lv.start
        lv.start = p + 1
        entries = self._rev.get(p)
        if not entries:
            return
        base, k = self._base, self.k
        for seq, t in entries:
            if seq - lv.start < k:
                continue
            pos = seq - base
            r = self._stairs[pos][1][t - 1] - self._sy[pos]
            lv.r2[pos] = r * r

    def _level_error(self, i: int) -> float:
        lv = self._levels[i]
        lo = lv.start - self._base + self.k
        r2 = lv.r2[lo:self._m]
        return math.sqrt(K.seq_sum(r2) / len(r2))

    def _adapt(self) -> bool:
        best, best_err = 0, math.inf
        for i in range(len(self._levels)):
            err = self._level_error(i)
            if err < best_err:
                best, best_err = i, err
        if best == 0:
            return False
        discarded = self._cut_stm(best)
        self._absorb(discarded, clean=True)
        self.n_shrinks += 1
        return True

    def _shift_half(self):
        discarded = self._cut_stm(1)
        self._absorb(discarded, clean=False)
        self.n_shifts += 1

    def _cut_stm(self, level: int) -> MemorySet:
        """Keep the window of candidate ``level``; return the dropped prefix."""
        cut = self._levels[level].start - self._base
        dropped = MemorySet(
            self._sx[:cut].copy(), self._sy[:cut].copy(), self._sidx[:cut].copy(), check=False
        )
        m = self._m
        keep = m - cut
        self._sx[:keep] = self._sx[cut:m]
        self._sy[:keep] = self._sy[cut:m]
        self._sidx[:keep] = self._sidx[cut:m]
        levels = self._levels[level:]
        for lv in levels:
            lv.r2[:keep] = lv.r2[cut:m]
        self._levels = levels
        for seq in range(self._base, self._base + cut):
            self._rev.pop(seq, None)
        del self._stairs[:cut]
        self._base += cut
        self._m = keep
        return dropped

    # ---------------------------------------------------------------- the LTM

    def _absorb(self, discarded: MemorySet, clean: bool):
        ltm = MemorySet(self._lx, self._ly, self._lidx, check=False).union(discarded)
        if clean and len(ltm):
            m = self._m
            dx, dy = K.pivot_radii(self._sx[:m], self._sy[:m], self.k)
            ltm = ltm.select(K.clean_mask(ltm.X, ltm.y, self._sx[:m], self._sy[:m], dx, dy))
        excess = len(ltm) - self.config.l_max
        if excess > 0:
            removed = K.compress_order(ltm.X, excess, _COMPRESS_LIST)
            keep = np.ones(len(ltm), dtype=bool)
            keep[removed] = False
            ltm = ltm.select(keep)
        self._lx, self._ly, self._lidx = ltm.X, ltm.y, ltm.idx


# ---------------------------------------------------------------- functional API


def init(first_samples: list[Sample], config: SamConfig | None = None) -> SamKnnRegressor:
    """A regressor whose memories are filled with ``first_samples``."""
    reg = SamKnnRegressor(config or SamConfig())
    reg.initialize(list(first_samples))
    reg.samples_seen = len(first_samples)
    return reg


def predict(state: SamKnnRegressor, features) -> tuple[float, Memory]:
    return state.predict_one(features)


def learn_one(state: SamKnnRegressor, sample: Sample) -> tuple[SamKnnRegressor, dict]:
    result = state.learn_one(sample.features, sample.target, sample.index)
    return state, (result.residuals if result is not None else {})
