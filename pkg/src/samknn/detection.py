"""Residual-based anomaly detection with one virtual sensor per channel.

Virtual sensor j predicts channel j from the concurrent readings of all other
channels.  An alarm is raised when the absolute residual exceeds a threshold
derived from that sensor's recent residuals.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import DivergenceError, InputError


@dataclass(frozen=True)
class ThresholdConfig:
    """How alarm thresholds are set.

    ``mode="adaptive"``: mean + c * std of the last ``window`` signed
    residuals, never below ``floor``; no alarms until ``min_history``
    residuals are known.  ``mode="fixed"``: the constant ``value``.
    ``one_sided`` alarms only on under-readings (observation below the
    prediction), the signature of a leak.
    """

    mode: str = "adaptive"
    c: float = 4.0
    floor: float = 0.05
    window: int = 1000
    min_history: int = 100
    value: float = math.inf
    one_sided: bool = False

    def __post_init__(self):
        if self.mode not in ("adaptive", "fixed"):
            raise InputError(f"unknown threshold mode {self.mode!r}")
        if self.window < 1 or self.min_history < 0:
            raise InputError("threshold window must be >= 1 and min_history >= 0")
        if self.c < 0 or self.floor < 0:
            raise InputError("threshold c and floor must be non-negative")


def residual_threshold(history: Sequence[float] | np.ndarray, config: ThresholdConfig) -> float:
    """Threshold for the next residual given the ``history`` of earlier ones."""
    if config.mode == "fixed":
        return float(config.value)
    h = np.asarray(history, dtype=np.float64)
    if len(h) > config.window:
        h = h[-config.window:]
    if len(h) < max(config.min_history, 1):
        return math.inf if config.min_history > 0 else config.floor
    mu = float(h.mean())
    sigma = float(h.std())
    return max(mu + config.c * sigma, config.floor)


class _RunningWindow:
    """Sliding sum / sum of squares, re-summed exactly every ``window`` pushes."""

    def __init__(self, window: int):
        self.window = window
        self.buf: deque = deque()
        self.s = 0.0
        self.s2 = 0.0
        self._since = 0

    def push(self, r: float):
        self.buf.append(r)
        self.s += r
        self.s2 += r * r
        if len(self.buf) > self.window:
            old = self.buf.popleft()
            self.s -= old
            self.s2 -= old * old
        self._since += 1
        if self._since >= self.window:
            self.s = math.fsum(self.buf)
            self.s2 = math.fsum(v * v for v in self.buf)
            self._since = 0

    def threshold(self, config: ThresholdConfig) -> float:
        n = len(self.buf)
        if n < max(config.min_history, 1):
            return math.inf if config.min_history > 0 else config.floor
        mu = self.s / n
        var = max(self.s2 / n - mu * mu, 0.0)
        return max(mu + config.c * math.sqrt(var), config.floor)


@dataclass(frozen=True)
class AlarmRecord:
    index: int
    sensor: int
    residual: float
    threshold: float
    alarm: bool


@dataclass(frozen=True)
class DetectionScore:
    """tp/fn are None for runs without an anomaly window."""

    tp: int | None
    fp: int
    fn: int | None


def is_alarm(residual: float, threshold: float, one_sided: bool = False) -> bool:
    if one_sided:
        # residual = prediction - observation: a reading below the prediction
        return residual > threshold
    return abs(residual) > threshold


class VirtualSensorBank:
    """One regressor per channel, each fed the other channels as features.

    ``factory(j)`` builds the regressor of channel j; it must offer
    ``learn_one(features, target, index)`` (test-then-train, returning the
    prediction or something with a ``prediction`` attribute, or None while
    warming up) and ``predict_one(features)``.
    """

    def __init__(
        self,
        n_sensors: int,
        factory: Callable[[int], object],
        threshold: ThresholdConfig | None = None,
        freeze_on_alarm: bool = False,
        warmup: int | None = None,
    ):
        if n_sensors < 2:
            raise InputError("a virtual sensor bank needs at least two channels")
        self.n = n_sensors
        self.threshold = threshold or ThresholdConfig()
        self.freeze_on_alarm = freeze_on_alarm
        self.regressors = [factory(j) for j in range(n_sensors)]
        if warmup is None:
            warmup = max(int(getattr(r, "warmup", 0)) for r in self.regressors)
        self.warmup = warmup
        self._windows = [_RunningWindow(self.threshold.window) for _ in range(n_sensors)]
        self._others = [np.array([i for i in range(n_sensors) if i != j]) for j in range(n_sensors)]
        self.steps = 0
        self.failed: dict[int, str] = {}

    def _threshold(self, j: int) -> float:
        if self.threshold.mode == "fixed":
            return float(self.threshold.value)
        return self._windows[j].threshold(self.threshold)

    def _check(self, observation) -> np.ndarray:
        obs = np.asarray(observation, dtype=np.float64).ravel()
        if obs.shape[0] != self.n:
            raise InputError(f"observation has {obs.shape[0]} channels, bank expects {self.n}")
        return obs

    def _sensor_step(self, j: int, obs: np.ndarray, t: int, warming: bool) -> AlarmRecord | None:
        reg = self.regressors[j]
        x = obs[self._others[j]]
        y = float(obs[j])
        threshold = self._threshold(j)
        if self.freeze_on_alarm and not warming and _ready(reg):
            pred = _prediction(reg.predict_one(x))
            residual = pred - y
            alarm = is_alarm(residual, threshold, self.threshold.one_sided)
            if not alarm:
                _learn(reg, x, y, t, self, j)
        else:
            pred = _learn(reg, x, y, t, self, j)
            if pred is None or warming:
                return None
            residual = pred - y
            alarm = is_alarm(residual, threshold, self.threshold.one_sided)
        if not math.isfinite(residual):
            self.failed[j] = "non-finite prediction"
            return None
        self._windows[j].push(residual)
        return AlarmRecord(t, j, residual, threshold, alarm)

    def step(self, observation, t: int) -> list[AlarmRecord]:
        """Process one observation; returns one record per sensor after warm-up."""
        obs = self._check(observation)
        self.steps += 1
        warming = self.steps <= self.warmup
        records = []
        for j in range(self.n):
            if j in self.failed:
                continue
            rec = self._sensor_step(j, obs, t, warming)
            if rec is not None:
                records.append(rec)
        return records

    def step_batch(self, observations, times) -> list[AlarmRecord]:
        """Process a block of observations sensor by sensor.

        Sensors are independent, so this equals calling :meth:`step` on each
        row in turn; records come back ordered by (time, sensor).
        """
        block = [self._check(o) for o in observations]
        times = [int(t) for t in times]
        if len(times) != len(block):
            raise InputError("need one time index per observation")
        first = self.steps
        self.steps += len(block)
        per_sensor: list[tuple[int, int, AlarmRecord]] = []
        for j in range(self.n):
            out = []
            for i, (obs, t) in enumerate(zip(block, times)):
                if j in self.failed:
                    break
                rec = self._sensor_step(j, obs, t, first + i + 1 <= self.warmup)
                if rec is not None:
                    out.append((i, j, rec))
            per_sensor.extend(out)
        per_sensor.sort(key=lambda e: (e[0], e[1]))
        return [rec for _, _, rec in per_sensor]


def _ready(reg) -> bool:
    return getattr(reg, "initialized", True)


def _prediction(out) -> float | None:
    if out is None:
        return None
    if isinstance(out, tuple):
        return float(out[0])
    return float(getattr(out, "prediction", out))


def _learn(reg, x, y, t, bank: VirtualSensorBank, j: int):
    try:
        out = reg.learn_one(x, y, t)
    except DivergenceError as exc:
        bank.failed[j] = str(exc)
        return None
    return _prediction(out)


def step_detector(bank: VirtualSensorBank, observation, t: int) -> list[AlarmRecord]:
    return bank.step(observation, t)


def score_scenario(
    alarms: Iterable[AlarmRecord], anomaly_window: tuple[int, int] | None
) -> DetectionScore:
    """TP/FN on whether any alarm fell inside the window; every other alarm is an FP.

    With ``anomaly_window=None`` the run has no anomaly and only FPs count.
    """
    if anomaly_window is None:
        return DetectionScore(None, sum(1 for a in alarms if a.alarm), None)
    lo, hi = anomaly_window
    if lo > hi:
        raise InputError(f"anomaly window [{lo}, {hi}] is reversed")
    hit = False
    fp = 0
    for a in alarms:
        if not a.alarm:
            continue
        if lo <= a.index <= hi:
            hit = True
        else:
            fp += 1
    return DetectionScore(int(hit), fp, int(not hit))
