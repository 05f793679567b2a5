"""Reference online regressors: sliding-window kNN and SGD linear regression."""

from __future__ import annotations

import math
from collections import deque

import numpy as np

from . import _kernels as K
from .core import DivergenceError, ErrorTracker, InputError, Sample, itte, record_residual
from .knn import RunningScaler


class WindowKnnRegressor:
    """kNN regression over the last ``window`` samples (FIFO eviction).

    An empty window predicts 0.  ``window=None`` keeps every sample.
    """

    def __init__(self, k: int = 5, window: int | None = 1000, weighted: bool = False):
        if k < 1:
            raise InputError("k must be at least 1")
        if window is not None and window < 1:
            raise InputError("window must be at least 1")
        self.k = k
        self.window = window
        self.weighted = weighted
        self.e_model = ErrorTracker()
        self._cap = window if window is not None else 1024
        self._X: np.ndarray | None = None
        self._y = np.empty(self._cap)
        self._idx = np.empty(self._cap, dtype=np.int64)
        self._head = 0  # ring position of the oldest sample
        self._n = 0
        self._next_index = 0

    def __len__(self) -> int:
        return self._n

    @property
    def warmup(self) -> int:
        return 0

    def _ordered(self, a):
        if self._n < self._cap:
            return a[: self._n]
        return np.concatenate([a[self._head:], a[: self._head]])

    @property
    def samples(self) -> list[Sample]:
        if self._X is None:
            return []
        X, y, idx = self._ordered(self._X), self._ordered(self._y), self._ordered(self._idx)
        return [Sample(X[i], y[i], int(idx[i])) for i in range(self._n)]

    def predict_one(self, features) -> float:
        if self._n == 0:
            return 0.0
        x = np.ascontiguousarray(features, dtype=np.float64).ravel()
        n = self._n
        D = K.dist_row(self._X[:n], x)
        pos = K.k_smallest(D, self._idx[:n], self.k)
        return float(K.aggregate(D[pos], self._y[pos], self.weighted))

    def learn_one(self, features, target: float, index: int | None = None) -> float:
        """Predict, then store the sample.  Returns the prediction."""
        x = np.ascontiguousarray(features, dtype=np.float64).ravel()
        if self._X is None:
            self._X = np.empty((self._cap, len(x)))
        elif len(x) != self._X.shape[1]:
            raise InputError(f"expected {self._X.shape[1]} features, got {len(x)}")
        pred = self.predict_one(x)
        if index is None:
            index = self._next_index
        self._next_index = index + 1
        if self._n < self._cap:
            slot = self._n
            self._n += 1
        elif self.window is None:
            self._cap *= 2
            self._X = np.resize(self._X, (self._cap, len(x)))
            self._y = np.resize(self._y, self._cap)
            self._idx = np.resize(self._idx, self._cap)
            slot = self._n
            self._n += 1
        else:
            slot = self._head
            self._head = (self._head + 1) % self._cap
        self._X[slot] = x
        self._y[slot] = target
        self._idx[slot] = index
        record_residual(self.e_model, pred - target)
        return pred

    predict_learn = learn_one

    def itte(self) -> float:
        return itte(self.e_model)


def wk_predict_learn(state: WindowKnnRegressor, sample: Sample) -> tuple[float, WindowKnnRegressor]:
    pred = state.learn_one(sample.features, sample.target, sample.index)
    return pred, state


class OnlineLinearRegressor:
    """Linear model w.x + b trained by one SGD step on squared loss per sample.

    Inputs are standardised with a running z-score (statistics updated after
    the prediction).  Until the scaler has seen ``scaler_warmup`` samples its
    estimates are too rough to use, so the inputs are taken as zero and only
    the bias learns.  The step size is capped at 1 / (2 (|z|^2 + 1)), which
    keeps a single update from overshooting when inputs drift far outside the
    range seen so far.  ``standardize=False`` feeds raw features.
    """

    def __init__(self, learning_rate: float = 0.01, standardize: bool = True, scaler_warmup: int = 50):
        if not learning_rate >= 0:
            raise InputError("learning rate must be non-negative")
        if scaler_warmup < 0:
            raise InputError("scaler_warmup must be non-negative")
        self.learning_rate = learning_rate
        self.standardize = standardize
        self.scaler_warmup = scaler_warmup
        self.weights: np.ndarray | None = None
        self.bias = 0.0
        self.e_model = ErrorTracker()
        self._scaler: RunningScaler | None = None

    @property
    def warmup(self) -> int:
        return 0

    def _init(self, dim: int):
        self.weights = np.zeros(dim)
        self._scaler = RunningScaler(dim)

    def _inputs(self, x: np.ndarray) -> np.ndarray:
        if not self.standardize:
            return x
        if self._scaler.n < max(self.scaler_warmup, 1):
            return np.zeros_like(x)
        return self._scaler.transform(x)

    def predict_one(self, features) -> float:
        x = np.asarray(features, dtype=np.float64).ravel()
        if self.weights is None:
            return 0.0
        return float(self.weights @ self._inputs(x) + self.bias)

    def learn_one(self, features, target: float, index: int | None = None) -> float:
        x = np.asarray(features, dtype=np.float64).ravel()
        if self.weights is None:
            self._init(len(x))
        elif len(x) != len(self.weights):
            raise InputError(f"expected {len(self.weights)} features, got {len(x)}")
        z = self._inputs(x)
        pred = float(self.weights @ z + self.bias)
        if self.learning_rate > 0:
            g = 2.0 * (pred - target)
            # capped so that one step never overshoots the current sample
            rate = min(self.learning_rate, 1.0 / (2.0 * (float(z @ z) + 1.0)))
            self.weights = self.weights - rate * g * z
            self.bias = self.bias - rate * g
            if not (np.all(np.isfinite(self.weights)) and math.isfinite(self.bias)):
                raise DivergenceError("linear model weights became non-finite")
        if self.standardize:
            self._scaler.update(x)
        if math.isfinite(pred):
            record_residual(self.e_model, pred - target)
        return pred

    predict_learn = learn_one

    def itte(self) -> float:
        return itte(self.e_model)


def lin_predict_learn(
    state: OnlineLinearRegressor, sample: Sample
) -> tuple[float, OnlineLinearRegressor]:
    pred = state.learn_one(sample.features, sample.target, sample.index)
    return pred, state
