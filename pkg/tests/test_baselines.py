import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import knn_mean
from samknn.core import DivergenceError, InputError, Sample
from samknn.baselines import OnlineLinearRegressor, WindowKnnRegressor, lin_predict_learn, wk_predict_learn


class TestWindowKnn:
    def test_empty_window_predicts_zero_and_stores(self):
        reg = WindowKnnRegressor(k=1)
        assert reg.learn_one([1.0], 3.0, 0) == 0.0
        assert len(reg) == 1

    def test_single_sample(self):
        reg = WindowKnnRegressor(k=1)
        reg.learn_one([0.0], 7.0, 0)
        assert reg.predict_one([5.0]) == 7.0

    def test_fifo_eviction(self):
        reg = WindowKnnRegressor(k=1, window=2)
        for i in range(3):
            reg.learn_one([float(i)], float(i), i)
        assert [s.index for s in reg.samples] == [1, 2]

    def test_functional_api(self):
        reg = WindowKnnRegressor(k=1)
        pred, reg = wk_predict_learn(reg, Sample([0.0], 1.0, 0))
        assert pred == 0.0 and len(reg) == 1

    def test_dimension_change_rejected(self):
        reg = WindowKnnRegressor()
        reg.learn_one([0.0, 1.0], 0.0, 0)
        with pytest.raises(InputError):
            reg.learn_one([0.0], 0.0, 1)

    @given(st.integers(0, 2**32 - 1), st.integers(1, 30), st.integers(1, 6), st.booleans())
    def test_matches_oracle_over_the_window(self, seed, window, k, unbounded):
        rng = np.random.default_rng(seed)
        X, y = rng.normal(size=(80, 2)), rng.normal(size=80)
        reg = WindowKnnRegressor(k=k, window=None if unbounded else window)
        rows = []
        for i in range(80):
            expected = knn_mean(rows if unbounded else rows[-window:], tuple(X[i]), k) if rows else 0.0
            assert reg.learn_one(X[i], y[i], i) == expected
            rows.append((tuple(X[i]), float(y[i]), i))


class TestOnlineLinear:
    def test_first_prediction_zero(self):
        assert OnlineLinearRegressor().learn_one([1.0, 2.0], 5.0) == 0.0

    def test_converges_on_a_line(self):
        rng = np.random.default_rng(0)
        reg = OnlineLinearRegressor(learning_rate=0.05, standardize=False)
        for x in rng.uniform(0, 1, size=500):
            reg.learn_one([x], 2 * x)
        assert reg.weights[0] == pytest.approx(2.0, abs=0.1)

    def test_zero_rate_never_changes(self):
        rng = np.random.default_rng(1)
        reg = OnlineLinearRegressor(learning_rate=0.0)
        for x in rng.normal(size=(50, 3)):
            reg.learn_one(x, 1.0)
        assert np.all(reg.weights == 0.0) and reg.bias == 0.0

    def test_noiseless_linear_data_is_learned(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(5000, 4))
        y = X @ [1.0, -0.5, 2.0, 0.3] + 4.0
        reg = OnlineLinearRegressor()
        res = [reg.learn_one(x, t) - t for x, t in zip(X, y)]
        assert np.max(np.abs(res[-500:])) < 1e-2

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_raises(self):
        reg = OnlineLinearRegressor(standardize=False)
        reg.weights = np.array([np.inf])
        with pytest.raises(DivergenceError):
            reg.learn_one([1.0], 1.0)

    def test_step_cap_keeps_drifting_inputs_stable(self):
        # inputs leaving the range seen early on made uncapped SGD blow up
        t = np.arange(20000)
        X = np.stack([np.sin(t / 300.0) * (1 + t / 2000.0), np.cos(t / 500.0)], axis=1) + 60
        y = X @ [0.7, -0.2]
        reg = OnlineLinearRegressor()
        res = np.array([reg.learn_one(x, v) - v for x, v in zip(X, y)])
        assert np.all(np.isfinite(res)) and np.abs(res[-1000:]).max() < 1.0

    def test_functional_api(self):
        pred, state = lin_predict_learn(OnlineLinearRegressor(), Sample([1.0], 1.0, 0))
        assert pred == 0.0 and state.bias != 0.0

    @pytest.mark.parametrize("kw", [dict(learning_rate=-1.0), dict(scaler_warmup=-1)])
    def test_invalid(self, kw):
        with pytest.raises(InputError):
            OnlineLinearRegressor(**kw)
