import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forgan.exceptions import DataError, ShapeError
from forgan.metrics import (EvaluationReport, Histogram, evaluate_deterministic,
                            evaluate_probabilistic, histogram, kld, knuth_bins, mae, mape, rmse)


def knuth_oracle(samples, max_bins):
    """Brute-force Knuth posterior via np.histogram and math.lgamma."""
    x = np.asarray(samples, dtype=float)
    n = len(x)
    scores = []
    for m in range(1, max_bins + 1):
        counts, _ = np.histogram(x, bins=np.linspace(x.min(), x.max(), m + 1))
        f = (n * math.log(m) + math.lgamma(m / 2) - m * math.lgamma(0.5)
             - math.lgamma(n + m / 2) + sum(math.lgamma(c + 0.5) for c in counts))
        scores.append(f)
    return np.array(scores)


class TestPointMetrics:
    def test_identical(self):
        x = np.array([1.0, -2.0, 3.5])
        assert rmse(x, x) == 0 and mae(x, x) == 0 and mape(x, x) == 0

    def test_hand_values(self):
        assert rmse([0, 0], [3, 4]) == pytest.approx(math.sqrt(12.5), abs=1e-12)
        assert rmse([0, 0], [3, 4]) == pytest.approx(3.53553, abs=1e-5)
        assert mae([0, 0], [3, 4]) == pytest.approx(3.5, abs=1e-12)
        assert mape([1, 2], [1.1, 1.8]) == pytest.approx(10.0, abs=1e-12)

    def test_mape_zero_truth(self):
        with pytest.raises(ZeroDivisionError):
            mape([1, 0], [1, 1])

    @pytest.mark.parametrize("fn", [rmse, mae, mape])
    def test_length_checks(self, fn):
        with pytest.raises(ShapeError):
            fn([1, 2], [1])
        with pytest.raises(ShapeError):
            fn([], [])

    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=40),
           st.floats(-10, 10), st.integers(0, 1000))
    def test_homogeneity_and_jensen(self, values, k, seed):
        x = np.array(values)
        x_hat = x + np.random.default_rng(seed).normal(size=x.size)
        assert rmse(k * x, k * x_hat) == pytest.approx(abs(k) * rmse(x, x_hat), rel=1e-9, abs=1e-12)
        assert mae(x, x_hat) <= rmse(x, x_hat) + 1e-12
        assert rmse(x, x_hat) >= 0 and mae(x, x_hat) >= 0


class TestKnuth:
    def test_two_points(self):
        m, edges = knuth_bins([0.0, 1.0])
        assert m == int(np.argmax(knuth_oracle([0.0, 1.0], 1))) + 1
        assert edges[0] == 0.0 and edges[-1] == 1.0

    def test_normal_band(self):
        x = np.random.default_rng(0).standard_normal(10000)
        m, edges = knuth_bins(x)
        scores = knuth_oracle(x, 200)
        assert 15 <= m <= 60
        assert m == int(np.argmax(scores)) + 1
        assert len(edges) == m + 1

    def test_affine_invariance(self):
        x = np.random.default_rng(1).normal(size=2000)
        m, _ = knuth_bins(x)
        assert knuth_bins(3.0 * x + 7.0)[0] == m
        assert knuth_bins(0.5 * x - 1.0)[0] == m

    def test_degenerate(self):
        with pytest.raises(DataError):
            knuth_bins([2.0, 2.0, 2.0])
        with pytest.raises(DataError):
            knuth_bins([1.0])

    @settings(deadline=None, max_examples=15)
    @given(st.integers(0, 10_000), st.integers(20, 600))
    def test_argmax_matches_oracle(self, seed, n):
        rng = np.random.default_rng(seed)
        x = np.concatenate([rng.normal(0, 1, n), rng.normal(4, 0.5, n // 3)])
        m, _ = knuth_bins(x)
        scores = knuth_oracle(x, min(200, math.ceil(len(x) / 10)))
        assert scores[m - 1] >= scores.max() - 1e-9


class TestKLD:
    edges = np.array([0.0, 1.0, 2.0])

    def test_identical(self):
        p = Histogram(self.edges, [5, 5])
        assert kld(p, p) == 0.0

    def test_hand_value(self):
        p = Histogram(self.edges, [1, 1])
        q = Histogram(self.edges, [1, 3])
        expected = 0.5 * math.log(2) + 0.5 * math.log(2 / 3)
        assert kld(p, q) == pytest.approx(expected, abs=1e-12)
        assert kld(p, q) == pytest.approx(0.14384, abs=1e-5)

    def test_undefined(self):
        assert kld(Histogram(self.edges, [1, 0]), Histogram(self.edges, [0, 1])) is None

    def test_zero_p_bins_ignored(self):
        assert kld(Histogram(self.edges, [0, 4]), Histogram(self.edges, [1, 3])) == \
            pytest.approx(math.log(4 / 3), abs=1e-12)

    def test_edge_mismatch(self):
        with pytest.raises(ShapeError):
            kld(Histogram(self.edges, [1, 1]), Histogram(self.edges + 0.5, [1, 1]))

    def test_clamping_keeps_all_mass(self):
        h = histogram([-5.0, 0.5, 1.5, 9.0], self.edges)
        assert h.counts.tolist() == [2, 2]
        assert h.mass.sum() == pytest.approx(1.0)

    def test_bad_edges(self):
        with pytest.raises(ShapeError):
            Histogram([0.0, 0.0, 1.0], [1, 1])

    @given(st.lists(st.integers(0, 50), min_size=2, max_size=12), st.integers(0, 100))
    def test_nonnegative(self, counts, seed):
        counts = np.array(counts)
        if counts.sum() == 0:
            counts[0] = 1
        edges = np.arange(len(counts) + 1, dtype=float)
        q = counts + np.random.default_rng(seed).integers(0, 5, len(counts)) + 1
        value = kld(Histogram(edges, counts), Histogram(edges, q))
        assert value is not None and value >= 0


class Oracle:
    """Returns the ground truth for every condition (truth looked up by row)."""

    def __init__(self, truth):
        self.truth = np.asarray(truth)
        self.sample_calls = []

    def sample_forecasts(self, conditions, k, rng):
        self.sample_calls.append(k)
        return np.repeat(self.truth[:, None], k, axis=1)

    def predict(self, conditions):
        return self.truth.copy()


class NoisyModel:
    def __init__(self, truth):
        self.truth = np.asarray(truth)
        self.sample_calls = []

    def sample_forecasts(self, conditions, k, rng):
        self.sample_calls.append(k)
        return self.truth[:, None] + rng.normal(0, 0.3, (len(self.truth), k))


class TestProtocol:
    def setup_method(self):
        rng = np.random.default_rng(0)
        self.truth = rng.normal(5.0, 1.0, 200)
        self.X = rng.normal(size=(200, 4))

    def test_oracle_probabilistic(self):
        r = evaluate_probabilistic(Oracle(self.truth), self.X, self.truth, rng=np.random.default_rng(1))
        assert (r.rmse_mean, r.mae_mean, r.mape_mean) == (0, 0, 0)
        assert (r.rmse_std, r.mae_std, r.mape_std) == (0, 0, 0)
        assert r.kld == 0

    def test_oracle_deterministic(self):
        r = evaluate_deterministic(Oracle(self.truth), self.X, self.truth)
        assert r.rmse_mean == 0 and r.kld == 0 and r.runs == 1 and r.rmse_std == 0

    def test_single_run_zero_std(self):
        r = evaluate_probabilistic(NoisyModel(self.truth), self.X, self.truth, runs=1,
                                   rng=np.random.default_rng(2))
        assert r.rmse_std == 0 and r.mae_std == 0 and r.rmse_mean > 0

    def test_call_counts(self):
        model = NoisyModel(self.truth)
        r = evaluate_probabilistic(model, self.X, self.truth, rng=np.random.default_rng(3))
        assert model.sample_calls == [100] + [1] * 100
        assert r.runs == 100 and r.samples_per_condition == 100
        assert r.q_hist.total == 100 * len(self.truth)
        assert r.p_hist.total == len(self.truth)
        assert r.rmse_std > 0

    def test_constant_predictor_undefined(self):
        class Constant:
            def predict(self, X):
                return np.full(len(X), 5.0)

        r = evaluate_deterministic(Constant(), self.X, self.truth)
        assert r.kld is None
        assert r.to_dict()["kld"] == "undefined"

    def test_mape_with_zero_truth_is_nan(self):
        truth = np.array([0.0, 1.0, 2.0, 3.0] * 10)
        r = evaluate_deterministic(Oracle(truth), np.zeros((40, 1)), truth)
        assert math.isnan(r.mape_mean) and r.rmse_mean == 0

    def test_report_roundtrip_and_csv(self):
        clusters = np.arange(200) % 3
        r = evaluate_probabilistic(NoisyModel(self.truth), self.X, self.truth, runs=5,
                                   samples_per_condition=7, rng=np.random.default_rng(4),
                                   clusters=clusters)
        assert set(r.clusters) == {0, 1, 2}
        for sub in r.clusters.values():
            np.testing.assert_array_equal(sub.edges, r.edges)
        back = EvaluationReport.from_dict(r.to_dict())
        assert back.to_dict() == r.to_dict()
        lines = r.histogram_csv().strip().splitlines()
        assert lines[0] == "edge_low,edge_high,p_mass,q_mass"
        assert len(lines) == len(r.edges)
        assert sum(float(l.split(",")[2]) for l in lines[1:]) == pytest.approx(1.0)

    def test_empty(self):
        with pytest.raises(DataError):
            evaluate_deterministic(Oracle([]), np.zeros((0, 1)), [])
