import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gls_lab.core_types import LabeledDataset
from gls_lab.errors import GLSError
from gls_lab.metrics import (
    ConfidenceReport,
    bias_variance,
    bias_variance_from_predictions,
    bootstrap_indices,
    confidence_array,
    confidence_report,
    loss_confidence,
    model_confidence,
    partition_by_confidence,
)

from conftest import simplex_points


class FixedModel:
    """Stand-in model returning preset predictions row by row."""

    def __init__(self, P, eps=1e-7):
        self.P = np.asarray(P, dtype=float)
        self.epsilon_clamp = eps

    def predict_proba(self, X):
        return self.P[: len(X)]


class TestModelConfidence:
    @pytest.mark.parametrize(
        "p, y, expected", [([0.8, 0.2], 0, 0.6), ([0.7, 0.2, 0.1], 0, 0.55), ([0.25] * 4, 2, 0.0)]
    )
    def test_examples(self, p, y, expected):
        assert model_confidence(p, y) == pytest.approx(expected, abs=1e-15)

    @given(st.integers(2, 10), st.data())
    def test_uniform_zero(self, K, data):
        y = data.draw(st.integers(0, K - 1))
        assert abs(model_confidence(np.full(K, 1 / K), y, K)) < 1e-15

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(0)
        P = rng.dirichlet(np.ones(5), size=30)
        y = rng.integers(0, 5, 30)
        np.testing.assert_allclose(confidence_array(P, y), [model_confidence(p, t) for p, t in zip(P, y)], atol=1e-15)

    @given(simplex_points(2), st.integers(0, 1))
    def test_binary_is_difference(self, p, y):
        assert math.isclose(model_confidence(p, y), p[y] - p[1 - y], abs_tol=1e-12)

    @given(simplex_points(4), st.integers(0, 3))
    def test_general_form(self, p, y):
        others = np.delete(p, y)
        assert math.isclose(model_confidence(p, y), p[y] - others.mean(), abs_tol=1e-12)


class TestLossConfidence:
    def test_examples(self):
        assert loss_confidence([0.5, 0.5], 0) == 0.0
        assert loss_confidence([0.8, 0.2], 0) == pytest.approx(1.386294, abs=1e-6)

    @given(simplex_points(2), st.integers(0, 1))
    def test_antisymmetric(self, p, y):
        assert math.isclose(loss_confidence(p, 1 - y), -loss_confidence(p, y), abs_tol=1e-12)

    @given(simplex_points(2), simplex_points(2), st.integers(0, 1))
    def test_monotone_link(self, pa, pb, y):
        dm = model_confidence(pa, y) - model_confidence(pb, y)
        dl = loss_confidence(pa, y) - loss_confidence(pb, y)
        if abs(dm) > 1e-12:
            assert np.sign(dm) == np.sign(dl)

    def test_binary_only(self):
        with pytest.raises(GLSError):
            loss_confidence([0.2, 0.3, 0.5], 0)


class TestPartition:
    def _ds(self, n):
        return LabeledDataset(np.zeros((n, 1)), np.arange(n) % 2, 2)

    def test_confident_model_has_empty_minus(self):
        ds = self._ds(4)
        P = np.eye(2)[ds.labels] * 0.98 + 0.01
        plus, minus = partition_by_confidence(FixedModel(P), ds)
        assert len(minus) == 0 and len(plus) == 4

    def test_uniform_model_all_minus(self):
        plus, minus = partition_by_confidence(FixedModel(np.full((4, 2), 0.5)), self._ds(4))
        assert len(plus) == 0
        np.testing.assert_array_equal(minus, np.arange(4))

    def test_hand_computed(self):
        ds = self._ds(4)  # labels 0, 1, 0, 1
        P = [[0.9, 0.1], [0.7, 0.3], [0.5, 0.5], [0.2, 0.8]]
        plus, minus = partition_by_confidence(FixedModel(P), ds)
        np.testing.assert_array_equal(plus, [0, 3])
        np.testing.assert_array_equal(minus, [1, 2])

    def test_clean_labels_used(self):
        ds = LabeledDataset(np.zeros((2, 1)), [1, 1], 2, clean_labels=[0, 0])
        plus, _ = partition_by_confidence(FixedModel([[0.9, 0.1], [0.8, 0.2]]), ds)
        assert len(plus) == 2

    def test_report_fields(self):
        P = [[0.9, 0.1], [0.7, 0.3], [0.5, 0.5], [0.2, 0.8]]
        rep = ConfidenceReport.from_predictions(P, [0, 1, 0, 1])
        assert rep.n_plus == 2 and rep.n_minus == 2
        assert rep.expected_mc == pytest.approx((0.8 - 0.4 + 0.0 + 0.6) / 4)
        assert rep.mc_correct_mean == pytest.approx(0.7)
        assert rep.mc_wrong_mean == pytest.approx(-0.2)
        rep2 = confidence_report(FixedModel(P), LabeledDataset(np.zeros((4, 1)), [0, 1, 0, 1], 2))
        np.testing.assert_array_equal(rep2.mc, rep.mc)


class TestBiasVariance:
    def test_identical_replicates_zero_variance(self):
        rng = np.random.default_rng(0)
        P = 0.01 + 0.97 * rng.dirichlet([1, 1, 1], size=25)
        y = rng.integers(0, 3, 25)
        rep = bias_variance_from_predictions([P, P, P], y)
        assert rep.variance == 0.0
        assert rep.bias == pytest.approx(np.mean(-np.log(P[np.arange(25), y])), rel=1e-12)

    def test_two_replicate_example(self):
        rep = bias_variance_from_predictions([[[0.8, 0.2]], [[0.2, 0.8]]], [0])
        oracle = 0.5 * math.log(0.5 / 0.8) + 0.5 * math.log(0.5 / 0.2)
        assert rep.variance == pytest.approx(oracle, abs=1e-12)
        assert rep.variance == pytest.approx(0.223144, abs=1e-6)
        assert rep.bias == pytest.approx(math.log(2), abs=1e-12)

    def test_perfect_replicates(self):
        P = np.array([[[1.0, 0.0]], [[1.0, 0.0]]])
        rep = bias_variance_from_predictions(P, [0])
        assert rep.bias <= -math.log(1 - 1e-7) + 1e-15

    @given(st.integers(2, 5), st.integers(1, 8), st.integers(0, 10_000))
    def test_nonnegative_and_matches_oracle(self, R, n, seed):
        rng = np.random.default_rng(seed)
        F = 0.001 + 0.997 * rng.dirichlet([1, 1, 1], size=(R, n))
        y = rng.integers(0, 3, n)
        rep = bias_variance_from_predictions(F, y)
        # Direct geometric-mean oracle.
        g = np.exp(np.log(F).mean(axis=0))
        c = g / g.sum(axis=1, keepdims=True)
        bias = np.mean(-np.log(c[np.arange(n), y]))
        var = np.mean([(c * np.log(c / F[r])).sum(axis=1) for r in range(R)])
        assert rep.bias >= 0 and rep.variance >= 0
        assert rep.bias == pytest.approx(bias, rel=1e-10, abs=1e-12)
        assert rep.variance == pytest.approx(var, rel=1e-9, abs=1e-12)

    def test_needs_two_replicates(self):
        with pytest.raises(GLSError):
            bias_variance_from_predictions([[[0.5, 0.5]]], [0])
        with pytest.raises(GLSError):
            bias_variance([FixedModel([[0.5, 0.5]])], LabeledDataset(np.zeros((1, 1)), [0], 2))

    def test_from_models(self):
        ds = LabeledDataset(np.zeros((1, 1)), [0], 2)
        rep = bias_variance([FixedModel([[0.8, 0.2]]), FixedModel([[0.2, 0.8]])], ds)
        assert rep.num_replicates == 2
        assert rep.variance == pytest.approx(0.223144, abs=1e-6)

    def test_bootstrap_deterministic(self):
        a, b = bootstrap_indices(100, 3), bootstrap_indices(100, 3)
        np.testing.assert_array_equal(a, b)
        assert a.min() >= 0 and a.max() < 100
        assert not np.array_equal(a, bootstrap_indices(100, 4))
