import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gls_lab.core_types import (
    LabeledDataset,
    NoiseSpec,
    SoftLabel,
    TransitionMatrix,
    build_transition,
    make_gls_label,
    make_onehot,
    normalized_extreme_label,
)
from gls_lab.errors import InvalidLabelError, InvalidNoiseSpecError, InvalidRateError, SingularMatrixError
from gls_lab.losses import gls_loss


class TestOnehot:
    def test_three_class(self):
        np.testing.assert_array_equal(make_onehot(1, 3).weights, [0, 1, 0])

    def test_binary(self):
        np.testing.assert_array_equal(make_onehot(0, 2).weights, [1, 0])

    def test_out_of_range(self):
        with pytest.raises(InvalidLabelError):
            make_onehot(2, 2)


class TestGlsLabel:
    @pytest.mark.parametrize(
        "y, r, K, expected",
        [
            (1, 0.3, 3, [0.1, 0.8, 0.1]),
            (0, 0.0, 2, [1.0, 0.0]),
            (0, -1.0, 2, [1.5, -0.5]),
        ],
    )
    def test_examples(self, y, r, K, expected):
        np.testing.assert_allclose(make_gls_label(y, r, K).weights, expected, atol=1e-12)

    def test_rejects_rate_above_one(self):
        with pytest.raises(InvalidRateError):
            make_gls_label(0, 1.0001, 2)

    def test_is_immutable(self):
        lab = make_gls_label(0, 0.2, 2)
        with pytest.raises(ValueError):
            lab.weights[0] = 3.0
        assert isinstance(lab, SoftLabel)

    @given(st.integers(2, 12), st.data(), st.floats(-1e6, 1.0))
    def test_weights_sum_to_one(self, K, data, r):
        y = data.draw(st.integers(0, K - 1))
        w = make_gls_label(y, r, K).weights
        assert abs(w.sum() - 1.0) <= 1e-12 * max(1.0, abs(r))
        assert math.isclose(w[y], 1 - r * (K - 1) / K, rel_tol=1e-12, abs_tol=1e-12)

    @given(st.integers(2, 12), st.data())
    def test_full_smoothing_is_uniform(self, K, data):
        y = data.draw(st.integers(0, K - 1))
        np.testing.assert_allclose(make_gls_label(y, 1.0, K).weights, np.full(K, 1.0 / K), atol=1e-15)


class TestNormalizedExtremeLabel:
    def test_binary(self):
        np.testing.assert_allclose(normalized_extreme_label(0, 2), [0.5, -0.5])

    def test_four_class(self):
        np.testing.assert_allclose(normalized_extreme_label(1, 4), [-0.25, 0.75, -0.25, -0.25])

    def test_matches_scaled_large_negative_rate(self):
        p = np.array([0.8, 0.2])
        r = -1e9
        from gls_lab.losses import normalized_extreme_loss

        assert abs(gls_loss(p, 0, r) / (1 - r) - normalized_extreme_loss(p, 0)) <= 1e-8


class TestBuildTransition:
    def test_binary_asym(self):
        T = build_transition(NoiseSpec.binary_asym(0.1, 0.3), 2)
        np.testing.assert_allclose(T.entries, [[0.9, 0.1], [0.3, 0.7]])
        assert T.e0 == 0.1 and T.e1 == 0.3

    def test_e_delta_read_back_exactly(self):
        T = build_transition(NoiseSpec.binary_asym(0.15, 0.35), 2)
        assert T.e_delta == 0.35 - 0.15

    def test_binary_asym_requires_e1_at_least_e0(self):
        with pytest.raises(InvalidNoiseSpecError):
            build_transition(NoiseSpec.binary_asym(0.3, 0.1), 2)

    def test_symmetric_ten_class(self):
        T = build_transition(NoiseSpec.symmetric(0.4), 10).entries
        np.testing.assert_allclose(np.diag(T), 0.6)
        off = T[~np.eye(10, dtype=bool)]
        np.testing.assert_allclose(off, 0.4 / 9)

    def test_symmetric_zero_noise_is_identity(self):
        np.testing.assert_array_equal(build_transition(NoiseSpec.symmetric(0.0), 5).entries, np.eye(5))

    def test_sparse_pairs(self):
        T = build_transition(NoiseSpec.sparse([(0, 2), (1, 3)], 0.1, 0.3), 4).entries
        expected = np.array(
            [[0.9, 0, 0.1, 0], [0, 0.9, 0, 0.1], [0.3, 0, 0.7, 0], [0, 0.3, 0, 0.7]]
        )
        np.testing.assert_allclose(T, expected)
        np.testing.assert_allclose(T.sum(axis=1), 1.0, atol=1e-12)

    @pytest.mark.parametrize(
        "pairs, K",
        [([(0, 1)], 3), ([(0, 1)], 4), ([(0, 1), (1, 2)], 4), ([(1, 0), (2, 3)], 4)],
    )
    def test_sparse_rejects_bad_pairs(self, pairs, K):
        with pytest.raises(InvalidNoiseSpecError):
            build_transition(NoiseSpec.sparse(pairs, 0.1, 0.2), K)

    def test_custom_rows_must_sum_to_one(self):
        with pytest.raises(InvalidNoiseSpecError):
            build_transition(NoiseSpec.custom([[0.9, 0.2], [0.1, 0.9]]), 2)

    @given(st.integers(2, 7), st.floats(0.0, 0.9), st.randoms())
    def test_symmetric_commutes_with_permutation(self, K, eps, rnd):
        T = build_transition(NoiseSpec.symmetric(eps), K).entries
        perm = list(range(K))
        rnd.shuffle(perm)
        P = np.eye(K)[perm]
        np.testing.assert_allclose(P @ T @ P.T, T, atol=1e-15)

    @given(st.floats(0, 0.49), st.floats(0, 0.49))
    def test_rows_stochastic(self, a, b):
        e0, e1 = min(a, b), max(a, b)
        T = build_transition(NoiseSpec.binary_asym(e0, e1), 2).entries
        assert np.all((T >= 0) & (T <= 1))
        assert np.max(np.abs(T.sum(axis=1) - 1)) <= 1e-12


class TestInverse:
    def test_symmetric_half_is_singular(self):
        T = build_transition(NoiseSpec.symmetric(0.5), 2)
        with pytest.raises(SingularMatrixError):
            T.inverse()

    @pytest.mark.parametrize("K, eps", [(3, 0.2), (5, 0.5), (10, 0.4)])
    def test_multiclass_inverse(self, K, eps):
        T = build_transition(NoiseSpec.symmetric(eps), K)
        np.testing.assert_allclose(T.inverse() @ T.entries, np.eye(K), atol=1e-12)

    def test_binary_closed_form(self):
        T = build_transition(NoiseSpec.binary_asym(0.1, 0.3), 2)
        np.testing.assert_allclose(T.inverse(), np.linalg.inv(T.entries), atol=1e-14)


class TestNoiseSpecJson:
    @pytest.mark.parametrize(
        "spec",
        [
            NoiseSpec.symmetric(0.2),
            NoiseSpec.binary_asym(0.1, 0.3),
            NoiseSpec.sparse([(0, 1), (2, 3)], 0.1, 0.2),
            NoiseSpec.custom([[0.8, 0.2], [0.4, 0.6]]),
        ],
    )
    def test_round_trip(self, spec):
        assert NoiseSpec.from_json(spec.to_json()) == spec

    def test_bare_number_is_symmetric(self):
        assert NoiseSpec.from_json(0.4) == NoiseSpec.symmetric(0.4)

    def test_keys_distinct(self):
        keys = {NoiseSpec.symmetric(e).key() for e in (0, 0.2, 0.4)}
        assert len(keys) == 3


class TestLabeledDataset:
    def test_rejects_label_out_of_range(self):
        with pytest.raises(InvalidLabelError):
            LabeledDataset(np.zeros((3, 2)), [0, 1, 2], 2)

    def test_subset_keeps_clean_labels(self):
        ds = LabeledDataset(np.arange(8.0).reshape(4, 2), [0, 1, 1, 0], 2, clean_labels=[0, 0, 1, 1])
        sub = ds.subset([1, 3])
        np.testing.assert_array_equal(sub.labels, [1, 0])
        np.testing.assert_array_equal(sub.clean_labels, [0, 1])

    def test_features_frozen(self):
        ds = LabeledDataset(np.zeros((2, 2)), [0, 1], 2)
        with pytest.raises(ValueError):
            ds.features[0, 0] = 1.0


def test_transition_requires_square():
    with pytest.raises(InvalidNoiseSpecError):
        TransitionMatrix(np.ones((2, 3)) / 3, NoiseSpec.custom([[1, 0], [0, 1]]))


def test_all_label_permutations_valid():
    for y, K in itertools.product(range(4), [4]):
        assert make_gls_label(y, -3.0, K).weights.argmax() == y
