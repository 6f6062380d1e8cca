"""Fidelity kernels, ridge regression, and exact decremental deletion."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmulab import pqc, qkernel


@pytest.fixture(scope="module")
def feature_map():
    t = pqc.build_layered_ansatz(2, 1, reupload=True)
    return t, qkernel.fixed_feature_map(t, 7)


def _fit_random(feature_map, n, seed, lam=0.1):
    t, theta = feature_map
    rng = np.random.default_rng(seed)
    xs = rng.uniform(-np.pi, np.pi, (n, 2))
    ys = rng.choice([-1.0, 1.0], size=n)
    K = qkernel.gram(t, theta, xs)
    return qkernel.krr_fit(K, ys, lam, t, theta), xs, ys


class TestGram:
    def test_unit_diagonal_and_symmetry(self, feature_map, rng):
        t, theta = feature_map
        xs = rng.uniform(-np.pi, np.pi, (6, 2))
        K = qkernel.gram(t, theta, xs)
        np.testing.assert_allclose(np.diag(K.matrix), 1.0, atol=1e-12)
        np.testing.assert_allclose(K.matrix, K.matrix.T, atol=1e-12)

    def test_kernel_value_range(self, feature_map, rng):
        t, theta = feature_map
        x, y = rng.uniform(-np.pi, np.pi, (2, 2))
        v = qkernel.kernel_value(t, theta, x, y)
        assert 0.0 <= v <= 1.0
        assert qkernel.kernel_value(t, theta, x, x) == pytest.approx(1.0)

    def test_invalid_gram_rejected(self):
        with pytest.raises(ValueError):
            qkernel.GramMatrix(np.array([[1.0, 2.0], [2.0, 1.0]]), np.zeros((2, 2)))


class TestKRR:
    def test_residual_contract(self, feature_map):
        model, _, _ = _fit_random(feature_map, 12, 0)
        assert model.residual() <= 1e-7

    def test_prediction_consistent_with_stored_gram(self, feature_map):
        # Predicting at a training point must reproduce the stored Gram row.
        model, xs, _ = _fit_random(feature_map, 10, 1)
        preds = [qkernel.krr_predict(model, x) for x in xs]
        np.testing.assert_allclose(preds, model.gram @ model.alpha, atol=1e-9)

    def test_ridge_must_be_positive(self, feature_map):
        t, theta = feature_map
        K = qkernel.gram(t, theta, np.zeros((2, 2)))
        with pytest.raises(ValueError):
            qkernel.krr_fit(K, np.array([1.0, -1.0]), 0.0, t, theta)


class TestSMWDeletion:
    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=10_000))
    def test_matches_direct_retrain(self, feature_map, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(6, 16))
        model, xs, ys = _fit_random(feature_map, n, seed)
        r = int(rng.integers(1, min(5, n - 1) + 1))
        drop = sorted(rng.choice(n, size=r, replace=False).tolist())
        keep = [i for i in range(n) if i not in drop]
        deleted = qkernel.delete_samples_smw(model, drop)
        t, theta = feature_map
        direct = qkernel.krr_fit(
            qkernel.GramMatrix(model.gram[np.ix_(keep, keep)], xs[keep]),
            ys[keep], model.lam, t, theta)
        assert np.max(np.abs(deleted.alpha - direct.alpha)) <= 1e-8

    def test_one_at_a_time_equals_batch(self, feature_map):
        model, _, _ = _fit_random(feature_map, 10, 3)
        batch = qkernel.delete_samples_smw(model, [2, 5, 7])
        seq = qkernel.delete_samples_smw(model, [7])
        seq = qkernel.delete_samples_smw(seq, [5])
        seq = qkernel.delete_samples_smw(seq, [2])
        np.testing.assert_allclose(batch.alpha, seq.alpha, atol=1e-10)

    def test_delete_nothing_is_identity(self, feature_map):
        model, _, _ = _fit_random(feature_map, 8, 4)
        assert qkernel.delete_samples_smw(model, []) is model

    def test_cannot_delete_all(self, feature_map):
        model, _, _ = _fit_random(feature_map, 5, 5)
        with pytest.raises(ValueError):
            qkernel.delete_samples_smw(model, list(range(5)))


class TestCertificate:
    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=10_000))
    def test_bound_dominates_actual_deviation(self, feature_map, seed):
        model, _, _ = _fit_random(feature_map, 10, seed)
        rng = np.random.default_rng(seed + 1)
        drop = sorted(rng.choice(10, size=2, replace=False).tolist())
        x = rng.uniform(-np.pi, np.pi, 2)
        bound = qkernel.deviation_bound(model, drop, x)
        actual = qkernel.restricted_deviation(model, drop, x)
        assert actual <= bound + 1e-12

    def test_empty_deletion_bound_is_zero(self, feature_map):
        model, _, _ = _fit_random(feature_map, 6, 0)
        assert qkernel.deviation_bound(model, [], np.zeros(2)) == 0.0


class TestDiagnostics:
    def test_alignment_self_is_one(self, feature_map, rng):
        t, theta = feature_map
        K = qkernel.gram(t, theta, rng.uniform(-np.pi, np.pi, (5, 2)))
        assert qkernel.alignment(K, K) == pytest.approx(1.0)

    def test_mmd_identical_sets_is_zero(self, feature_map, rng):
        t, theta = feature_map
        K = qkernel.gram(t, theta, rng.uniform(-np.pi, np.pi, (6, 2)))
        assert qkernel.mmd(K, [0, 1, 2], [0, 1, 2]) == pytest.approx(0.0, abs=1e-9)
        assert qkernel.mmd(K, [0, 1], [3, 4]) >= 0.0

    def test_gram_csv_roundtrip(self, feature_map, rng, tmp_path):
        t, theta = feature_map
        K = qkernel.gram(t, theta, rng.uniform(-np.pi, np.pi, (4, 2)))
        path = tmp_path / "gram.csv"
        qkernel.export_gram_csv(K, path)
        back = np.loadtxt(path, delimiter=",")
        np.testing.assert_allclose(back, K.matrix, atol=1e-10)
