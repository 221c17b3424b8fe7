import math

import numpy as np
import pytest

from gls_lab.core_types import LabeledDataset, NoiseSpec, build_transition
from gls_lab.datagen import SyntheticSpec, gen_synthetic, split
from gls_lab.errors import DivergedTrainingError, GLSError
from gls_lab.losses import LossSpec
from gls_lab.trainer import (
    MlpModel,
    OptimizerSpec,
    TrainConfig,
    forward,
    load_checkpoint,
    loss_and_grad,
    n_params,
    predict_and_accuracy,
    save_checkpoint,
    train,
)


def zero_model(dims):
    return MlpModel(dims, np.zeros(n_params(dims)))


def blobs(n=200, seed=0):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(-2.0, 0.4, size=(n, 2)), rng.normal(2.0, 0.4, size=(n, 2))])
    y = np.repeat([0, 1], n)
    return LabeledDataset(X, y, 2)


class TestForward:
    @pytest.mark.parametrize("dims", [(3, 2), (3, 5, 4), (2, 8, 8, 10)])
    def test_zero_weights_uniform(self, dims):
        np.testing.assert_allclose(forward(zero_model(dims), np.ones(dims[0])), np.full(dims[-1], 1 / dims[-1]))

    def test_equal_logits_uniform(self):
        p = np.zeros(n_params((2, 3)))
        p[-3:] = 7.5
        np.testing.assert_allclose(forward(MlpModel((2, 3), p), [0.3, -1.0]), np.full(3, 1 / 3), atol=1e-15)

    def test_log4_logits(self):
        p = np.zeros(n_params((1, 2)))
        p[-2] = math.log(4)
        np.testing.assert_allclose(forward(MlpModel((1, 2), p), [0.0]), [0.8, 0.2], atol=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(GLSError):
            forward(zero_model((3, 2)), np.ones(4))

    def test_clamped_outputs_stay_normalized(self):
        p = np.zeros(n_params((1, 2)))
        p[-2] = 100.0
        out = forward(MlpModel((1, 2), p), [0.0])
        assert out[1] > 0 and math.isclose(out.sum(), 1.0, rel_tol=1e-15)

    def test_wrong_param_count(self):
        with pytest.raises(GLSError):
            MlpModel((2, 2), np.zeros(5))

    def test_init_deterministic_he_bounds(self):
        a, b = MlpModel.init((4, 16, 2), 3), MlpModel.init((4, 16, 2), 3)
        np.testing.assert_array_equal(a.params, b.params)
        W0 = a.layers()[0][0]
        assert np.abs(W0).max() <= math.sqrt(6 / 4)


class TestLossAndGrad:
    @pytest.mark.parametrize("r", [-3.0, 0.0, 0.5])
    def test_uniform_model_loss_log_k(self, r):
        X = np.random.default_rng(0).normal(size=(9, 2))
        y = np.arange(9) % 3
        loss, _ = loss_and_grad(zero_model((2, 4, 3)), X, y, LossSpec.gls(r))
        assert math.isclose(loss, math.log(3), rel_tol=1e-12)

    def test_gls_c_adds_penalty(self):
        rng = np.random.default_rng(1)
        model = MlpModel.init((2, 4, 2), 0)
        clean = LabeledDataset(rng.normal(size=(6, 2)), [0, 1, 1, 0, 1, 1], 2)
        X, y = rng.normal(size=(5, 2)), rng.integers(0, 2, 5)
        spec = LossSpec("gls_c", r=-1.0, e0_hat=0.1, e1_hat=0.3, clean_subset=clean)
        base, _ = loss_and_grad(model, X, y, LossSpec.gls(-1.0))
        total, _ = loss_and_grad(model, X, y, spec)
        from gls_lab.losses import gls_c_penalty

        pen = gls_c_penalty(model.predict_proba(clean.features), clean.labels, -1.0, 0.1, 0.3)
        assert math.isclose(total - base, pen, rel_tol=1e-10, abs_tol=1e-14)

    def test_empty_batch(self):
        with pytest.raises(GLSError):
            loss_and_grad(zero_model((2, 2)), np.zeros((0, 2)), [], LossSpec.gls(0.0))


class TestTrain:
    def test_logistic_on_separable_blobs(self):
        data = blobs()
        tr, te = split(data, (0.7, 0.3), seed=0)
        cfg = TrainConfig(LossSpec.gls(0.0), epochs=200, hidden=(), optimizer=OptimizerSpec(lr=0.05))
        rep = train(tr, te, cfg)
        assert rep.final_test_accuracy >= 0.99

    def test_bit_identical_rerun(self):
        tr, te = split(blobs(60), (0.7, 0.3), seed=1)
        cfg = TrainConfig(LossSpec.gls(-1.0), epochs=15, batch_size=16, seed=4, hidden=(8,))
        a, b = train(tr, te, cfg), train(tr, te, cfg)
        np.testing.assert_array_equal(a.model.params, b.model.params)
        assert a.train_loss == b.train_loss

    def test_seed_changes_result(self):
        tr, te = split(blobs(60), (0.7, 0.3), seed=1)
        cfg = TrainConfig(LossSpec.gls(0.0), epochs=3, hidden=(8,))
        a = train(tr, te, cfg)
        b = train(tr, te, TrainConfig(LossSpec.gls(0.0), epochs=3, hidden=(8,), seed=1))
        assert not np.array_equal(a.model.params, b.model.params)

    def test_type1_clean_accuracy(self):
        tr, _, te = split(gen_synthetic(SyntheticSpec("type1", seed=0)), (0.7, 0.1, 0.2), seed=0)
        rep = train(tr, te, TrainConfig(LossSpec.gls(0.0)))
        assert rep.final_test_accuracy >= 0.85

    def test_negative_loss_is_not_divergence(self):
        tr, te = split(blobs(60), (0.7, 0.3), seed=2)
        rep = train(tr, te, TrainConfig(LossSpec.gls(-4.0), epochs=30, hidden=(8,)))
        assert min(rep.train_loss) < 0
        assert all(math.isfinite(v) for v in rep.train_loss)

    def test_divergence_raises_with_epoch(self):
        tr, te = split(blobs(30), (0.7, 0.3), seed=2)
        X = np.array(tr.features)
        X[0, 0] = np.inf
        bad = LabeledDataset(X, tr.labels, 2)
        with pytest.raises(DivergedTrainingError, match="epoch 0"):
            train(bad, None, TrainConfig(LossSpec.gls(0.0), epochs=2, hidden=(4,)))

    @pytest.mark.parametrize(
        "loss",
        [
            LossSpec("backward", transition=build_transition(NoiseSpec.symmetric(0.2), 2)),
            LossSpec("forward", transition=build_transition(NoiseSpec.symmetric(0.2), 2)),
            LossSpec("complementary"),
            LossSpec("peer"),
            LossSpec("peer", peer_form="sampled"),
        ],
        ids=lambda s: s.describe(),
    )
    def test_other_losses_learn_blobs(self, loss):
        tr, te = split(blobs(100), (0.7, 0.3), seed=3)
        rep = train(tr, te, TrainConfig(loss, epochs=20, hidden=(8,), optimizer=OptimizerSpec(lr=0.01)))
        assert rep.final_test_accuracy >= 0.95

    def test_sgd_runs(self):
        tr, te = split(blobs(100), (0.7, 0.3), seed=3)
        rep = train(tr, te, TrainConfig(LossSpec.gls(0.0), epochs=20, hidden=(8,), optimizer=OptimizerSpec.sgd(0.05)))
        assert rep.final_test_accuracy >= 0.95

    def test_lr_schedule(self):
        cfg = TrainConfig(optimizer=OptimizerSpec(lr=0.1))
        assert cfg.lr_at(0) == 0.1 and cfg.lr_at(39) == 0.1
        assert math.isclose(cfg.lr_at(40), 0.01) and math.isclose(cfg.lr_at(199), 1e-5)

    def test_warmup_checkpoint(self, tmp_path):
        tr, te = split(blobs(60), (0.7, 0.3), seed=1)
        warm = train(tr, te, TrainConfig(LossSpec.gls(0.0), epochs=5, hidden=(8,)))
        path = tmp_path / "warm.json"
        save_checkpoint(warm.model, path)
        rep = train(tr, te, TrainConfig(LossSpec.gls(-1.0), epochs=1, hidden=(8,), warmup=str(path)))
        assert rep.model.params.shape == warm.model.params.shape
        with pytest.raises(GLSError):
            train(tr, te, TrainConfig(LossSpec.gls(-1.0), epochs=1, hidden=(4,), warmup=str(path)))


class TestPredict:
    def test_uniform_ties_go_to_class_zero(self):
        ds = LabeledDataset(np.ones((5, 2)), [0, 1, 0, 1, 1], 2)
        pred, acc = predict_and_accuracy(zero_model((2, 2)), ds)
        np.testing.assert_array_equal(pred, 0)
        assert acc == 0.4

    def test_perfect_on_own_labels(self):
        model = MlpModel.init((3, 6, 4), 2)
        X = np.random.default_rng(0).normal(size=(50, 3))
        labels = np.argmax(model.predict_proba(X), axis=1)
        _, acc = predict_and_accuracy(model, LabeledDataset(X, labels, 4))
        assert acc == 1.0

    def test_uses_clean_labels(self):
        ds = LabeledDataset(np.ones((2, 2)), [1, 1], 2, clean_labels=[0, 0])
        assert predict_and_accuracy(zero_model((2, 2)), ds)[1] == 1.0
        assert predict_and_accuracy(zero_model((2, 2)), ds, use_clean=False)[1] == 0.0


class TestCheckpoint:
    def test_round_trip_exact(self, tmp_path):
        m = MlpModel.init((2, 16, 16, 2), 9)
        save_checkpoint(m, tmp_path / "m.json")
        back = load_checkpoint(tmp_path / "m.json")
        np.testing.assert_array_equal(back.params, m.params)
        assert back.layer_dims == m.layer_dims and back.seed == 9

    def test_rejects_foreign_file(self, tmp_path):
        (tmp_path / "x.json").write_text('{"format": "other"}')
        with pytest.raises(GLSError):
            load_checkpoint(tmp_path / "x.json")
