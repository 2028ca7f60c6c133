"""Classifiers: softmax/MLP training, probability contract, gradient checks."""

import numpy as np
import pytest

from querypool.data import synth_blobs
from querypool.model import (
    DimensionMismatch,
    NonFiniteLoss,
    TrainHyper,
    evaluate,
    fit_round,
    grad_check,
    init_model,
    load_model,
    predict_proba,
    predict_proba_batch,
    save_model,
)


def perceptron_separable(x, y, max_epochs=2000):
    """Independent separability oracle: perceptron convergence proves a
    linear separator exists for the binary task."""
    aug = np.hstack([x, np.ones((len(x), 1))])
    target = np.where(y == 1, 1.0, -1.0)
    w = np.zeros(aug.shape[1])
    for _ in range(max_epochs):
        errors = 0
        for xi, ti in zip(aug, target):
            if ti * (xi @ w) <= 0.0:
                w += ti * xi
                errors += 1
        if errors == 0:
            return True
    return False


class TestInit:
    def test_softmax_shapes(self):
        m = init_model("softmax", 784, 10, rng_seed=0)
        assert [a.shape for a in m.arrays] == [(784, 10), (10,)]
        assert np.all(m.arrays[1] == 0.0)

    def test_mlp_shapes(self):
        m = init_model("mlp", 784, 10, rng_seed=0, hidden=128)
        assert [a.shape for a in m.arrays] == [(784, 128), (128,), (128, 10), (10,)]

    def test_deterministic(self):
        a = init_model("mlp", 20, 3, rng_seed=42, hidden=8)
        b = init_model("mlp", 20, 3, rng_seed=42, hidden=8)
        for x, y in zip(a.arrays, b.arrays):
            assert x.tobytes() == y.tobytes()

    def test_bad_arch(self):
        with pytest.raises(ValueError):
            init_model("cnn", 10, 2, rng_seed=0)


class TestPredictProba:
    def test_zero_weights_uniform(self):
        m = init_model("softmax", 5, 10, rng_seed=0)
        for a in m.arrays:
            a[:] = 0.0
        p = predict_proba(m, np.zeros(5))
        np.testing.assert_allclose(p, np.full(10, 0.1), atol=1e-15)

    def test_shift_invariance(self):
        m1 = init_model("softmax", 4, 3, rng_seed=1)
        m2 = m1.copy()
        m2.arrays[1] += 123.456  # constant added to every logit
        x = np.random.default_rng(0).random(4)
        np.testing.assert_allclose(predict_proba(m1, x), predict_proba(m2, x), atol=1e-12)

    def test_fixed_two_class_value(self):
        # w = [1, -1] on input [1]: probs [e/(e+1/e), (1/e)/(e+1/e)],
        # frozen from a 30-digit mpmath evaluation
        m = init_model("softmax", 1, 2, rng_seed=0)
        m.arrays[0][:] = np.array([[1.0, -1.0]])
        m.arrays[1][:] = 0.0
        p = predict_proba(m, np.array([1.0]))
        np.testing.assert_allclose(p, [0.8807970779778824, 0.11920292202211757], atol=1e-12)

    def test_valid_for_extreme_logits(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            k = int(rng.integers(2, 8))
            d = int(rng.integers(1, 6))
            m = init_model("softmax", d, k, rng_seed=int(rng.integers(0, 1000)))
            m.arrays[0][:] = rng.normal(0, 1e4, size=(d, k))  # logits up to ~1e4
            p = predict_proba(m, rng.random(d))
            assert p.min() >= 0.0
            assert abs(p.sum() - 1.0) < 1e-6
            assert np.isfinite(p).all()

    def test_dimension_mismatch(self):
        m = init_model("softmax", 5, 3, rng_seed=0)
        with pytest.raises(DimensionMismatch):
            predict_proba(m, np.zeros(4))
        with pytest.raises(DimensionMismatch):
            predict_proba_batch(m, np.zeros((2, 4)))


class TestFitRound:
    def test_overfits_single_example(self):
        m = init_model("softmax", 6, 3, rng_seed=0)
        x = np.tile(np.linspace(0, 1, 6), (4, 1))
        y = np.full(4, 2)
        hyper = TrainHyper(learning_rate=0.5, minibatch_size=4, epochs_per_round=200)
        trained, loss = fit_round(m, x, y, hyper, rng_seed=0)
        assert loss < 0.01

    def test_deterministic(self):
        ds = synth_blobs(3, 5, 30, 0.2, rng_seed=4)
        m = init_model("mlp", 5, 3, rng_seed=1, hidden=16)
        hyper = TrainHyper(learning_rate=0.2, minibatch_size=16, epochs_per_round=5)
        a, la = fit_round(m, ds.features, ds.labels, hyper, rng_seed=9)
        b, lb = fit_round(m, ds.features, ds.labels, hyper, rng_seed=9)
        assert la == lb
        for x, y in zip(a.arrays, b.arrays):
            assert x.tobytes() == y.tobytes()

    def test_separable_blobs_reach_full_train_accuracy(self):
        ds = synth_blobs(2, 2, 100, 0.05, rng_seed=7)  # 200 examples
        assert perceptron_separable(ds.features, ds.labels)
        m = init_model("softmax", 2, 2, rng_seed=0)
        hyper = TrainHyper(learning_rate=0.5, minibatch_size=32, epochs_per_round=50)
        trained, _ = fit_round(m, ds.features, ds.labels, hyper, rng_seed=0)
        assert evaluate(trained, ds.features, ds.labels, 2).accuracy == 1.0

    def test_loss_decreases_over_epochs(self):
        ds = synth_blobs(2, 2, 100, 0.05, rng_seed=7)
        m = init_model("softmax", 2, 2, rng_seed=0)
        one = TrainHyper(learning_rate=0.5, minibatch_size=32, epochs_per_round=1)
        fifty = TrainHyper(learning_rate=0.5, minibatch_size=32, epochs_per_round=50)
        _, first_epoch_loss = fit_round(m, ds.features, ds.labels, one, rng_seed=3)
        _, final_epoch_loss = fit_round(m, ds.features, ds.labels, fifty, rng_seed=3)
        assert final_epoch_loss < first_epoch_loss

    def test_divergence_raises(self):
        # the log clamp keeps the loss finite under mere saturation, so true
        # divergence means parameter overflow; an absurd rate forces it
        ds = synth_blobs(2, 4, 50, 0.3, rng_seed=1)
        m = init_model("mlp", 4, 2, rng_seed=0, hidden=8)
        hyper = TrainHyper(learning_rate=1e160, minibatch_size=16, epochs_per_round=10)
        with pytest.raises(NonFiniteLoss):
            fit_round(m, ds.features, ds.labels, hyper, rng_seed=0)

    def test_empty_set_rejected(self):
        m = init_model("softmax", 2, 2, rng_seed=0)
        with pytest.raises(ValueError):
            fit_round(m, np.zeros((0, 2)), np.zeros(0, dtype=int), TrainHyper(), rng_seed=0)


class TestEvaluate:
    def _always_class0(self, k=2, dim=3):
        m = init_model("softmax", dim, k, rng_seed=0)
        for a in m.arrays:
            a[:] = 0.0
        m.arrays[1][0] = 10.0
        return m

    def test_fixed_predictions(self):
        m = self._always_class0()
        x = np.random.default_rng(0).random((4, 3))
        y = np.array([0, 0, 1, 1])
        result = evaluate(m, x, y, 2)
        assert result.accuracy == 0.5
        np.testing.assert_array_equal(result.per_class_accuracy, [1.0, 0.0])
        np.testing.assert_array_equal(result.per_class_support, [2, 2])

    def test_absent_class_convention(self):
        m = self._always_class0(k=3)
        x = np.random.default_rng(0).random((4, 3))
        y = np.array([0, 0, 1, 1])
        result = evaluate(m, x, y, 3)
        assert result.per_class_accuracy[2] == 1.0
        assert result.per_class_support[2] == 0

    def test_confusion_sums_to_set_size(self):
        ds = synth_blobs(3, 4, 20, 0.4, rng_seed=2)
        m = init_model("softmax", 4, 3, rng_seed=5)
        result = evaluate(m, ds.features, ds.labels, 3)
        assert result.confusion.sum() == len(ds)


class TestGradCheck:
    def test_softmax_tight(self):
        rng = np.random.default_rng(0)
        for draw in range(5):
            m = init_model("softmax", 12, 4, rng_seed=draw)
            x = rng.random(12)
            y = int(rng.integers(0, 4))
            assert grad_check(m, x, y) < 1e-6

    def test_mlp(self):
        rng = np.random.default_rng(1)
        for draw in range(5):
            m = init_model("mlp", 10, 3, rng_seed=draw, hidden=16)
            x = rng.random(10)
            y = int(rng.integers(0, 3))
            assert grad_check(m, x, y) < 1e-4

    def test_dead_relu_units_are_clean(self):
        # one hidden unit forced dead: zero analytic and numeric gradient
        m = init_model("mlp", 3, 2, rng_seed=0, hidden=4)
        m.arrays[1][0] = -100.0  # unit 0 never activates on [0,1] inputs
        x = np.array([0.5, 0.2, 0.9])
        assert grad_check(m, x, 1) < 1e-4


class TestCheckpoint:
    def test_round_trip_bitwise(self, tmp_path):
        m = init_model("mlp", 9, 4, rng_seed=3, hidden=6)
        path = tmp_path / "model.qpck"
        save_model(m, path)
        loaded = load_model(path)
        assert loaded.arch == m.arch
        assert loaded.hidden == m.hidden
        for x, y in zip(m.arrays, loaded.arrays):
            assert x.tobytes() == y.tobytes()
        save_model(loaded, tmp_path / "again.qpck")
        assert (tmp_path / "again.qpck").read_bytes() == path.read_bytes()
