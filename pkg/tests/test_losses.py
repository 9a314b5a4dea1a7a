"""
Tests for training losses and the weighted objective.
"""
import pytest
import numpy as np
from pydantic import ValidationError

from src.losses import (
    LossWeights,
    cross_entropy_loss,
    dice_loss,
    dice_score,
    kl_loss,
    l2_recon_loss,
    one_hot,
    total_loss,
)
from src.tensor import ShapeError


def _numeric_grad(f, x, h=1e-6):
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        up = f(x)
        x[idx] = old - h
        down = f(x)
        x[idx] = old
        grad[idx] = (up - down) / (2 * h)
    return grad


def _probs(rng, shape):
    z = rng.standard_normal(shape)
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


@pytest.fixture
def case(rng):
    labels = rng.integers(0, 3, size=(1, 2, 3, 2))
    return _probs(rng, (1, 3, 2, 3, 2)), one_hot(labels, 3, dtype=np.float64)


class TestOneHot:
    def test_layout(self):
        labels = np.array([[[[0, 2]]]])
        oh = one_hot(labels, 3)
        assert oh.shape == (1, 3, 1, 1, 2)
        assert oh[0, :, 0, 0, 0].tolist() == [1, 0, 0]
        assert oh[0, :, 0, 0, 1].tolist() == [0, 0, 1]

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            one_hot(np.array([[[[3]]]]), 3)


class TestDiceLoss:
    def test_perfect_prediction(self, case):
        _, target = case
        assert dice_loss(target, target).value == pytest.approx(0.0, abs=1e-5)

    def test_disjoint_prediction(self):
        target = np.array([1.0, 0.0, 0.0, 0.0])
        probs = np.array([0.0, 1.0, 0.0, 0.0])
        assert dice_loss(probs, target, class_axis=None).value == pytest.approx(1.0, abs=1e-4)

    def test_gradient(self, case):
        probs, target = case
        analytic = dice_loss(probs, target).grad
        numeric = _numeric_grad(lambda p: dice_loss(p, target).value, probs.copy())
        assert np.allclose(analytic, numeric, atol=1e-7)

    def test_shape_mismatch(self, case):
        probs, target = case
        with pytest.raises(ShapeError):
            dice_loss(probs, target[:, :2])

    def test_hard_masks_match_dice_score(self, rng):
        for _ in range(20):
            density = rng.uniform(0.2, 0.8, size=2)
            pred = rng.random((6, 6, 6)) < density[0]
            target = rng.random((6, 6, 6)) < density[1]
            loss = dice_loss(pred.astype(np.float64), target.astype(np.float64), class_axis=None).value
            assert loss == pytest.approx(1.0 - dice_score(pred, target), abs=1e-6)


class TestCrossEntropy:
    def test_value(self):
        probs = np.array([0.8, 0.3])
        target = np.array([1.0, 0.0])
        expected = -(np.log(0.8) + np.log(0.7)) / 2
        assert cross_entropy_loss(probs, target).value == pytest.approx(expected)

    def test_gradient(self, case):
        probs, target = case
        analytic = cross_entropy_loss(probs, target).grad
        numeric = _numeric_grad(lambda p: cross_entropy_loss(p, target).value, probs.copy())
        assert np.allclose(analytic, numeric, atol=1e-7)

    def test_clamped_entries_have_zero_gradient(self):
        term = cross_entropy_loss(np.array([0.0, 1.0]), np.array([1.0, 1.0]))
        assert np.isfinite(term.value)
        assert term.grad[0] == 0.0


class TestKL:
    def test_zero_at_standard_normal(self):
        mu = np.zeros((2, 8))
        logvar = np.zeros((2, 8))
        term = kl_loss(mu, logvar, voxels=64)
        assert term.value == 0.0
        assert not term.grad[0].any() and not term.grad[1].any()

    def test_value_and_gradient(self, rng):
        mu = rng.standard_normal((1, 4))
        logvar = rng.standard_normal((1, 4))
        voxels = 10
        term = kl_loss(mu, logvar, voxels)
        expected = (mu ** 2 + np.exp(logvar) - logvar - 1).sum() / voxels
        assert term.value == pytest.approx(expected)
        num_mu = _numeric_grad(lambda m: kl_loss(m, logvar, voxels).value, mu.copy())
        num_lv = _numeric_grad(lambda lv: kl_loss(mu, lv, voxels).value, logvar.copy())
        assert np.allclose(term.grad[0], num_mu, atol=1e-7)
        assert np.allclose(term.grad[1], num_lv, atol=1e-7)

    def test_positive_voxels(self):
        with pytest.raises(ValueError):
            kl_loss(np.zeros(2), np.zeros(2), voxels=0)


class TestL2:
    def test_mean_and_sum(self):
        recon = np.array([1.0, 2.0, 3.0, 4.0])
        target = np.zeros(4)
        assert l2_recon_loss(recon, target).value == pytest.approx(30.0 / 4)
        assert l2_recon_loss(recon, target, "sum").value == pytest.approx(30.0)
        assert np.allclose(l2_recon_loss(recon, target).grad, recon / 2)


class TestTotalLoss:
    def test_default_weights(self):
        assert total_loss(1.0, 2.0, 3.0, 4.0) == pytest.approx(1.0 + 2.0 + 0.3 + 0.4)

    def test_custom_weights(self):
        weights = LossWeights(w_ce=0.0, w_dice=2.0, w_l2=1.0, w_kl=0.0)
        assert total_loss(1.0, 2.0, 3.0, 4.0, weights) == pytest.approx(7.0)

    def test_negative_weight_rejected(self):
        with pytest.raises(ValidationError):
            LossWeights(w_ce=-1.0)
