import math

import numpy as np
import pytest

from app.autograd.gradcheck import gradcheck
from app.autograd.tensor import Tensor
from app.exceptions import ShapeError
from app.schemas.latent import LatentVolume, VaeLossWeights
from app.services.losses import (
    cross_entropy,
    enet_class_weights,
    kl_divergence,
    ldm_loss,
    lovasz_grad,
    lovasz_softmax,
    vae_loss,
)


def softmax(logits, axis=1):
    shifted = np.exp(logits - logits.max(axis=axis, keepdims=True))
    return shifted / shifted.sum(axis=axis, keepdims=True)


def brute_force_lovasz(logits, target):
    """Lovász extension of |M| / |fg ∪ M| evaluated by explicit set growth"""
    num_classes = logits.shape[1]
    probs = np.moveaxis(softmax(logits), 1, 0).reshape(num_classes, -1)
    labels = target.reshape(-1)
    losses = []
    for c in range(num_classes):
        fg = set(np.flatnonzero(labels == c).tolist())
        if not fg:
            continue
        errors = np.abs((labels == c).astype(float) - probs[c])
        chosen, previous, total = set(), 0.0, 0.0
        for i in np.argsort(-errors):
            chosen.add(int(i))
            jaccard = len(chosen) / len(fg | chosen)
            total += errors[i] * (jaccard - previous)
            previous = jaccard
        losses.append(total)
    return sum(losses) / len(losses)


class TestCrossEntropy:
    def test_uniform_logits(self):
        loss = cross_entropy(Tensor(np.zeros((2, 4, 3))), np.zeros((2, 3), dtype=int))
        assert loss.item() == pytest.approx(math.log(4))

    def test_weighted_mean(self, rng):
        logits = rng.standard_normal((1, 3, 5))
        target = np.array([[0, 1, 2, 2, 1]])
        weights = np.array([0.5, 2.0, 1.0])
        nll = -np.log(softmax(logits))[0, target[0], np.arange(5)]
        w = weights[target[0]]
        expected = float((nll * w).sum() / w.sum())
        assert cross_entropy(Tensor(logits), target, weights).item() == pytest.approx(expected)

    def test_label_outside_class_axis(self):
        with pytest.raises(ShapeError):
            cross_entropy(Tensor(np.zeros((1, 3, 2))), np.array([[0, 3]]))

    def test_target_shape(self):
        with pytest.raises(ShapeError):
            cross_entropy(Tensor(np.zeros((1, 3, 2))), np.zeros((1, 3), dtype=int))


class TestLovasz:
    def test_matches_brute_force(self, rng):
        for _ in range(100):
            n = int(rng.integers(1, 9))
            logits = rng.standard_normal((1, 2, n))
            target = rng.integers(0, 2, size=(1, n))
            assert lovasz_softmax(Tensor(logits), target).item() == pytest.approx(
                brute_force_lovasz(logits, target), abs=1e-9
            )

    def test_multiclass_volume_matches_brute_force(self, rng):
        logits = rng.standard_normal((2, 4, 2, 2, 1))
        target = rng.integers(0, 4, size=(2, 2, 2, 1))
        assert lovasz_softmax(Tensor(logits), target).item() == pytest.approx(
            brute_force_lovasz(logits, target), abs=1e-9
        )

    def test_confident_correct_prediction(self):
        target = np.array([[0, 1, 1, 0]])
        logits = np.where(np.eye(2)[target[0]].T[None] > 0, 30.0, -30.0)
        assert lovasz_softmax(Tensor(logits), target).item() == pytest.approx(0.0, abs=1e-9)

    def test_grad_increments(self):
        np.testing.assert_allclose(lovasz_grad([1, 0, 1]), [0.5, 1 / 6, 1 / 3])
        assert lovasz_grad([1, 0, 1]).sum() == pytest.approx(1.0)

    def test_gradients(self, rng):
        logits = Tensor(rng.standard_normal((1, 3, 6)), requires_grad=True)
        target = np.array([[0, 1, 2, 1, 1, 0]])
        assert gradcheck(lambda: lovasz_softmax(logits, target), [logits], probes=12).passed()


class TestKl:
    def test_standard_normal_posterior(self):
        zeros = Tensor(np.zeros((2, 2, 1, 1, 1)))
        assert kl_divergence(LatentVolume(mean=zeros, logvar=zeros)).item() == 0.0

    def test_batch_average(self):
        latent = LatentVolume(mean=Tensor(np.ones((2, 1, 1, 1, 1))), logvar=Tensor(np.zeros((2, 1, 1, 1, 1))))
        assert kl_divergence(latent).item() == pytest.approx(0.5)


def test_vae_loss_combines_terms(rng):
    logits = Tensor(rng.standard_normal((1, 3, 4, 4, 4)))
    target = rng.integers(0, 3, size=(1, 4, 4, 4))
    latent = LatentVolume(
        mean=Tensor(rng.standard_normal((1, 2, 1, 1, 1))), logvar=Tensor(rng.standard_normal((1, 2, 1, 1, 1)))
    )
    terms = vae_loss(logits, target, latent, VaeLossWeights(gamma=2.0, beta=0.5))
    expected = terms["ce"].item() + 2.0 * terms["lovasz"].item() + 0.5 * terms["kl"].item()
    assert terms["total"].item() == pytest.approx(expected)


def test_enet_class_weights():
    weights = enet_class_weights(np.array([1, 1, 0]))
    np.testing.assert_allclose(weights, [1 / math.log(1.52), 1 / math.log(1.52), 1 / math.log(1.02)])
    assert weights[2] > weights[0]
    np.testing.assert_allclose(enet_class_weights(np.zeros(2)), 1 / math.log(1.02))


def test_ldm_loss(rng):
    noise = rng.standard_normal((2, 2, 1, 1, 1))
    assert ldm_loss(Tensor(noise), noise).item() == 0.0
    assert ldm_loss(Tensor(noise + 1.0), noise).item() == pytest.approx(1.0)
    with pytest.raises(ShapeError):
        ldm_loss(Tensor(noise), noise[:1])
