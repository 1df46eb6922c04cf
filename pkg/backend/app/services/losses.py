"""
Training Losses
Cross-entropy, Lovász-Softmax, KL divergence and the latent diffusion objective
"""

from typing import Dict, Optional
import logging

import numpy as np

from app.autograd import functional as F
from app.autograd.tensor import Tensor
from app.exceptions import ShapeError
from app.schemas.latent import LatentVolume, VaeLossWeights

logger = logging.getLogger(__name__)


def _class_mask(target: np.ndarray, num_classes: int) -> np.ndarray:
    """(B, ...) labels → (B, C, ...) one-hot floats"""
    target = np.asarray(target, dtype=np.int64)
    mask = np.zeros((target.shape[0], num_classes) + target.shape[1:])
    np.put_along_axis(mask, target[:, None], 1.0, axis=1)
    return mask


def _check_target(op: str, logits: Tensor, target: np.ndarray) -> np.ndarray:
    target = np.asarray(target, dtype=np.int64)
    if logits.ndim < 2 or target.shape != logits.shape[:1] + logits.shape[2:]:
        raise ShapeError(op, logits.shape, target.shape)
    if target.size and (target.min() < 0 or target.max() >= logits.shape[1]):
        raise ShapeError(op, logits.shape, target.shape, detail="target label outside the class axis")
    return target


def cross_entropy(logits: Tensor, target: np.ndarray, class_weights: Optional[np.ndarray] = None) -> Tensor:
    """
    Mean negative log-softmax of the target class.

    Logits are (B, C, ...) and targets (B, ...). With class weights the mean
    is weighted: Σ w[y]·nll / Σ w[y].
    """
    target = _check_target("cross_entropy", logits, target)
    mask = _class_mask(target, logits.shape[1])
    nll = F.neg(F.sum(F.log_softmax(logits, axis=1) * mask, axis=1))
    if class_weights is None:
        return F.mean(nll)
    weights = np.asarray(class_weights, dtype=np.float64)[target]
    return F.div(F.sum(nll * weights), float(weights.sum()))


def lovasz_grad(gt_sorted: np.ndarray) -> np.ndarray:
    """Jaccard-loss increments along foreground indicators sorted by descending error"""
    gt_sorted = np.asarray(gt_sorted, dtype=np.float64)
    total = gt_sorted.sum()
    intersection = total - np.cumsum(gt_sorted)
    union = total + np.cumsum(1.0 - gt_sorted)
    jaccard = 1.0 - intersection / union
    if gt_sorted.size > 1:
        jaccard[1:] = jaccard[1:] - jaccard[:-1]
    return jaccard


def lovasz_softmax(logits: Tensor, target: np.ndarray) -> Tensor:
    """
    Lovász-Softmax over all voxels of the batch, averaged over classes present in the target.

    Per class the error vector is |fg − p|; its Lovász extension is the dot
    product of the errors sorted in descending order with ``lovasz_grad`` of
    the correspondingly sorted foreground indicators.
    """
    target = _check_target("lovasz_softmax", logits, target)
    num_classes = logits.shape[1]
    probs = F.softmax(logits, axis=1)
    order = (1, 0) + tuple(range(2, logits.ndim))
    probs = F.reshape(F.transpose(probs, order), (num_classes, -1))
    fg = np.transpose(_class_mask(target, num_classes), order).reshape(num_classes, -1)

    # |fg − p| for fg ∈ {0, 1}
    errors = probs * (1.0 - 2.0 * fg) + fg
    voxels = fg.shape[1]
    perm = np.argsort(-errors.data, axis=1, kind="stable")
    weights = np.zeros_like(fg)
    present = fg.sum(axis=1) > 0
    for c in np.flatnonzero(present):
        weights[c] = lovasz_grad(fg[c, perm[c]])

    flat_index = (perm + voxels * np.arange(num_classes)[:, None]).reshape(-1)
    ranked = F.gather(F.reshape(errors, (-1,)), flat_index, axis=0)
    return F.div(F.sum(ranked * weights.reshape(-1)), float(max(int(present.sum()), 1)))


def kl_divergence(latent: LatentVolume) -> Tensor:
    """KL(N(μ, σ²) ‖ N(0, 1)), summed over the latent volume and averaged over the batch"""
    mean, logvar = latent.mean, latent.logvar
    terms = mean * mean + F.exp(logvar) - 1.0 - logvar
    return F.mul(F.sum(terms), 0.5 / mean.shape[0])


def vae_loss(
    logits: Tensor,
    target: np.ndarray,
    latent: LatentVolume,
    weights: Optional[VaeLossWeights] = None,
) -> Dict[str, Tensor]:
    """CE + γ·Lovász + β·KL, with each term returned alongside the total"""
    weights = weights or VaeLossWeights()
    ce = cross_entropy(logits, target)
    lovasz = lovasz_softmax(logits, target)
    kl = kl_divergence(latent)
    total = ce + F.mul(lovasz, weights.gamma) + F.mul(kl, weights.beta)
    return {"ce": ce, "lovasz": lovasz, "kl": kl, "total": total}


def enet_class_weights(histogram: np.ndarray, c: float = 1.02) -> np.ndarray:
    """w_k = 1 / ln(c + frequency_k)"""
    histogram = np.asarray(histogram, dtype=np.float64)
    total = histogram.sum()
    freq = histogram / total if total > 0 else np.zeros_like(histogram)
    return 1.0 / np.log(c + freq)


def ldm_loss(predicted: Tensor, noise: np.ndarray) -> Tensor:
    """Mean squared error between true and predicted noise"""
    noise = np.asarray(noise, dtype=np.float64)
    if predicted.shape != noise.shape:
        raise ShapeError("ldm_loss", predicted.shape, noise.shape)
    diff = predicted - noise
    return F.mean(diff * diff)
