"""
Training losses with analytic gradients.

Every loss returns a LossTerm holding its scalar value and the gradient
with respect to its differentiable argument(s), ready to be fed to
Tape.backward.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..tensor import ShapeError

logger = logging.getLogger(__name__)

DICE_SMOOTH = 1e-5
CE_CLAMP = 1e-7


class Reduction(str, Enum):
    MEAN = "mean"
    SUM = "sum"


class LossWeights(BaseModel):
    """Weights of the combined objective ce + dice + 0.1 l2 + 0.1 kl."""
    w_ce: float = Field(1.0, ge=0.0, description="Cross-entropy weight")
    w_dice: float = Field(1.0, ge=0.0, description="Soft Dice weight")
    w_l2: float = Field(0.1, ge=0.0, description="VAE reconstruction weight")
    w_kl: float = Field(0.1, ge=0.0, description="VAE KL weight")

    model_config = ConfigDict(extra="forbid")


@dataclass
class LossTerm:
    value: float
    grad: Union[np.ndarray, Tuple[np.ndarray, ...]]


def _check_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shapes {tuple(a.shape)} and {tuple(b.shape)} differ")


def one_hot(labels: np.ndarray, num_classes: int, dtype=np.float32) -> np.ndarray:
    """Integer labels [N, D, H, W] -> one-hot [N, K, D, H, W]."""
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= num_classes:
        raise ValueError(f"Labels must lie in [0, {num_classes}), got range [{labels.min()}, {labels.max()}]")
    eye = np.eye(num_classes, dtype=dtype)
    return np.ascontiguousarray(np.moveaxis(eye[labels], -1, 1))


def dice_loss(
    probs: np.ndarray,
    target: np.ndarray,
    smooth: float = DICE_SMOOTH,
    class_axis: Optional[int] = 1,
) -> LossTerm:
    """
    Soft Dice loss 1 - (2 sum(T S) + eps) / (sum(T + S) + eps).

    With class_axis set, the loss is computed per class and averaged over
    classes; with class_axis=None the whole tensor is treated as one mask.
    """
    _check_same_shape(probs, target, "dice_loss")
    s = probs.astype(np.float64, copy=False)
    t = target.astype(np.float64, copy=False)

    if class_axis is None:
        axes = tuple(range(s.ndim))
        classes = 1
    else:
        axes = tuple(a for a in range(s.ndim) if a != class_axis)
        classes = s.shape[class_axis]

    inter = (s * t).sum(axis=axes, keepdims=True)
    denom = (s + t).sum(axis=axes, keepdims=True) + smooth
    numer = 2.0 * inter + smooth
    value = float(np.mean(1.0 - numer / denom))
    grad = -(2.0 * t * denom - numer) / (denom ** 2) / classes
    return LossTerm(value, grad.astype(probs.dtype))


def cross_entropy_loss(probs: np.ndarray, target: np.ndarray, clamp: float = CE_CLAMP) -> LossTerm:
    """
    Mean binary cross-entropy -[T ln S + (1 - T) ln(1 - S)] over every element.

    Probabilities are clamped to [clamp, 1 - clamp]; clamped entries get zero
    gradient.
    """
    _check_same_shape(probs, target, "cross_entropy_loss")
    s = probs.astype(np.float64, copy=False)
    t = target.astype(np.float64, copy=False)
    sc = np.clip(s, clamp, 1.0 - clamp)
    count = s.size
    value = float(-(t * np.log(sc) + (1.0 - t) * np.log(1.0 - sc)).sum() / count)
    inside = (s >= clamp) & (s <= 1.0 - clamp)
    grad = np.where(inside, -(t / sc - (1.0 - t) / (1.0 - sc)) / count, 0.0)
    return LossTerm(value, grad.astype(probs.dtype))


def kl_loss(mu: np.ndarray, logvar: np.ndarray, voxels: int) -> LossTerm:
    """
    KL divergence to N(0, 1): sum(mu^2 + e^logvar - logvar - 1) / voxels.

    Gradient is the tuple (d/dmu, d/dlogvar).
    """
    _check_same_shape(mu, logvar, "kl_loss")
    if voxels <= 0:
        raise ValueError(f"Voxel count must be positive, got {voxels}")
    m = mu.astype(np.float64, copy=False)
    lv = logvar.astype(np.float64, copy=False)
    var = np.exp(lv)
    value = float((m ** 2 + var - lv - 1.0).sum() / voxels)
    return LossTerm(value, ((2.0 * m / voxels).astype(mu.dtype), ((var - 1.0) / voxels).astype(logvar.dtype)))


def l2_recon_loss(
    recon: np.ndarray,
    target: np.ndarray,
    reduction: Union[Reduction, str] = Reduction.MEAN,
) -> LossTerm:
    """Squared reconstruction error, averaged (default) or summed over elements."""
    _check_same_shape(recon, target, "l2_recon_loss")
    diff = recon.astype(np.float64, copy=False) - target.astype(np.float64, copy=False)
    scale = 1.0 / diff.size if Reduction(reduction) is Reduction.MEAN else 1.0
    value = float((diff ** 2).sum() * scale)
    return LossTerm(value, (2.0 * scale * diff).astype(recon.dtype))


def total_loss(ce: float, dice: float, l2: float, kl: float, weights: Optional[LossWeights] = None) -> float:
    """Weighted sum of the four components."""
    w = weights or LossWeights()
    return w.w_ce * ce + w.w_dice * dice + w.w_l2 * l2 + w.w_kl * kl
