"""
Losses and evaluation metrics.

This package provides:
- Soft Dice, cross-entropy, KL and L2 reconstruction losses with gradients
- The weighted training objective
- Dice score and Hausdorff distance on binary masks
"""
from .losses import (
    CE_CLAMP,
    DICE_SMOOTH,
    LossTerm,
    LossWeights,
    Reduction,
    cross_entropy_loss,
    dice_loss,
    kl_loss,
    l2_recon_loss,
    one_hot,
    total_loss,
)
from .metrics import boundary_voxels, dice_score, hausdorff_distance

__all__ = [
    "CE_CLAMP",
    "DICE_SMOOTH",
    "LossTerm",
    "LossWeights",
    "Reduction",
    "cross_entropy_loss",
    "dice_loss",
    "kl_loss",
    "l2_recon_loss",
    "one_hot",
    "total_loss",
    "boundary_voxels",
    "dice_score",
    "hausdorff_distance",
]
