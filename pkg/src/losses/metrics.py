"""
Segmentation metrics: Dice score and symmetric Hausdorff distance.
"""
from typing import Optional, Sequence

import numpy as np

from ..tensor import ShapeError

# Pairwise distance blocks are capped at this many entries.
_CHUNK = 1 << 22


def dice_score(pred: np.ndarray, target: np.ndarray) -> float:
    """
    2 |P & T| / (|P| + |T|) for binary masks; 1.0 when both are empty.
    """
    if pred.shape != target.shape:
        raise ShapeError(f"dice_score: shapes {tuple(pred.shape)} and {tuple(target.shape)} differ")
    p = pred.astype(bool)
    t = target.astype(bool)
    total = int(p.sum()) + int(t.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((p & t).sum()) / total


def boundary_voxels(mask: np.ndarray) -> np.ndarray:
    """
    Indices [k, ndim] of foreground voxels with a background 6-neighbour.

    Voxels on the volume edge count as boundary.
    """
    m = mask.astype(bool)
    padded = np.pad(m, 1, constant_values=False)
    interior = m.copy()
    for axis in range(m.ndim):
        for shift in (-1, 1):
            neighbour = np.roll(padded, shift, axis=axis)[tuple(slice(1, -1) for _ in range(m.ndim))]
            interior &= neighbour
    return np.argwhere(m & ~interior)


def _directed_sq(a: np.ndarray, b: np.ndarray) -> float:
    """max over a of the min squared distance to b."""
    rows = max(1, _CHUNK // max(len(b), 1))
    worst = 0.0
    for start in range(0, len(a), rows):
        block = a[start:start + rows]
        d2 = ((block[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)
        worst = max(worst, float(d2.min(axis=1).max()))
    return worst


def hausdorff_distance(
    pred: np.ndarray,
    target: np.ndarray,
    spacing: Sequence[float] = (1.0, 1.0, 1.0),
) -> Optional[float]:
    """
    Symmetric Hausdorff distance between the boundaries of two masks, in mm.

    Returns:
        The distance, or None (undefined) when either mask is empty
    """
    if pred.shape != target.shape:
        raise ShapeError(f"hausdorff_distance: shapes {tuple(pred.shape)} and {tuple(target.shape)} differ")
    if len(spacing) != pred.ndim:
        raise ShapeError(f"Spacing {tuple(spacing)} does not match a {pred.ndim}-D mask")
    if not pred.any() or not target.any():
        return None
    scale = np.asarray(spacing, dtype=np.float64)
    a = boundary_voxels(pred) * scale
    b = boundary_voxels(target) * scale
    return float(np.sqrt(max(_directed_sq(a, b), _directed_sq(b, a))))
