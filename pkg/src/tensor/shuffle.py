"""
3D pixel shuffle (squeezing) and its inverse.

Channel layout after unshuffle: output channel = c * r**3 + o with the
sub-voxel offset o = od * r**2 + oh * r + ow.
"""
import numpy as np

from .core import Tensor, check_rank
from .errors import ShapeError


def pixel_unshuffle3d(x: Tensor, r: int = 2) -> Tensor:
    """
    Rearrange [N, C, D, H, W] into [N, C * r**3, D / r, H / r, W / r].

    Raises:
        ShapeError: If a spatial extent is not divisible by r
    """
    check_rank(x, 5, "pixel_unshuffle3d input")
    if r < 1:
        raise ShapeError(f"Shuffle factor must be >= 1, got {r}")
    n, c, d, h, w = x.shape
    if d % r or h % r or w % r:
        raise ShapeError(f"Spatial extents {(d, h, w)} are not divisible by {r}")
    if r == 1:
        return np.ascontiguousarray(x)
    y = x.reshape(n, c, d // r, r, h // r, r, w // r, r)
    y = y.transpose(0, 1, 3, 5, 7, 2, 4, 6)
    return np.ascontiguousarray(y).reshape(n, c * r ** 3, d // r, h // r, w // r)


def pixel_shuffle3d(x: Tensor, r: int = 2) -> Tensor:
    """
    Exact inverse of pixel_unshuffle3d.

    Raises:
        ShapeError: If the channel count is not divisible by r**3
    """
    check_rank(x, 5, "pixel_shuffle3d input")
    if r < 1:
        raise ShapeError(f"Shuffle factor must be >= 1, got {r}")
    n, c, d, h, w = x.shape
    if c % (r ** 3):
        raise ShapeError(f"Channel count {c} is not divisible by {r ** 3}")
    if r == 1:
        return np.ascontiguousarray(x)
    y = x.reshape(n, c // r ** 3, r, r, r, d, h, w)
    y = y.transpose(0, 1, 5, 2, 6, 3, 7, 4)
    return np.ascontiguousarray(y).reshape(n, c // r ** 3, d * r, h * r, w * r)
