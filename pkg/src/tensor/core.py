"""
Tensor storage conventions and elementwise kernels.

Tensors are plain numpy arrays that are always row-major contiguous and
carry one of two floating point precisions. Volumetric tensors use the
channel-second layout [N, C, D, H, W] throughout.
"""
import logging
from enum import Enum
from typing import Tuple, Union

import numpy as np

from .errors import ShapeError, PrecisionError

logger = logging.getLogger(__name__)

Tensor = np.ndarray


class Precision(str, Enum):
    """Floating point precision shared by every tensor of a computation."""
    F32 = "f32"
    F64 = "f64"

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.float32) if self is Precision.F32 else np.dtype(np.float64)

    @property
    def bytes_per_element(self) -> int:
        return self.dtype.itemsize

    @classmethod
    def of(cls, array: np.ndarray) -> "Precision":
        """Precision of an existing floating point array."""
        if array.dtype == np.float32:
            return cls.F32
        if array.dtype == np.float64:
            return cls.F64
        raise PrecisionError(f"Unsupported tensor dtype {array.dtype}; expected float32 or float64")


class BinaryOp(str, Enum):
    ADD = "add"
    SUB = "sub"
    MUL = "mul"


def as_tensor(data, precision: Precision = Precision.F32) -> Tensor:
    """
    Build a contiguous tensor of the requested precision.

    Args:
        data: Array-like input
        precision: Target precision

    Returns:
        C-contiguous numpy array (copied only when needed)

    Raises:
        ShapeError: If any extent is zero
    """
    array = np.ascontiguousarray(data, dtype=Precision(precision).dtype)
    if array.ndim > 0 and min(array.shape) < 1:
        raise ShapeError(f"All extents must be >= 1, got shape {array.shape}")
    return array


def check_rank(x: np.ndarray, rank: int, what: str = "tensor") -> None:
    if x.ndim != rank:
        raise ShapeError(f"{what} must have rank {rank}, got shape {tuple(x.shape)}")


def elementwise_binary(
    a: Tensor,
    b: Union[Tensor, float],
    op: Union[BinaryOp, str],
) -> Tensor:
    """
    Apply add/sub/mul elementwise.

    Only equal shapes or a scalar right operand are accepted; no other
    broadcasting takes place.

    Raises:
        ShapeError: If the shapes differ
    """
    op = BinaryOp(op)
    if isinstance(b, np.ndarray) and b.ndim > 0:
        if a.shape != b.shape:
            raise ShapeError(
                f"Elementwise {op.value} needs equal shapes, got {tuple(a.shape)} and {tuple(b.shape)}"
            )
        if a.dtype != b.dtype:
            raise PrecisionError(f"Elementwise {op.value} mixes {a.dtype} and {b.dtype}")
    else:
        b = a.dtype.type(b)

    if op is BinaryOp.ADD:
        return np.add(a, b)
    if op is BinaryOp.SUB:
        return np.subtract(a, b)
    return np.multiply(a, b)


def split_channels(x: Tensor, at: int) -> Tuple[Tensor, Tensor]:
    """
    Split [N, C, ...] along channels into [N, at, ...] and [N, C - at, ...].

    Both parts are contiguous copies, so concat_channels restores x exactly.

    Raises:
        ShapeError: If at is not strictly inside (0, C)
    """
    if x.ndim < 2:
        raise ShapeError(f"split_channels needs a channel axis, got shape {tuple(x.shape)}")
    channels = x.shape[1]
    if not 0 < at < channels:
        raise ShapeError(f"Split point {at} out of range for {channels} channels")
    return np.ascontiguousarray(x[:, :at]), np.ascontiguousarray(x[:, at:])


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """
    Concatenate two tensors along the channel axis.

    Raises:
        ShapeError: If the non-channel extents differ
    """
    if a.ndim != b.ndim or a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(
            f"concat_channels needs matching non-channel extents, got {tuple(a.shape)} and {tuple(b.shape)}"
        )
    if a.dtype != b.dtype:
        raise PrecisionError(f"concat_channels mixes {a.dtype} and {b.dtype}")
    return np.concatenate([a, b], axis=1)
